#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reval {

// Ids are opaque strings end to end. Dense indices exist only inside trained
// models and are written out as an explicit id map when that happens.
using UserId = std::string;
using ItemId = std::string;

struct Interaction {
    UserId user;
    ItemId item;
    double rating = 0.0;
    std::optional<std::int64_t> timestamp;
};

struct RatingScale {
    enum class Kind { bounded, unbounded_count };
    Kind kind = Kind::bounded;
    double min = 1.0;
    double max = 5.0;
    double step = 1.0;

    static RatingScale bounded(double min, double max, double step = 1.0);
    static RatingScale counts();

    bool is_bounded() const { return kind == Kind::bounded; }
    bool contains(double r) const;
    double range() const { return max - min; }

    // "bounded:1:5:1" or "counts"
    std::string to_string() const;
    static RatingScale from_string(const std::string& s);
};

enum class DedupPolicy { keep_all, keep_first, keep_last, keep_max, error };

std::string to_string(DedupPolicy p);
DedupPolicy dedup_from_string(const std::string& s);

struct DatasetStats {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::size_t n_ratings = 0;
    double density = 0.0;
    std::optional<std::pair<std::int64_t, std::int64_t>> timespan;
};

// Immutable after construction; all indices are built up front so the object
// is safely shareable read-only by every downstream stage.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Interaction> rows, RatingScale scale, std::string provenance,
            DedupPolicy dedup_applied = DedupPolicy::keep_all);

    const std::vector<Interaction>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const RatingScale& scale() const { return scale_; }
    const std::string& provenance() const { return provenance_; }
    DedupPolicy dedup_policy_applied() const { return dedup_applied_; }

    const std::vector<UserId>& users() const { return users_; } // sorted
    const std::vector<ItemId>& items() const { return items_; } // sorted

    // Row indices for one user/item, in stored row order; empty if unknown.
    const std::vector<std::uint32_t>& rows_of_user(const UserId& u) const;
    const std::vector<std::uint32_t>& rows_of_item(const ItemId& i) const;
    bool has_user(const UserId& u) const { return by_user_.count(u) != 0; }
    bool has_item(const ItemId& i) const { return by_item_.count(i) != 0; }

    // Every row carries a timestamp.
    bool fully_timestamped() const { return fully_timestamped_; }
    // The ratings file format carries a timestamp column iff this is set.
    bool has_timestamp_column() const;

private:
    std::vector<Interaction> rows_;
    RatingScale scale_;
    std::string provenance_;
    DedupPolicy dedup_applied_ = DedupPolicy::keep_all;
    std::vector<UserId> users_;
    std::vector<ItemId> items_;
    std::map<UserId, std::vector<std::uint32_t>> by_user_;
    std::map<ItemId, std::vector<std::uint32_t>> by_item_;
    bool fully_timestamped_ = false;
};

struct ColumnSchema {
    char delimiter = '\t';
    bool header = false;
    int user_col = 0;
    int item_col = 1;
    int rating_col = 2;
    int timestamp_col = -1; // -1: no timestamp column
    // Out-of-scale ratings become warnings instead of errors.
    bool lenient = false;
};

struct ParseWarning {
    std::size_t line = 0;
    std::string message;
};

// Single-pass parse. Duplicate (user,item) pairs are resolved per `dedup`:
// keep_first drops later occurrences; keep_last and keep_max replace the
// surviving row in place (the slot where the pair first appeared), so line
// order is preserved; error throws naming the pair.
Dataset parse_dataset(std::istream& in, const ColumnSchema& schema, const RatingScale& scale,
                      DedupPolicy dedup, std::string provenance = {},
                      std::vector<ParseWarning>* warnings = nullptr);

struct ValidationReport {
    struct ScaleViolation {
        std::size_t row = 0;
        UserId user;
        ItemId item;
        double rating = 0.0;
    };
    std::vector<ScaleViolation> scale_violations;
    std::vector<std::pair<UserId, ItemId>> duplicate_pairs; // present only under keep_all
    std::vector<UserId> users_below_min;
    std::vector<ItemId> items_below_min;
    std::size_t min_interactions = 0;

    bool clean() const {
        return scale_violations.empty() && duplicate_pairs.empty() &&
               users_below_min.empty() && items_below_min.empty();
    }
};

// Report-only; never throws. min_interactions documents prefilters of the
// "all selected users had rated at least N" kind.
ValidationReport validate(const Dataset& ds, std::size_t min_interactions = 0);

DatasetStats dataset_stats(const Dataset& ds);

// density over distinct users/items actually present
double density_ratio(std::size_t n_users, std::size_t n_items, std::size_t n_ratings);

// Canonical ratings format: user<TAB>item<TAB>rating[<TAB>timestamp], LF line
// endings, no header, ratings as shortest round-trip decimals. Row order is
// as stored.
void write_ratings(const Dataset& ds, std::ostream& out);
void write_ratings(const std::vector<Interaction>& rows, bool with_timestamp, std::ostream& out);

// Rows sorted by (user, item, timestamp): the order split files are written
// in, so emission does not depend on scheduling.
std::vector<Interaction> canonical_rows(const Dataset& ds);

} // namespace reval

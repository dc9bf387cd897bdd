#include "reval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <tuple>
#include <unordered_map>

#include "reval/errors.hpp"
#include "reval/util.hpp"

namespace reval {

RatingScale RatingScale::bounded(double min, double max, double step) {
    if (!(min < max)) throw config_error("rating scale: min must be < max");
    if (!(step > 0)) throw config_error("rating scale: step must be > 0");
    double span = (max - min) / step;
    if (std::abs(span - std::round(span)) > 1e-9) {
        throw config_error("rating scale: step must divide max-min");
    }
    RatingScale s;
    s.kind = Kind::bounded;
    s.min = min;
    s.max = max;
    s.step = step;
    return s;
}

RatingScale RatingScale::counts() {
    RatingScale s;
    s.kind = Kind::unbounded_count;
    s.min = 0;
    s.max = 0;
    s.step = 0;
    return s;
}

bool RatingScale::contains(double r) const {
    if (!std::isfinite(r)) return false;
    if (kind == Kind::unbounded_count) return r >= 0;
    return r >= min && r <= max;
}

std::string RatingScale::to_string() const {
    if (kind == Kind::unbounded_count) return "counts";
    return "bounded:" + format_double(min) + ":" + format_double(max) + ":" + format_double(step);
}

RatingScale RatingScale::from_string(const std::string& s) {
    if (s == "counts") return counts();
    auto parts = split_view(s, ':');
    if (parts.size() == 4 && parts[0] == "bounded") {
        return bounded(parse_double(parts[1], 0), parse_double(parts[2], 0), parse_double(parts[3], 0));
    }
    throw config_error("bad rating scale '" + s + "' (want bounded:min:max:step or counts)");
}

std::string to_string(DedupPolicy p) {
    switch (p) {
        case DedupPolicy::keep_all: return "keep-all";
        case DedupPolicy::keep_first: return "keep-first";
        case DedupPolicy::keep_last: return "keep-last";
        case DedupPolicy::keep_max: return "keep-max";
        case DedupPolicy::error: return "error";
    }
    return "?";
}

DedupPolicy dedup_from_string(const std::string& s) {
    if (s == "keep-all") return DedupPolicy::keep_all;
    if (s == "keep-first") return DedupPolicy::keep_first;
    if (s == "keep-last") return DedupPolicy::keep_last;
    if (s == "keep-max") return DedupPolicy::keep_max;
    if (s == "error") return DedupPolicy::error;
    throw config_error("bad dedup policy '" + s + "'");
}

Dataset::Dataset(std::vector<Interaction> rows, RatingScale scale, std::string provenance,
                 DedupPolicy dedup_applied)
    : rows_(std::move(rows)),
      scale_(scale),
      provenance_(std::move(provenance)),
      dedup_applied_(dedup_applied) {
    fully_timestamped_ = !rows_.empty();
    for (std::uint32_t i = 0; i < rows_.size(); ++i) {
        const Interaction& r = rows_[i];
        by_user_[r.user].push_back(i);
        by_item_[r.item].push_back(i);
        if (!r.timestamp) fully_timestamped_ = false;
    }
    users_.reserve(by_user_.size());
    for (const auto& [u, _] : by_user_) users_.push_back(u);
    items_.reserve(by_item_.size());
    for (const auto& [i, _] : by_item_) items_.push_back(i);
}

const std::vector<std::uint32_t>& Dataset::rows_of_user(const UserId& u) const {
    static const std::vector<std::uint32_t> empty;
    auto it = by_user_.find(u);
    return it == by_user_.end() ? empty : it->second;
}

const std::vector<std::uint32_t>& Dataset::rows_of_item(const ItemId& i) const {
    static const std::vector<std::uint32_t> empty;
    auto it = by_item_.find(i);
    return it == by_item_.end() ? empty : it->second;
}

bool Dataset::has_timestamp_column() const {
    return !rows_.empty() && rows_.front().timestamp.has_value();
}

Dataset parse_dataset(std::istream& in, const ColumnSchema& schema, const RatingScale& scale,
                      DedupPolicy dedup, std::string provenance,
                      std::vector<ParseWarning>* warnings) {
    int max_col = std::max({schema.user_col, schema.item_col, schema.rating_col, schema.timestamp_col});
    std::vector<Interaction> rows;
    // (user,item) -> index into rows, for dedup policies that replace in place
    std::unordered_map<std::string, std::size_t> seen;
    auto pair_key = [](const UserId& u, const ItemId& i) { return u + '\t' + i; };

    std::string line;
    std::size_t line_no = 0;
    bool skip_header = schema.header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (skip_header) {
            skip_header = false;
            continue;
        }
        if (line.empty()) continue;

        auto fields = split_view(line, schema.delimiter);
        if (static_cast<int>(fields.size()) <= max_col) {
            throw data_error(line_no, "expected at least " + std::to_string(max_col + 1) +
                                          " fields, got " + std::to_string(fields.size()));
        }
        Interaction r;
        r.user = std::string(fields[schema.user_col]);
        r.item = std::string(fields[schema.item_col]);
        if (r.user.empty() || r.item.empty()) {
            throw data_error(line_no, "empty user or item id");
        }
        r.rating = parse_double(fields[schema.rating_col], line_no);
        if (!std::isfinite(r.rating)) {
            throw data_error(line_no, "rating is not finite");
        }
        if (schema.timestamp_col >= 0) {
            r.timestamp = parse_int(fields[schema.timestamp_col], line_no);
        }
        if (!scale.contains(r.rating)) {
            if (schema.lenient) {
                if (warnings) {
                    warnings->push_back({line_no, "rating " + format_double(r.rating) +
                                                      " outside scale " + scale.to_string()});
                }
            } else {
                throw data_error(line_no, "rating " + format_double(r.rating) +
                                              " outside scale " + scale.to_string());
            }
        }

        if (dedup == DedupPolicy::keep_all) {
            rows.push_back(std::move(r));
            continue;
        }
        std::string key = pair_key(r.user, r.item);
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(std::move(key), rows.size());
            rows.push_back(std::move(r));
            continue;
        }
        switch (dedup) {
            case DedupPolicy::keep_first:
                break;
            case DedupPolicy::keep_last:
                rows[it->second] = std::move(r);
                break;
            case DedupPolicy::keep_max:
                if (r.rating > rows[it->second].rating) rows[it->second] = std::move(r);
                break;
            case DedupPolicy::error:
                throw data_error(line_no, "duplicate (user,item) pair (" + r.user + "," + r.item + ")");
            case DedupPolicy::keep_all:
                break;
        }
    }

    if (provenance.empty()) provenance = "parsed stream";
    provenance += "; dedup=" + to_string(dedup) + "; scale=" + scale.to_string();
    return Dataset(std::move(rows), scale, std::move(provenance), dedup);
}

ValidationReport validate(const Dataset& ds, std::size_t min_interactions) {
    ValidationReport report;
    report.min_interactions = min_interactions;
    const RatingScale& scale = ds.scale();
    for (std::size_t i = 0; i < ds.rows().size(); ++i) {
        const Interaction& r = ds.rows()[i];
        if (!scale.contains(r.rating)) {
            report.scale_violations.push_back({i, r.user, r.item, r.rating});
        }
    }
    if (ds.dedup_policy_applied() == DedupPolicy::keep_all) {
        std::map<std::pair<UserId, ItemId>, std::size_t> counts;
        for (const Interaction& r : ds.rows()) ++counts[{r.user, r.item}];
        for (const auto& [pair, n] : counts) {
            if (n > 1) report.duplicate_pairs.push_back(pair);
        }
    }
    if (min_interactions > 0) {
        for (const UserId& u : ds.users()) {
            if (ds.rows_of_user(u).size() < min_interactions) report.users_below_min.push_back(u);
        }
        for (const ItemId& i : ds.items()) {
            if (ds.rows_of_item(i).size() < min_interactions) report.items_below_min.push_back(i);
        }
    }
    return report;
}

double density_ratio(std::size_t n_users, std::size_t n_items, std::size_t n_ratings) {
    if (n_users == 0 || n_items == 0) return 0.0;
    return static_cast<double>(n_ratings) /
           (static_cast<double>(n_users) * static_cast<double>(n_items));
}

DatasetStats dataset_stats(const Dataset& ds) {
    DatasetStats s;
    s.n_users = ds.users().size();
    s.n_items = ds.items().size();
    s.n_ratings = ds.size();
    s.density = density_ratio(s.n_users, s.n_items, s.n_ratings);
    if (ds.fully_timestamped() && !ds.empty()) {
        std::int64_t lo = *ds.rows().front().timestamp;
        std::int64_t hi = lo;
        for (const Interaction& r : ds.rows()) {
            lo = std::min(lo, *r.timestamp);
            hi = std::max(hi, *r.timestamp);
        }
        s.timespan = {lo, hi};
    }
    return s;
}

void write_ratings(const std::vector<Interaction>& rows, bool with_timestamp, std::ostream& out) {
    for (const Interaction& r : rows) {
        out << r.user << '\t' << r.item << '\t' << format_double(r.rating);
        if (with_timestamp) {
            out << '\t' << (r.timestamp ? std::to_string(*r.timestamp) : std::string("0"));
        }
        out << '\n';
    }
}

void write_ratings(const Dataset& ds, std::ostream& out) {
    write_ratings(ds.rows(), ds.has_timestamp_column(), out);
}

std::vector<Interaction> canonical_rows(const Dataset& ds) {
    std::vector<Interaction> rows = ds.rows();
    std::sort(rows.begin(), rows.end(), [](const Interaction& a, const Interaction& b) {
        std::int64_t ta = a.timestamp.value_or(0), tb = b.timestamp.value_or(0);
        return std::tie(a.user, a.item, ta) < std::tie(b.user, b.item, tb);
    });
    return rows;
}

} // namespace reval

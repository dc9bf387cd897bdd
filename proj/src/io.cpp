#include "reval/io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "reval/errors.hpp"
#include "reval/util.hpp"

namespace reval {

namespace {

std::vector<std::string_view> fields_or_throw(const std::string& line, std::size_t line_no,
                                              std::size_t expected) {
    auto fields = split_view(line, '\t');
    if (fields.size() != expected) {
        throw data_error(line_no, "expected " + std::to_string(expected) + " tab-separated fields, got " +
                                      std::to_string(fields.size()));
    }
    return fields;
}

} // namespace

void write_ranked_lists(const std::vector<RankedList>& lists, std::ostream& out) {
    std::vector<const RankedList*> sorted;
    sorted.reserve(lists.size());
    for (const RankedList& l : lists) sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(),
              [](const RankedList* a, const RankedList* b) { return a->user < b->user; });
    for (const RankedList* list : sorted) {
        for (const RankedEntry& e : list->entries) {
            out << list->user << '\t' << e.item << '\t'
                << (e.score ? format_double(*e.score) : std::string("NaN")) << '\t' << e.rank
                << '\n';
        }
    }
}

std::vector<RankedList> read_ranked_lists(std::istream& in) {
    std::vector<RankedList> lists;
    std::set<UserId> closed; // users whose block already ended
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = fields_or_throw(line, line_no, 4);
        UserId user(f[0]);
        ItemId item(f[1]);
        double score = parse_double(f[2], line_no);
        long long rank = parse_int(f[3], line_no);
        if (rank < 1) throw data_error(line_no, "rank must be >= 1");

        if (lists.empty() || lists.back().user != user) {
            if (closed.count(user)) {
                throw data_error(line_no, "user '" + user + "' appears in two separate blocks");
            }
            if (!lists.empty()) closed.insert(lists.back().user);
            if (rank != 1) {
                throw data_error(line_no, "first rank for user '" + user + "' is " +
                                              std::to_string(rank) + ", expected 1");
            }
            lists.push_back({user, {}});
        } else if (static_cast<std::size_t>(rank) != lists.back().entries.size() + 1) {
            throw data_error(line_no, "rank gap for user '" + user + "': got " +
                                          std::to_string(rank) + ", expected " +
                                          std::to_string(lists.back().entries.size() + 1));
        }
        RankedEntry entry;
        entry.item = item;
        if (!std::isnan(score)) entry.score = score;
        entry.rank = static_cast<std::size_t>(rank);
        lists.back().entries.push_back(std::move(entry));
    }
    return lists;
}

void write_scores(const std::vector<Prediction>& predictions, std::ostream& out) {
    std::vector<const Prediction*> sorted;
    sorted.reserve(predictions.size());
    for (const Prediction& p : predictions) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const Prediction* a, const Prediction* b) {
        if (a->user != b->user) return a->user < b->user;
        return a->item < b->item;
    });
    for (const Prediction* p : sorted) {
        out << p->user << '\t' << p->item << '\t'
            << (p->score ? format_double(*p->score) : std::string("NaN")) << '\n';
    }
}

std::vector<Prediction> read_scores(std::istream& in) {
    std::vector<Prediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = fields_or_throw(line, line_no, 3);
        Prediction p;
        p.user = std::string(f[0]);
        p.item = std::string(f[1]);
        double score = parse_double(f[2], line_no);
        if (!std::isnan(score)) p.score = score;
        out.push_back(std::move(p));
    }
    return out;
}

void write_candidates(const std::vector<CandidateList>& lists, std::ostream& out) {
    std::vector<std::pair<UserId, ItemId>> pairs;
    for (const CandidateList& list : lists) {
        for (const ItemId& i : list.items) pairs.emplace_back(list.user, i);
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [u, i] : pairs) out << u << '\t' << i << '\n';
}

bool MetricsFile::has(const std::string& metric, std::optional<std::size_t> cutoff) const {
    for (const Row& r : rows) {
        if (r.metric == metric && r.cutoff == cutoff) return true;
    }
    return false;
}

double MetricsFile::aggregate(const std::string& metric, std::optional<std::size_t> cutoff) const {
    for (const Row& r : rows) {
        if (r.metric == metric && r.cutoff == cutoff && r.scope == "all") return r.value;
    }
    throw data_error("metric '" + metric + "' not found in metrics file");
}

std::map<UserId, double> MetricsFile::per_user(const std::string& metric,
                                               std::optional<std::size_t> cutoff) const {
    std::map<UserId, double> out;
    for (const Row& r : rows) {
        if (r.metric == metric && r.cutoff == cutoff && r.scope != "all") out[r.scope] = r.value;
    }
    return out;
}

std::vector<std::pair<std::string, std::optional<std::size_t>>> MetricsFile::metric_keys() const {
    std::vector<std::pair<std::string, std::optional<std::size_t>>> keys;
    for (const Row& r : rows) {
        std::pair<std::string, std::optional<std::size_t>> key{r.metric, r.cutoff};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    return keys;
}

namespace {

std::string cutoff_str(std::optional<std::size_t> cutoff) {
    return cutoff ? std::to_string(*cutoff) : std::string("-");
}

} // namespace

void write_metric_result(const MetricResult& result, std::ostream& out) {
    out << result.name << '\t' << cutoff_str(result.cutoff) << "\tall\t"
        << format_double(result.aggregate) << '\n';
    for (const auto& [user, value] : result.per_user) {
        out << result.name << '\t' << cutoff_str(result.cutoff) << '\t' << user << '\t'
            << format_double(value) << '\n';
    }
}

void write_metric_scalar(const std::string& metric, std::optional<std::size_t> cutoff,
                         double value, std::ostream& out) {
    out << metric << '\t' << cutoff_str(cutoff) << "\tall\t" << format_double(value) << '\n';
}

MetricsFile read_metrics(std::istream& in) {
    MetricsFile file;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = fields_or_throw(line, line_no, 4);
        MetricsFile::Row row;
        row.metric = std::string(f[0]);
        if (f[1] != "-") row.cutoff = static_cast<std::size_t>(parse_int(f[1], line_no));
        row.scope = std::string(f[2]);
        row.value = parse_double(f[3], line_no);
        file.rows.push_back(std::move(row));
    }
    return file;
}

void write_stats_rows(const std::vector<StatsRow>& rows, std::ostream& out) {
    for (const StatsRow& r : rows) {
        out << r.metric << '\t' << r.system_a << '\t' << r.system_b << '\t' << r.test << '\t'
            << r.policy << '\t' << r.n << '\t' << format_double(r.statistic) << '\t'
            << format_double(r.p) << '\t' << format_double(r.effect) << '\t'
            << format_double(r.ci_low) << '\t' << format_double(r.ci_high) << '\n';
    }
}

std::vector<StatsRow> read_stats_rows(std::istream& in) {
    std::vector<StatsRow> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = fields_or_throw(line, line_no, 11);
        StatsRow r;
        r.metric = std::string(f[0]);
        r.system_a = std::string(f[1]);
        r.system_b = std::string(f[2]);
        r.test = std::string(f[3]);
        r.policy = std::string(f[4]);
        r.n = static_cast<std::size_t>(parse_int(f[5], line_no));
        r.statistic = parse_double(f[6], line_no);
        r.p = parse_double(f[7], line_no);
        r.effect = parse_double(f[8], line_no);
        r.ci_low = parse_double(f[9], line_no);
        r.ci_high = parse_double(f[10], line_no);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace reval

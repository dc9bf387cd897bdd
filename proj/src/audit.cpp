#include "reval/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include "reval/errors.hpp"
#include "reval/io.hpp"
#include "reval/pipeline.hpp"
#include "reval/util.hpp"

namespace reval {

namespace fs = std::filesystem;

ImportResult import_external_recommendations(std::istream& in, const Dataset& train,
                                             const Dataset& test) {
    ImportResult result;
    result.lists = read_ranked_lists(in); // contiguity and format checked there
    std::set<ItemId> known_items(train.items().begin(), train.items().end());
    known_items.insert(test.items().begin(), test.items().end());
    for (const RankedList& list : result.lists) {
        if (!train.has_user(list.user) && !test.has_user(list.user)) {
            throw data_error("imported recommendations name unknown user '" + list.user + "'");
        }
        for (const RankedEntry& e : list.entries) {
            if (!known_items.count(e.item)) ++result.unknown_item_warnings;
        }
    }
    return result;
}

namespace {

const std::vector<std::string>& known_strategies() {
    static const std::vector<std::string> s = {"usertest", "trainitems", "one-plus-random",
                                               "error"};
    return s;
}

// metrics-<rec>-<strategy>.tsv -> (rec, strategy); rec names may contain '-',
// strategies come from the fixed vocabulary
std::optional<std::pair<std::string, std::string>> parse_metrics_name(const std::string& name) {
    if (name.rfind("metrics-", 0) != 0 || name.size() < 12 ||
        name.substr(name.size() - 4) != ".tsv") {
        return std::nullopt;
    }
    std::string middle = name.substr(8, name.size() - 12);
    for (const std::string& strategy : known_strategies()) {
        std::string suffix = "-" + strategy;
        if (middle.size() > suffix.size() &&
            middle.compare(middle.size() - suffix.size(), suffix.size(), suffix) == 0) {
            return std::make_pair(middle.substr(0, middle.size() - suffix.size()), strategy);
        }
    }
    return std::nullopt;
}

} // namespace

RunMetrics load_run_metrics(const fs::path& run_dir) {
    RunMetrics run;
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (const std::string& name : names) {
        auto parsed = parse_metrics_name(name);
        if (!parsed) continue;
        std::ifstream in(run_dir / name);
        MetricsFile metrics = read_metrics(in);
        for (const auto& [metric, cutoff] : metrics.metric_keys()) {
            if (!metrics.has(metric, cutoff)) continue;
            run.values[{parsed->first, parsed->second, metric, cutoff}] =
                metrics.aggregate(metric, cutoff);
        }
    }
    fs::path manifest_path = run_dir / kManifestFile;
    if (fs::exists(manifest_path)) {
        Manifest manifest = Manifest::load(manifest_path);
        if (const StageRecord* split = manifest.stage("split")) {
            run.split_digests = split->outputs;
        }
    }
    return run;
}

DivergenceReport compare_runs(const fs::path& dir_a, const fs::path& dir_b) {
    RunMetrics a = load_run_metrics(dir_a);
    RunMetrics b = load_run_metrics(dir_b);
    DivergenceReport report;

    if (a.split_digests.empty() || b.split_digests.empty() ||
        a.split_digests != b.split_digests) {
        report.cross_protocol = true;
        report.notes.push_back(
            "split digests differ or are missing: values are NOT comparable (cross-protocol)");
    }

    for (const auto& [key, value_a] : a.values) {
        auto it = b.values.find(key);
        if (it == b.values.end()) {
            report.notes.push_back("only in A: " + key.rec + "/" + key.strategy + "/" + key.metric);
            continue;
        }
        DivergenceReport::Delta d;
        d.key = key;
        d.value_a = value_a;
        d.value_b = it->second;
        d.delta = value_a - it->second;
        if (key.metric == "user-coverage" && std::abs(d.delta) > 0.1) {
            report.notes.push_back("coverage disparity for " + key.rec + "/" + key.strategy +
                                   ": " + format_double(d.delta));
        }
        report.deltas.push_back(std::move(d));
    }
    for (const auto& [key, _] : b.values) {
        if (!a.values.count(key)) {
            report.notes.push_back("only in B: " + key.rec + "/" + key.strategy + "/" + key.metric);
        }
    }

    // flip detection: for each (rec, metric, cutoff), does the winning run
    // change between candidate strategies?
    std::map<std::tuple<std::string, std::string, std::optional<std::size_t>>,
             std::map<std::string, char>>
        winners;
    for (const DivergenceReport::Delta& d : report.deltas) {
        if (d.key.strategy == "error") continue;
        if (d.key.metric == "user-coverage" || d.key.metric == "catalog-coverage") continue;
        char who = d.delta > 0 ? 'A' : (d.delta < 0 ? 'B' : '=');
        winners[{d.key.rec, d.key.metric, d.key.cutoff}][d.key.strategy] = who;
    }
    for (const auto& [key, by_strategy] : winners) {
        std::string a_wins, b_wins;
        for (const auto& [strategy, who] : by_strategy) {
            if (who == 'A' && a_wins.empty()) a_wins = strategy;
            if (who == 'B' && b_wins.empty()) b_wins = strategy;
        }
        if (!a_wins.empty() && !b_wins.empty()) {
            report.flips.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), a_wins,
                                    b_wins});
        }
    }
    return report;
}

void render_divergence(const DivergenceReport& report, std::ostream& text, std::ostream& csv) {
    if (report.cross_protocol) {
        text << "*** CROSS-PROTOCOL COMPARISON: values are not comparable ***\n";
    }
    text << "rec\tstrategy\tmetric\tA\tB\tdelta\n";
    csv << "rec,strategy,metric,value_a,value_b,delta\n";
    for (const auto& d : report.deltas) {
        std::string metric = d.key.cutoff ? d.key.metric + "@" + std::to_string(*d.key.cutoff)
                                          : d.key.metric;
        text << d.key.rec << '\t' << d.key.strategy << '\t' << metric << '\t'
             << format_double(d.value_a) << '\t' << format_double(d.value_b) << '\t'
             << format_double(d.delta) << '\n';
        csv << d.key.rec << ',' << d.key.strategy << ',' << metric << ','
            << format_double(d.value_a) << ',' << format_double(d.value_b) << ','
            << format_double(d.delta) << '\n';
    }
    if (!report.flips.empty()) {
        text << "\nflips (winning system changes with the candidate strategy):\n";
        for (const auto& f : report.flips) {
            std::string metric = f.cutoff ? f.metric + "@" + std::to_string(*f.cutoff) : f.metric;
            text << "  " << f.rec << '/' << metric << ": A wins under " << f.strategy_where_a_wins
                 << ", B wins under " << f.strategy_where_b_wins << '\n';
        }
    }
    for (const std::string& note : report.notes) {
        text << "note: " << note << '\n';
    }
}

ProtocolHint protocol_hint(const std::map<std::string, double>& external,
                           const std::map<std::string, std::map<std::string, double>>& grid) {
    // metrics shared by the external vector and every strategy row
    std::vector<std::string> shared;
    for (const auto& [metric, _] : external) {
        bool everywhere = !grid.empty();
        for (const auto& [_, row] : grid) {
            if (!row.count(metric)) {
                everywhere = false;
                break;
            }
        }
        if (everywhere) shared.push_back(metric);
    }
    if (shared.empty()) throw data_error("protocol hint: no shared metrics between runs");

    ProtocolHint hint;
    double best = -1;
    for (const auto& [strategy, row] : grid) {
        double dist = 0;
        for (const std::string& metric : shared) {
            dist += std::abs(external.at(metric) - row.at(metric));
        }
        if (best < 0 || dist < best - 1e-12) {
            best = dist;
            hint.strategies = {strategy};
        } else if (std::abs(dist - best) <= 1e-12) {
            hint.strategies.push_back(strategy);
        }
    }
    hint.distance = best;
    hint.tie = hint.strategies.size() > 1;
    return hint;
}

} // namespace reval

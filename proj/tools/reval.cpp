#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "reval/audit.hpp"
#include "reval/errors.hpp"
#include "reval/io.hpp"
#include "reval/pipeline.hpp"
#include "reval/util.hpp"

namespace fs = std::filesystem;
using namespace reval;

namespace {

struct StageArgs {
    std::string config;
    std::string out;
    std::string in;
};

void add_stage_command(CLI::App& app, const std::string& name, const std::string& desc,
                       std::vector<std::pair<std::string, StageArgs>>& requested) {
    auto args = std::make_shared<StageArgs>();
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", args->config, "experiment config file")->required();
    cmd->add_option("--out", args->out, "output directory")->required();
    cmd->add_option("--in", args->in, "input directory (defaults to --out)");
    cmd->callback([&requested, name, args] { requested.emplace_back(name, *args); });
}

int run_verify(const std::string& manifest, const std::string& dir) {
    fs::path manifest_path(manifest);
    fs::path artifact_dir = dir.empty() ? manifest_path.parent_path() : fs::path(dir);
    VerifyResult result = verify_manifest(manifest_path, artifact_dir);
    for (const std::string& f : result.matched) std::cout << "match     " << f << "\n";
    for (const std::string& f : result.mismatched) std::cout << "MISMATCH  " << f << "\n";
    for (const std::string& f : result.missing) std::cout << "MISSING   " << f << "\n";
    std::cout << (result.ok() ? "verification OK" : "verification FAILED") << "\n";
    return result.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reval: file-connected, manifest-stamped recommender evaluation"};
    app.require_subcommand(1);

    std::vector<std::pair<std::string, StageArgs>> stage_requests;
    add_stage_command(app, "run", "run every stage and stamp the manifest", stage_requests);
    add_stage_command(app, "ingest", "parse and validate the dataset", stage_requests);
    add_stage_command(app, "split", "produce train/test files", stage_requests);
    add_stage_command(app, "recommend", "train models and score candidates", stage_requests);
    add_stage_command(app, "filter", "apply candidate strategies, emit rankings", stage_requests);
    add_stage_command(app, "evaluate", "compute metrics from ranking files", stage_requests);
    add_stage_command(app, "test", "significance tests over per-user metrics", stage_requests);
    add_stage_command(app, "report", "render report.txt / report.csv", stage_requests);

    // verify
    std::string verify_manifest_path, verify_dir;
    CLI::App* verify_cmd = app.add_subcommand("verify", "recompute artifact digests");
    verify_cmd->add_option("--manifest", verify_manifest_path, "manifest.json path")->required();
    verify_cmd->add_option("--dir", verify_dir, "artifact directory (defaults to manifest's)");

    // audit
    CLI::App* audit_cmd = app.add_subcommand("audit", "compare runs and imported files");
    audit_cmd->require_subcommand(1);

    std::string cmp_a, cmp_b, cmp_text, cmp_csv;
    CLI::App* cmp = audit_cmd->add_subcommand("compare", "diff two run directories");
    cmp->add_option("--a", cmp_a, "run directory A")->required();
    cmp->add_option("--b", cmp_b, "run directory B")->required();
    cmp->add_option("--text", cmp_text, "write text report here (default stdout)");
    cmp->add_option("--csv", cmp_csv, "write CSV report here");

    std::string imp_recs, imp_split, imp_out, imp_scale = "bounded:1:5:1";
    CLI::App* imp = audit_cmd->add_subcommand("import", "validate an external recommendations file");
    imp->add_option("--recs", imp_recs, "recommendations file (user item score rank)")->required();
    imp->add_option("--split", imp_split, "directory holding train.tsv/test.tsv")->required();
    imp->add_option("--scale", imp_scale, "rating scale of the split files");
    imp->add_option("--out", imp_out, "write the normalized lists here");

    std::string hint_external, hint_run, hint_rec;
    CLI::App* hint_cmd = audit_cmd->add_subcommand("hint", "suggest the nearest candidate strategy");
    hint_cmd->add_option("--external", hint_external, "metrics file of the external run")->required();
    hint_cmd->add_option("--run", hint_run, "controlled run directory")->required();
    hint_cmd->add_option("--rec", hint_rec, "recommender name in the controlled run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& [stage, args] : stage_requests) {
            ExperimentConfig cfg = ExperimentConfig::from_file(args.config);
            fs::create_directories(args.out);
            ExperimentRun run(cfg, args.out, args.in.empty() ? fs::path() : fs::path(args.in));
            if (stage == "run") {
                Manifest manifest = run.run();
                emit_report(cfg, args.out);
                std::cout << "run complete; config digest " << manifest.config_digest << "\n";
            } else if (stage == "report") {
                emit_report(cfg, args.out);
                std::cout << "report written\n";
            } else {
                run.run_stage(stage);
                std::cout << "stage '" << stage << "' complete\n";
            }
        }

        if (*verify_cmd) {
            return run_verify(verify_manifest_path, verify_dir);
        }

        if (*cmp) {
            DivergenceReport report = compare_runs(cmp_a, cmp_b);
            std::ostringstream text, csv;
            render_divergence(report, text, csv);
            if (cmp_text.empty()) {
                std::cout << text.str();
            } else {
                std::ofstream out(cmp_text);
                out << text.str();
            }
            if (!cmp_csv.empty()) {
                std::ofstream out(cmp_csv);
                out << csv.str();
            }
        }

        if (*imp) {
            RatingScale scale = RatingScale::from_string(imp_scale);
            auto read_split = [&](const std::string& name) {
                std::ifstream probe(fs::path(imp_split) / name);
                if (!probe) throw data_error("cannot open " + name + " in " + imp_split);
                std::string first;
                std::getline(probe, first);
                ColumnSchema schema;
                schema.lenient = true;
                if (!first.empty() && split_view(first, '\t').size() >= 4) schema.timestamp_col = 3;
                std::ifstream in(fs::path(imp_split) / name);
                return parse_dataset(in, schema, scale, DedupPolicy::keep_all, name);
            };
            Dataset train = read_split("train.tsv");
            Dataset test = read_split("test.tsv");
            std::ifstream in(imp_recs);
            if (!in) throw data_error("cannot open " + imp_recs);
            ImportResult result = import_external_recommendations(in, train, test);
            std::cout << "imported " << result.lists.size() << " ranked lists, "
                      << result.unknown_item_warnings << " unknown-item warning(s)\n";
            if (!imp_out.empty()) {
                std::ofstream out(imp_out, std::ios::binary);
                write_ranked_lists(result.lists, out);
            }
        }

        if (*hint_cmd) {
            std::ifstream in(hint_external);
            if (!in) throw data_error("cannot open " + hint_external);
            MetricsFile external_file = read_metrics(in);
            std::map<std::string, double> external;
            for (const auto& [metric, cutoff] : external_file.metric_keys()) {
                std::string label = cutoff ? metric + "@" + std::to_string(*cutoff) : metric;
                external[label] = external_file.aggregate(metric, cutoff);
            }
            RunMetrics run = load_run_metrics(hint_run);
            std::map<std::string, std::map<std::string, double>> grid;
            for (const auto& [key, value] : run.values) {
                if (key.strategy == "error") continue;
                if (!hint_rec.empty() && key.rec != hint_rec) continue;
                std::string label =
                    key.cutoff ? key.metric + "@" + std::to_string(*key.cutoff) : key.metric;
                grid[key.strategy][label] = value;
            }
            if (grid.size() < 2) {
                throw data_error("protocol hint needs a controlled grid with >= 2 strategies");
            }
            ProtocolHint hint = protocol_hint(external, grid);
            std::cout << "nearest strategy (hint, not a verdict):";
            for (const std::string& s : hint.strategies) std::cout << ' ' << s;
            std::cout << "  L1 distance " << format_double(hint.distance);
            if (hint.tie) std::cout << "  (tie)";
            std::cout << "\n";
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

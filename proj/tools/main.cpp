#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rarecast/errors.hpp"
#include "rarecast/pipeline.hpp"
#include "rarecast/util.hpp"

namespace fs = std::filesystem;
using namespace rarecast;

namespace {

void write_error(const fs::path& out, const std::string& stage, const std::string& kind,
                 const std::string& message) {
    try {
        nlohmann::json j;
        j["stage"] = stage;
        j["error"] = kind;
        j["message"] = message;
        write_text_file(out / "error.json", j.dump(2) + "\n");
    } catch (...) {
        // error reporting must not mask the original failure
    }
}

std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5}; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rarecast: condition-similarity-guided transfer for rare-condition outcome prediction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed_override = -1;
    int jobs = 1;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out", out_dir, "output root directory");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--jobs", jobs, "worker processes for sweep/ablate");

    auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic cohort CSVs");
    auto* cmd_preprocess = app.add_subcommand("preprocess", "build processed split archives");
    auto* cmd_build_kg = app.add_subcommand("build-kg", "construct the condition graph");
    auto* cmd_embed_kg = app.add_subcommand("embed-kg", "train the graph embedding");
    auto* cmd_select = app.add_subcommand("select", "select source conditions for the target");
    auto* cmd_pretrain = app.add_subcommand("pretrain", "condition-agnostic pretraining");
    auto* cmd_adapt = app.add_subcommand("adapt", "adversarial adaptation + evaluation");
    auto* cmd_evaluate = app.add_subcommand("evaluate", "evaluate the best checkpoint");
    auto* cmd_run = app.add_subcommand("run", "full pipeline for one target condition");

    auto* cmd_sweep = app.add_subcommand("sweep", "grid sweep over one config axis");
    std::string axis = "source_fraction";
    std::vector<double> grid;
    std::vector<std::uint64_t> seeds;
    cmd_sweep->add_option("--axis", axis, "source_fraction|edge_retention|train_fraction");
    cmd_sweep->add_option("--grid", grid, "grid values in (0,1]")->required();
    cmd_sweep->add_option("--seeds", seeds, "seeds (default 1..5)");

    auto* cmd_ablate = app.add_subcommand("ablate", "full model vs the three ablations");
    cmd_ablate->add_option("--seeds", seeds, "seeds (default 1..5)");

    auto* cmd_explain = app.add_subcommand("explain", "per-source report for a selection file");
    std::string selection_path, manifest_path;
    cmd_explain->add_option("--selection", selection_path, "selection.json path")->required();
    cmd_explain->add_option("--manifest", manifest_path, "cohort manifest path")->required();

    auto* cmd_search = app.add_subcommand("search", "random hyperparameter search");
    int budget = 10;
    cmd_search->add_option("--budget", budget, "number of trials");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const fs::path out(out_dir);
    std::string stage = "config";
    try {
        if (cmd_explain->parsed()) {
            stage = "explain";
            run_explain(selection_path, manifest_path, out);
            return 0;
        }

        if (config_path.empty()) throw ConfigError("--config is required");
        ExperimentConfig cfg = load_config(config_path);
        if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);

        if (seeds.empty()) seeds = default_seeds();

        if (cmd_sweep->parsed()) {
            stage = "sweep";
            SweepSpec spec;
            spec.axis = sweep_axis_from_name(axis);
            spec.grid = grid;
            spec.seeds = seeds;
            run_sweep(cfg, spec, out, jobs);
            return 0;
        }
        if (cmd_ablate->parsed()) {
            stage = "ablate";
            run_ablate(cfg, seeds, out, jobs);
            return 0;
        }
        if (cmd_search->parsed()) {
            stage = "search";
            run_search(cfg, budget, out);
            return 0;
        }

        const bool fresh = cmd_run->parsed();
        Pipeline pipeline(cfg, out, fresh);
        try {
            if (cmd_synth->parsed()) {
                pipeline.stage_data();
            } else if (cmd_preprocess->parsed()) {
                pipeline.stage_preprocess();
            } else if (cmd_build_kg->parsed()) {
                pipeline.stage_graph();
            } else if (cmd_embed_kg->parsed()) {
                pipeline.stage_tucker();
            } else if (cmd_select->parsed()) {
                pipeline.stage_selection();
            } else if (cmd_pretrain->parsed()) {
                pipeline.stage_pretrain();
            } else if (cmd_adapt->parsed() || cmd_run->parsed()) {
                const RunResult result = pipeline.stage_adapt_evaluate();
                if (result.metrics.auprc)
                    std::printf("auprc=%.6f ", *result.metrics.auprc);
                if (result.metrics.auroc)
                    std::printf("auroc=%.6f", *result.metrics.auroc);
                std::printf("\n");
            } else if (cmd_evaluate->parsed()) {
                pipeline.evaluate_checkpoint();
            }
            return 0;
        } catch (...) {
            stage = pipeline.stage_name();
            throw;
        }
    } catch (const ConfigError& e) {
        write_error(out, stage, e.kind(), e.what());
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        write_error(out, stage, e.kind(), e.what());
        std::fprintf(stderr, "error [%s]: %s\n", e.kind().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        write_error(out, stage, "Unhandled", e.what());
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

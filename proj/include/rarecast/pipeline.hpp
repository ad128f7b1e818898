#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "rarecast/config.hpp"

namespace rarecast {

struct RunResult {
    EvalResult metrics;
    RunRecord record;
    TaskKind task = TaskKind::binary;
    std::optional<double> best_val_auprc;
    std::filesystem::path run_dir;
};

// Lazily materialized pipeline over one run directory. Every stage loads its
// artifact when it already exists (unless fresh), otherwise computes and
// writes it; all stages are deterministic in (config, seed).
class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::filesystem::path out, bool fresh);

    std::filesystem::path stage_data();            // manifest path
    void stage_preprocess();                       // processed/{train,valid,test}.knwr
    const ConditionGraph& stage_graph();           // kg/edges.tsv
    const TuckerModel& stage_tucker();             // kg/tucker.knwr + embeddings.csv
    const SelectionResult& stage_selection();      // selection.json
    Network& stage_pretrain();                     // checkpoints/pretrain.knwr
    RunResult stage_adapt_evaluate();              // best.knwr, record.csv, metrics.json
    RunResult evaluate_checkpoint();               // reuse checkpoints/best.knwr

    RunResult run_all();

    const ExperimentConfig& config() const { return cfg_; }
    const std::filesystem::path& out() const { return out_; }

    // Current stage name for error reporting.
    const std::string& stage_name() const { return stage_; }

private:
    struct SplitsHolder;
    const SplitsHolder& splits();

    ExperimentConfig cfg_;
    std::filesystem::path out_;
    bool fresh_;
    std::string stage_ = "config";

    std::shared_ptr<SplitsHolder> splits_;
    std::optional<ConditionGraph> graph_;
    std::optional<TuckerModel> tucker_;
    std::optional<SelectionResult> selection_;
    std::optional<Network> network_;
    RunRecord pretrain_record_;
    bool pretrained_ = false;
};

RunResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out);

nlohmann::json metrics_json(const ExperimentConfig& cfg, const RunResult& result);

enum class SweepAxis { source_fraction, edge_retention, train_fraction };
SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepSpec {
    SweepAxis axis = SweepAxis::source_fraction;
    std::vector<double> grid;
    std::vector<std::uint64_t> seeds;
};

// One row per (grid value, seed) plus mean/std aggregate rows; rows are
// flushed as runs finish. Returns the CSV path.
std::filesystem::path run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                const std::filesystem::path& out, int jobs);

// Full model plus the three single-flag ablations over shared seeds. Writes
// ablate.csv and prints the comparison table.
std::filesystem::path run_ablate(const ExperimentConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& out, int jobs);

// Per-source prevalence and code-chapter agreement for a selection file.
std::filesystem::path run_explain(const std::filesystem::path& selection_path,
                                  const std::filesystem::path& manifest_path,
                                  const std::filesystem::path& out);

// Uniform random search over the documented hyperparameter spaces; picks the
// best validation AUPRC.
std::filesystem::path run_search(const ExperimentConfig& base, int budget,
                                 const std::filesystem::path& out);

}  // namespace rarecast

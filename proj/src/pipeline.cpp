#include "rarecast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <sys/wait.h>
#include <unistd.h>

#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

namespace {

std::vector<const ProcessedStay*> ptrs(const std::vector<ProcessedStay>& v) {
    std::vector<const ProcessedStay*> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(&s);
    return out;
}

std::vector<const ProcessedStay*> of_condition(const std::vector<ProcessedStay>& v,
                                               const ConditionCode& code) {
    std::vector<const ProcessedStay*> out;
    for (const auto& s : v)
        if (s.condition == code) out.push_back(&s);
    return out;
}

}  // namespace

struct Pipeline::SplitsHolder {
    ProcessedSplit train, valid, test;
    std::vector<std::string> context_names;
};

Pipeline::Pipeline(ExperimentConfig cfg, std::filesystem::path out, bool fresh)
    : cfg_(std::move(cfg)), out_(std::move(out)), fresh_(fresh) {
    std::filesystem::create_directories(out_);
    write_text_file(out_ / "config.json", resolved_json(cfg_).dump(2) + "\n");
}

std::filesystem::path Pipeline::stage_data() {
    stage_ = "data";
    if (cfg_.dataset.kind == DatasetConfig::Kind::manifest) {
        if (cfg_.dataset.manifest.empty() || !std::filesystem::exists(cfg_.dataset.manifest))
            throw MissingFile("dataset manifest not found: " + cfg_.dataset.manifest.string());
        return cfg_.dataset.manifest;
    }
    const auto manifest = out_ / "data" / "manifest.json";
    if (fresh_ || !std::filesystem::exists(manifest)) {
        SynthSpec spec = cfg_.dataset.synth;
        if (!cfg_.dataset.synth_seed_fixed) spec.seed = derive_seed(cfg_.seed, "synth");
        write_synth_csvs(out_ / "data", generate(spec));
    }
    return manifest;
}

const Pipeline::SplitsHolder& Pipeline::splits() {
    if (splits_) return *splits_;
    const auto manifest = stage_data();
    stage_ = "preprocess";

    auto holder = std::make_shared<SplitsHolder>();
    const auto proc_dir = out_ / "processed";
    const bool cached = !fresh_ && std::filesystem::exists(proc_dir / "train.knwr");
    if (cached) {
        holder->train = load_processed(proc_dir / "train.knwr", proc_dir / "train.json");
        holder->valid = load_processed(proc_dir / "valid.knwr", proc_dir / "valid.json");
        holder->test = load_processed(proc_dir / "test.knwr", proc_dir / "test.json");
        splits_ = std::move(holder);
        return *splits_;
    }

    Cohort cohort = load_cohort(manifest);
    holder->context_names = cohort.context_names;
    const auto kept =
        filter_cohort(cohort.stays, cfg_.min_stay_hours, cfg_.min_patients_per_condition);
    const auto split = split_cohort(kept, cfg_.split_fractions, derive_seed(cfg_.seed, "split"));

    std::map<std::string, const CohortStay*> by_id;
    for (const auto& s : kept) by_id[s.stay_id] = &s;
    auto collect = [&](const std::vector<std::string>& ids) {
        std::vector<const CohortStay*> out;
        for (const auto& id : ids) out.push_back(by_id.at(id));
        return out;
    };
    const auto train_raw = collect(split.train);
    const auto valid_raw = collect(split.valid);
    const auto test_raw = collect(split.test);

    Preprocessor prep(cfg_.preprocess);
    prep.fit(train_raw, int(cohort.variables.size()));

    auto transform_all = [&](const std::vector<const CohortStay*>& raw, ProcessedSplit& out) {
        out.task = cohort.task;
        out.n_classes = cohort.n_classes;
        for (const auto* s : raw) out.stays.push_back(prep.transform(*s));
    };
    transform_all(train_raw, holder->train);
    transform_all(valid_raw, holder->valid);
    transform_all(test_raw, holder->test);

    const auto hash = config_hash(cfg_);
    save_processed(proc_dir / "train.knwr", proc_dir / "train.json", holder->train, hash);
    save_processed(proc_dir / "valid.knwr", proc_dir / "valid.json", holder->valid, hash);
    save_processed(proc_dir / "test.knwr", proc_dir / "test.json", holder->test, hash);
    splits_ = std::move(holder);
    return *splits_;
}

void Pipeline::stage_preprocess() { splits(); }

const ConditionGraph& Pipeline::stage_graph() {
    if (graph_) return *graph_;
    const auto& sp = splits();
    stage_ = "build-kg";
    const auto path = out_ / "kg" / "edges.tsv";
    if (!fresh_ && std::filesystem::exists(path)) {
        graph_ = load_edges(path);
        return *graph_;
    }
    graph_ = build_graph(sp.train.stays, cfg_.edge_retention, cfg_.prune_fraction);
    save_edges(path, *graph_);
    return *graph_;
}

const TuckerModel& Pipeline::stage_tucker() {
    if (tucker_) return *tucker_;
    const auto& graph = stage_graph();
    stage_ = "embed-kg";
    TuckerTrainConfig tc = cfg_.embed;
    tc.seed = derive_seed(cfg_.seed, "tucker");
    tucker_ = train_tucker(graph, tc);
    save_tucker(out_ / "kg" / "tucker.knwr", *tucker_);
    save_embeddings(out_ / "kg" / "embeddings.csv", *tucker_);
    return *tucker_;
}

const SelectionResult& Pipeline::stage_selection() {
    if (selection_) return *selection_;
    const auto& sp = splits();
    stage_ = "select";
    if (cfg_.target.empty()) throw ConfigError("config: target condition is required");

    std::set<ConditionCode> conditions;
    for (const auto& s : sp.train.stays) conditions.insert(s.condition);
    if (!conditions.count(cfg_.target))
        throw UnknownCondition("target " + cfg_.target + " has no training stays");

    SelectionResult sel;
    if (cfg_.train.ablation.no_selection) {
        // adaptation pool = every available condition
        sel.target = cfg_.target;
        for (const auto& code : conditions)
            if (code != cfg_.target) sel.sources.emplace_back(code, 0.0);
    } else {
        const auto& model = stage_tucker();
        stage_ = "select";
        const int n = int(model.conditions.size());
        int k = cfg_.select_k;
        if (k <= 0)
            k = std::clamp(int(std::ceil(cfg_.select_fraction * double(n))), 1, n - 1);
        k = std::clamp(k, 1, n - 1);
        sel = select_sources(model, cfg_.target, k);
    }
    save_selection(out_ / "selection.json", sel);
    selection_ = std::move(sel);
    return *selection_;
}

Network& Pipeline::stage_pretrain() {
    const auto& sp = splits();
    const auto& sel = stage_selection();
    stage_ = "pretrain";

    if (!network_) {
        const int n_domains =
            cfg_.train.ablation.no_adaptation ? 1 : int(sel.sources.size()) + 1;
        Rng init_rng = derive_rng(cfg_.seed, "init");
        network_ = Network::make(sp.train.task, sp.train.stays.front().F,
                                 int(sp.train.stays.front().context.size()),
                                 sp.train.n_classes, n_domains, cfg_.train.hidden_dim,
                                 init_rng);
    }
    if (pretrained_) return *network_;

    const auto ckpt = out_ / "checkpoints" / "pretrain.knwr";
    if (cfg_.train.ablation.no_pretrain) {
        pretrained_ = true;  // random initialization kept as-is
        return *network_;
    }
    if (!fresh_ && std::filesystem::exists(ckpt)) {
        load_network(ckpt, *network_);
        pretrained_ = true;
        return *network_;
    }
    RunRecord record;
    pretrain(*network_, ptrs(sp.train.stays), ptrs(sp.valid.stays), cfg_.train, record);
    pretrain_record_ = std::move(record);
    save_network(ckpt, *network_);
    pretrained_ = true;
    return *network_;
}

RunResult Pipeline::stage_adapt_evaluate() {
    const auto& sp = splits();
    const auto& sel = stage_selection();
    Network& net = stage_pretrain();
    stage_ = "adapt";

    RunRecord record = pretrain_record_;

    // Pool assembly: selected sources then the target, training split only.
    std::vector<std::pair<ConditionCode, int>> domains;  // code -> domain id
    if (!cfg_.train.ablation.no_adaptation) {
        int id = 0;
        for (const auto& [code, cosine] : sel.sources) domains.emplace_back(code, id++);
    }
    const int target_domain = int(domains.size());

    auto target_train = of_condition(sp.train.stays, cfg_.target);
    if (cfg_.train.target_train_fraction < 1.0) {
        const int keep = std::max(
            1, int(std::ceil(cfg_.train.target_train_fraction * double(target_train.size()))));
        Rng r = derive_rng(cfg_.seed, "target-limit");
        r.shuffle(target_train);
        target_train.resize(std::size_t(std::min<int>(keep, int(target_train.size()))));
    }
    if (cfg_.train.target_train_limit > 0 &&
        int(target_train.size()) > cfg_.train.target_train_limit) {
        Rng r = derive_rng(cfg_.seed, "target-limit");
        r.shuffle(target_train);
        target_train.resize(std::size_t(cfg_.train.target_train_limit));
    }

    AdaptPool pool;
    pool.n_domains = target_domain + 1;
    std::map<ConditionCode, long> counts;
    for (const auto& [code, id] : domains) {
        const auto stays = of_condition(sp.train.stays, code);
        if (stays.empty())
            throw MissingDomain("selected condition " + code + " has no training samples");
        counts[code] = long(stays.size());
        for (const auto* s : stays) {
            pool.stays.push_back(s);
            pool.domain_ids.push_back(id);
        }
    }
    counts[cfg_.target] = long(target_train.size());
    for (const auto* s : target_train) {
        pool.stays.push_back(s);
        pool.domain_ids.push_back(target_domain);
    }
    for (const auto* s : pool.stays)
        pool.raw_weights.push_back(propensity_weight(s->condition, counts));

    TrainConfig adapt_cfg = cfg_.train;
    if (cfg_.train.ablation.no_adaptation) adapt_cfg.lambda = 0.0;

    const auto target_valid = of_condition(sp.valid.stays, cfg_.target);
    adapt(net, pool, target_valid, adapt_cfg, record);

    stage_ = "evaluate";
    const auto target_test = of_condition(sp.test.stays, cfg_.target);
    RunResult result;
    result.metrics = evaluate(net, target_test, sp.test.task);
    result.record = std::move(record);
    result.task = sp.test.task;
    result.run_dir = out_;
    for (const auto& row : result.record.rows)
        if (row.phase == "adapt" && row.epoch == result.record.best_adapt_epoch)
            result.best_val_auprc = row.val_auprc;

    save_network(out_ / "checkpoints" / "best.knwr", net);
    nlohmann::json sidecar;
    sidecar["task"] = task_name(sp.test.task);
    sidecar["F"] = net.n_vars;
    sidecar["C"] = net.n_ctx;
    sidecar["n_domains"] = net.n_domains;
    sidecar["selection_hash"] =
        hex64(fnv1a64(read_text_file(out_ / "selection.json")));
    write_text_file(out_ / "checkpoints" / "best.json", sidecar.dump(2) + "\n");

    write_record_csv(out_ / "record.csv", result.record);
    write_text_file(out_ / "metrics.json", metrics_json(cfg_, result).dump(2) + "\n");
    return result;
}

RunResult Pipeline::evaluate_checkpoint() {
    const auto& sp = splits();
    const auto& sel = stage_selection();
    stage_ = "evaluate";
    const auto ckpt = out_ / "checkpoints" / "best.knwr";
    if (!std::filesystem::exists(ckpt))
        throw MissingFile("no checkpoint at " + ckpt.string() + "; run adapt first");

    const int n_domains = cfg_.train.ablation.no_adaptation ? 1 : int(sel.sources.size()) + 1;
    Rng init_rng = derive_rng(cfg_.seed, "init");
    Network net = Network::make(sp.train.task, sp.train.stays.front().F,
                                int(sp.train.stays.front().context.size()),
                                sp.train.n_classes, n_domains, cfg_.train.hidden_dim,
                                init_rng);
    load_network(ckpt, net);

    RunResult result;
    result.metrics = evaluate(net, of_condition(sp.test.stays, cfg_.target), sp.test.task);
    result.task = sp.test.task;
    result.run_dir = out_;
    write_text_file(out_ / "metrics.json", metrics_json(cfg_, result).dump(2) + "\n");
    return result;
}

RunResult Pipeline::run_all() { return stage_adapt_evaluate(); }

RunResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    Pipeline p(cfg, out, /*fresh=*/true);
    return p.run_all();
}

nlohmann::json metrics_json(const ExperimentConfig& cfg, const RunResult& result) {
    nlohmann::json j;
    const auto& m = result.metrics;
    j["task"] = task_name(result.task);
    j["auroc"] = m.auroc ? nlohmann::json(*m.auroc) : nlohmann::json(nullptr);
    j["auprc"] = m.auprc ? nlohmann::json(*m.auprc) : nlohmann::json(nullptr);
    auto per_class = nlohmann::json::array();
    for (const auto& pc : m.per_class) {
        nlohmann::json c;
        c["class"] = pc.cls;
        c["auroc"] = pc.auroc ? nlohmann::json(*pc.auroc) : nlohmann::json(nullptr);
        c["auprc"] = pc.auprc ? nlohmann::json(*pc.auprc) : nlohmann::json(nullptr);
        per_class.push_back(std::move(c));
    }
    j["per_class"] = std::move(per_class);
    j["excluded_classes"] = m.excluded_classes;
    j["n_test"] = m.n_test;
    j["prevalence"] = m.prevalence;
    if (!result.record.rows.empty())
        j["best_epoch"] = {{"pretrain", result.record.best_pretrain_epoch},
                           {"adapt", result.record.best_adapt_epoch}};
    j["target"] = cfg.target;
    j["seed"] = cfg.seed;
    return j;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "source_fraction") return SweepAxis::source_fraction;
    if (name == "edge_retention") return SweepAxis::edge_retention;
    if (name == "train_fraction") return SweepAxis::train_fraction;
    throw ConfigError("unknown sweep axis '" + name + "'");
}

namespace {

std::string axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::source_fraction: return "source_fraction";
        case SweepAxis::edge_retention: return "edge_retention";
        case SweepAxis::train_fraction: return "train_fraction";
    }
    return "source_fraction";
}

ExperimentConfig apply_axis(ExperimentConfig cfg, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::source_fraction:
            cfg.select_k = 0;
            cfg.select_fraction = value;
            break;
        case SweepAxis::edge_retention:
            cfg.edge_retention = value;
            break;
        case SweepAxis::train_fraction:
            cfg.train.target_train_fraction = value;
            break;
    }
    return cfg;
}

struct Task {
    ExperimentConfig cfg;
    std::filesystem::path dir;
};

// Runs tasks in worker processes (jobs > 1) or inline; results are read back
// from each run directory's metrics.json.
void run_tasks(const std::vector<Task>& tasks, int jobs) {
    if (jobs <= 1) {
        for (const auto& t : tasks) run_pipeline(t.cfg, t.dir);
        return;
    }
    std::vector<pid_t> active;
    auto reap = [&](bool block) {
        for (auto it = active.begin(); it != active.end();) {
            int status = 0;
            const pid_t r = waitpid(*it, &status, block ? 0 : WNOHANG);
            if (r == *it) {
                if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
                    throw Error("WorkerFailed", "sweep worker exited abnormally");
                it = active.erase(it);
                if (block) return;
            } else {
                ++it;
            }
        }
    };
    for (const auto& t : tasks) {
        while (int(active.size()) >= jobs) reap(true);
        const pid_t pid = fork();
        if (pid < 0) throw Error("WorkerFailed", "fork failed");
        if (pid == 0) {
            try {
                run_pipeline(t.cfg, t.dir);
                _exit(0);
            } catch (...) {
                _exit(1);
            }
        }
        active.push_back(pid);
    }
    while (!active.empty()) reap(true);
}

std::pair<std::optional<double>, std::optional<double>> read_run_metrics(
    const std::filesystem::path& dir) {
    const auto j = nlohmann::json::parse(read_text_file(dir / "metrics.json"));
    std::optional<double> prc, roc;
    if (!j.at("auprc").is_null()) prc = j.at("auprc").get<double>();
    if (!j.at("auroc").is_null()) roc = j.at("auroc").get<double>();
    return {prc, roc};
}

struct Agg {
    double mean = 0.0, stddev = 0.0;
    int n = 0;
};

Agg aggregate(const std::vector<double>& vs) {
    Agg a;
    a.n = int(vs.size());
    if (vs.empty()) return a;
    for (double v : vs) a.mean += v;
    a.mean /= double(vs.size());
    for (double v : vs) a.stddev += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(a.stddev / double(vs.size()));
    return a;
}

}  // namespace

std::filesystem::path run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                const std::filesystem::path& out, int jobs) {
    if (spec.grid.empty()) throw ConfigError("sweep: empty grid");
    if (spec.seeds.empty()) throw ConfigError("sweep: empty seed list");
    for (double v : spec.grid)
        if (v <= 0.0 || v > 1.0) throw ConfigError("sweep: grid values must be in (0, 1]");

    std::filesystem::create_directories(out);
    const auto csv_path = out / "sweep.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "axis_value,seed,auprc,auroc\n" << std::flush;

    std::vector<Task> tasks;
    for (double v : spec.grid)
        for (auto seed : spec.seeds) {
            ExperimentConfig cfg = apply_axis(base, spec.axis, v);
            cfg.seed = seed;
            char dirname[64];
            std::snprintf(dirname, sizeof(dirname), "%s_%g_s%llu",
                          axis_name(spec.axis).c_str(), v,
                          static_cast<unsigned long long>(seed));
            tasks.push_back({std::move(cfg), out / dirname});
        }

    if (jobs > 1) run_tasks(tasks, jobs);

    std::size_t idx = 0;
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> per_value;
    for (double v : spec.grid) {
        for (auto seed : spec.seeds) {
            const auto& task = tasks[idx++];
            if (jobs <= 1) run_pipeline(task.cfg, task.dir);
            const auto [prc, roc] = read_run_metrics(task.dir);
            csv << fmt_g(v, 12) << ',' << seed << ','
                << (prc ? fmt_g(*prc, 9) : "") << ',' << (roc ? fmt_g(*roc, 9) : "")
                << '\n'
                << std::flush;
            if (prc) per_value[v].first.push_back(*prc);
            if (roc) per_value[v].second.push_back(*roc);
        }
    }
    for (double v : spec.grid) {
        const auto prc = aggregate(per_value[v].first);
        const auto roc = aggregate(per_value[v].second);
        csv << fmt_g(v, 12) << ",mean," << fmt_g(prc.mean, 9) << ',' << fmt_g(roc.mean, 9)
            << '\n';
        csv << fmt_g(v, 12) << ",std," << fmt_g(prc.stddev, 9) << ','
            << fmt_g(roc.stddev, 9) << '\n';
    }
    csv.flush();
    return csv_path;
}

std::filesystem::path run_ablate(const ExperimentConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& out, int jobs) {
    if (seeds.empty()) throw ConfigError("ablate: empty seed list");
    struct Variant {
        std::string name;
        AblationFlags flags;
    };
    const std::vector<Variant> variants = {
        {"wo_domain_selection", {.no_selection = true}},
        {"wo_pretraining", {.no_pretrain = true}},
        {"wo_domain_adaptation", {.no_adaptation = true}},
        {"full", {}},
    };

    std::filesystem::create_directories(out);
    std::vector<Task> tasks;
    for (const auto& variant : variants)
        for (auto seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.train.ablation = variant.flags;
            cfg.seed = seed;
            tasks.push_back({std::move(cfg), out / variant.name / ("s" + std::to_string(seed))});
        }
    run_tasks(tasks, jobs);

    const auto csv_path = out / "ablate.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "variant,seed,auprc,auroc\n";
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> agg;
    std::size_t idx = 0;
    for (const auto& variant : variants)
        for (auto seed : seeds) {
            const auto [prc, roc] = read_run_metrics(tasks[idx++].dir);
            csv << variant.name << ',' << seed << ',' << (prc ? fmt_g(*prc, 9) : "") << ','
                << (roc ? fmt_g(*roc, 9) : "") << '\n';
            if (prc) agg[variant.name].first.push_back(*prc);
            if (roc) agg[variant.name].second.push_back(*roc);
        }
    for (const auto& variant : variants) {
        const auto prc = aggregate(agg[variant.name].first);
        const auto roc = aggregate(agg[variant.name].second);
        csv << variant.name << ",mean," << fmt_g(prc.mean, 9) << ',' << fmt_g(roc.mean, 9)
            << '\n';
        csv << variant.name << ",std," << fmt_g(prc.stddev, 9) << ','
            << fmt_g(roc.stddev, 9) << '\n';
    }
    csv.flush();

    const std::map<std::string, std::string> pretty = {
        {"wo_domain_selection", "w/o Domain Selection"},
        {"wo_pretraining", "w/o Pre-training"},
        {"wo_domain_adaptation", "w/o Domain Adaptation"},
        {"full", "full"},
    };
    std::printf("%-24s %-18s %-18s\n", "Method", "AUPRC", "AUROC");
    for (const auto& variant : variants) {
        const auto prc = aggregate(agg[variant.name].first);
        const auto roc = aggregate(agg[variant.name].second);
        std::printf("%-24s %.3f (%.3f)      %.3f (%.3f)\n",
                    pretty.at(variant.name).c_str(), prc.mean, prc.stddev, roc.mean,
                    roc.stddev);
    }
    return csv_path;
}

std::filesystem::path run_explain(const std::filesystem::path& selection_path,
                                  const std::filesystem::path& manifest_path,
                                  const std::filesystem::path& out) {
    const auto sel = load_selection(selection_path);
    const auto cohort = load_cohort(manifest_path);
    std::map<ConditionCode, long> counts;
    for (const auto& s : cohort.stays) ++counts[s.condition];

    std::filesystem::create_directories(out);
    const auto csv_path = out / "explain.csv";
    std::vector<std::vector<std::string>> rows;
    int distinct = 0;
    for (const auto& [code, cosine] : sel.sources) {
        const bool different = !code.empty() && !sel.target.empty() && code[0] != sel.target[0];
        distinct += different ? 1 : 0;
        const auto it = counts.find(code);
        rows.push_back({code, fmt_g(cosine, 9),
                        std::to_string(it == counts.end() ? 0 : it->second),
                        different ? "true" : "false"});
    }
    write_csv(csv_path, {"source", "cosine", "n_stays", "different_chapter"}, rows);
    const double fraction =
        sel.sources.empty() ? 0.0 : double(distinct) / double(sel.sources.size());
    std::printf("target=%s k=%zu fraction_distinct_chapter=%.3f\n", sel.target.c_str(),
                sel.sources.size(), fraction);
    return csv_path;
}

std::filesystem::path run_search(const ExperimentConfig& base, int budget,
                                 const std::filesystem::path& out) {
    if (budget < 1) throw ConfigError("search: budget must be >= 1");
    Rng rng = derive_rng(base.seed, "search");
    const std::vector<int> batch_sizes = {16, 32, 64, 128};
    const std::vector<double> lambdas = {0.005, 0.01, 0.02, 0.1};

    std::filesystem::create_directories(out);
    const auto csv_path = out / "search.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "trial,base_lr,disc_lr,batch_size,lambda,disc_update_freq,val_auprc,auprc,auroc\n";

    double best_metric = -std::numeric_limits<double>::infinity();
    nlohmann::json best_cfg;
    for (int trial = 0; trial < budget; ++trial) {
        ExperimentConfig cfg = base;
        cfg.train.base_lr = rng.uniform(1e-5, 1e-3);
        cfg.train.disc_lr = rng.uniform(1e-5, 1e-3);
        cfg.train.batch_size = batch_sizes[std::size_t(rng.below(batch_sizes.size()))];
        cfg.train.lambda = lambdas[std::size_t(rng.below(lambdas.size()))];
        cfg.train.disc_update_freq = rng.uniform_int(1, 5);
        const auto dir = out / ("trial" + std::to_string(trial));
        const RunResult result = run_pipeline(cfg, dir);
        // validation AUPRC when defined, else fall back to the test AUPRC so
        // degenerate validation splits still rank trials
        const double val =
            result.best_val_auprc.value_or(result.metrics.auprc.value_or(-1.0));
        csv << trial << ',' << fmt_g(cfg.train.base_lr, 9) << ','
            << fmt_g(cfg.train.disc_lr, 9) << ',' << cfg.train.batch_size << ','
            << fmt_g(cfg.train.lambda, 9) << ',' << cfg.train.disc_update_freq << ','
            << fmt_g(val, 9) << ','
            << (result.metrics.auprc ? fmt_g(*result.metrics.auprc, 9) : "") << ','
            << (result.metrics.auroc ? fmt_g(*result.metrics.auroc, 9) : "") << '\n'
            << std::flush;
        if (val > best_metric) {
            best_metric = val;
            best_cfg = resolved_json(cfg);
        }
    }
    write_text_file(out / "best_config.json", best_cfg.dump(2) + "\n");
    return csv_path;
}

}  // namespace rarecast

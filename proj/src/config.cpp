#include "rarecast/config.hpp"

#include <set>

#include "rarecast/errors.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + path + "." + key + "'");
}

template <class T>
T get_num(const json& obj, const std::string& path, const char* key, T fallback,
          double lo, double hi) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number())
        throw ConfigError(path + "." + key + ": expected a number");
    const double d = v.get<double>();
    if (d < lo || d > hi)
        throw ConfigError(path + "." + key + ": value " + fmt_g(d, 12) +
                          " outside [" + fmt_g(lo, 12) + ", " + fmt_g(hi, 12) + "]");
    return T(d);
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected a boolean");
    return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
    ExperimentConfig cfg;
    check_keys(doc, "$",
               {"seed", "target", "dataset", "preprocess", "split", "kg", "embed",
                "select", "train"});

    cfg.seed = get_num<std::uint64_t>(doc, "$", "seed", 1, 0, 9e18);
    cfg.target = get_str(doc, "$", "target", "");

    if (doc.contains("dataset")) {
        const auto& ds = doc.at("dataset");
        check_keys(ds, "$.dataset", {"kind", "manifest", "synth"});
        const auto kind = get_str(ds, "$.dataset", "kind", "synth");
        if (kind == "synth") {
            cfg.dataset.kind = DatasetConfig::Kind::synth;
        } else if (kind == "manifest") {
            cfg.dataset.kind = DatasetConfig::Kind::manifest;
            cfg.dataset.manifest = get_str(ds, "$.dataset", "manifest", "");
            if (cfg.dataset.manifest.empty())
                throw ConfigError("$.dataset.manifest is required for kind=manifest");
        } else {
            throw ConfigError("$.dataset.kind must be 'synth' or 'manifest'");
        }
        if (ds.contains("synth")) {
            const auto& sy = ds.at("synth");
            check_keys(sy, "$.dataset.synth",
                       {"n_conditions", "n_clusters", "patients_lo", "patients_hi",
                        "variables", "windows", "window_minutes", "noise_sigma", "ar_lo",
                        "ar_hi", "missing_rate", "cluster_mean_spread",
                        "condition_mean_jitter", "label_coef_scale", "label_bias",
                        "flip_alternate_clusters", "codiag_same_cluster_prob",
                        "drugs_per_cluster", "drugs_per_condition", "drug_stay_prob",
                        "seed", "rare"});
            auto& s = cfg.dataset.synth;
            const std::string p = "$.dataset.synth";
            s.n_conditions = get_num<int>(sy, p, "n_conditions", s.n_conditions, 1, 999);
            s.n_clusters = get_num<int>(sy, p, "n_clusters", s.n_clusters, 1, 10);
            s.patients_lo = get_num<int>(sy, p, "patients_lo", s.patients_lo, 1, 1e6);
            s.patients_hi = get_num<int>(sy, p, "patients_hi", s.patients_hi, 1, 1e6);
            s.n_vars = get_num<int>(sy, p, "variables", s.n_vars, 1, 256);
            s.windows = get_num<int>(sy, p, "windows", s.windows, 1, 1024);
            s.window_minutes = get_num<int>(sy, p, "window_minutes", s.window_minutes, 1, 1440);
            s.noise_sigma = get_num<double>(sy, p, "noise_sigma", s.noise_sigma, 1e-9, 100);
            s.ar_lo = get_num<double>(sy, p, "ar_lo", s.ar_lo, -0.999, 0.999);
            s.ar_hi = get_num<double>(sy, p, "ar_hi", s.ar_hi, -0.999, 0.999);
            s.missing_rate = get_num<double>(sy, p, "missing_rate", s.missing_rate, 0.0, 0.95);
            s.cluster_mean_spread =
                get_num<double>(sy, p, "cluster_mean_spread", s.cluster_mean_spread, 0, 100);
            s.condition_mean_jitter = get_num<double>(sy, p, "condition_mean_jitter",
                                                      s.condition_mean_jitter, 0, 100);
            s.label_coef_scale =
                get_num<double>(sy, p, "label_coef_scale", s.label_coef_scale, 0, 100);
            s.label_bias = get_num<double>(sy, p, "label_bias", s.label_bias, -20, 20);
            s.flip_alternate_clusters =
                get_bool(sy, p, "flip_alternate_clusters", s.flip_alternate_clusters);
            s.codiag_same_cluster_prob = get_num<double>(sy, p, "codiag_same_cluster_prob",
                                                         s.codiag_same_cluster_prob, 0, 1);
            s.drugs_per_cluster =
                get_num<int>(sy, p, "drugs_per_cluster", s.drugs_per_cluster, 1, 1000);
            s.drugs_per_condition =
                get_num<int>(sy, p, "drugs_per_condition", s.drugs_per_condition, 1, 1000);
            s.drug_stay_prob = get_num<double>(sy, p, "drug_stay_prob", s.drug_stay_prob, 0, 1);
            if (sy.contains("seed")) {
                s.seed = get_num<std::uint64_t>(sy, p, "seed", 0, 0, 9e18);
                cfg.dataset.synth_seed_fixed = s.seed != 0;
            }
            if (sy.contains("rare")) {
                const auto& rare = sy.at("rare");
                check_keys(rare, p + ".rare", {"condition", "n"});
                const auto condition = get_str(rare, p + ".rare", "condition", "");
                const int n = get_num<int>(rare, p + ".rare", "n", 0, 1, 1e6);
                if (condition.empty())
                    throw ConfigError(p + ".rare.condition is required");
                s.rare_n[condition] = n;
            }
        }
    }

    if (doc.contains("preprocess")) {
        const auto& pp = doc.at("preprocess");
        check_keys(pp, "$.preprocess",
                   {"window_minutes", "window_count", "anchor", "min_stay_hours",
                    "min_patients_per_condition"});
        const std::string p = "$.preprocess";
        cfg.preprocess.window_minutes =
            get_num<int>(pp, p, "window_minutes", cfg.preprocess.window_minutes, 1, 1440);
        cfg.preprocess.window_count =
            get_num<int>(pp, p, "window_count", cfg.preprocess.window_count, 1, 1024);
        cfg.preprocess.anchor =
            anchor_from_name(get_str(pp, p, "anchor", anchor_name(cfg.preprocess.anchor)));
        cfg.min_stay_hours =
            get_num<double>(pp, p, "min_stay_hours", cfg.min_stay_hours, 0, 1e6);
        cfg.min_patients_per_condition = get_num<int>(
            pp, p, "min_patients_per_condition", cfg.min_patients_per_condition, 1, 1e6);
    }

    if (doc.contains("split")) {
        const auto& sp = doc.at("split");
        check_keys(sp, "$.split", {"fractions"});
        if (sp.contains("fractions")) {
            const auto& fr = sp.at("fractions");
            if (!fr.is_array() || fr.size() != 3)
                throw ConfigError("$.split.fractions must be an array of 3 numbers");
            for (int i = 0; i < 3; ++i)
                cfg.split_fractions[std::size_t(i)] = fr.at(std::size_t(i)).get<double>();
        }
    }

    if (doc.contains("kg")) {
        const auto& kg = doc.at("kg");
        check_keys(kg, "$.kg", {"edge_retention", "prune_fraction"});
        cfg.edge_retention =
            get_num<double>(kg, "$.kg", "edge_retention", cfg.edge_retention, 1e-9, 1.0);
        cfg.prune_fraction =
            get_num<double>(kg, "$.kg", "prune_fraction", cfg.prune_fraction, 1e-9, 1.0);
    }

    if (doc.contains("embed")) {
        const auto& em = doc.at("embed");
        check_keys(em, "$.embed", {"dim", "epochs", "negatives_per_positive", "lr"});
        const std::string p = "$.embed";
        cfg.embed.dim = get_num<int>(em, p, "dim", cfg.embed.dim, 1, 512);
        cfg.embed.epochs = get_num<int>(em, p, "epochs", cfg.embed.epochs, 0, 100000);
        cfg.embed.negatives_per_positive = get_num<int>(
            em, p, "negatives_per_positive", cfg.embed.negatives_per_positive, 1, 100);
        cfg.embed.lr = get_num<double>(em, p, "lr", cfg.embed.lr, 1e-9, 10);
    }

    if (doc.contains("select")) {
        const auto& se = doc.at("select");
        check_keys(se, "$.select", {"k", "fraction"});
        cfg.select_k = get_num<int>(se, "$.select", "k", cfg.select_k, 0, 1e6);
        cfg.select_fraction =
            get_num<double>(se, "$.select", "fraction", cfg.select_fraction, 1e-9, 1.0);
    }

    if (doc.contains("train")) {
        const auto& tr = doc.at("train");
        check_keys(tr, "$.train",
                   {"max_epochs", "patience", "batch_size", "base_lr", "disc_lr", "lambda",
                    "disc_update_freq", "hidden_dim", "uniform_weights",
                    "target_train_limit", "target_train_fraction", "ablation"});
        const std::string p = "$.train";
        auto& t = cfg.train;
        t.max_epochs = get_num<int>(tr, p, "max_epochs", t.max_epochs, 1, 100000);
        t.patience = get_num<int>(tr, p, "patience", t.patience, 1, 100000);
        t.batch_size = get_num<int>(tr, p, "batch_size", t.batch_size, 1, 100000);
        t.base_lr = get_num<double>(tr, p, "base_lr", t.base_lr, 1e-12, 10);
        t.disc_lr = get_num<double>(tr, p, "disc_lr", t.disc_lr, 1e-12, 10);
        t.lambda = get_num<double>(tr, p, "lambda", t.lambda, 0, 1000);
        t.disc_update_freq = get_num<int>(tr, p, "disc_update_freq", t.disc_update_freq, 1, 100);
        t.hidden_dim = get_num<int>(tr, p, "hidden_dim", t.hidden_dim, 1, 4096);
        t.uniform_weights = get_bool(tr, p, "uniform_weights", t.uniform_weights);
        t.target_train_limit =
            get_num<int>(tr, p, "target_train_limit", t.target_train_limit, 0, 1e9);
        t.target_train_fraction = get_num<double>(tr, p, "target_train_fraction",
                                                  t.target_train_fraction, 1e-9, 1.0);
        if (tr.contains("ablation")) {
            const auto& ab = tr.at("ablation");
            check_keys(ab, p + ".ablation", {"no_selection", "no_pretrain", "no_adaptation"});
            t.ablation.no_selection = get_bool(ab, p + ".ablation", "no_selection", false);
            t.ablation.no_pretrain = get_bool(ab, p + ".ablation", "no_pretrain", false);
            t.ablation.no_adaptation = get_bool(ab, p + ".ablation", "no_adaptation", false);
        }
    }

    const double fsum =
        cfg.split_fractions[0] + cfg.split_fractions[1] + cfg.split_fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9)
        throw ConfigError("$.split.fractions must sum to 1");
    if (cfg.dataset.synth.patients_hi < cfg.dataset.synth.patients_lo)
        throw ConfigError("$.dataset.synth.patients_hi < patients_lo");
    cfg.train.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

nlohmann::json resolved_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["target"] = cfg.target;

    nlohmann::json ds;
    ds["kind"] = cfg.dataset.kind == DatasetConfig::Kind::synth ? "synth" : "manifest";
    if (cfg.dataset.kind == DatasetConfig::Kind::manifest)
        ds["manifest"] = cfg.dataset.manifest.string();
    const auto& s = cfg.dataset.synth;
    nlohmann::json sy;
    sy["n_conditions"] = s.n_conditions;
    sy["n_clusters"] = s.n_clusters;
    sy["patients_lo"] = s.patients_lo;
    sy["patients_hi"] = s.patients_hi;
    sy["variables"] = s.n_vars;
    sy["windows"] = s.windows;
    sy["window_minutes"] = s.window_minutes;
    sy["noise_sigma"] = s.noise_sigma;
    sy["ar_lo"] = s.ar_lo;
    sy["ar_hi"] = s.ar_hi;
    sy["missing_rate"] = s.missing_rate;
    sy["cluster_mean_spread"] = s.cluster_mean_spread;
    sy["condition_mean_jitter"] = s.condition_mean_jitter;
    sy["label_coef_scale"] = s.label_coef_scale;
    sy["label_bias"] = s.label_bias;
    sy["flip_alternate_clusters"] = s.flip_alternate_clusters;
    sy["codiag_same_cluster_prob"] = s.codiag_same_cluster_prob;
    sy["drugs_per_cluster"] = s.drugs_per_cluster;
    sy["drugs_per_condition"] = s.drugs_per_condition;
    sy["drug_stay_prob"] = s.drug_stay_prob;
    sy["seed"] = cfg.dataset.synth_seed_fixed ? s.seed : 0;
    if (!s.rare_n.empty()) {
        const auto& [condition, n] = *s.rare_n.begin();
        sy["rare"] = {{"condition", condition}, {"n", n}};
    }
    ds["synth"] = std::move(sy);
    j["dataset"] = std::move(ds);

    j["preprocess"] = {{"window_minutes", cfg.preprocess.window_minutes},
                       {"window_count", cfg.preprocess.window_count},
                       {"anchor", anchor_name(cfg.preprocess.anchor)},
                       {"min_stay_hours", cfg.min_stay_hours},
                       {"min_patients_per_condition", cfg.min_patients_per_condition}};
    j["split"] = {{"fractions", cfg.split_fractions}};
    j["kg"] = {{"edge_retention", cfg.edge_retention},
               {"prune_fraction", cfg.prune_fraction}};
    j["embed"] = {{"dim", cfg.embed.dim},
                  {"epochs", cfg.embed.epochs},
                  {"negatives_per_positive", cfg.embed.negatives_per_positive},
                  {"lr", cfg.embed.lr}};
    j["select"] = {{"k", cfg.select_k}, {"fraction", cfg.select_fraction}};
    j["train"] = {{"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"batch_size", cfg.train.batch_size},
                  {"base_lr", cfg.train.base_lr},
                  {"disc_lr", cfg.train.disc_lr},
                  {"lambda", cfg.train.lambda},
                  {"disc_update_freq", cfg.train.disc_update_freq},
                  {"hidden_dim", cfg.train.hidden_dim},
                  {"uniform_weights", cfg.train.uniform_weights},
                  {"target_train_limit", cfg.train.target_train_limit},
                  {"target_train_fraction", cfg.train.target_train_fraction},
                  {"ablation",
                   {{"no_selection", cfg.train.ablation.no_selection},
                    {"no_pretrain", cfg.train.ablation.no_pretrain},
                    {"no_adaptation", cfg.train.ablation.no_adaptation}}}};
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    return hex64(fnv1a64(resolved_json(cfg).dump()));
}

}  // namespace rarecast

#include "rarecast/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

int SynthSpec::cluster_of_index(int condition_index) const {
    // Contiguous blocks; the first n_conditions % n_clusters clusters get one
    // extra member.
    const int base = n_conditions / n_clusters;
    const int extra = n_conditions % n_clusters;
    int idx = condition_index;
    for (int c = 0; c < n_clusters; ++c) {
        const int size = base + (c < extra ? 1 : 0);
        if (idx < size) return c;
        idx -= size;
    }
    return n_clusters - 1;
}

std::string SynthSpec::code_of_index(int condition_index) const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%d%02d", cluster_of_index(condition_index),
                  condition_index);
    return buf;
}

namespace {

struct ClusterParams {
    std::vector<double> ar, sigma, mu, beta;
    std::vector<std::string> drug_pool;
};

ClusterParams make_cluster_params(const SynthSpec& spec, int c,
                                  const std::vector<double>& beta_shared) {
    ClusterParams p;
    Rng rng = derive_rng(spec.seed, "cluster/" + std::to_string(c));
    for (int f = 0; f < spec.n_vars; ++f) {
        p.ar.push_back(rng.uniform(spec.ar_lo, spec.ar_hi));
        p.sigma.push_back(spec.noise_sigma * rng.uniform(0.8, 1.2));
        p.mu.push_back(spec.cluster_mean_spread * rng.normal());
    }
    const double sign = (spec.flip_alternate_clusters && c % 2 == 1) ? -1.0 : 1.0;
    for (int f = 0; f < spec.n_vars; ++f) p.beta.push_back(sign * beta_shared[std::size_t(f)]);
    for (int i = 0; i < spec.drugs_per_cluster; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "drug_c%d_%02d", c, i);
        p.drug_pool.emplace_back(buf);
    }
    return p;
}

}  // namespace

SynthOutput generate(const SynthSpec& spec) {
    if (spec.n_conditions < 1 || spec.n_clusters < 1 || spec.n_clusters > spec.n_conditions)
        throw ConfigError("synth: need 1 <= n_clusters <= n_conditions");
    if (spec.n_vars < 1 || spec.windows < 1 || spec.window_minutes < 1)
        throw ConfigError("synth: variables/windows must be positive");
    if (spec.patients_lo < 1 || spec.patients_hi < spec.patients_lo)
        throw ConfigError("synth: bad patient count range");
    if (spec.ar_hi >= 1.0 || spec.ar_lo <= -1.0)
        throw ConfigError("synth: AR coefficients must satisfy |a| < 1");
    if (spec.drugs_per_condition > spec.drugs_per_cluster)
        throw ConfigError("synth: drugs_per_condition exceeds cluster pool");

    // Shared outcome-rule direction; clusters take it with a sign.
    std::vector<double> beta_shared;
    {
        Rng rng = derive_rng(spec.seed, "labels");
        double norm2 = 0.0;
        for (int f = 0; f < spec.n_vars; ++f) {
            beta_shared.push_back(rng.uniform(-1.0, 1.0));
            norm2 += beta_shared.back() * beta_shared.back();
        }
        const double scale = spec.label_coef_scale / std::max(std::sqrt(norm2), 1e-12);
        for (auto& b : beta_shared) b *= scale;
    }

    std::vector<ClusterParams> clusters;
    for (int c = 0; c < spec.n_clusters; ++c)
        clusters.push_back(make_cluster_params(spec, c, beta_shared));

    SynthOutput out;
    auto& truth = out.truth;
    for (int i = 0; i < spec.n_conditions; ++i) {
        truth.conditions.push_back(spec.code_of_index(i));
        truth.cluster_of.push_back(spec.cluster_of_index(i));
    }
    truth.similarity.assign(std::size_t(spec.n_conditions),
                            std::vector<double>(std::size_t(spec.n_conditions), 0.0));
    for (int i = 0; i < spec.n_conditions; ++i)
        for (int j = 0; j < spec.n_conditions; ++j)
            if (truth.cluster_of[std::size_t(i)] == truth.cluster_of[std::size_t(j)])
                truth.similarity[std::size_t(i)][std::size_t(j)] = 1.0;
    for (const auto& cp : clusters) {
        truth.ar_coeff.push_back(cp.ar);
        truth.ar_sigma.push_back(cp.sigma);
    }

    Cohort& cohort = out.cohort;
    cohort.task = TaskKind::binary;
    cohort.n_classes = 2;
    for (int f = 0; f < spec.n_vars; ++f) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "var%02d", f);
        cohort.variables.emplace_back(buf);
    }
    cohort.context_names = {"age",      "gender=f", "gender=m", "gender=unknown",
                            "race=raceA", "race=raceB", "race=raceC", "race=unknown"};

    const double span_hours = double(spec.windows) * spec.window_minutes / 60.0;
    const std::vector<std::string> race_names = {"raceA", "raceB", "raceC"};

    for (int ci = 0; ci < spec.n_conditions; ++ci) {
        const std::string code = truth.conditions[std::size_t(ci)];
        const int cluster = truth.cluster_of[std::size_t(ci)];
        const auto& cp = clusters[std::size_t(cluster)];
        Rng crng = derive_rng(spec.seed, "cond/" + code);

        std::vector<double> mu = cp.mu;
        for (auto& m : mu) m += spec.condition_mean_jitter * crng.normal();

        std::vector<std::string> vocab = cp.drug_pool;
        crng.shuffle(vocab);
        vocab.resize(std::size_t(spec.drugs_per_condition));
        std::sort(vocab.begin(), vocab.end());

        const int roster = crng.uniform_int(spec.patients_lo, spec.patients_hi);

        std::vector<CohortStay> stays;
        for (int p = 0; p < roster; ++p) {
            char sid[32];
            std::snprintf(sid, sizeof(sid), "%s-%04d", code.c_str(), p);
            Rng rng = derive_rng(spec.seed, std::string("stay/") + sid);

            CohortStay stay;
            stay.stay_id = sid;
            stay.patient_id = std::string("p") + sid;
            stay.condition = code;
            stay.stay_hours = span_hours;
            stay.n_vars = spec.n_vars;

            // latent AR(1) per variable, started at stationarity
            std::vector<double> z(std::size_t(spec.n_vars));
            for (int f = 0; f < spec.n_vars; ++f) {
                const double a = cp.ar[std::size_t(f)], s = cp.sigma[std::size_t(f)];
                z[std::size_t(f)] = rng.normal(0.0, s / std::sqrt(1.0 - a * a));
            }
            std::vector<double> feature_sum(std::size_t(spec.n_vars), 0.0);
            std::vector<double> values(std::size_t(spec.windows) * spec.n_vars);
            for (int t = 0; t < spec.windows; ++t) {
                for (int f = 0; f < spec.n_vars; ++f) {
                    if (t > 0) {
                        const double a = cp.ar[std::size_t(f)], s = cp.sigma[std::size_t(f)];
                        z[std::size_t(f)] = a * z[std::size_t(f)] + rng.normal(0.0, s);
                    }
                    feature_sum[std::size_t(f)] += z[std::size_t(f)];
                    values[std::size_t(t) * spec.n_vars + std::size_t(f)] =
                        mu[std::size_t(f)] + z[std::size_t(f)];
                }
            }
            // missingness mask; rows with no observed cell are dropped
            std::vector<std::uint8_t> observed(values.size());
            for (auto& o : observed) o = rng.uniform() >= spec.missing_rate ? 1 : 0;
            for (int t = 0; t < spec.windows; ++t) {
                bool any = false;
                for (int f = 0; f < spec.n_vars; ++f)
                    any = any || observed[std::size_t(t) * spec.n_vars + std::size_t(f)];
                if (!any) continue;
                stay.timestamps.push_back(double(t) * spec.window_minutes +
                                          spec.window_minutes / 2.0);
                for (int f = 0; f < spec.n_vars; ++f) {
                    stay.series.push_back(values[std::size_t(t) * spec.n_vars + std::size_t(f)]);
                    stay.mask.push_back(observed[std::size_t(t) * spec.n_vars + std::size_t(f)]);
                }
            }

            const double age = rng.normal(60.0, 12.0);
            const bool male = rng.uniform() < 0.5;
            const int race = rng.uniform_int(0, 2);
            stay.context.assign(cohort.context_names.size(), 0.0);
            stay.context[0] = age;
            stay.context[male ? 2 : 1] = 1.0;
            stay.context[std::size_t(4 + race)] = 1.0;

            for (const auto& d : vocab)
                if (rng.uniform() < spec.drug_stay_prob) stay.drugs.insert(d);

            // co-diagnosis: usually a cluster mate, otherwise uniform
            stay.diagnoses.push_back(code);
            if (spec.n_conditions > 1) {
                std::vector<int> same, other;
                for (int j = 0; j < spec.n_conditions; ++j) {
                    if (j == ci) continue;
                    (truth.cluster_of[std::size_t(j)] == cluster ? same : other).push_back(j);
                }
                const bool in_cluster =
                    !same.empty() && rng.uniform() < spec.codiag_same_cluster_prob;
                const auto& pool = in_cluster ? same : (other.empty() ? same : other);
                const int sec = pool[std::size_t(rng.below(pool.size()))];
                stay.diagnoses.push_back(truth.conditions[std::size_t(sec)]);
                std::sort(stay.diagnoses.begin(), stay.diagnoses.end());
                stay.diagnoses.erase(
                    std::unique(stay.diagnoses.begin(), stay.diagnoses.end()),
                    stay.diagnoses.end());
            }

            double logit = spec.label_bias;
            for (int f = 0; f < spec.n_vars; ++f)
                logit += cp.beta[std::size_t(f)] * feature_sum[std::size_t(f)] / spec.windows;
            stay.outcome.task = TaskKind::binary;
            stay.outcome.value = rng.uniform() < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;

            stays.push_back(std::move(stay));
        }

        const auto rare = spec.rare_n.find(code);
        if (rare != spec.rare_n.end()) {
            const int n = rare->second;
            if (n < 1 || n > int(stays.size()))
                throw ConfigError("make_rare: n out of range for condition " + code);
            int first_pos = -1;
            for (std::size_t i = 0; i < stays.size(); ++i)
                if (stays[i].outcome.value == 1) {
                    first_pos = int(i);
                    break;
                }
            if (first_pos < 0)
                throw Infeasible("make_rare: condition " + code + " has no positive sample");
            std::vector<CohortStay> kept(stays.begin(), stays.begin() + n);
            const bool has_pos = std::any_of(kept.begin(), kept.end(), [](const auto& s) {
                return s.outcome.value == 1;
            });
            if (!has_pos) kept.back() = stays[std::size_t(first_pos)];
            stays = std::move(kept);
        }

        for (auto& s : stays) cohort.stays.push_back(std::move(s));
    }
    return out;
}

SynthSpec make_rare(const SynthSpec& spec, const ConditionCode& condition, int n) {
    bool known = false;
    for (int i = 0; i < spec.n_conditions; ++i)
        known = known || spec.code_of_index(i) == condition;
    if (!known) throw UnknownCondition("make_rare: no condition " + condition);
    if (n < 1) throw ConfigError("make_rare: n must be >= 1");
    SynthSpec out = spec;
    out.rare_n[condition] = n;
    return out;
}

std::filesystem::path write_synth_csvs(const std::filesystem::path& dir,
                                       const SynthOutput& out) {
    std::filesystem::create_directories(dir);
    const auto& cohort = out.cohort;

    std::vector<std::vector<std::string>> stay_rows, series_rows, drug_rows, outcome_rows;
    for (const auto& s : cohort.stays) {
        std::string codes = s.condition;
        for (const auto& d : s.diagnoses)
            if (d != s.condition) codes += ";" + d;
        std::string gender = s.context[1] == 1.0 ? "F" : s.context[2] == 1.0 ? "M" : "";
        std::string race;
        for (std::size_t i = 4; i + 1 < cohort.context_names.size(); ++i)
            if (s.context[i] == 1.0) race = cohort.context_names[i].substr(5);
        stay_rows.push_back({s.stay_id, s.patient_id, fmt_exact(s.context[0]), gender,
                             race, codes, fmt_exact(s.stay_hours)});
        for (std::size_t t = 0; t < s.timestamps.size(); ++t)
            for (int f = 0; f < s.n_vars; ++f) {
                const std::size_t cell = t * std::size_t(s.n_vars) + std::size_t(f);
                if (!s.mask[cell]) continue;
                series_rows.push_back({s.stay_id, fmt_exact(s.timestamps[t]),
                                       cohort.variables[std::size_t(f)],
                                       fmt_exact(s.series[cell])});
            }
        for (const auto& d : s.drugs) drug_rows.push_back({s.stay_id, d});
        outcome_rows.push_back({s.stay_id, std::to_string(s.outcome.value)});
    }
    write_csv(dir / "stays.csv",
              {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
               "stay_hours"},
              stay_rows);
    write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"}, series_rows);
    write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, drug_rows);
    write_csv(dir / "outcomes.csv", {"stay_id", "label"}, outcome_rows);

    nlohmann::json manifest;
    manifest["stays_csv"] = "stays.csv";
    manifest["series_csv"] = "series.csv";
    manifest["drugs_csv"] = "drugs.csv";
    manifest["outcomes_csv"] = "outcomes.csv";
    manifest["task"] = task_name(cohort.task);
    const auto manifest_path = dir / "manifest.json";
    write_text_file(manifest_path, manifest.dump(2) + "\n");

    nlohmann::json truth;
    truth["conditions"] = out.truth.conditions;
    nlohmann::json cluster_of = nlohmann::json::object();
    for (std::size_t i = 0; i < out.truth.conditions.size(); ++i)
        cluster_of[out.truth.conditions[i]] = out.truth.cluster_of[i];
    truth["cluster_of"] = std::move(cluster_of);
    truth["similarity"] = out.truth.similarity;
    write_text_file(dir / "truth.json", truth.dump(2) + "\n");
    return manifest_path;
}

}  // namespace rarecast

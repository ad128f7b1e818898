#include "rarecast/cohort.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

std::string task_name(TaskKind t) {
    switch (t) {
        case TaskKind::binary: return "binary";
        case TaskKind::multiclass: return "multiclass";
        case TaskKind::multilabel: return "multilabel";
    }
    return "binary";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "binary") return TaskKind::binary;
    if (name == "multiclass") return TaskKind::multiclass;
    if (name == "multilabel") return TaskKind::multilabel;
    throw SchemaError("unknown task '" + name + "'");
}

ConditionCode assign_primary_condition(const std::string& raw_icd) {
    std::string stripped;
    stripped.reserve(raw_icd.size());
    for (char c : raw_icd)
        if (c != '.') stripped.push_back(c);
    if (stripped.size() < 3)
        throw MalformedCode("ICD code '" + raw_icd + "' has fewer than 3 characters");
    return stripped.substr(0, 3);
}

std::vector<CohortStay> filter_cohort(const std::vector<CohortStay>& stays,
                                      double min_hours,
                                      int min_patients_per_condition) {
    std::vector<const CohortStay*> long_enough;
    for (const auto& s : stays)
        if (s.stay_hours >= min_hours) long_enough.push_back(&s);

    std::map<ConditionCode, std::set<std::string>> patients_of;
    for (const auto* s : long_enough)
        patients_of[s->condition].insert(s->patient_id);

    std::vector<CohortStay> kept;
    for (const auto* s : long_enough)
        if (int(patients_of[s->condition].size()) >= min_patients_per_condition)
            kept.push_back(*s);
    if (kept.empty()) throw EmptyCohort("no stays survive cohort filtering");
    return kept;
}

CohortSplit split_cohort(const std::vector<CohortStay>& stays,
                         const std::array<double, 3>& fractions,
                         std::uint64_t seed) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");

    // Patients follow their first stay's condition; all of a patient's stays
    // land in one split.
    std::map<ConditionCode, std::vector<std::string>> patients_by_condition;
    std::unordered_map<std::string, std::vector<const CohortStay*>> stays_of;
    std::unordered_set<std::string> seen_patient;
    for (const auto& s : stays) {
        if (seen_patient.insert(s.patient_id).second)
            patients_by_condition[s.condition].push_back(s.patient_id);
        stays_of[s.patient_id].push_back(&s);
    }

    CohortSplit split;
    auto& buckets = split;
    for (auto& [condition, patients] : patients_by_condition) {
        std::sort(patients.begin(), patients.end());
        Rng rng = derive_rng(seed, "split/" + condition);
        rng.shuffle(patients);

        const std::size_t n = patients.size();
        std::array<std::size_t, 3> counts{};
        if (n < 3) {
            for (std::size_t i = 0; i < n; ++i) counts[i] = 1;
        } else {
            std::array<double, 3> quota{};
            std::size_t assigned = 0;
            for (int i = 0; i < 3; ++i) {
                quota[i] = double(n) * fractions[i];
                counts[i] = std::size_t(std::floor(quota[i]));
                assigned += counts[i];
            }
            std::array<int, 3> order{0, 1, 2};
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
            });
            for (std::size_t r = 0; r < n - assigned; ++r) ++counts[order[r % 3]];
        }

        std::size_t idx = 0;
        for (int part = 0; part < 3; ++part) {
            auto* dst = part == 0 ? &buckets.train : part == 1 ? &buckets.valid : &buckets.test;
            for (std::size_t i = 0; i < counts[part]; ++i, ++idx)
                for (const auto* s : stays_of[patients[idx]])
                    dst->push_back(s->stay_id);
        }
    }
    return split;
}

namespace {

double parse_double(const std::string& s, const std::string& file, std::size_t row) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        throw ParseError(file + ": row " + std::to_string(row + 2) +
                         ": '" + s + "' is not a number");
    return v;
}

long parse_long(const std::string& s, const std::string& file, std::size_t row) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
        throw ParseError(file + ": row " + std::to_string(row + 2) +
                         ": '" + s + "' is not an integer");
    return v;
}

std::string norm_gender(const std::string& g) {
    if (g.empty()) return "unknown";
    const char c = char(std::tolower(static_cast<unsigned char>(g[0])));
    if (c == 'm') return "m";
    if (c == 'f') return "f";
    return "unknown";
}

}  // namespace

Cohort load_cohort(const std::filesystem::path& manifest_path) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    for (const char* key : {"stays_csv", "series_csv", "drugs_csv", "outcomes_csv", "task"})
        if (!manifest.contains(key))
            throw SchemaError(manifest_path.string() + ": missing key '" + std::string(key) + "'");

    const auto base = manifest_path.parent_path();
    auto resolve = [&](const std::string& rel) { return base / rel; };
    const auto stays_path = resolve(manifest["stays_csv"].get<std::string>());
    const auto series_path = resolve(manifest["series_csv"].get<std::string>());
    const auto drugs_path = resolve(manifest["drugs_csv"].get<std::string>());
    const auto outcomes_path = resolve(manifest["outcomes_csv"].get<std::string>());

    Cohort cohort;
    cohort.task = task_from_name(manifest["task"].get<std::string>());

    const auto stays_csv = read_csv(stays_path);
    const std::string sf = stays_path.string();
    const auto c_id = stays_csv.col("stay_id", sf);
    const auto c_patient = stays_csv.col("patient_id", sf);
    const auto c_age = stays_csv.col("age", sf);
    const auto c_gender = stays_csv.col("gender", sf);
    const auto c_race = stays_csv.col("race", sf);
    const auto c_icd = stays_csv.col("condition_icd9", sf);
    const auto c_hours = stays_csv.col("stay_hours", sf);

    std::unordered_map<std::string, std::size_t> stay_index;
    std::set<std::string> races;
    struct RawStay {
        std::string gender, race;
        double age = 0.0;
    };
    std::vector<RawStay> raw(stays_csv.rows.size());

    for (std::size_t r = 0; r < stays_csv.rows.size(); ++r) {
        const auto& row = stays_csv.rows[r];
        CohortStay stay;
        stay.stay_id = row[c_id];
        stay.patient_id = row[c_patient];
        if (!stay_index.emplace(stay.stay_id, r).second)
            throw SchemaError(sf + ": duplicate stay_id '" + stay.stay_id + "'");
        // condition_icd9 may carry a ';'-separated code list; the first code
        // is the primary diagnosis.
        std::string codes = row[c_icd];
        std::vector<ConditionCode> level3;
        std::size_t start = 0;
        while (start <= codes.size()) {
            const auto sep = codes.find(';', start);
            const std::string one = codes.substr(
                start, sep == std::string::npos ? std::string::npos : sep - start);
            if (!one.empty()) level3.push_back(assign_primary_condition(one));
            if (sep == std::string::npos) break;
            start = sep + 1;
        }
        if (level3.empty())
            throw SchemaError(sf + ": stay '" + stay.stay_id + "' has no condition code");
        stay.condition = level3.front();
        std::sort(level3.begin(), level3.end());
        level3.erase(std::unique(level3.begin(), level3.end()), level3.end());
        stay.diagnoses = std::move(level3);
        stay.stay_hours = parse_double(row[c_hours], sf, r);
        raw[r].age = parse_double(row[c_age], sf, r);
        raw[r].gender = norm_gender(row[c_gender]);
        raw[r].race = row[c_race].empty() ? "unknown" : row[c_race];
        if (raw[r].race != "unknown") races.insert(raw[r].race);
        cohort.stays.push_back(std::move(stay));
    }
    if (cohort.stays.empty())
        throw EmptyCohort(sf + ": manifest lists zero stays");

    // Context layout: age in years, then gender and race one-hot with an
    // explicit unknown slot each.
    cohort.context_names = {"age", "gender=f", "gender=m", "gender=unknown"};
    std::vector<std::string> race_list(races.begin(), races.end());
    for (const auto& rc : race_list) cohort.context_names.push_back("race=" + rc);
    cohort.context_names.push_back("race=unknown");
    for (std::size_t r = 0; r < cohort.stays.size(); ++r) {
        auto& ctx = cohort.stays[r].context;
        ctx.assign(cohort.context_names.size(), 0.0);
        ctx[0] = raw[r].age;
        ctx[raw[r].gender == "f" ? 1 : raw[r].gender == "m" ? 2 : 3] = 1.0;
        std::size_t race_slot = 4 + race_list.size();  // unknown by default
        for (std::size_t i = 0; i < race_list.size(); ++i)
            if (race_list[i] == raw[r].race) race_slot = 4 + i;
        ctx[race_slot] = 1.0;
    }

    // Series: long format -> per-stay [T_raw, F] grid with mask.
    const auto series_csv = read_csv(series_path);
    const std::string ef = series_path.string();
    const auto e_id = series_csv.col("stay_id", ef);
    const auto e_min = series_csv.col("minute", ef);
    const auto e_var = series_csv.col("variable", ef);
    const auto e_val = series_csv.col("value", ef);

    std::set<std::string> var_names;
    for (const auto& row : series_csv.rows) var_names.insert(row[e_var]);
    cohort.variables.assign(var_names.begin(), var_names.end());
    std::unordered_map<std::string, int> var_index;
    for (std::size_t i = 0; i < cohort.variables.size(); ++i)
        var_index[cohort.variables[i]] = int(i);
    const int F = int(cohort.variables.size());

    struct CellAcc {
        double sum = 0.0;
        int count = 0;
    };
    std::vector<std::map<double, std::vector<CellAcc>>> grid(cohort.stays.size());
    for (std::size_t r = 0; r < series_csv.rows.size(); ++r) {
        const auto& row = series_csv.rows[r];
        const auto it = stay_index.find(row[e_id]);
        if (it == stay_index.end())
            throw SchemaError(ef + ": measurement for unknown stay '" + row[e_id] + "'");
        if (row[e_val].empty()) continue;  // empty cell = missing
        const double minute = parse_double(row[e_min], ef, r);
        const double value = parse_double(row[e_val], ef, r);
        auto& per_minute = grid[it->second][minute];
        if (per_minute.empty()) per_minute.resize(std::size_t(F));
        auto& cell = per_minute[std::size_t(var_index[row[e_var]])];
        cell.sum += value;
        ++cell.count;
    }
    for (std::size_t s = 0; s < cohort.stays.size(); ++s) {
        auto& stay = cohort.stays[s];
        stay.n_vars = F;
        const auto& rows = grid[s];
        stay.timestamps.reserve(rows.size());
        stay.series.assign(rows.size() * std::size_t(F), 0.0);
        stay.mask.assign(rows.size() * std::size_t(F), 0);
        std::size_t t = 0;
        for (const auto& [minute, cells] : rows) {
            stay.timestamps.push_back(minute);
            for (int f = 0; f < F; ++f) {
                if (cells[std::size_t(f)].count > 0) {
                    stay.series[t * std::size_t(F) + std::size_t(f)] =
                        cells[std::size_t(f)].sum / cells[std::size_t(f)].count;
                    stay.mask[t * std::size_t(F) + std::size_t(f)] = 1;
                }
            }
            ++t;
        }
    }

    const auto drugs_csv = read_csv(drugs_path);
    const std::string df = drugs_path.string();
    const auto d_id = drugs_csv.col("stay_id", df);
    const auto d_name = drugs_csv.col("drug_name", df);
    for (const auto& row : drugs_csv.rows) {
        const auto it = stay_index.find(row[d_id]);
        if (it == stay_index.end())
            throw SchemaError(df + ": drug for unknown stay '" + row[d_id] + "'");
        if (!row[d_name].empty()) cohort.stays[it->second].drugs.insert(row[d_name]);
    }

    const auto outcomes_csv = read_csv(outcomes_path);
    const std::string of = outcomes_path.string();
    const auto o_id = outcomes_csv.col("stay_id", of);
    std::vector<bool> labeled(cohort.stays.size(), false);
    int n_classes = 2;
    if (cohort.task == TaskKind::multilabel) {
        const auto o_bits = outcomes_csv.col("label_bits", of);
        int n_labels = -1;
        for (std::size_t r = 0; r < outcomes_csv.rows.size(); ++r) {
            const auto& row = outcomes_csv.rows[r];
            const auto it = stay_index.find(row[o_id]);
            if (it == stay_index.end())
                throw SchemaError(of + ": outcome for unknown stay '" + row[o_id] + "'");
            if (labeled[it->second])
                throw SchemaError(of + ": duplicate outcome for stay '" + row[o_id] + "'");
            labeled[it->second] = true;
            OutcomeLabel out;
            out.task = TaskKind::multilabel;
            for (char c : row[o_bits]) {
                if (c != '0' && c != '1')
                    throw ParseError(of + ": row " + std::to_string(r + 2) +
                                     ": label_bits must be a 0/1 string");
                out.bits.push_back(c - '0');
            }
            if (out.bits.empty())
                throw ParseError(of + ": row " + std::to_string(r + 2) + ": empty label_bits");
            if (n_labels < 0) n_labels = int(out.bits.size());
            if (int(out.bits.size()) != n_labels)
                throw SchemaError(of + ": inconsistent label_bits length");
            cohort.stays[it->second].outcome = std::move(out);
        }
        n_classes = std::max(n_labels, 1);
    } else {
        const auto o_label = outcomes_csv.col("label", of);
        int max_label = 0;
        for (std::size_t r = 0; r < outcomes_csv.rows.size(); ++r) {
            const auto& row = outcomes_csv.rows[r];
            const auto it = stay_index.find(row[o_id]);
            if (it == stay_index.end())
                throw SchemaError(of + ": outcome for unknown stay '" + row[o_id] + "'");
            if (labeled[it->second])
                throw SchemaError(of + ": duplicate outcome for stay '" + row[o_id] + "'");
            labeled[it->second] = true;
            const long v = parse_long(row[o_label], of, r);
            if (v < 0 || (cohort.task == TaskKind::binary && v > 1))
                throw SchemaError(of + ": label " + std::to_string(v) + " out of range");
            OutcomeLabel out;
            out.task = cohort.task;
            out.value = int(v);
            max_label = std::max(max_label, int(v));
            cohort.stays[it->second].outcome = out;
        }
        n_classes = cohort.task == TaskKind::binary ? 2 : max_label + 1;
    }
    for (std::size_t s = 0; s < cohort.stays.size(); ++s)
        if (!labeled[s])
            throw SchemaError(of + ": no outcome for stay '" + cohort.stays[s].stay_id + "'");
    cohort.n_classes = n_classes;
    return cohort;
}

}  // namespace rarecast

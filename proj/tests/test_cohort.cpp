#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include <json.hpp>

#include "rarecast/cohort.hpp"
#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/rng.hpp"
#include "rarecast/util.hpp"

using namespace rarecast;
namespace fs = std::filesystem;

namespace {

CohortStay stay(const std::string& id, const std::string& patient,
                const std::string& condition, double hours) {
    CohortStay s;
    s.stay_id = id;
    s.patient_id = patient;
    s.condition = condition;
    s.diagnoses = {condition};
    s.stay_hours = hours;
    s.outcome.task = TaskKind::binary;
    return s;
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("rarecast_cohort_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_manifest(const fs::path& dir, const std::string& task = "binary") {
    nlohmann::json m = {{"stays_csv", "stays.csv"},
                        {"series_csv", "series.csv"},
                        {"drugs_csv", "drugs.csv"},
                        {"outcomes_csv", "outcomes.csv"},
                        {"task", task}};
    write_text_file(dir / "manifest.json", m.dump() + "\n");
    return dir / "manifest.json";
}

}  // namespace

TEST_CASE("primary condition truncation") {
    CHECK(assign_primary_condition("428.23") == "428");
    CHECK(assign_primary_condition("0389") == "038");
    CHECK(assign_primary_condition("V58.61") == "V58");
    CHECK(assign_primary_condition("E95") == "E95");
    CHECK_THROWS_AS(assign_primary_condition("4."), MalformedCode);
    CHECK_THROWS_AS(assign_primary_condition(""), MalformedCode);
}

TEST_CASE("primary condition always has length 3") {
    Rng rng(5);
    const std::string alphabet = "0123456789V.E";
    for (int trial = 0; trial < 500; ++trial) {
        std::string raw;
        const int len = 1 + int(rng.below(8));
        for (int i = 0; i < len; ++i)
            raw.push_back(alphabet[std::size_t(rng.below(alphabet.size()))]);
        try {
            const auto code = assign_primary_condition(raw);
            CHECK(code.size() == 3);
        } catch (const MalformedCode&) {
            std::string stripped;
            for (char c : raw)
                if (c != '.') stripped.push_back(c);
            CHECK(stripped.size() < 3);
        }
    }
}

TEST_CASE("cohort filter thresholds") {
    std::vector<CohortStay> stays;
    for (int i = 0; i < 12; ++i)
        stays.push_back(stay("a" + std::to_string(i), "pa" + std::to_string(i), "428",
                             i == 0 ? 47.9 : 48.0));
    for (int i = 0; i < 9; ++i)
        stays.push_back(stay("b" + std::to_string(i), "pb" + std::to_string(i), "038", 60.0));

    const auto kept = filter_cohort(stays, 48.0, 10);
    // 47.9h stay excluded; exactly 48.0h retained; 9-patient condition dropped
    std::set<std::string> ids;
    for (const auto& s : kept) ids.insert(s.stay_id);
    CHECK(!ids.count("a0"));
    CHECK(ids.count("a1"));
    CHECK(!ids.count("b0"));
    CHECK(kept.size() == 11);

    // input order preserved
    std::vector<std::string> expected;
    for (int i = 1; i < 12; ++i) expected.push_back("a" + std::to_string(i));
    std::vector<std::string> got;
    for (const auto& s : kept) got.push_back(s.stay_id);
    CHECK(got == expected);

    CHECK_THROWS_AS(filter_cohort(stays, 1000.0, 1), EmptyCohort);
}

TEST_CASE("filter is idempotent") {
    Rng rng(7);
    std::vector<CohortStay> stays;
    for (int i = 0; i < 60; ++i) {
        const std::string cond = i % 3 == 0 ? "428" : i % 3 == 1 ? "038" : "V58";
        stays.push_back(stay("s" + std::to_string(i), "p" + std::to_string(i), cond,
                             rng.uniform(20.0, 80.0)));
    }
    const auto once = filter_cohort(stays, 48.0, 5);
    const auto twice = filter_cohort(once, 48.0, 5);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(once[i].stay_id == twice[i].stay_id);
}

TEST_CASE("split matches largest-remainder apportionment") {
    std::vector<CohortStay> stays;
    for (int i = 0; i < 100; ++i)
        stays.push_back(stay("s" + std::to_string(i), "p" + std::to_string(i), "428", 50));
    const auto split = split_cohort(stays, {0.67, 0.16, 0.17}, 42);
    CHECK(split.train.size() == 67);
    CHECK(split.valid.size() == 16);
    CHECK(split.test.size() == 17);
}

TEST_CASE("split assigns tiny conditions in train->valid->test order") {
    std::vector<CohortStay> one = {stay("s0", "p0", "428", 50)};
    const auto sp1 = split_cohort(one, {0.67, 0.16, 0.17}, 1);
    CHECK(sp1.train.size() == 1);
    CHECK(sp1.valid.empty());
    CHECK(sp1.test.empty());

    std::vector<CohortStay> two = {stay("s0", "p0", "428", 50), stay("s1", "p1", "428", 50)};
    const auto sp2 = split_cohort(two, {0.67, 0.16, 0.17}, 1);
    CHECK(sp2.train.size() == 1);
    CHECK(sp2.valid.size() == 1);
    CHECK(sp2.test.empty());
}

TEST_CASE("split determinism and partition property") {
    Rng rng(11);
    std::vector<CohortStay> stays;
    for (int i = 0; i < 157; ++i) {
        const std::string cond = i % 4 == 0 ? "001" : i % 4 == 1 ? "002" : "003";
        stays.push_back(stay("s" + std::to_string(i), "p" + std::to_string(i % 80), cond, 50));
    }
    const auto a = split_cohort(stays, {0.67, 0.16, 0.17}, 9);
    const auto b = split_cohort(stays, {0.67, 0.16, 0.17}, 9);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);

    // disjoint and exhaustive over stay ids
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.valid, &a.test})
        for (const auto& id : *part) CHECK(seen.insert(id).second);
    CHECK(seen.size() == stays.size());

    // patient-level separation
    std::map<std::string, std::string> stay_patient;
    for (const auto& s : stays) stay_patient[s.stay_id] = s.patient_id;
    std::map<std::string, int> patient_part;
    int part_id = 0;
    for (const auto* part : {&a.train, &a.valid, &a.test}) {
        for (const auto& id : *part) {
            const auto& patient = stay_patient[id];
            if (patient_part.count(patient)) CHECK(patient_part[patient] == part_id);
            patient_part[patient] = part_id;
        }
        ++part_id;
    }
}

TEST_CASE("stratification share deviation below 1/n per condition") {
    std::vector<CohortStay> stays;
    Rng rng(13);
    const std::vector<std::string> conds = {"100", "200", "300", "400"};
    std::map<std::string, int> count;
    for (int i = 0; i < 400; ++i) {
        const auto& c = conds[std::size_t(rng.below(4))];
        stays.push_back(stay("s" + std::to_string(i), "p" + std::to_string(i), c, 50));
        ++count[c];
    }
    const auto split = split_cohort(stays, {0.67, 0.16, 0.17}, 3);
    std::map<std::string, std::array<int, 3>> by_cond;
    auto tally = [&](const std::vector<std::string>& ids, int part) {
        for (const auto& id : ids) {
            const auto idx = std::stoul(id.substr(1));
            by_cond[stays[idx].condition][std::size_t(part)] += 1;
        }
    };
    tally(split.train, 0);
    tally(split.valid, 1);
    tally(split.test, 2);
    const std::array<double, 3> fr = {0.67, 0.16, 0.17};
    for (const auto& [cond, parts] : by_cond) {
        const double n = double(count[cond]);
        if (n < 6) continue;
        for (int p = 0; p < 3; ++p)
            CHECK(std::abs(double(parts[std::size_t(p)]) / n - fr[std::size_t(p)]) < 1.0 / n);
    }
}

TEST_CASE("load_cohort parses the manifest formats") {
    const auto dir = temp_dir("load");
    write_csv(dir / "stays.csv",
              {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
               "stay_hours"},
              {{"s1", "p1", "63.5", "F", "raceA", "428.23;038.9", "50"},
               {"s2", "p2", "41", "M", "raceB", "0389", "49"}});
    write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"},
              {{"s1", "10", "hr", "80"},
               {"s1", "10", "temp", "37"},
               {"s1", "70", "hr", ""},
               {"s1", "130", "hr", "90"},
               {"s2", "5", "hr", "70"}});
    write_csv(dir / "drugs.csv", {"stay_id", "drug_name"},
              {{"s1", "aspirin"}, {"s1", "heparin"}, {"s2", "aspirin"}});
    write_csv(dir / "outcomes.csv", {"stay_id", "label"}, {{"s1", "1"}, {"s2", "0"}});
    const auto manifest = write_manifest(dir);

    const auto cohort = load_cohort(manifest);
    REQUIRE(cohort.stays.size() == 2);
    CHECK(cohort.variables == std::vector<std::string>{"hr", "temp"});

    const auto& s1 = cohort.stays[0];
    CHECK(s1.condition == "428");
    CHECK(s1.diagnoses == std::vector<std::string>{"038", "428"});
    CHECK(s1.timestamps == std::vector<double>{10.0, 130.0});  // empty value row dropped
    CHECK(s1.mask[0] == 1);   // hr at minute 10
    CHECK(s1.mask[1] == 1);   // temp at minute 10
    CHECK(s1.mask[3] == 0);   // temp at minute 130 missing
    CHECK(s1.drugs.size() == 2);
    CHECK(s1.outcome.value == 1);
    CHECK(s1.context[0] == doctest::Approx(63.5));
    CHECK(s1.context[1] == 1.0);  // gender=f slot

    const auto& s2 = cohort.stays[1];
    CHECK(s2.condition == "038");
    CHECK(s2.context[2] == 1.0);  // gender=m slot
}

TEST_CASE("load_cohort error paths") {
    // duplicate stay id
    {
        const auto dir = temp_dir("dup");
        write_csv(dir / "stays.csv",
                  {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
                   "stay_hours"},
                  {{"s1", "p1", "60", "F", "r", "428", "50"},
                   {"s1", "p1", "60", "F", "r", "428", "50"}});
        write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"}, {});
        write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, {});
        write_csv(dir / "outcomes.csv", {"stay_id", "label"}, {{"s1", "0"}});
        CHECK_THROWS_AS(load_cohort(write_manifest(dir)), SchemaError);
    }
    // zero stays
    {
        const auto dir = temp_dir("empty");
        write_csv(dir / "stays.csv",
                  {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
                   "stay_hours"},
                  {});
        write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"}, {});
        write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, {});
        write_csv(dir / "outcomes.csv", {"stay_id", "label"}, {});
        CHECK_THROWS_AS(load_cohort(write_manifest(dir)), EmptyCohort);
    }
    // missing column
    {
        const auto dir = temp_dir("schema");
        write_csv(dir / "stays.csv", {"stay_id", "patient_id"}, {{"s1", "p1"}});
        write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"}, {});
        write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, {});
        write_csv(dir / "outcomes.csv", {"stay_id", "label"}, {{"s1", "0"}});
        CHECK_THROWS_AS(load_cohort(write_manifest(dir)), SchemaError);
    }
    // malformed number carries file and row context
    {
        const auto dir = temp_dir("parse");
        write_csv(dir / "stays.csv",
                  {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
                   "stay_hours"},
                  {{"s1", "p1", "sixty", "F", "r", "428", "50"}});
        write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"}, {});
        write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, {});
        write_csv(dir / "outcomes.csv", {"stay_id", "label"}, {{"s1", "0"}});
        try {
            load_cohort(write_manifest(dir));
            CHECK(false);
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("stays.csv") != std::string::npos);
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        }
    }
    // multilabel bits
    {
        const auto dir = temp_dir("bits");
        write_csv(dir / "stays.csv",
                  {"stay_id", "patient_id", "age", "gender", "race", "condition_icd9",
                   "stay_hours"},
                  {{"s1", "p1", "60", "F", "r", "428", "50"}});
        write_csv(dir / "series.csv", {"stay_id", "minute", "variable", "value"},
                  {{"s1", "1", "hr", "80"}});
        write_csv(dir / "drugs.csv", {"stay_id", "drug_name"}, {});
        write_csv(dir / "outcomes.csv", {"stay_id", "label_bits"}, {{"s1", "0110"}});
        const auto cohort = load_cohort(write_manifest(dir, "multilabel"));
        CHECK(cohort.n_classes == 4);
        CHECK(cohort.stays[0].outcome.bits == std::vector<int>{0, 1, 1, 0});
    }
}

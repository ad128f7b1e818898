#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rarecast/preprocess.hpp"

namespace rarecast {

enum class Relation { diag = 0, record = 1, drug = 2 };

std::string relation_name(Relation r);
Relation relation_from_name(const std::string& name);

struct KgEdge {
    ConditionCode head;
    Relation rel = Relation::diag;
    ConditionCode tail;
    double weight = 0.0;
};

struct ConditionGraph {
    std::vector<ConditionCode> nodes;  // sorted
    std::vector<KgEdge> edges;
};

// Per-variable mean then per-variable std over all processed cells of a
// condition's training stays; length 2F.
struct ConditionProfile {
    std::vector<double> s;
};

using DiagnosisRecord = std::pair<std::string, std::vector<ConditionCode>>;

// Directed, row-normalized co-occurrence weights. Pairs that never co-occur
// are omitted.
std::vector<KgEdge> diag_cooccurrence(const std::vector<DiagnosisRecord>& records);

// Inverse-L2 similarity over profile vectors; keeps the top `prune_fraction`
// of unordered pairs and emits both directions.
std::vector<KgEdge> record_similarity(const std::map<ConditionCode, ConditionProfile>& profiles,
                                      double prune_fraction = 0.5);

// Jaccard similarity of drug sets; zero-weight pairs are omitted before the
// top-fraction prune. Symmetric.
std::vector<KgEdge> drug_similarity(const std::map<ConditionCode, std::set<std::string>>& drug_sets,
                                    double prune_fraction = 0.5);

ConditionProfile condition_profile(const std::vector<const ProcessedStay*>& stays, int F);

// Union of the three relations, each further filtered to its top
// edge_retention fraction (per relation; symmetric relations are ranked by
// unordered pair, diag by directed edge).
ConditionGraph build_graph(const std::vector<ProcessedStay>& train,
                           double edge_retention, double prune_fraction = 0.5);

// TSV edge list: head, relation, tail, weight (12 significant digits).
void save_edges(const std::filesystem::path& path, const ConditionGraph& graph);
ConditionGraph load_edges(const std::filesystem::path& path);

}  // namespace rarecast

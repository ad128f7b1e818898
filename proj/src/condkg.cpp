#include "rarecast/condkg.hpp"

#include <algorithm>
#include <cmath>

#include "rarecast/csv.hpp"
#include "rarecast/errors.hpp"
#include "rarecast/util.hpp"

namespace rarecast {

std::string relation_name(Relation r) {
    switch (r) {
        case Relation::diag: return "diag";
        case Relation::record: return "record";
        case Relation::drug: return "drug";
    }
    return "diag";
}

Relation relation_from_name(const std::string& name) {
    if (name == "diag") return Relation::diag;
    if (name == "record") return Relation::record;
    if (name == "drug") return Relation::drug;
    throw ParseError("unknown relation '" + name + "'");
}

namespace {

struct PairWeight {
    ConditionCode a, b;  // a < b
    double weight = 0.0;
};

// Top ceil(fraction * n) pairs by weight, ties by (head, tail).
std::vector<PairWeight> prune_pairs(std::vector<PairWeight> pairs, double fraction) {
    if (pairs.empty()) return pairs;
    std::sort(pairs.begin(), pairs.end(), [](const PairWeight& x, const PairWeight& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    const std::size_t keep = std::max<std::size_t>(
        1, std::size_t(std::ceil(fraction * double(pairs.size()))));
    pairs.resize(std::min(keep, pairs.size()));
    return pairs;
}

std::vector<KgEdge> emit_symmetric(const std::vector<PairWeight>& pairs, Relation rel) {
    std::vector<KgEdge> edges;
    edges.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        edges.push_back({p.a, rel, p.b, p.weight});
        edges.push_back({p.b, rel, p.a, p.weight});
    }
    return edges;
}

}  // namespace

std::vector<KgEdge> diag_cooccurrence(const std::vector<DiagnosisRecord>& records) {
    std::map<std::pair<ConditionCode, ConditionCode>, long> cooc;
    for (const auto& [stay_id, codes] : records) {
        if (codes.empty())
            throw EmptyCohort("diagnosis record " + stay_id + " has no codes");
        std::vector<ConditionCode> uniq = codes;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (std::size_t i = 0; i < uniq.size(); ++i)
            for (std::size_t j = i + 1; j < uniq.size(); ++j)
                ++cooc[{uniq[i], uniq[j]}];
    }
    std::map<ConditionCode, double> row_sum;
    for (const auto& [pair, n] : cooc) {
        row_sum[pair.first] += double(n);
        row_sum[pair.second] += double(n);
    }
    std::vector<KgEdge> edges;
    for (const auto& [pair, n] : cooc) {
        edges.push_back({pair.first, Relation::diag, pair.second,
                         double(n) / row_sum[pair.first]});
        edges.push_back({pair.second, Relation::diag, pair.first,
                         double(n) / row_sum[pair.second]});
    }
    return edges;
}

std::vector<KgEdge> record_similarity(const std::map<ConditionCode, ConditionProfile>& profiles,
                                      double prune_fraction) {
    std::size_t len = 0;
    for (const auto& [code, p] : profiles) {
        if (len == 0) len = p.s.size();
        if (p.s.size() != len)
            throw ShapeMismatch("record_similarity: profile lengths differ");
    }
    std::vector<PairWeight> pairs;
    for (auto it = profiles.begin(); it != profiles.end(); ++it)
        for (auto jt = std::next(it); jt != profiles.end(); ++jt) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double d = it->second.s[k] - jt->second.s[k];
                d2 += d * d;
            }
            pairs.push_back({it->first, jt->first, 1.0 / (1.0 + std::sqrt(d2))});
        }
    return emit_symmetric(prune_pairs(std::move(pairs), prune_fraction), Relation::record);
}

std::vector<KgEdge> drug_similarity(const std::map<ConditionCode, std::set<std::string>>& drug_sets,
                                    double prune_fraction) {
    std::vector<PairWeight> pairs;
    for (auto it = drug_sets.begin(); it != drug_sets.end(); ++it)
        for (auto jt = std::next(it); jt != drug_sets.end(); ++jt) {
            std::size_t inter = 0;
            for (const auto& d : it->second) inter += jt->second.count(d);
            const std::size_t uni = it->second.size() + jt->second.size() - inter;
            if (uni == 0 || inter == 0) continue;  // zero-weight pairs are omitted
            pairs.push_back({it->first, jt->first, double(inter) / double(uni)});
        }
    return emit_symmetric(prune_pairs(std::move(pairs), prune_fraction), Relation::drug);
}

ConditionProfile condition_profile(const std::vector<const ProcessedStay*>& stays, int F) {
    if (stays.empty()) throw EmptyCohort("condition_profile: no stays");
    ConditionProfile p;
    p.s.assign(std::size_t(2 * F), 0.0);
    long n = 0;
    for (const auto* s : stays) {
        for (int t = 0; t < s->T; ++t)
            for (int f = 0; f < F; ++f)
                p.s[std::size_t(f)] += s->x[std::size_t(t) * F + std::size_t(f)];
        n += s->T;
    }
    for (int f = 0; f < F; ++f) p.s[std::size_t(f)] /= double(n);
    for (const auto* s : stays)
        for (int t = 0; t < s->T; ++t)
            for (int f = 0; f < F; ++f) {
                const double d = s->x[std::size_t(t) * F + std::size_t(f)] - p.s[std::size_t(f)];
                p.s[std::size_t(F + f)] += d * d;
            }
    for (int f = 0; f < F; ++f)
        p.s[std::size_t(F + f)] = std::sqrt(p.s[std::size_t(F + f)] / double(n));
    return p;
}

namespace {

// edge_retention for the directed diag relation ranks individual edges.
std::vector<KgEdge> retain_directed(std::vector<KgEdge> edges, double retention) {
    if (edges.empty() || retention >= 1.0) return edges;
    std::sort(edges.begin(), edges.end(), [](const KgEdge& x, const KgEdge& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        if (x.head != y.head) return x.head < y.head;
        return x.tail < y.tail;
    });
    const std::size_t keep = std::max<std::size_t>(
        1, std::size_t(std::ceil(retention * double(edges.size()))));
    edges.resize(std::min(keep, edges.size()));
    return edges;
}

// Symmetric relations are retained by unordered pair; both directions of a
// surviving pair stay.
std::vector<KgEdge> retain_symmetric(const std::vector<KgEdge>& edges, Relation rel,
                                     double retention) {
    std::vector<PairWeight> pairs;
    for (const auto& e : edges)
        if (e.head < e.tail) pairs.push_back({e.head, e.tail, e.weight});
    if (retention < 1.0) pairs = prune_pairs(std::move(pairs), retention);
    return emit_symmetric(pairs, rel);
}

}  // namespace

ConditionGraph build_graph(const std::vector<ProcessedStay>& train,
                           double edge_retention, double prune_fraction) {
    if (edge_retention <= 0.0 || edge_retention > 1.0)
        throw ConfigError("edge_retention must be in (0, 1]");
    if (train.empty()) throw EmptyCohort("build_graph: empty training split");
    const int F = train.front().F;

    std::map<ConditionCode, std::vector<const ProcessedStay*>> by_condition;
    std::vector<DiagnosisRecord> records;
    std::map<ConditionCode, std::set<std::string>> drug_sets;
    for (const auto& s : train) {
        by_condition[s.condition].push_back(&s);
        records.emplace_back(s.stay_id, s.diagnoses);
        drug_sets[s.condition].insert(s.drugs.begin(), s.drugs.end());
    }

    std::map<ConditionCode, ConditionProfile> profiles;
    for (const auto& [code, stays] : by_condition)
        profiles[code] = condition_profile(stays, F);

    ConditionGraph g;
    for (const auto& [code, stays] : by_condition) g.nodes.push_back(code);

    auto diag = retain_directed(diag_cooccurrence(records), edge_retention);
    auto record = retain_symmetric(record_similarity(profiles, prune_fraction),
                                   Relation::record, edge_retention);
    auto drug = retain_symmetric(drug_similarity(drug_sets, prune_fraction),
                                 Relation::drug, edge_retention);
    g.edges.insert(g.edges.end(), diag.begin(), diag.end());
    g.edges.insert(g.edges.end(), record.begin(), record.end());
    g.edges.insert(g.edges.end(), drug.begin(), drug.end());
    if (g.edges.empty()) throw EmptyGraph("no edges survive graph construction");
    return g;
}

void save_edges(const std::filesystem::path& path, const ConditionGraph& graph) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(graph.edges.size());
    for (const auto& e : graph.edges)
        rows.push_back({e.head, relation_name(e.rel), e.tail, fmt_g(e.weight, 12)});
    write_csv(path, {"head", "relation", "tail", "weight"}, rows, '\t');
}

ConditionGraph load_edges(const std::filesystem::path& path) {
    const auto table = read_csv(path, '\t');
    const std::string f = path.string();
    const auto c_head = table.col("head", f);
    const auto c_rel = table.col("relation", f);
    const auto c_tail = table.col("tail", f);
    const auto c_w = table.col("weight", f);
    ConditionGraph g;
    std::set<ConditionCode> nodes;
    for (const auto& row : table.rows) {
        KgEdge e;
        e.head = row[c_head];
        e.rel = relation_from_name(row[c_rel]);
        e.tail = row[c_tail];
        e.weight = std::strtod(row[c_w].c_str(), nullptr);
        nodes.insert(e.head);
        nodes.insert(e.tail);
        g.edges.push_back(std::move(e));
    }
    g.nodes.assign(nodes.begin(), nodes.end());
    if (g.edges.empty()) throw EmptyGraph(f + ": no edges");
    return g;
}

}  // namespace rarecast

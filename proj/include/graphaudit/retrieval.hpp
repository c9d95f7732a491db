// Question-specific subgraph construction. Both pipelines share seed
// selection (top-k nodes by query cosine similarity) and the PCST-merge step;
// they differ in how the candidate pool is expanded:
//   single-hop  seeds plus all their neighbors
//   multi-hop   h rounds of expansion, keeping at most k_frontier
//               not-yet-included neighbors per frontier node, ranked by
//               query similarity
// PCST-merge assigns prizes to the pool's top nodes by similarity, solves the
// prize-collecting Steiner tree on the pool's induced subgraph, and unions the
// solution with the induced subgraph on the pool's most similar nodes.
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaudit/common.hpp"
#include "graphaudit/embedding.hpp"
#include "graphaudit/graph.hpp"
#include "graphaudit/pcst.hpp"

namespace graphaudit {

enum class RetrievalMode { SingleHop, MultiHop };
enum class PrizeMode { RankLinear, RawSimilarity };
enum class Provenance { Seed, Pcst, Merge, Both };

inline std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Seed: return "seed";
        case Provenance::Pcst: return "pcst";
        case Provenance::Merge: return "merge";
        case Provenance::Both: return "both";
    }
    return "merge";
}

inline Provenance provenance_from_name(const std::string& name) {
    if (name == "seed") return Provenance::Seed;
    if (name == "pcst") return Provenance::Pcst;
    if (name == "merge") return Provenance::Merge;
    if (name == "both") return Provenance::Both;
    throw DataError("unknown provenance: " + name);
}

struct RetrievalConfig {
    int k_seeds = 4;      // seed nodes by query similarity
    int hops = 3;         // expansion rounds (multi-hop only; single-hop is always 1)
    int k_frontier = 5;   // neighbors kept per frontier node and round
    int prize_pool = 100; // pool nodes that receive PCST prizes
    int merge_pool = 200; // pool nodes whose induced subgraph is merged in
    double edge_cost = 1.0;
    double prize_scale = 1.0;
    PrizeMode prize_mode = PrizeMode::RankLinear;

    void validate() const {
        if (k_seeds < 1) throw DataError("config: k_seeds must be positive");
        if (hops < 1) throw DataError("config: hops must be positive");
        if (k_frontier < 1) throw DataError("config: k_frontier must be positive");
        if (prize_pool < 1) throw DataError("config: prize_pool must be positive");
        if (merge_pool < 1) throw DataError("config: merge_pool must be positive");
        if (edge_cost <= 0.0) throw DataError("config: edge_cost must be positive");
        if (prize_scale <= 0.0) throw DataError("config: prize_scale must be positive");
    }
};

struct RetrievedSubgraph {
    std::string qid;
    KnowledgeGraph graph;
    std::vector<NodeId> seeds;                 // ascending
    std::map<NodeId, double> similarity;       // every node of graph
    std::map<NodeId, Provenance> provenance;   // every node of graph
};

inline std::vector<NodeId> select_seeds(const KnowledgeGraph& kg, const EmbeddingStore& store,
                                        const QueryEmbedding& q, const RetrievalConfig& cfg) {
    cfg.validate();
    std::vector<NodeId> all;
    all.reserve(kg.node_count());
    for (const NodeRecord& n : kg.nodes()) all.push_back(n.id);
    std::vector<NodeId> seeds;
    for (const auto& [id, sim] : top_k_similar(store, q, cfg.k_seeds, &all)) seeds.push_back(id);
    return seeds;  // descending similarity
}

inline std::vector<NodeId> expand_single_hop(const KnowledgeGraph& kg,
                                             const std::vector<NodeId>& seeds) {
    if (seeds.empty()) throw DataError("expand: no seeds");
    std::set<NodeId> pool(seeds.begin(), seeds.end());
    for (NodeId s : seeds) {
        int idx = kg.index_of(s);
        if (idx < 0) throw DataError("unknown node " + std::to_string(s));
        for (int v : kg.neighbors(idx)) pool.insert(kg.id_at(v));
    }
    return {pool.begin(), pool.end()};
}

// Round-based expansion with per-parent frontier pruning. Frontier parents are
// processed in ascending id; a node already included is skipped and does not
// consume any parent's budget.
inline std::vector<NodeId> expand_multi_hop(const KnowledgeGraph& kg, const EmbeddingStore& store,
                                            const QueryEmbedding& q, const std::vector<NodeId>& seeds,
                                            const RetrievalConfig& cfg) {
    cfg.validate();
    if (seeds.empty()) throw DataError("expand: no seeds");
    std::set<NodeId> included(seeds.begin(), seeds.end());
    std::vector<NodeId> frontier(included.begin(), included.end());
    for (int round = 0; round < cfg.hops; ++round) {
        std::vector<NodeId> next;
        for (NodeId parent : frontier) {
            int idx = kg.index_of(parent);
            if (idx < 0) throw DataError("unknown node " + std::to_string(parent));
            std::vector<NodeId> candidates;
            for (int v : kg.neighbors(idx)) {
                NodeId id = kg.id_at(v);
                if (!included.count(id)) candidates.push_back(id);
            }
            if (candidates.empty()) continue;
            auto ranked = top_k_similar(store, q, cfg.k_frontier, &candidates);
            for (const auto& [id, sim] : ranked) {
                included.insert(id);
                next.push_back(id);
            }
        }
        std::sort(next.begin(), next.end());
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    return {included.begin(), included.end()};
}

// PCST over the pool's induced subgraph, merged with the induced subgraph of
// the pool's top merge_pool nodes by similarity. Seeds are always retained.
inline RetrievedSubgraph pcst_merge(const KnowledgeGraph& kg, const std::vector<NodeId>& pool,
                                    const EmbeddingStore& store, const QueryEmbedding& q,
                                    const std::vector<NodeId>& seeds, const RetrievalConfig& cfg) {
    cfg.validate();
    if (pool.empty()) throw DataError("pcst_merge: empty pool");
    for (NodeId s : seeds)
        if (!std::count(pool.begin(), pool.end(), s))
            throw DataError("pcst_merge: pool does not contain seed " + std::to_string(s));

    KnowledgeGraph pool_graph = induced_subgraph(kg, pool);
    auto ranked = top_k_similar(store, q, static_cast<int>(pool.size()), &pool);  // full ranking

    PcstInstance inst;
    inst.graph = pool_graph;
    inst.edge_cost = cfg.edge_cost;
    int m = std::min<int>(cfg.prize_pool, static_cast<int>(ranked.size()));
    for (int r = 0; r < m; ++r) {
        double prize = cfg.prize_mode == PrizeMode::RankLinear
                           ? static_cast<double>(m - r) * cfg.prize_scale
                           : std::max(0.0, ranked[static_cast<std::size_t>(r)].second) * cfg.prize_scale;
        inst.prizes[ranked[static_cast<std::size_t>(r)].first] = prize;
    }
    PcstSolution sol = solve_pcst(inst);

    std::set<NodeId> pcst_nodes(sol.nodes.begin(), sol.nodes.end());
    std::set<NodeId> merge_nodes;
    for (int r = 0; r < std::min<int>(cfg.merge_pool, static_cast<int>(ranked.size())); ++r)
        merge_nodes.insert(ranked[static_cast<std::size_t>(r)].first);

    std::set<NodeId> keep = pcst_nodes;
    keep.insert(merge_nodes.begin(), merge_nodes.end());
    keep.insert(seeds.begin(), seeds.end());

    RetrievedSubgraph out;
    std::vector<NodeId> keep_vec(keep.begin(), keep.end());
    out.graph = induced_subgraph(kg, keep_vec);
    out.seeds.assign(seeds.begin(), seeds.end());
    std::sort(out.seeds.begin(), out.seeds.end());
    std::map<NodeId, double> sims;
    for (const auto& [id, sim] : ranked) sims[id] = sim;
    std::set<NodeId> seed_set(seeds.begin(), seeds.end());
    for (NodeId id : keep_vec) {
        out.similarity[id] = sims.at(id);
        if (seed_set.count(id))
            out.provenance[id] = Provenance::Seed;
        else if (pcst_nodes.count(id) && merge_nodes.count(id))
            out.provenance[id] = Provenance::Both;
        else if (pcst_nodes.count(id))
            out.provenance[id] = Provenance::Pcst;
        else
            out.provenance[id] = Provenance::Merge;
    }
    return out;
}

inline RetrievedSubgraph retrieve(const KnowledgeGraph& kg, const EmbeddingStore& store,
                                  const QueryEmbedding& q, const RetrievalConfig& cfg,
                                  RetrievalMode mode, const std::string& qid = "") {
    cfg.validate();
    std::vector<NodeId> seeds = select_seeds(kg, store, q, cfg);
    std::vector<NodeId> pool = mode == RetrievalMode::SingleHop
                                   ? expand_single_hop(kg, seeds)
                                   : expand_multi_hop(kg, store, q, seeds, cfg);
    RetrievedSubgraph sub = pcst_merge(kg, pool, store, q, seeds, cfg);
    sub.qid = qid;
    return sub;
}

// --- serialization ----------------------------------------------------------

inline nlohmann::ordered_json retrieved_to_json(const RetrievedSubgraph& sub) {
    nlohmann::ordered_json j;
    j["qid"] = sub.qid;
    j["seeds"] = sub.seeds;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const NodeRecord& n : sub.graph.nodes()) {
        j["nodes"].push_back({{"id", n.id},
                              {"name", n.name},
                              {"type", n.entity_type},
                              {"description", n.description},
                              {"similarity", sub.similarity.at(n.id)},
                              {"provenance", provenance_name(sub.provenance.at(n.id))}});
    }
    j["edges"] = nlohmann::ordered_json::array();
    for (const EdgeRecord& e : sub.graph.edges())
        j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}});
    return j;
}

inline RetrievedSubgraph retrieved_from_json(const nlohmann::json& j) {
    try {
        RetrievedSubgraph sub;
        sub.qid = j.at("qid").get<std::string>();
        sub.seeds = j.at("seeds").get<std::vector<NodeId>>();
        std::vector<NodeRecord> nodes;
        for (const auto& n : j.at("nodes")) {
            NodeRecord rec;
            rec.id = n.at("id").get<NodeId>();
            rec.name = n.at("name").get<std::string>();
            rec.entity_type = n.at("type").get<std::string>();
            rec.description = n.value("description", std::string{});
            sub.similarity[rec.id] = n.at("similarity").get<double>();
            sub.provenance[rec.id] = provenance_from_name(n.at("provenance").get<std::string>());
            nodes.push_back(std::move(rec));
        }
        std::vector<EdgeRecord> edges;
        for (const auto& e : j.at("edges"))
            edges.push_back({e.at("src").get<NodeId>(), e.at("dst").get<NodeId>(),
                             e.at("relation").get<std::string>()});
        sub.graph = KnowledgeGraph::from_records(std::move(nodes), std::move(edges));
        return sub;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad retrieved-subgraph JSON: ") + e.what());
    }
}

}  // namespace graphaudit

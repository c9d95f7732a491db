// Shared test fixtures: small hand-built graphs, seeded random graphs, a
// 300-node knowledge-graph fixture with hash embeddings, the hub-bridge
// synthetic family, and brute-force oracles used across suites.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "graphaudit/audit.hpp"
#include "graphaudit/embedding.hpp"
#include "graphaudit/graph.hpp"
#include "graphaudit/mgnan.hpp"

namespace fixtures {

using namespace graphaudit;

inline NodeRecord node(NodeId id, const std::string& name = "", const std::string& type = "t",
                       const std::string& desc = "") {
    return NodeRecord{id, name.empty() ? "n" + std::to_string(id) : name, type, desc};
}

inline KnowledgeGraph make_graph(const std::vector<NodeId>& ids,
                                 const std::vector<std::pair<NodeId, NodeId>>& edges) {
    std::vector<NodeRecord> nodes;
    for (NodeId id : ids) nodes.push_back(node(id));
    std::vector<EdgeRecord> recs;
    for (auto [a, b] : edges) recs.push_back({a, b, "rel"});
    return KnowledgeGraph::from_records(std::move(nodes), std::move(recs));
}

inline KnowledgeGraph path_graph(int n) {
    std::vector<NodeId> ids;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 0; i < n; ++i) ids.push_back(i);
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return make_graph(ids, edges);
}

inline KnowledgeGraph cycle_graph(int n) {
    std::vector<NodeId> ids;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 0; i < n; ++i) ids.push_back(i);
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return make_graph(ids, edges);
}

inline KnowledgeGraph star_graph(int leaves) {
    std::vector<NodeId> ids{0};
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 1; i <= leaves; ++i) {
        ids.push_back(i);
        edges.emplace_back(0, i);
    }
    return make_graph(ids, edges);
}

// Random connected graph: random tree plus `extra` random edges.
inline KnowledgeGraph random_connected_graph(int n, int extra, std::uint64_t& state) {
    std::vector<NodeId> ids;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 0; i < n; ++i) ids.push_back(i);
    for (int v = 1; v < n; ++v)
        edges.emplace_back(static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(v))), v);
    for (int e = 0; e < extra; ++e) {
        NodeId a = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        NodeId b = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        if (a != b) edges.emplace_back(a, b);
    }
    return make_graph(ids, edges);
}

// Random graph that may be disconnected: n nodes, `m` random edges.
inline KnowledgeGraph random_graph(int n, int m, std::uint64_t& state) {
    std::vector<NodeId> ids;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 0; i < n; ++i) ids.push_back(i);
    for (int e = 0; e < m; ++e) {
        NodeId a = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        NodeId b = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        if (a != b) edges.emplace_back(a, b);
    }
    return make_graph(ids, edges);
}

// Store with hash embeddings derived from each node's description (name fallback).
inline EmbeddingStore hash_store(const KnowledgeGraph& g, int dim) { return hash_embed_graph(g, dim); }

// --- 300-node fixture KG ------------------------------------------------------

// Deterministic fixture knowledge graph: preferential-attachment-flavored
// topology, several entity types, distinct descriptions for hash embeddings.
inline KnowledgeGraph fixture_kg(int n = 300, std::uint64_t seed = 2024) {
    std::uint64_t state = seed;
    const char* types[] = {"drug", "gene", "pathway", "disease", "family"};
    std::vector<NodeRecord> nodes;
    std::vector<EdgeRecord> edges;
    for (int i = 0; i < n; ++i) {
        NodeRecord rec;
        rec.id = i;
        rec.entity_type = types[splitmix_below(state, 5)];
        rec.name = rec.entity_type + "-" + std::to_string(i);
        rec.description = "entity " + std::to_string(i) + " of kind " + rec.entity_type + " token" +
                          std::to_string(splitmix_below(state, 1000));
        nodes.push_back(std::move(rec));
    }
    const char* relations[] = {"targets", "interacts", "member_of", "associated_with"};
    for (int v = 1; v < n; ++v) {
        // preferential flavor: attach to a random earlier node, biased low
        NodeId a = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(v)));
        NodeId b = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(v)));
        NodeId parent = std::min(a, b);
        edges.push_back({parent, v, relations[splitmix_below(state, 4)]});
    }
    for (int e = 0; e < n; ++e) {
        NodeId a = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        NodeId b = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
        if (a != b) edges.push_back({a, b, relations[splitmix_below(state, 4)]});
    }
    return KnowledgeGraph::from_records(std::move(nodes), std::move(edges));
}

inline std::vector<std::string> fixture_queries(int count = 20, std::uint64_t seed = 77) {
    std::uint64_t state = seed;
    std::vector<std::string> queries;
    for (int i = 0; i < count; ++i)
        queries.push_back("which entity relates to token" + std::to_string(splitmix_below(state, 1000)) +
                          " and kind " + std::to_string(i));
    return queries;
}

// --- hub-bridge synthetic family ------------------------------------------------

// p high-score hubs, pairwise non-adjacent, connected only through dedicated
// low-score bridge nodes (a hub_0 - bridge_0 - hub_1 - ... chain, so every
// bridge is an articulation point between hubs), plus noise leaves hanging off
// hubs and bridges. Scores are synthetic ground truth.
struct HubBridgeGraph {
    RetrievedSubgraph sub;
    std::vector<ImportanceEntry> scores;  // descending
    std::vector<NodeId> hubs;
    std::vector<NodeId> bridges;
};

inline HubBridgeGraph make_hub_bridge(int p, int leaves_per_node, std::uint64_t& state) {
    HubBridgeGraph out;
    std::vector<NodeId> ids;
    std::vector<std::pair<NodeId, NodeId>> edges;
    NodeId next = 0;
    for (int i = 0; i < p; ++i) out.hubs.push_back(next++);
    for (int i = 0; i + 1 < p; ++i) out.bridges.push_back(next++);
    for (NodeId h : out.hubs) ids.push_back(h);
    for (NodeId b : out.bridges) ids.push_back(b);
    for (int i = 0; i + 1 < p; ++i) {
        edges.emplace_back(out.hubs[static_cast<std::size_t>(i)], out.bridges[static_cast<std::size_t>(i)]);
        edges.emplace_back(out.bridges[static_cast<std::size_t>(i)],
                           out.hubs[static_cast<std::size_t>(i + 1)]);
    }
    std::vector<NodeId> anchors = ids;
    for (NodeId anchor : anchors)
        for (int l = 0; l < leaves_per_node; ++l) {
            ids.push_back(next);
            edges.emplace_back(anchor, next);
            ++next;
        }

    out.sub.qid = "hub-bridge";
    out.sub.graph = make_graph(ids, edges);
    out.sub.seeds = {out.hubs.front()};
    std::set<NodeId> hub_set(out.hubs.begin(), out.hubs.end());
    for (NodeId id : ids) {
        out.sub.similarity[id] = 0.0;
        out.sub.provenance[id] = hub_set.count(id) ? Provenance::Seed : Provenance::Merge;
    }
    for (NodeId id : ids) {
        double score = hub_set.count(id) ? 10.0 + splitmix_unit(state)
                                         : 0.001 * splitmix_unit(state);
        out.scores.push_back({id, score});
    }
    std::sort(out.scores.begin(), out.scores.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

// Fraction of planted nodes recovered in the attribution top-p, averaged over
// the dataset.
inline double planted_recall(const MGnanModel& model, const Dataset& dataset) {
    double total = 0.0;
    for (const TrainSample& s : dataset) {
        EncodeResult enc = encode(model, s.graph, s.store, /*order_check=*/false);
        std::vector<ImportanceEntry> scores = importance_scores(enc.attribution);
        std::set<NodeId> top;
        for (std::size_t i = 0; i < s.planted.size() && i < scores.size(); ++i)
            top.insert(scores[i].id);
        int hit = 0;
        for (NodeId id : s.planted)
            if (top.count(id)) ++hit;
        total += s.planted.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(s.planted.size());
    }
    return total / static_cast<double>(dataset.size());
}

// Mean share of total importance captured by the top-p nodes.
inline double planted_top_share(const MGnanModel& model, const Dataset& dataset) {
    double total = 0.0;
    for (const TrainSample& s : dataset) {
        EncodeResult enc = encode(model, s.graph, s.store, /*order_check=*/false);
        std::vector<ImportanceEntry> scores = importance_scores(enc.attribution);
        double sum = 0.0, top = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            sum += scores[i].score;
            if (i < s.planted.size()) top += scores[i].score;
        }
        total += sum > 0.0 ? top / sum : 0.0;
    }
    return total / static_cast<double>(dataset.size());
}

}  // namespace fixtures

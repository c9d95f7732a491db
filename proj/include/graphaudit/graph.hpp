// Immutable knowledge-graph store plus the classical graph algorithms the
// rest of the pipeline relies on: BFS distance tables with per-shell counts,
// connected components, exact betweenness centrality, induced subgraphs.
//
// Conventions (fixed for reproducibility):
//   - Structure is undirected. Edge records keep their original orientation
//     and relation label for linearization only.
//   - Iteration order is ascending node id everywhere.
//   - Self-loops and duplicate edges (same unordered endpoint pair and
//     relation) are dropped at construction; counts are kept, not silent.
#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaudit/common.hpp"

namespace graphaudit {

struct NodeRecord {
    NodeId id = 0;
    std::string name;
    std::string entity_type;
    std::string description;
};

struct EdgeRecord {
    NodeId src = 0;
    NodeId dst = 0;
    std::string relation;
};

class KnowledgeGraph {
public:
    // Validates, normalizes and freezes the graph:
    //   - node ids unique and non-negative, names non-empty
    //   - edge endpoints must exist
    //   - self-loops dropped, duplicates (unordered pair + relation) dropped
    //   - nodes sorted ascending by id, edges sorted by (src, dst, relation)
    static KnowledgeGraph from_records(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges) {
        KnowledgeGraph g;
        if (nodes.empty()) throw DataError("graph must contain at least one node");
        std::sort(nodes.begin(), nodes.end(),
                  [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].id < 0) throw DataError("negative node id " + std::to_string(nodes[i].id));
            if (nodes[i].name.empty())
                throw DataError("node " + std::to_string(nodes[i].id) + " has an empty name");
            if (i > 0 && nodes[i].id == nodes[i - 1].id)
                throw DataError("duplicate node id " + std::to_string(nodes[i].id));
        }
        g.nodes_ = std::move(nodes);

        // Dedup on (min, max, relation); first occurrence keeps its orientation.
        std::vector<EdgeRecord> kept;
        std::vector<std::tuple<NodeId, NodeId, std::string>> seen;
        for (const EdgeRecord& e : edges) {
            if (g.index_of(e.src) < 0)
                throw DataError("unknown node " + std::to_string(e.src));
            if (g.index_of(e.dst) < 0)
                throw DataError("unknown node " + std::to_string(e.dst));
            if (e.src == e.dst) {
                ++g.self_loops_dropped_;
                continue;
            }
            seen.emplace_back(std::min(e.src, e.dst), std::max(e.src, e.dst), e.relation);
            kept.push_back(e);
        }
        std::vector<bool> dup(kept.size(), false);
        {
            std::vector<std::size_t> order(kept.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (seen[a] != seen[b]) return seen[a] < seen[b];
                return a < b;
            });
            for (std::size_t i = 1; i < order.size(); ++i)
                if (seen[order[i]] == seen[order[i - 1]]) dup[order[i]] = true;
        }
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (dup[i]) {
                ++g.duplicate_edges_dropped_;
            } else {
                g.edges_.push_back(kept[i]);
            }
        }
        std::sort(g.edges_.begin(), g.edges_.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
            if (a.src != b.src) return a.src < b.src;
            if (a.dst != b.dst) return a.dst < b.dst;
            return a.relation < b.relation;
        });

        g.adjacency_.assign(g.nodes_.size(), {});
        for (const EdgeRecord& e : g.edges_) {
            int u = g.index_of(e.src);
            int v = g.index_of(e.dst);
            g.adjacency_[static_cast<std::size_t>(u)].push_back(v);
            g.adjacency_[static_cast<std::size_t>(v)].push_back(u);
        }
        for (auto& nbrs : g.adjacency_) {
            std::sort(nbrs.begin(), nbrs.end());
            nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        }
        return g;
    }

    const std::vector<NodeRecord>& nodes() const { return nodes_; }
    const std::vector<EdgeRecord>& edges() const { return edges_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    std::size_t self_loops_dropped() const { return self_loops_dropped_; }
    std::size_t duplicate_edges_dropped() const { return duplicate_edges_dropped_; }

    // Index of `id` in nodes(), or -1. Nodes are sorted, so this is a binary search.
    int index_of(NodeId id) const {
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                                   [](const NodeRecord& n, NodeId v) { return n.id < v; });
        if (it == nodes_.end() || it->id != id) return -1;
        return static_cast<int>(it - nodes_.begin());
    }
    bool has_node(NodeId id) const { return index_of(id) >= 0; }
    NodeId id_at(int index) const { return nodes_[static_cast<std::size_t>(index)].id; }
    const NodeRecord& node_at(int index) const { return nodes_[static_cast<std::size_t>(index)]; }
    const NodeRecord& node(NodeId id) const {
        int i = index_of(id);
        if (i < 0) throw DataError("unknown node " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(i)];
    }

    // Sorted neighbor indices of the node at `index` (undirected, unique).
    const std::vector<int>& neighbors(int index) const {
        return adjacency_[static_cast<std::size_t>(index)];
    }

    // Unique unordered structural edges as index pairs (u < v), sorted.
    std::vector<std::pair<int, int>> structural_edges() const {
        std::vector<std::pair<int, int>> out;
        for (int u = 0; u < static_cast<int>(adjacency_.size()); ++u)
            for (int v : adjacency_[static_cast<std::size_t>(u)])
                if (u < v) out.emplace_back(u, v);
        return out;
    }

private:
    std::vector<NodeRecord> nodes_;
    std::vector<EdgeRecord> edges_;
    std::vector<std::vector<int>> adjacency_;
    std::size_t self_loops_dropped_ = 0;
    std::size_t duplicate_edges_dropped_ = 0;
};

// Unweighted shortest-path distances from one source, plus the size of every
// distance shell. count_at[d] is the number of nodes at exactly distance d.
struct DistanceTable {
    static constexpr int kUnreachable = -1;

    NodeId source = 0;
    std::vector<int> dist;      // by node index; kUnreachable if not connected
    std::vector<int> count_at;  // by distance; count_at[0] == 1 (the source)

    int dist_of_index(int index) const { return dist[static_cast<std::size_t>(index)]; }
    int shell_size(int d) const {
        if (d < 0 || d >= static_cast<int>(count_at.size())) return 0;
        return count_at[static_cast<std::size_t>(d)];
    }
};

namespace detail {

inline DistanceTable bfs_from_index(const KnowledgeGraph& g, int source_index) {
    DistanceTable t;
    t.source = g.id_at(source_index);
    t.dist.assign(g.node_count(), DistanceTable::kUnreachable);
    t.dist[static_cast<std::size_t>(source_index)] = 0;
    std::deque<int> queue{source_index};
    int max_d = 0;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        int du = t.dist[static_cast<std::size_t>(u)];
        max_d = std::max(max_d, du);
        for (int v : g.neighbors(u)) {
            if (t.dist[static_cast<std::size_t>(v)] == DistanceTable::kUnreachable) {
                t.dist[static_cast<std::size_t>(v)] = du + 1;
                queue.push_back(v);
            }
        }
    }
    t.count_at.assign(static_cast<std::size_t>(max_d) + 1, 0);
    for (int d : t.dist)
        if (d != DistanceTable::kUnreachable) ++t.count_at[static_cast<std::size_t>(d)];
    return t;
}

}  // namespace detail

inline DistanceTable bfs_distances(const KnowledgeGraph& g, NodeId source) {
    int s = g.index_of(source);
    if (s < 0) throw DataError("unknown node " + std::to_string(source));
    return detail::bfs_from_index(g, s);
}

// Component labels by node index; components numbered in order of their
// smallest member index (equivalently smallest id).
inline std::vector<int> component_labels(const KnowledgeGraph& g) {
    std::vector<int> label(g.node_count(), -1);
    int next = 0;
    for (int s = 0; s < static_cast<int>(g.node_count()); ++s) {
        if (label[static_cast<std::size_t>(s)] >= 0) continue;
        label[static_cast<std::size_t>(s)] = next;
        std::deque<int> queue{s};
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            for (int v : g.neighbors(u)) {
                if (label[static_cast<std::size_t>(v)] < 0) {
                    label[static_cast<std::size_t>(v)] = next;
                    queue.push_back(v);
                }
            }
        }
        ++next;
    }
    return label;
}

inline std::vector<std::vector<NodeId>> connected_components(const KnowledgeGraph& g) {
    std::vector<int> label = component_labels(g);
    int n_comp = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
    std::vector<std::vector<NodeId>> comps(static_cast<std::size_t>(n_comp));
    for (std::size_t i = 0; i < label.size(); ++i)
        comps[static_cast<std::size_t>(label[i])].push_back(g.id_at(static_cast<int>(i)));
    return comps;  // members ascend by construction; components ordered by smallest member
}

// Exact unweighted betweenness (Brandes accumulation), endpoints excluded,
// each unordered pair counted once. Indexed like g.nodes().
inline std::vector<double> betweenness_centrality(const KnowledgeGraph& g) {
    int n = static_cast<int>(g.node_count());
    std::vector<double> bc(static_cast<std::size_t>(n), 0.0);
    std::vector<double> sigma(static_cast<std::size_t>(n));
    std::vector<double> delta(static_cast<std::size_t>(n));
    std::vector<int> dist(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> pred(static_cast<std::size_t>(n));
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));

    for (int s = 0; s < n; ++s) {
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(dist.begin(), dist.end(), -1);
        for (auto& p : pred) p.clear();
        order.clear();

        sigma[static_cast<std::size_t>(s)] = 1.0;
        dist[static_cast<std::size_t>(s)] = 0;
        std::deque<int> queue{s};
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            order.push_back(u);
            for (int v : g.neighbors(u)) {
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    queue.push_back(v);
                }
                if (dist[static_cast<std::size_t>(v)] == dist[static_cast<std::size_t>(u)] + 1) {
                    sigma[static_cast<std::size_t>(v)] += sigma[static_cast<std::size_t>(u)];
                    pred[static_cast<std::size_t>(v)].push_back(u);
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            int w = *it;
            for (int v : pred[static_cast<std::size_t>(w)]) {
                delta[static_cast<std::size_t>(v)] +=
                    sigma[static_cast<std::size_t>(v)] / sigma[static_cast<std::size_t>(w)] *
                    (1.0 + delta[static_cast<std::size_t>(w)]);
            }
            if (w != s) bc[static_cast<std::size_t>(w)] += delta[static_cast<std::size_t>(w)];
        }
    }
    for (double& x : bc) x /= 2.0;  // undirected: each pair visited from both ends
    return bc;
}

// Subgraph induced by `keep`: exactly those nodes and every edge with both
// endpoints inside. Node ids, records and relation labels are preserved.
inline KnowledgeGraph induced_subgraph(const KnowledgeGraph& g, std::span<const NodeId> keep) {
    std::vector<NodeId> ids(keep.begin(), keep.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<NodeRecord> nodes;
    nodes.reserve(ids.size());
    for (NodeId id : ids) {
        int i = g.index_of(id);
        if (i < 0) throw DataError("unknown node " + std::to_string(id));
        nodes.push_back(g.node_at(i));
    }
    std::vector<EdgeRecord> edges;
    for (const EdgeRecord& e : g.edges()) {
        if (std::binary_search(ids.begin(), ids.end(), e.src) &&
            std::binary_search(ids.begin(), ids.end(), e.dst))
            edges.push_back(e);
    }
    return KnowledgeGraph::from_records(std::move(nodes), std::move(edges));
}

// --- line-delimited JSON ingestion ------------------------------------------

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line, const std::string& file, std::size_t lineno) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError(file + ":" + std::to_string(lineno) + ": malformed record");
    return j;
}

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        fn(parse_jsonl_line(line, path.filename().string(), lineno), lineno);
    }
}

}  // namespace detail

// Node file: one JSON object per line, keys id/name/type/description (description optional).
// Edge file: one JSON object per line, keys src/dst/relation.
inline KnowledgeGraph load_graph(const std::filesystem::path& nodes_path,
                                 const std::filesystem::path& edges_path) {
    std::vector<NodeRecord> nodes;
    detail::for_each_jsonl(nodes_path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            NodeRecord n;
            n.id = j.at("id").get<NodeId>();
            n.name = j.at("name").get<std::string>();
            n.entity_type = j.at("type").get<std::string>();
            n.description = j.value("description", std::string{});
            nodes.push_back(std::move(n));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(nodes_path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    std::vector<EdgeRecord> edges;
    detail::for_each_jsonl(edges_path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            EdgeRecord e;
            e.src = j.at("src").get<NodeId>();
            e.dst = j.at("dst").get<NodeId>();
            e.relation = j.at("relation").get<std::string>();
            edges.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(edges_path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return KnowledgeGraph::from_records(std::move(nodes), std::move(edges));
}

}  // namespace graphaudit

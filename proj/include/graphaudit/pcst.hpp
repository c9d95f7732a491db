// Unrooted prize-collecting Steiner tree over a knowledge graph with uniform
// edge costs. solve_pcst runs Goemans-Williamson moat growth (all clusters
// start active, merge on tight edges, deactivate on exhausted potential)
// followed by strong pruning of every resulting tree from every root. The
// best-objective pruned tree is the solution; all pruned trees are kept for
// inspection. brute_force_pcst enumerates connected node subsets and is the
// test oracle for small instances.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphaudit/common.hpp"
#include "graphaudit/graph.hpp"

namespace graphaudit {

struct PcstInstance {
    KnowledgeGraph graph;
    std::unordered_map<NodeId, double> prizes;  // absent => 0
    double edge_cost = 1.0;

    double prize_of(NodeId id) const {
        auto it = prizes.find(id);
        return it == prizes.end() ? 0.0 : it->second;
    }
    void validate() const {
        if (edge_cost <= 0.0) throw DataError("pcst: edge_cost must be positive");
        for (const auto& [id, p] : prizes) {
            if (p < 0.0) throw DataError("pcst: negative prize for node " + std::to_string(id));
            if (!graph.has_node(id)) throw DataError("pcst: prize for unknown node " + std::to_string(id));
        }
    }
};

struct PcstTree {
    std::vector<NodeId> nodes;                    // ascending
    std::vector<std::pair<NodeId, NodeId>> edges; // (min,max), sorted
    double objective = 0.0;
};

struct PcstSolution {
    std::vector<NodeId> nodes;                    // best tree, ascending; empty allowed
    std::vector<std::pair<NodeId, NodeId>> edges; // (min,max), sorted
    double objective = 0.0;                       // sum of prizes - edge_cost * |edges|
    std::vector<PcstTree> forest;                 // every strong-pruned tree, for inspection
};

namespace detail {

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

// Strong pruning of `tree_nodes` (indices into inst.graph) rooted at `root`:
// bottom-up net worth, children kept only when they pay for their edge.
// Returns the kept node set (indices) and its objective.
inline std::pair<std::vector<int>, double> strong_prune(
    const PcstInstance& inst, const std::vector<std::vector<int>>& tree_adj,
    const std::vector<double>& prize_by_index, int root) {
    // iterative post-order
    std::vector<int> order, parent(tree_adj.size(), -2);
    order.reserve(tree_adj.size());
    std::vector<int> stack{root};
    parent[static_cast<std::size_t>(root)] = -1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        order.push_back(u);
        for (int v : tree_adj[static_cast<std::size_t>(u)]) {
            if (parent[static_cast<std::size_t>(v)] == -2) {
                parent[static_cast<std::size_t>(v)] = u;
                stack.push_back(v);
            }
        }
    }
    std::vector<double> nw(tree_adj.size(), 0.0);
    std::vector<char> kept_edge(tree_adj.size(), 0);  // kept_edge[v]: edge (parent[v], v) retained
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int u = *it;
        nw[static_cast<std::size_t>(u)] = prize_by_index[static_cast<std::size_t>(u)];
        for (int v : tree_adj[static_cast<std::size_t>(u)]) {
            if (parent[static_cast<std::size_t>(v)] != u) continue;
            double gain = nw[static_cast<std::size_t>(v)] - inst.edge_cost;
            if (gain > 0.0) {
                nw[static_cast<std::size_t>(u)] += gain;
                kept_edge[static_cast<std::size_t>(v)] = 1;
            }
        }
    }
    // collect the kept subtree from the root
    std::vector<int> kept;
    stack.assign(1, root);
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        kept.push_back(u);
        for (int v : tree_adj[static_cast<std::size_t>(u)])
            if (parent[static_cast<std::size_t>(v)] == u && kept_edge[static_cast<std::size_t>(v)])
                stack.push_back(v);
    }
    std::sort(kept.begin(), kept.end());
    return {kept, nw[static_cast<std::size_t>(root)]};
}

}  // namespace detail

inline PcstSolution solve_pcst(const PcstInstance& inst) {
    inst.validate();
    const KnowledgeGraph& g = inst.graph;
    const int n = static_cast<int>(g.node_count());
    const auto edges = g.structural_edges();
    const double eps = 1e-12;

    std::vector<double> prize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) prize[static_cast<std::size_t>(i)] = inst.prize_of(g.id_at(i));

    // --- moat growth ---
    detail::Dsu dsu(n);
    std::vector<double> moat(static_cast<std::size_t>(n), 0.0);      // per-vertex accumulated growth
    std::vector<double> potential(prize);                            // per cluster root
    std::vector<char> active(static_cast<std::size_t>(n));
    std::vector<NodeId> repr(static_cast<std::size_t>(n));           // smallest id in cluster, for ties
    for (int i = 0; i < n; ++i) {
        active[static_cast<std::size_t>(i)] = prize[static_cast<std::size_t>(i)] > eps;
        repr[static_cast<std::size_t>(i)] = g.id_at(i);
    }
    std::vector<std::pair<int, int>> forest_edges;

    for (;;) {
        // next event: smallest time step among edge tightenings and cluster deaths.
        // Ties: merges before deactivations, then canonical order.
        double best_dt = std::numeric_limits<double>::infinity();
        int best_edge = -1;
        int best_cluster = -1;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            int ru = dsu.find(edges[e].first);
            int rv = dsu.find(edges[e].second);
            if (ru == rv) continue;
            int rate = (active[static_cast<std::size_t>(ru)] ? 1 : 0) +
                       (active[static_cast<std::size_t>(rv)] ? 1 : 0);
            if (rate == 0) continue;
            double slack = inst.edge_cost - moat[static_cast<std::size_t>(edges[e].first)] -
                           moat[static_cast<std::size_t>(edges[e].second)];
            double dt = std::max(0.0, slack) / rate;
            if (dt < best_dt - eps) {
                best_dt = dt;
                best_edge = static_cast<int>(e);
                best_cluster = -1;
            }
        }
        for (int r = 0; r < n; ++r) {
            if (dsu.find(r) != r || !active[static_cast<std::size_t>(r)]) continue;
            double dt = potential[static_cast<std::size_t>(r)];
            bool better = dt < best_dt - eps;
            bool tie = std::abs(dt - best_dt) <= eps && best_edge < 0 &&
                       (best_cluster < 0 || repr[static_cast<std::size_t>(r)] <
                                                repr[static_cast<std::size_t>(best_cluster)]);
            if (better || tie) {
                best_dt = dt;
                best_edge = -1;
                best_cluster = r;
            }
        }
        if (best_edge < 0 && best_cluster < 0) break;  // no active clusters left

        // advance time by best_dt
        if (best_dt > 0.0) {
            for (int v = 0; v < n; ++v)
                if (active[static_cast<std::size_t>(dsu.find(v))]) moat[static_cast<std::size_t>(v)] += best_dt;
            for (int r = 0; r < n; ++r)
                if (dsu.find(r) == r && active[static_cast<std::size_t>(r)])
                    potential[static_cast<std::size_t>(r)] -= best_dt;
        }

        if (best_edge >= 0) {
            auto [u, v] = edges[static_cast<std::size_t>(best_edge)];
            int ru = dsu.find(u), rv = dsu.find(v);
            dsu.unite(ru, rv);
            int r = dsu.find(ru);
            potential[static_cast<std::size_t>(r)] =
                potential[static_cast<std::size_t>(ru)] + potential[static_cast<std::size_t>(rv)];
            active[static_cast<std::size_t>(r)] = potential[static_cast<std::size_t>(r)] > eps;
            repr[static_cast<std::size_t>(r)] =
                std::min(repr[static_cast<std::size_t>(ru)], repr[static_cast<std::size_t>(rv)]);
            forest_edges.emplace_back(u, v);
        } else {
            active[static_cast<std::size_t>(best_cluster)] = false;
        }
    }

    // --- strong pruning per GW tree ---
    detail::Dsu comp(n);
    for (auto [u, v] : forest_edges) comp.unite(u, v);
    std::map<int, std::vector<int>> trees;  // root -> member indices (ascending)
    for (int v = 0; v < n; ++v) trees[comp.find(v)].push_back(v);

    std::vector<std::vector<int>> tree_adj(static_cast<std::size_t>(n));
    for (auto [u, v] : forest_edges) {
        tree_adj[static_cast<std::size_t>(u)].push_back(v);
        tree_adj[static_cast<std::size_t>(v)].push_back(u);
    }
    for (auto& a : tree_adj) std::sort(a.begin(), a.end());

    PcstSolution sol;
    std::vector<int> best_nodes;
    double best_obj = 0.0;
    bool have_best = false;
    for (const auto& [root, members] : trees) {
        // best pruned subtree over all roots of this tree
        std::vector<int> tree_best;
        double tree_obj = -std::numeric_limits<double>::infinity();
        for (int r : members) {
            auto [kept, obj] = detail::strong_prune(inst, tree_adj, prize, r);
            if (obj > tree_obj + eps ||
                (std::abs(obj - tree_obj) <= eps && kept < tree_best)) {
                tree_obj = obj;
                tree_best = std::move(kept);
            }
        }
        PcstTree t;
        for (int v : tree_best) t.nodes.push_back(g.id_at(v));
        for (std::size_t i = 0; i < tree_best.size(); ++i)
            for (int v : tree_adj[static_cast<std::size_t>(tree_best[i])])
                if (v > tree_best[i] && std::binary_search(tree_best.begin(), tree_best.end(), v))
                    t.edges.emplace_back(std::min(g.id_at(tree_best[i]), g.id_at(v)),
                                         std::max(g.id_at(tree_best[i]), g.id_at(v)));
        std::sort(t.edges.begin(), t.edges.end());
        t.objective = tree_obj;
        sol.forest.push_back(t);

        bool better = tree_obj > best_obj + eps;
        bool tie = have_best && std::abs(tree_obj - best_obj) <= eps && tree_best < best_nodes;
        if ((better && tree_obj > eps) || tie) {
            best_obj = tree_obj;
            best_nodes = tree_best;
            have_best = true;
        }
    }

    if (have_best && best_obj > eps) {
        for (int v : best_nodes) sol.nodes.push_back(g.id_at(v));
        for (std::size_t i = 0; i < best_nodes.size(); ++i)
            for (int v : tree_adj[static_cast<std::size_t>(best_nodes[i])])
                if (v > best_nodes[i] && std::binary_search(best_nodes.begin(), best_nodes.end(), v))
                    sol.edges.emplace_back(std::min(g.id_at(best_nodes[i]), g.id_at(v)),
                                           std::max(g.id_at(best_nodes[i]), g.id_at(v)));
        std::sort(sol.edges.begin(), sol.edges.end());
        double total = 0.0;
        for (NodeId id : sol.nodes) total += inst.prize_of(id);
        sol.objective = total - inst.edge_cost * static_cast<double>(sol.edges.size());
    } else {
        sol.objective = 0.0;  // empty solution
    }
    return sol;
}

// Exact optimum by enumerating connected node subsets; any spanning tree of a
// connected subset costs (|S|-1) * edge_cost, so subsets are enough. Ties are
// broken toward the lexicographically smallest node set. Empty solution wins
// when nothing beats objective 0.
inline PcstSolution brute_force_pcst(const PcstInstance& inst) {
    inst.validate();
    const KnowledgeGraph& g = inst.graph;
    const int n = static_cast<int>(g.node_count());
    if (n > 12) throw DataError("brute_force_pcst: instance too large (" + std::to_string(n) + " nodes)");

    double best_obj = 0.0;
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        // connectivity check via BFS inside the mask
        int start = -1, cnt = 0;
        for (int v = 0; v < n; ++v)
            if (mask & (1u << v)) {
                if (start < 0) start = v;
                ++cnt;
            }
        std::uint32_t seen = 1u << start;
        std::vector<int> stack{start};
        int reached = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : g.neighbors(u)) {
                std::uint32_t bit = 1u << v;
                if ((mask & bit) && !(seen & bit)) {
                    seen |= bit;
                    ++reached;
                    stack.push_back(v);
                }
            }
        }
        if (reached != cnt) continue;
        double obj = -inst.edge_cost * static_cast<double>(cnt - 1);
        for (int v = 0; v < n; ++v)
            if (mask & (1u << v)) obj += inst.prize_of(g.id_at(v));
        // lexicographically smallest node set = smallest mask value when read
        // low-bit-first over ascending ids; compare sets explicitly
        if (obj > best_obj + 1e-12) {
            best_obj = obj;
            best_mask = mask;
        } else if (best_mask != 0 && std::abs(obj - best_obj) <= 1e-12) {
            // prefer the set whose sorted id list is lexicographically smaller
            for (int v = 0; v < n; ++v) {
                bool a = mask & (1u << v), b = best_mask & (1u << v);
                if (a == b) continue;
                if (a) best_mask = mask;
                break;
            }
        }
    }

    PcstSolution sol;
    if (best_mask == 0) {
        sol.objective = 0.0;
        return sol;
    }
    std::vector<int> members;
    for (int v = 0; v < n; ++v)
        if (best_mask & (1u << v)) members.push_back(v);
    for (int v : members) sol.nodes.push_back(g.id_at(v));
    // spanning tree of the selected subset (BFS tree), for a concrete witness
    std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
    in_tree[static_cast<std::size_t>(members[0])] = 1;
    std::vector<int> queue{members[0]};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        int u = queue[qi];
        for (int v : g.neighbors(u)) {
            if (!(best_mask & (1u << v)) || in_tree[static_cast<std::size_t>(v)]) continue;
            in_tree[static_cast<std::size_t>(v)] = 1;
            sol.edges.emplace_back(std::min(g.id_at(u), g.id_at(v)), std::max(g.id_at(u), g.id_at(v)));
            queue.push_back(v);
        }
    }
    std::sort(sol.edges.begin(), sol.edges.end());
    sol.objective = best_obj;
    PcstTree t{sol.nodes, sol.edges, sol.objective};
    sol.forest.push_back(std::move(t));
    return sol;
}

}  // namespace graphaudit

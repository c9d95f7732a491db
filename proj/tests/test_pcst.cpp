#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "graphaudit/pcst.hpp"
#include "support/fixtures.hpp"

using namespace graphaudit;
using fixtures::make_graph;

namespace {

PcstInstance instance(const KnowledgeGraph& g, const std::vector<std::pair<NodeId, double>>& prizes,
                      double cost) {
    PcstInstance inst;
    inst.graph = g;
    for (auto [id, p] : prizes) inst.prizes[id] = p;
    inst.edge_cost = cost;
    return inst;
}

// Feasibility: edges inside the instance graph, endpoints selected, acyclic.
void check_feasible(const PcstInstance& inst, const PcstSolution& sol) {
    std::set<NodeId> nodes(sol.nodes.begin(), sol.nodes.end());
    REQUIRE(nodes.size() == sol.nodes.size());
    std::set<std::pair<NodeId, NodeId>> graph_edges;
    for (auto [u, v] : inst.graph.structural_edges())
        graph_edges.insert({inst.graph.id_at(u), inst.graph.id_at(v)});
    for (auto [a, b] : sol.edges) {
        REQUIRE(nodes.count(a));
        REQUIRE(nodes.count(b));
        REQUIRE(graph_edges.count({std::min(a, b), std::max(a, b)}));
    }
    // forest: |edges| = |nodes| - #trees
    detail::Dsu dsu(static_cast<int>(sol.nodes.size()));
    auto index = [&](NodeId id) {
        return static_cast<int>(std::lower_bound(sol.nodes.begin(), sol.nodes.end(), id) -
                                sol.nodes.begin());
    };
    int merges = 0;
    for (auto [a, b] : sol.edges) {
        int ia = index(a), ib = index(b);
        REQUIRE(dsu.find(ia) != dsu.find(ib));  // no cycle
        dsu.unite(ia, ib);
        ++merges;
    }
    std::set<int> roots;
    for (std::size_t i = 0; i < sol.nodes.size(); ++i) roots.insert(dsu.find(static_cast<int>(i)));
    REQUIRE(static_cast<int>(sol.edges.size()) ==
            static_cast<int>(sol.nodes.size()) - static_cast<int>(roots.size()));
    (void)merges;

    // objective recomputes from the fields
    double obj = 0.0;
    for (NodeId id : sol.nodes) obj += inst.prize_of(id);
    obj -= inst.edge_cost * static_cast<double>(sol.edges.size());
    REQUIRE_THAT(sol.objective, Catch::Matchers::WithinAbs(obj, 1e-9));
}

}  // namespace

TEST_CASE("brute force on tiny instances") {
    KnowledgeGraph path = fixtures::path_graph(3);
    PcstSolution cheap = brute_force_pcst(instance(path, {{0, 3.0}, {2, 3.0}}, 1.0));
    CHECK_THAT(cheap.objective, Catch::Matchers::WithinAbs(4.0, 1e-9));
    CHECK(cheap.nodes == std::vector<NodeId>{0, 1, 2});

    PcstSolution pricey = brute_force_pcst(instance(path, {{0, 3.0}, {2, 3.0}}, 10.0));
    CHECK_THAT(pricey.objective, Catch::Matchers::WithinAbs(3.0, 1e-9));
    CHECK(pricey.nodes == std::vector<NodeId>{0});  // tie with {2} broken to the smaller set

    PcstSolution empty = brute_force_pcst(instance(path, {}, 1.0));
    CHECK(empty.nodes.empty());
    CHECK(empty.objective == 0.0);

    KnowledgeGraph k3 = make_graph({0, 1, 2}, {{0, 1}, {1, 2}, {0, 2}});
    PcstSolution tri = brute_force_pcst(instance(k3, {{0, 1.0}, {1, 1.0}, {2, 1.0}}, 0.1));
    CHECK_THAT(tri.objective, Catch::Matchers::WithinAbs(2.8, 1e-9));
    CHECK(tri.nodes.size() == 3);
    CHECK(tri.edges.size() == 2);

    KnowledgeGraph big = fixtures::path_graph(13);
    CHECK_THROWS_AS(brute_force_pcst(instance(big, {}, 1.0)), DataError);
}

TEST_CASE("solve_pcst on hand-checked instances") {
    KnowledgeGraph single = make_graph({7}, {});
    PcstSolution s = solve_pcst(instance(single, {{7, 5.0}}, 1.0));
    CHECK(s.nodes == std::vector<NodeId>{7});
    CHECK_THAT(s.objective, Catch::Matchers::WithinAbs(5.0, 1e-9));

    KnowledgeGraph path = fixtures::path_graph(3);
    PcstSolution bridge = solve_pcst(instance(path, {{0, 3.0}, {2, 3.0}}, 1.0));
    CHECK_THAT(bridge.objective, Catch::Matchers::WithinAbs(4.0, 1e-9));
    CHECK(bridge.nodes == std::vector<NodeId>{0, 1, 2});
    CHECK(bridge.edges.size() == 2);

    PcstSolution singleton = solve_pcst(instance(path, {{0, 3.0}, {2, 3.0}}, 10.0));
    CHECK_THAT(singleton.objective, Catch::Matchers::WithinAbs(3.0, 1e-9));
    CHECK(singleton.nodes == std::vector<NodeId>{0});

    PcstSolution empty = solve_pcst(instance(path, {}, 1.0));
    CHECK(empty.nodes.empty());
    CHECK(empty.objective == 0.0);
}

TEST_CASE("solve_pcst feasibility and singleton floor on random instances") {
    std::uint64_t state = 17;
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + static_cast<int>(splitmix_below(state, 12));
        KnowledgeGraph g = fixtures::random_graph(n, static_cast<int>(splitmix_below(state, 20)), state);
        PcstInstance inst;
        inst.graph = g;
        inst.edge_cost = splitmix_range(state, 0.2, 3.0);
        double max_prize = 0.0;
        for (const NodeRecord& rec : g.nodes()) {
            if (splitmix_unit(state) < 0.7) {
                double p = splitmix_range(state, 0.0, 5.0);
                inst.prizes[rec.id] = p;
                max_prize = std::max(max_prize, p);
            }
        }
        PcstSolution sol = solve_pcst(inst);
        check_feasible(inst, sol);
        REQUIRE(sol.objective >= std::max(0.0, max_prize) - 1e-9);
        for (const PcstTree& t : sol.forest) {
            double obj = 0.0;
            for (NodeId id : t.nodes) obj += inst.prize_of(id);
            obj -= inst.edge_cost * static_cast<double>(t.edges.size());
            REQUIRE_THAT(t.objective, Catch::Matchers::WithinAbs(obj, 1e-9));
        }
    }
}

TEST_CASE("solve_pcst tracks the brute-force optimum on small instances") {
    std::uint64_t state = 23;
    int exact = 0, total = 200;
    for (int trial = 0; trial < total; ++trial) {
        int n = 2 + static_cast<int>(splitmix_below(state, 9));  // up to 10 nodes
        KnowledgeGraph g = fixtures::random_graph(n, static_cast<int>(splitmix_below(state, 18)), state);
        PcstInstance inst;
        inst.graph = g;
        inst.edge_cost = splitmix_range(state, 0.2, 2.0);
        for (const NodeRecord& rec : g.nodes())
            if (splitmix_unit(state) < 0.6) inst.prizes[rec.id] = splitmix_range(state, 0.0, 4.0);
        PcstSolution heur = solve_pcst(inst);
        PcstSolution best = brute_force_pcst(inst);
        check_feasible(inst, heur);
        REQUIRE(heur.objective <= best.objective + 1e-9);
        // heuristic quality floor (documented test constants: 0.5x always)
        REQUIRE(heur.objective >= 0.5 * best.objective - 1e-9);
        if (std::abs(heur.objective - best.objective) <= 1e-9) ++exact;
    }
    // 0.9x-or-better on at least 80% is the module-level floor; the acceptance
    // suite separately requires exact optimality on 80%.
    REQUIRE(exact >= total * 8 / 10);
}

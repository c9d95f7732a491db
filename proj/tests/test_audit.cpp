#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include "graphaudit/audit.hpp"
#include "support/fixtures.hpp"

using namespace graphaudit;
using fixtures::make_graph;

namespace {

Attribution attribution_for(const std::vector<std::pair<NodeId, double>>& values) {
    Attribution att;
    att.pre_link_total = {0.0};
    for (auto [id, v] : values) {
        att.per_node_group.push_back({id, 0, {v}});
        att.pre_link_total[0] += v;
    }
    att.output = att.pre_link_total;
    return att;
}

RetrievedSubgraph wrap(const KnowledgeGraph& g) {
    RetrievedSubgraph sub;
    sub.qid = "fixture";
    sub.graph = g;
    for (const NodeRecord& n : g.nodes()) {
        sub.similarity[n.id] = 0.0;
        sub.provenance[n.id] = Provenance::Merge;
    }
    return sub;
}

std::vector<ImportanceEntry> scores_of(const std::vector<std::pair<NodeId, double>>& values) {
    std::vector<ImportanceEntry> out;
    for (auto [id, v] : values) out.push_back({id, v});
    std::sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

// The five-node fixture behind the golden files.
RetrievedSubgraph golden_fixture() {
    std::vector<NodeRecord> nodes{{0, "aspirin", "drug", "pain reliever"},
                                  {1, "cox2", "gene", "target enzyme"},
                                  {2, "pathway-x", "pathway", ""},
                                  {3, "fever", "disease", "elevated temperature"},
                                  {4, "ibuprofen", "drug", "nsaid"}};
    std::vector<EdgeRecord> edges{{0, 1, "targets"},
                                  {1, 2, "member_of"},
                                  {2, 3, "associated_with"},
                                  {4, 1, "targets"}};
    return wrap(KnowledgeGraph::from_records(nodes, edges));
}

std::vector<ImportanceEntry> golden_scores() {
    return scores_of({{0, 0.5}, {1, 0.3}, {2, 0.05}, {3, 0.1}, {4, 0.05}});
}

std::string golden(const std::string& name) {
    return read_file(std::filesystem::path(TEST_DATA_DIR) / name);
}

}  // namespace

TEST_CASE("importance_scores reduces attribution terms per node") {
    Attribution att = attribution_for({{3, -0.5}, {1, 0.25}, {2, 0.25}});
    auto scores = importance_scores(att);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].id == 3);  // |-0.5|
    CHECK(scores[1].id == 1);  // tie with 2 broken by id
    CHECK(scores[2].id == 2);

    auto signed_scores = importance_scores(att, ImportanceReduction::SignedChannel0);
    CHECK(signed_scores[0].id == 1);
    CHECK(signed_scores.back().id == 3);

    Attribution empty;
    CHECK_THROWS_AS(importance_scores(empty), DataError);
}

TEST_CASE("importance equals |f * W| for a scalar model") {
    KnowledgeGraph g = fixtures::path_graph(3);
    MGnanModel m(FeatureGrouping::single(4), {6}, 1, LinkFn::Identity, 8, 17);
    EmbeddingStore store = fixtures::hash_store(g, 4);
    EncodeResult enc = encode(m, g, store, false);
    auto scores = importance_scores(enc.attribution);
    for (const ImportanceEntry& e : scores) {
        int idx = g.index_of(e.id);
        std::vector<double> fx(1);
        std::vector<double> x = m.group_input(0, store.vec(e.id));
        m.shape_forward(0, x, fx);
        REQUIRE_THAT(e.score,
                     Catch::Matchers::WithinAbs(
                         std::abs(fx[0] * enc.node_weights[static_cast<std::size_t>(idx)]), 1e-12));
    }
}

TEST_CASE("linearization matches the golden files") {
    RetrievedSubgraph sub = golden_fixture();
    auto scores = golden_scores();

    ContextResult full = build_context(sub, scores, {ContextMode::FullPcst, 2});
    CHECK(full.text == golden("golden_context_full.txt"));
    CHECK(full.retained == std::vector<NodeId>{0, 1, 2, 3, 4});

    ContextResult topk = build_context(sub, scores, {ContextMode::TopKOnly, 2});
    CHECK(topk.text == golden("golden_context_topk.txt"));
    CHECK(topk.retained == std::vector<NodeId>{0, 1});

    ContextResult emph = build_context(sub, scores, {ContextMode::PcstPlusTopK, 2});
    CHECK(emph.text == golden("golden_context_emphasis.txt"));

    // exactly k marker lines
    std::istringstream lines(emph.text);
    std::string line;
    int markers = 0;
    while (std::getline(lines, line))
        if (line.rfind("[IMPORTANT] ", 0) == 0) ++markers;
    CHECK(markers == 2);
}

TEST_CASE("top-k retention honors ties and clamping") {
    RetrievedSubgraph sub = golden_fixture();
    auto scores = golden_scores();
    ContextResult top4 = build_context(sub, scores, {ContextMode::TopKOnly, 4});
    CHECK(top4.retained == std::vector<NodeId>{0, 1, 2, 3});  // 2 beats 4 on the tie

    ContextResult all = build_context(sub, scores, {ContextMode::TopKOnly, 25});
    ContextResult full = build_context(sub, scores, {ContextMode::FullPcst, 25});
    CHECK(all.retained == full.retained);
    CHECK(all.text == full.text);
}

TEST_CASE("retained set is exactly the score-ordered top-k for every k") {
    std::uint64_t state = 321;
    KnowledgeGraph g = fixtures::random_connected_graph(12, 6, state);
    RetrievedSubgraph sub = wrap(g);
    std::vector<std::pair<NodeId, double>> raw;
    for (const NodeRecord& n : g.nodes())
        raw.emplace_back(n.id, splitmix_below(state, 4) * 0.25);  // plenty of ties
    auto scores = scores_of(raw);
    for (int k = 1; k <= 12; ++k) {
        ContextResult res = build_context(sub, scores, {ContextMode::TopKOnly, k});
        std::vector<NodeId> expect;
        for (int i = 0; i < k; ++i) expect.push_back(scores[static_cast<std::size_t>(i)].id);
        std::sort(expect.begin(), expect.end());
        REQUIRE(res.retained == expect);
    }
}

TEST_CASE("top-k pruning can drop every edge") {
    RetrievedSubgraph sub = wrap(fixtures::path_graph(3));
    auto scores = scores_of({{0, 1.0}, {1, 0.0}, {2, 0.9}});
    ContextResult res = build_context(sub, scores, {ContextMode::TopKOnly, 2});
    CHECK(res.retained == std::vector<NodeId>{0, 2});
    CHECK(res.text.find("edge") == std::string::npos);
}

TEST_CASE("emphasis ordering matches an independent sort") {
    std::uint64_t state = 55;
    KnowledgeGraph g = fixtures::random_connected_graph(20, 10, state);
    RetrievedSubgraph sub = wrap(g);
    std::vector<std::pair<NodeId, double>> raw;
    for (const NodeRecord& n : g.nodes()) raw.emplace_back(n.id, splitmix_unit(state));
    auto scores = scores_of(raw);
    int k = 6;
    ContextResult res = build_context(sub, scores, {ContextMode::PcstPlusTopK, k});

    // reference order: top-k by (score desc, id asc), then the rest by id asc
    std::vector<NodeId> expected;
    for (int i = 0; i < k; ++i) expected.push_back(scores[static_cast<std::size_t>(i)].id);
    std::set<NodeId> top(expected.begin(), expected.end());
    for (const NodeRecord& n : g.nodes())
        if (!top.count(n.id)) expected.push_back(n.id);

    std::vector<NodeId> actual;
    std::istringstream lines(res.text);
    std::string line;
    while (std::getline(lines, line)) {
        std::string body = line;
        if (body.rfind("[IMPORTANT] ", 0) == 0) body = body.substr(12);
        if (body.rfind("node\t", 0) != 0) continue;
        auto a = body.find('\t');
        auto b = body.find('\t', a + 1);
        actual.push_back(std::stoll(body.substr(a + 1, b - a - 1)));
    }
    CHECK(actual == expected);
}

TEST_CASE("fragmentation metrics on closed forms") {
    // complete graph never fragments
    std::vector<std::pair<NodeId, NodeId>> kedges;
    for (NodeId a = 0; a < 6; ++a)
        for (NodeId b = a + 1; b < 6; ++b) kedges.emplace_back(a, b);
    RetrievedSubgraph complete = wrap(make_graph({0, 1, 2, 3, 4, 5}, kedges));
    std::vector<std::pair<NodeId, double>> raw;
    for (NodeId i = 0; i < 6; ++i) raw.emplace_back(i, 1.0 - 0.1 * static_cast<double>(i));
    for (int k = 1; k <= 6; ++k) {
        FragmentationMetrics fm = fragmentation_metrics(complete, scores_of(raw), k);
        CHECK(fm.fragmentation_delta == 0);
        CHECK(fm.topk_disconnect_fraction == 0.0);
    }

    // star with leaves as top-k: k singleton components, disconnect fraction 1
    RetrievedSubgraph star = wrap(fixtures::star_graph(5));
    std::vector<std::pair<NodeId, double>> leaf_scores{{0, 0.0}, {1, 1.0}, {2, 0.9}, {3, 0.8}, {4, 0.7}, {5, 0.6}};
    FragmentationMetrics fm = fragmentation_metrics(star, scores_of(leaf_scores), 4);
    CHECK(fm.components_full == 1);
    CHECK(fm.components_topk == 4);
    CHECK(fm.fragmentation_delta == 3);
    CHECK(fm.topk_disconnect_fraction == 1.0);
}

TEST_CASE("induced top-k components stay within full components") {
    std::uint64_t state = 66;
    for (int trial = 0; trial < 15; ++trial) {
        int n = 4 + static_cast<int>(splitmix_below(state, 20));
        KnowledgeGraph g = fixtures::random_graph(n, n, state);
        RetrievedSubgraph sub = wrap(g);
        std::vector<std::pair<NodeId, double>> raw;
        for (const NodeRecord& rec : g.nodes()) raw.emplace_back(rec.id, splitmix_unit(state));
        auto scores = scores_of(raw);
        int k = 1 + static_cast<int>(splitmix_below(state, static_cast<std::uint64_t>(n)));

        std::vector<NodeId> topk;
        for (int i = 0; i < k; ++i) topk.push_back(scores[static_cast<std::size_t>(i)].id);
        std::sort(topk.begin(), topk.end());
        KnowledgeGraph induced = induced_subgraph(g, topk);
        std::vector<int> sub_labels = component_labels(induced);
        std::vector<int> full_labels = component_labels(g);
        // every induced component maps into exactly one full component
        std::map<int, std::set<int>> full_of_sub;
        for (const NodeRecord& rec : induced.nodes()) {
            int si = induced.index_of(rec.id);
            int fi = g.index_of(rec.id);
            full_of_sub[sub_labels[static_cast<std::size_t>(si)]]
                .insert(full_labels[static_cast<std::size_t>(fi)]);
        }
        for (const auto& [sc, fulls] : full_of_sub) REQUIRE(fulls.size() == 1);
    }
}

TEST_CASE("bridge detection on a three-node path") {
    RetrievedSubgraph sub = wrap(fixtures::path_graph(3));
    auto scores = scores_of({{0, 1.0}, {1, 0.01}, {2, 0.9}});
    auto bridges = detect_bridges(sub, scores, 2, 3);
    REQUIRE(!bridges.empty());
    CHECK(bridges[0].id == 1);
    CHECK(bridges[0].articulation);
    CHECK_THAT(bridges[0].betweenness, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("clique of important nodes with pendants has no articulation bridges") {
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId a = 0; a < 4; ++a)
        for (NodeId b = a + 1; b < 4; ++b) edges.emplace_back(a, b);
    edges.emplace_back(0, 4);
    edges.emplace_back(1, 5);
    RetrievedSubgraph sub = wrap(make_graph({0, 1, 2, 3, 4, 5}, edges));
    auto scores = scores_of({{0, 1.0}, {1, 0.9}, {2, 0.8}, {3, 0.7}, {4, 0.01}, {5, 0.01}});
    auto bridges = detect_bridges(sub, scores, 4, 5);
    for (const BridgeCandidate& b : bridges) {
        CHECK_FALSE(b.articulation);
        CHECK(b.betweenness == 0.0);
    }
}

TEST_CASE("hub-bridge graphs: flagged bridges really fragment the top-k") {
    std::uint64_t state = 2030;
    for (int trial = 0; trial < 10; ++trial) {
        int p = 3 + static_cast<int>(splitmix_below(state, 3));
        fixtures::HubBridgeGraph hb = fixtures::make_hub_bridge(p, 2, state);
        const KnowledgeGraph& g = hb.sub.graph;
        int k = p;

        FragmentationMetrics fm = fragmentation_metrics(hb.sub, hb.scores, k);
        REQUIRE(fm.components_full == 1);
        REQUIRE(fm.components_topk == p);  // hubs are pairwise non-adjacent

        auto bridges = detect_bridges(hb.sub, hb.scores, k, 3);
        bool any_flagged = false;
        for (const BridgeCandidate& c : bridges) {
            if (!c.articulation) continue;
            any_flagged = true;
            // removing the bridge must strictly increase the number of
            // components partitioning the hubs
            std::vector<int> labels =
                detail::component_labels_without(g, g.index_of(c.id));
            std::set<int> parts;
            for (NodeId hub : hb.hubs) parts.insert(labels[static_cast<std::size_t>(g.index_of(hub))]);
            REQUIRE(parts.size() > 1);
        }
        REQUIRE(any_flagged);
    }
}

TEST_CASE("audit_query reproduces the skewed-share arithmetic") {
    // shares 0.252 / 0.234 / 0.114 with the tail summing to 0.4, every tail
    // value below 0.114 so the three head values are exactly the top-3
    std::vector<NodeId> ids{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4},
                                                 {4, 5}, {5, 6}, {6, 7}};
    RetrievedSubgraph sub = wrap(make_graph(ids, edges));
    Attribution att = attribution_for({{0, 0.252},
                                       {1, 0.234},
                                       {2, 0.114},
                                       {3, 0.1},
                                       {4, 0.1},
                                       {5, 0.08},
                                       {6, 0.07},
                                       {7, 0.05}});
    AuditConfig cfg;
    cfg.k = 3;
    AuditReport rep = audit_query(sub, att, cfg);
    CHECK_THAT(rep.top_share.at(3), Catch::Matchers::WithinAbs(0.600, 0.005));
    CHECK_THAT(rep.top_share.at(8), Catch::Matchers::WithinAbs(1.0, 1e-9));

    double sum = 0.0;
    for (double s : rep.shares) sum += s;
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    for (std::size_t i = 1; i < rep.importance.size(); ++i) {
        CHECK(rep.top_share.at(static_cast<int>(i)) <= rep.top_share.at(static_cast<int>(i) + 1) + 1e-12);
    }
}

TEST_CASE("audit_query: equal scores give top_share(k) = k/N") {
    RetrievedSubgraph sub = wrap(fixtures::cycle_graph(8));
    std::vector<std::pair<NodeId, double>> vals;
    for (NodeId i = 0; i < 8; ++i) vals.emplace_back(i, 0.125);
    Attribution att = attribution_for(vals);
    AuditReport rep = audit_query(sub, att, {4, 3, ImportanceReduction::AbsChannel0, false});
    for (int k = 1; k <= 8; ++k)
        CHECK_THAT(rep.top_share.at(k), Catch::Matchers::WithinAbs(k / 8.0, 1e-9));
}

TEST_CASE("audit_query clamps k and records it") {
    RetrievedSubgraph sub = wrap(fixtures::path_graph(4));
    Attribution att = attribution_for({{0, 0.4}, {1, 0.3}, {2, 0.2}, {3, 0.1}});
    AuditConfig cfg;
    cfg.k = 25;
    AuditReport rep = audit_query(sub, att, cfg);
    CHECK(rep.k_requested == 25);
    CHECK(rep.k_used == 4);
    CHECK(rep.k_clamped);
}

TEST_CASE("audit report JSON round-trips") {
    std::uint64_t state = 81;
    fixtures::HubBridgeGraph hb = fixtures::make_hub_bridge(4, 2, state);
    std::vector<std::pair<NodeId, double>> vals;
    for (const ImportanceEntry& e : hb.scores) vals.emplace_back(e.id, e.score);
    Attribution att = attribution_for(vals);
    AuditConfig cfg;
    cfg.k = 4;
    cfg.m_bridges = 3;
    AuditReport rep = audit_query(hb.sub, att, cfg);
    std::string once = report_json(rep).dump(2);
    AuditReport back = report_from_json(nlohmann::json::parse(once));
    CHECK(report_json(back).dump(2) == once);

    // bridges live outside the top-k
    std::set<NodeId> top;
    for (int i = 0; i < rep.k_used; ++i) top.insert(rep.importance[static_cast<std::size_t>(i)].id);
    for (const BridgeReportEntry& b : rep.bridges) CHECK_FALSE(top.count(b.id));
}

TEST_CASE("csv exports are well formed") {
    RetrievedSubgraph sub = golden_fixture();
    Attribution att = attribution_for({{0, 0.5}, {1, 0.3}, {2, 0.05}, {3, 0.1}, {4, 0.05}});
    AuditConfig cfg;
    cfg.k = 2;
    AuditReport rep = audit_query(sub, att, cfg);
    std::string bars = bars_csv(rep);
    CHECK(bars.rfind("rank,node_id,name,score,share\n", 0) == 0);
    CHECK(std::count(bars.begin(), bars.end(), '\n') == 6);  // header + 5 nodes
    std::string nodes = nodes_csv(rep);
    CHECK(nodes.rfind("node_id,importance,betweenness,component_full,component_topk,is_bridge\n", 0) == 0);
    CHECK(std::count(nodes.begin(), nodes.end(), '\n') == 6);

    CHECK(detail::csv_escape("plain") == "plain");
    CHECK(detail::csv_escape("a,b") == "\"a,b\"");
    CHECK(detail::csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

TEST_CASE("aggregate_reports averages shares and counts bridge frequency") {
    std::uint64_t state = 90;
    std::vector<AuditReport> reports;
    for (int i = 0; i < 4; ++i) {
        fixtures::HubBridgeGraph hb = fixtures::make_hub_bridge(3, 2, state);
        std::vector<std::pair<NodeId, double>> vals;
        for (const ImportanceEntry& e : hb.scores) vals.emplace_back(e.id, e.score);
        AuditConfig cfg;
        cfg.k = 3;
        reports.push_back(audit_query(hb.sub, attribution_for(vals), cfg));
    }
    nlohmann::ordered_json agg = aggregate_reports(reports);
    CHECK(agg["queries"] == 4);
    CHECK(agg["mean_top_share"].contains("3"));
    double share3 = agg["mean_top_share"]["3"].get<double>();
    CHECK(share3 > 0.9);  // hubs dominate the synthetic scores
    CHECK(agg["bridge_frequency"].is_array());
    CHECK(!agg["bridge_frequency"].empty());
}

TEST_CASE("include_neighbors widens the retained view") {
    // star: top-1 = a leaf; strict view is a singleton, neighbor view pulls in the center
    RetrievedSubgraph star = wrap(fixtures::star_graph(4));
    auto scores = scores_of({{0, 0.0}, {1, 1.0}, {2, 0.5}, {3, 0.4}, {4, 0.3}});
    FragmentationMetrics strict = fragmentation_metrics(star, scores, 2, false);
    FragmentationMetrics widened = fragmentation_metrics(star, scores, 2, true);
    CHECK(strict.components_topk == 2);   // two leaves, no edge
    CHECK(widened.components_topk == 1);  // center joins and reconnects them
}

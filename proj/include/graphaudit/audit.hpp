// Evidence-routing audit over a retrieved subgraph and its attribution:
// importance distributions, context linearization (three configurations),
// fragmentation under top-k pruning, and bridge-node detection (low-importance
// nodes that keep high-importance nodes connected).
//
// Linearization format (bit-exact):
//   node<TAB><id><TAB><name><TAB><type><TAB><description>
//   edge<TAB><src><TAB><dst><TAB><relation>
// In the emphasis configuration the top-k node lines come first (descending
// score) prefixed with "[IMPORTANT] "; remaining nodes follow by ascending id.
// Edges always follow the node block, in (src, dst, relation) order.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaudit/common.hpp"
#include "graphaudit/graph.hpp"
#include "graphaudit/mgnan.hpp"
#include "graphaudit/retrieval.hpp"

namespace graphaudit {

enum class ContextMode { FullPcst, TopKOnly, PcstPlusTopK };

inline std::string context_mode_name(ContextMode m) {
    switch (m) {
        case ContextMode::FullPcst: return "full";
        case ContextMode::TopKOnly: return "topk";
        case ContextMode::PcstPlusTopK: return "emphasis";
    }
    return "full";
}

inline ContextMode context_mode_from_name(const std::string& name) {
    if (name == "full") return ContextMode::FullPcst;
    if (name == "topk") return ContextMode::TopKOnly;
    if (name == "emphasis") return ContextMode::PcstPlusTopK;
    throw DataError("unknown context mode: " + name);
}

struct ContextConfig {
    ContextMode mode = ContextMode::FullPcst;
    int k = 25;
};

enum class ImportanceReduction { AbsChannel0, NormAllChannels, SignedChannel0 };

struct AuditConfig {
    int k = 25;          // top-k set used for pruning/fragmentation/bridges
    int m_bridges = 10;  // bridge candidates reported
    ImportanceReduction reduction = ImportanceReduction::AbsChannel0;
    bool include_neighbors = false;  // widen the retained set to top-k + immediate neighbors
};

struct ImportanceEntry {
    NodeId id = 0;
    double score = 0.0;
};

// Per-node scores from the attribution terms, reduced over groups/channels.
// Default: sum over groups of |channel 0|. Descending, ties by ascending id.
inline std::vector<ImportanceEntry> importance_scores(
    const Attribution& att, ImportanceReduction reduction = ImportanceReduction::AbsChannel0) {
    if (att.per_node_group.empty()) throw DataError("importance_scores: empty attribution");
    std::map<NodeId, double> acc;
    for (const AttributionTerm& t : att.per_node_group) {
        double v = 0.0;
        switch (reduction) {
            case ImportanceReduction::AbsChannel0: v = std::abs(t.value[0]); break;
            case ImportanceReduction::SignedChannel0: v = t.value[0]; break;
            case ImportanceReduction::NormAllChannels: {
                double s = 0.0;
                for (double x : t.value) s += x * x;
                v = std::sqrt(s);
                break;
            }
        }
        acc[t.node] += v;
    }
    std::vector<ImportanceEntry> out;
    out.reserve(acc.size());
    for (const auto& [id, score] : acc) out.push_back({id, score});
    std::sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

namespace detail {

inline void require_score_coverage(const KnowledgeGraph& g,
                                   const std::vector<ImportanceEntry>& scores) {
    if (scores.size() != g.node_count())
        throw DataError("scores cover " + std::to_string(scores.size()) + " nodes, graph has " +
                        std::to_string(g.node_count()));
    for (const ImportanceEntry& e : scores)
        if (!g.has_node(e.id)) throw DataError("score for unknown node " + std::to_string(e.id));
}

// First min(k, N) ids of the score ordering (descending score, ties by id).
inline std::vector<NodeId> top_k_ids(const std::vector<ImportanceEntry>& scores, int k) {
    std::vector<NodeId> ids;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(scores.size())); ++i)
        ids.push_back(scores[static_cast<std::size_t>(i)].id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// Number of distinct components of `g` (by labels) that contain members of `ids`.
inline int partition_count(const std::vector<int>& labels, const KnowledgeGraph& g,
                           const std::vector<NodeId>& ids) {
    std::set<int> parts;
    for (NodeId id : ids) parts.insert(labels[static_cast<std::size_t>(g.index_of(id))]);
    return static_cast<int>(parts.size());
}

// Component labels of g with one node removed (index `skip`), computed over
// the remaining nodes; removed node gets label -1.
inline std::vector<int> component_labels_without(const KnowledgeGraph& g, int skip) {
    std::vector<int> label(g.node_count(), -1);
    int next = 0;
    for (int s = 0; s < static_cast<int>(g.node_count()); ++s) {
        if (s == skip || label[static_cast<std::size_t>(s)] >= 0) continue;
        label[static_cast<std::size_t>(s)] = next;
        std::vector<int> stack{s};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : g.neighbors(u)) {
                if (v == skip || label[static_cast<std::size_t>(v)] >= 0) continue;
                label[static_cast<std::size_t>(v)] = next;
                stack.push_back(v);
            }
        }
        ++next;
    }
    return label;
}

// Betweenness restricted to shortest paths between nodes of `terminals`
// (sources and targets both in the set), endpoints excluded, each unordered
// pair counted once. Indexed like g.nodes().
inline std::vector<double> restricted_betweenness(const KnowledgeGraph& g,
                                                  const std::vector<NodeId>& terminals) {
    int n = static_cast<int>(g.node_count());
    std::vector<char> is_terminal(static_cast<std::size_t>(n), 0);
    for (NodeId id : terminals) is_terminal[static_cast<std::size_t>(g.index_of(id))] = 1;
    std::vector<double> bc(static_cast<std::size_t>(n), 0.0);
    std::vector<double> sigma(static_cast<std::size_t>(n)), delta(static_cast<std::size_t>(n));
    std::vector<int> dist(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> pred(static_cast<std::size_t>(n));
    std::vector<int> order;

    for (NodeId sid : terminals) {
        int s = g.index_of(sid);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(dist.begin(), dist.end(), -1);
        for (auto& p : pred) p.clear();
        order.clear();
        sigma[static_cast<std::size_t>(s)] = 1.0;
        dist[static_cast<std::size_t>(s)] = 0;
        std::vector<int> queue{s};
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            int u = queue[qi];
            order.push_back(u);
            for (int v : g.neighbors(u)) {
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    queue.push_back(v);
                }
                if (dist[static_cast<std::size_t>(v)] == dist[static_cast<std::size_t>(u)] + 1)
                    pred[static_cast<std::size_t>(v)].push_back(u);
            }
        }
        // accumulate sigma in BFS order (pred lists are complete once a node is popped)
        for (int u : order)
            if (u != s) {
                double acc = 0.0;
                for (int p : pred[static_cast<std::size_t>(u)]) acc += sigma[static_cast<std::size_t>(p)];
                sigma[static_cast<std::size_t>(u)] = acc;
            }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            int w = *it;
            double bonus = (is_terminal[static_cast<std::size_t>(w)] && w != s) ? 1.0 : 0.0;
            for (int v : pred[static_cast<std::size_t>(w)])
                delta[static_cast<std::size_t>(v)] += sigma[static_cast<std::size_t>(v)] /
                                                      sigma[static_cast<std::size_t>(w)] *
                                                      (bonus + delta[static_cast<std::size_t>(w)]);
            if (w != s) bc[static_cast<std::size_t>(w)] += delta[static_cast<std::size_t>(w)];
        }
    }
    for (double& x : bc) x /= 2.0;
    return bc;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

struct ContextResult {
    std::string text;
    std::vector<NodeId> retained;  // ascending
};

inline ContextResult build_context(const RetrievedSubgraph& sub,
                                   const std::vector<ImportanceEntry>& scores,
                                   const ContextConfig& cfg) {
    if (cfg.k < 1) throw DataError("context: k must be positive");
    detail::require_score_coverage(sub.graph, scores);
    const KnowledgeGraph& g = sub.graph;
    std::ostringstream out;
    auto node_line = [&](const NodeRecord& n, bool important) {
        if (important) out << "[IMPORTANT] ";
        out << "node\t" << n.id << '\t' << n.name << '\t' << n.entity_type << '\t' << n.description
            << '\n';
    };
    auto edge_line = [&](const EdgeRecord& e) {
        out << "edge\t" << e.src << '\t' << e.dst << '\t' << e.relation << '\n';
    };

    ContextResult res;
    switch (cfg.mode) {
        case ContextMode::FullPcst: {
            for (const NodeRecord& n : g.nodes()) node_line(n, false);
            for (const EdgeRecord& e : g.edges()) edge_line(e);
            for (const NodeRecord& n : g.nodes()) res.retained.push_back(n.id);
            break;
        }
        case ContextMode::TopKOnly: {
            res.retained = detail::top_k_ids(scores, cfg.k);
            KnowledgeGraph induced = induced_subgraph(g, res.retained);
            for (const NodeRecord& n : induced.nodes()) node_line(n, false);
            for (const EdgeRecord& e : induced.edges()) edge_line(e);
            break;
        }
        case ContextMode::PcstPlusTopK: {
            int k = std::min<int>(cfg.k, static_cast<int>(scores.size()));
            std::set<NodeId> top;
            for (int i = 0; i < k; ++i) {  // descending score order
                const NodeRecord& n = g.node(scores[static_cast<std::size_t>(i)].id);
                node_line(n, true);
                top.insert(n.id);
            }
            for (const NodeRecord& n : g.nodes())
                if (!top.count(n.id)) node_line(n, false);
            for (const EdgeRecord& e : g.edges()) edge_line(e);
            for (const NodeRecord& n : g.nodes()) res.retained.push_back(n.id);
            break;
        }
    }
    res.text = out.str();
    return res;
}

struct FragmentationMetrics {
    int components_full = 0;
    int components_topk = 0;
    int fragmentation_delta = 0;  // components_topk - components_full
    double topk_disconnect_fraction = 0.0;  // top-k pairs disconnected in the induced subgraph
};

inline FragmentationMetrics fragmentation_metrics(const RetrievedSubgraph& sub,
                                                  const std::vector<ImportanceEntry>& scores, int k,
                                                  bool include_neighbors = false) {
    detail::require_score_coverage(sub.graph, scores);
    if (k > static_cast<int>(sub.graph.node_count()))
        throw DataError("fragmentation: k exceeds node count");
    std::vector<NodeId> topk = detail::top_k_ids(scores, k);
    std::vector<NodeId> retained = topk;
    if (include_neighbors) {
        std::set<NodeId> with_nbrs(topk.begin(), topk.end());
        for (NodeId id : topk)
            for (int v : sub.graph.neighbors(sub.graph.index_of(id)))
                with_nbrs.insert(sub.graph.id_at(v));
        retained.assign(with_nbrs.begin(), with_nbrs.end());
    }

    FragmentationMetrics fm;
    std::vector<int> full_labels = component_labels(sub.graph);
    fm.components_full = full_labels.empty() ? 0 : *std::max_element(full_labels.begin(), full_labels.end()) + 1;

    KnowledgeGraph induced = induced_subgraph(sub.graph, retained);
    std::vector<int> sub_labels = component_labels(induced);
    fm.components_topk = sub_labels.empty() ? 0 : *std::max_element(sub_labels.begin(), sub_labels.end()) + 1;
    fm.fragmentation_delta = fm.components_topk - fm.components_full;

    if (topk.size() >= 2) {
        std::size_t disconnected = 0, pairs = 0;
        for (std::size_t a = 0; a < topk.size(); ++a)
            for (std::size_t b = a + 1; b < topk.size(); ++b) {
                ++pairs;
                if (sub_labels[static_cast<std::size_t>(induced.index_of(topk[a]))] !=
                    sub_labels[static_cast<std::size_t>(induced.index_of(topk[b]))])
                    ++disconnected;
            }
        fm.topk_disconnect_fraction = static_cast<double>(disconnected) / static_cast<double>(pairs);
    }
    return fm;
}

struct BridgeCandidate {
    NodeId id = 0;
    double betweenness = 0.0;  // restricted to shortest paths between top-k nodes
    bool articulation = false; // removal splits the top-k set across more components
    int rank = 0;              // 1-based position in the returned list
};

// Bridge candidates among nodes outside the top-k: ranked by top-k-restricted
// betweenness on the full subgraph; articulation-flagged nodes are always
// included even when beyond the top m.
inline std::vector<BridgeCandidate> detect_bridges(const RetrievedSubgraph& sub,
                                                   const std::vector<ImportanceEntry>& scores, int k,
                                                   int m) {
    if (k < 1 || m < 1) throw DataError("detect_bridges: k and m must be positive");
    detail::require_score_coverage(sub.graph, scores);
    const KnowledgeGraph& g = sub.graph;
    std::vector<NodeId> topk = detail::top_k_ids(scores, k);
    std::set<NodeId> top_set(topk.begin(), topk.end());

    std::vector<double> rbc = detail::restricted_betweenness(g, topk);
    std::vector<int> full_labels = component_labels(g);
    int base_parts = detail::partition_count(full_labels, g, topk);

    std::vector<BridgeCandidate> candidates;
    for (const NodeRecord& n : g.nodes()) {
        if (top_set.count(n.id)) continue;
        int idx = g.index_of(n.id);
        BridgeCandidate c;
        c.id = n.id;
        c.betweenness = rbc[static_cast<std::size_t>(idx)];
        std::vector<int> labels = detail::component_labels_without(g, idx);
        std::set<int> parts;
        for (NodeId t : topk) parts.insert(labels[static_cast<std::size_t>(g.index_of(t))]);
        c.articulation = static_cast<int>(parts.size()) > base_parts;
        candidates.push_back(c);
    }
    std::sort(candidates.begin(), candidates.end(), [](const BridgeCandidate& a, const BridgeCandidate& b) {
        if (a.betweenness != b.betweenness) return a.betweenness > b.betweenness;
        return a.id < b.id;
    });
    std::vector<BridgeCandidate> out;
    for (const BridgeCandidate& c : candidates) {
        if (static_cast<int>(out.size()) < m || c.articulation) out.push_back(c);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

struct BridgeReportEntry {
    NodeId id = 0;
    std::string name;
    double importance = 0.0;
    double betweenness = 0.0;
    int rank = 0;
    bool articulation = false;
};

struct NodeAuditRow {
    NodeId id = 0;
    double importance = 0.0;
    double betweenness = 0.0;  // global betweenness on the full subgraph
    int component_full = 0;
    int component_topk = -1;   // -1 when the node is not retained
    bool is_bridge = false;
};

struct AuditReport {
    std::string qid;
    int k_requested = 0;
    int k_used = 0;
    bool k_clamped = false;
    std::vector<ImportanceEntry> importance;  // descending score
    std::vector<std::string> importance_names;
    std::vector<double> shares;               // aligned with importance
    std::map<int, double> top_share;          // k -> cumulative share, k = 1..N
    int components_full = 0;
    int components_topk = 0;
    int fragmentation_delta = 0;
    double topk_disconnect_fraction = 0.0;
    std::vector<BridgeReportEntry> bridges;
    std::vector<NodeAuditRow> rows;           // ascending id
};

inline AuditReport audit_query(const RetrievedSubgraph& sub, const Attribution& att,
                               const AuditConfig& cfg) {
    if (cfg.k < 1 || cfg.m_bridges < 1) throw DataError("audit: k and m must be positive");
    AuditReport rep;
    rep.qid = sub.qid;
    const int n = static_cast<int>(sub.graph.node_count());
    rep.k_requested = cfg.k;
    rep.k_used = std::min(cfg.k, n);
    rep.k_clamped = rep.k_used != cfg.k;

    rep.importance = importance_scores(att, cfg.reduction);
    detail::require_score_coverage(sub.graph, rep.importance);
    double total = 0.0;
    for (const ImportanceEntry& e : rep.importance) total += std::abs(e.score);
    double cum = 0.0;
    for (std::size_t i = 0; i < rep.importance.size(); ++i) {
        rep.importance_names.push_back(sub.graph.node(rep.importance[i].id).name);
        double share = total > 0.0 ? std::abs(rep.importance[i].score) / total : 0.0;
        rep.shares.push_back(share);
        cum += share;
        rep.top_share[static_cast<int>(i) + 1] = cum;
    }

    FragmentationMetrics fm = fragmentation_metrics(sub, rep.importance, rep.k_used, cfg.include_neighbors);
    rep.components_full = fm.components_full;
    rep.components_topk = fm.components_topk;
    rep.fragmentation_delta = fm.fragmentation_delta;
    rep.topk_disconnect_fraction = fm.topk_disconnect_fraction;

    std::map<NodeId, double> score_of;
    for (const ImportanceEntry& e : rep.importance) score_of[e.id] = e.score;
    for (const BridgeCandidate& c : detect_bridges(sub, rep.importance, rep.k_used, cfg.m_bridges)) {
        BridgeReportEntry e;
        e.id = c.id;
        e.name = sub.graph.node(c.id).name;
        e.importance = score_of.at(c.id);
        e.betweenness = c.betweenness;
        e.rank = c.rank;
        e.articulation = c.articulation;
        rep.bridges.push_back(std::move(e));
    }

    // per-node rows for the two-panel export
    std::vector<double> global_bc = betweenness_centrality(sub.graph);
    std::vector<int> full_labels = component_labels(sub.graph);
    std::vector<NodeId> retained = detail::top_k_ids(rep.importance, rep.k_used);
    if (cfg.include_neighbors) {
        std::set<NodeId> with_nbrs(retained.begin(), retained.end());
        for (NodeId id : retained)
            for (int v : sub.graph.neighbors(sub.graph.index_of(id)))
                with_nbrs.insert(sub.graph.id_at(v));
        retained.assign(with_nbrs.begin(), with_nbrs.end());
    }
    KnowledgeGraph induced = induced_subgraph(sub.graph, retained);
    std::vector<int> sub_labels = component_labels(induced);
    std::set<NodeId> bridge_ids;
    for (const BridgeReportEntry& b : rep.bridges)
        if (b.articulation) bridge_ids.insert(b.id);
    for (int i = 0; i < n; ++i) {
        NodeAuditRow row;
        row.id = sub.graph.id_at(i);
        row.importance = score_of.at(row.id);
        row.betweenness = global_bc[static_cast<std::size_t>(i)];
        row.component_full = full_labels[static_cast<std::size_t>(i)];
        int sidx = induced.has_node(row.id) ? induced.index_of(row.id) : -1;
        row.component_topk = sidx >= 0 ? sub_labels[static_cast<std::size_t>(sidx)] : -1;
        row.is_bridge = bridge_ids.count(row.id) > 0;
        rep.rows.push_back(row);
    }
    return rep;
}

// --- serialization ----------------------------------------------------------

inline nlohmann::ordered_json report_json(const AuditReport& rep) {
    nlohmann::ordered_json j;
    j["qid"] = rep.qid;
    j["k_requested"] = rep.k_requested;
    j["k_used"] = rep.k_used;
    j["k_clamped"] = rep.k_clamped;
    j["importance"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rep.importance.size(); ++i)
        j["importance"].push_back({{"id", rep.importance[i].id},
                                   {"name", rep.importance_names[i]},
                                   {"score", rep.importance[i].score},
                                   {"share", rep.shares[i]}});
    j["top_share"] = nlohmann::ordered_json::object();
    for (const auto& [k, share] : rep.top_share) j["top_share"][std::to_string(k)] = share;
    j["components_full"] = rep.components_full;
    j["components_topk"] = rep.components_topk;
    j["fragmentation_delta"] = rep.fragmentation_delta;
    j["topk_disconnect_fraction"] = rep.topk_disconnect_fraction;
    j["bridges"] = nlohmann::ordered_json::array();
    for (const BridgeReportEntry& b : rep.bridges)
        j["bridges"].push_back({{"id", b.id},
                                {"name", b.name},
                                {"importance", b.importance},
                                {"betweenness", b.betweenness},
                                {"rank", b.rank},
                                {"articulation", b.articulation}});
    j["nodes"] = nlohmann::ordered_json::array();
    for (const NodeAuditRow& r : rep.rows)
        j["nodes"].push_back({{"id", r.id},
                              {"importance", r.importance},
                              {"betweenness", r.betweenness},
                              {"component_full", r.component_full},
                              {"component_topk", r.component_topk},
                              {"is_bridge", r.is_bridge}});
    return j;
}

inline AuditReport report_from_json(const nlohmann::json& j) {
    try {
        AuditReport rep;
        rep.qid = j.at("qid").get<std::string>();
        rep.k_requested = j.at("k_requested").get<int>();
        rep.k_used = j.at("k_used").get<int>();
        rep.k_clamped = j.at("k_clamped").get<bool>();
        for (const auto& e : j.at("importance")) {
            rep.importance.push_back({e.at("id").get<NodeId>(), e.at("score").get<double>()});
            rep.importance_names.push_back(e.at("name").get<std::string>());
            rep.shares.push_back(e.at("share").get<double>());
        }
        for (const auto& [k, v] : j.at("top_share").items())
            rep.top_share[std::stoi(k)] = v.get<double>();
        rep.components_full = j.at("components_full").get<int>();
        rep.components_topk = j.at("components_topk").get<int>();
        rep.fragmentation_delta = j.at("fragmentation_delta").get<int>();
        rep.topk_disconnect_fraction = j.at("topk_disconnect_fraction").get<double>();
        for (const auto& b : j.at("bridges")) {
            BridgeReportEntry e;
            e.id = b.at("id").get<NodeId>();
            e.name = b.at("name").get<std::string>();
            e.importance = b.at("importance").get<double>();
            e.betweenness = b.at("betweenness").get<double>();
            e.rank = b.at("rank").get<int>();
            e.articulation = b.at("articulation").get<bool>();
            rep.bridges.push_back(std::move(e));
        }
        for (const auto& r : j.at("nodes")) {
            NodeAuditRow row;
            row.id = r.at("id").get<NodeId>();
            row.importance = r.at("importance").get<double>();
            row.betweenness = r.at("betweenness").get<double>();
            row.component_full = r.at("component_full").get<int>();
            row.component_topk = r.at("component_topk").get<int>();
            row.is_bridge = r.at("is_bridge").get<bool>();
            rep.rows.push_back(row);
        }
        return rep;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad audit-report JSON: ") + e.what());
    }
}

// Importance-bar export: rank,node_id,name,score,share
inline std::string bars_csv(const AuditReport& rep) {
    std::ostringstream out;
    out << "rank,node_id,name,score,share\n";
    for (std::size_t i = 0; i < rep.importance.size(); ++i)
        out << (i + 1) << ',' << rep.importance[i].id << ','
            << detail::csv_escape(rep.importance_names[i]) << ','
            << detail::fmt_double(rep.importance[i].score) << ','
            << detail::fmt_double(rep.shares[i]) << '\n';
    return out.str();
}

// Two-panel export: node_id,importance,betweenness,component_full,component_topk,is_bridge
inline std::string nodes_csv(const AuditReport& rep) {
    std::ostringstream out;
    out << "node_id,importance,betweenness,component_full,component_topk,is_bridge\n";
    for (const NodeAuditRow& r : rep.rows)
        out << r.id << ',' << detail::fmt_double(r.importance) << ','
            << detail::fmt_double(r.betweenness) << ',' << r.component_full << ','
            << r.component_topk << ',' << (r.is_bridge ? 1 : 0) << '\n';
    return out.str();
}

// Corpus-level aggregation of per-query reports.
inline nlohmann::ordered_json aggregate_reports(const std::vector<AuditReport>& reports) {
    nlohmann::ordered_json j;
    j["queries"] = reports.size();
    nlohmann::ordered_json shares = nlohmann::ordered_json::object();
    for (int k : {1, 3, 5, 10, 25}) {
        double sum = 0.0;
        for (const AuditReport& r : reports) {
            if (r.top_share.empty()) continue;
            int kk = std::min(k, r.top_share.rbegin()->first);
            sum += r.top_share.at(kk);
        }
        shares[std::to_string(k)] = reports.empty() ? 0.0 : sum / static_cast<double>(reports.size());
    }
    j["mean_top_share"] = shares;
    double delta = 0.0, frac = 0.0;
    for (const AuditReport& r : reports) {
        delta += r.fragmentation_delta;
        frac += r.topk_disconnect_fraction;
    }
    j["mean_fragmentation_delta"] = reports.empty() ? 0.0 : delta / static_cast<double>(reports.size());
    j["mean_topk_disconnect_fraction"] = reports.empty() ? 0.0 : frac / static_cast<double>(reports.size());
    std::map<NodeId, std::pair<std::string, int>> freq;
    for (const AuditReport& r : reports)
        for (const BridgeReportEntry& b : r.bridges) {
            auto& entry = freq[b.id];
            entry.first = b.name;
            ++entry.second;
        }
    std::vector<std::pair<NodeId, std::pair<std::string, int>>> ordered(freq.begin(), freq.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second.second != b.second.second) return a.second.second > b.second.second;
        return a.first < b.first;
    });
    j["bridge_frequency"] = nlohmann::ordered_json::array();
    for (const auto& [id, entry] : ordered)
        j["bridge_frequency"].push_back({{"id", id}, {"name", entry.first}, {"count", entry.second}});
    return j;
}

}  // namespace graphaudit

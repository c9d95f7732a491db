// graphaudit CLI: build a graph bundle, retrieve question-specific subgraphs,
// train the additive encoder, export attributions, audit evidence routing, and
// aggregate per-query reports.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphaudit/audit.hpp"
#include "graphaudit/common.hpp"
#include "graphaudit/embedding.hpp"
#include "graphaudit/graph.hpp"
#include "graphaudit/mgnan.hpp"
#include "graphaudit/retrieval.hpp"

namespace fs = std::filesystem;
using namespace graphaudit;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Query {
    std::string qid;
    std::string text;
    std::vector<float> vector;  // optional explicit embedding
};

std::vector<Query> load_queries(const fs::path& path) {
    std::vector<Query> out;
    detail::for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
        try {
            Query q;
            q.qid = j.at("qid").get<std::string>();
            q.text = j.at("text").get<std::string>();
            if (j.contains("vector")) q.vector = j.at("vector").get<std::vector<float>>();
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw DataError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    if (out.empty()) throw DataError("no queries in " + path.string());
    return out;
}

QueryEmbedding embed_query(const Query& q, int dim) {
    if (!q.vector.empty()) {
        if (static_cast<int>(q.vector.size()) != dim)
            throw DataError("query " + q.qid + ": vector length " + std::to_string(q.vector.size()) +
                            " does not match store dim " + std::to_string(dim));
        return QueryEmbedding{q.vector, q.text};
    }
    return hash_embed_query(q.text, dim);
}

std::string sanitize(const std::string& qid) {
    std::string out;
    for (char c : qid) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

// A built graph bundle on disk: canonical node/edge JSONL plus binary embeddings.
struct Bundle {
    KnowledgeGraph graph;
    EmbeddingStore store;
};

Bundle load_bundle(const fs::path& dir) {
    Bundle b;
    b.graph = load_graph(dir / "nodes.jsonl", dir / "edges.jsonl");
    b.store = EmbeddingStore::load_binary(dir / "embeddings.bin", dir / "embeddings.idx");
    b.store.bind_check(b.graph);
    return b;
}

void write_canonical_bundle(const fs::path& dir, const KnowledgeGraph& g, const EmbeddingStore& store,
                            const std::string& embedding_source, const ordered_json& config_echo) {
    fs::create_directories(dir);
    std::ostringstream nodes;
    for (const NodeRecord& n : g.nodes()) {
        ordered_json j{{"id", n.id}, {"name", n.name}, {"type", n.entity_type}, {"description", n.description}};
        nodes << j.dump() << '\n';
    }
    std::ostringstream edges;
    for (const EdgeRecord& e : g.edges()) {
        ordered_json j{{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}};
        edges << j.dump() << '\n';
    }
    atomic_write_file(dir / "nodes.jsonl", nodes.str());
    atomic_write_file(dir / "edges.jsonl", edges.str());
    store.save_binary(dir / "embeddings.bin", dir / "embeddings.idx");

    ordered_json manifest;
    manifest["nodes"] = g.node_count();
    manifest["edges"] = g.edge_count();
    manifest["self_loops_dropped"] = g.self_loops_dropped();
    manifest["duplicate_edges_dropped"] = g.duplicate_edges_dropped();
    manifest["dim"] = store.dim();
    manifest["embedding_source"] = embedding_source;
    ordered_json checksums;
    for (const char* name : {"nodes.jsonl", "edges.jsonl", "embeddings.bin", "embeddings.idx"}) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(read_file(dir / name))));
        checksums[name] = buf;
    }
    manifest["checksums"] = checksums;
    manifest["config"] = config_echo;
    atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Runs `fn(i)` for i in [0, n) across `jobs` workers; collects failures.
// Exceptions are gathered per item so one bad query doesn't kill the run.
struct ItemFailure {
    std::string item;
    std::string message;
    bool numeric = false;
};

std::vector<ItemFailure> run_parallel(std::size_t n, int jobs,
                                      const std::function<std::string(std::size_t)>& label,
                                      const std::function<void(std::size_t)>& fn) {
    std::vector<ItemFailure> failures;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (const NumericError& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back({label(i), e.what(), true});
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back({label(i), e.what(), false});
            }
        }
    };
    int n_threads = std::max(1, jobs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    std::sort(failures.begin(), failures.end(),
              [](const ItemFailure& a, const ItemFailure& b) { return a.item < b.item; });
    return failures;
}

int finish_run(const std::vector<ItemFailure>& failures) {
    if (failures.empty()) return 0;
    bool numeric = false;
    for (const ItemFailure& f : failures) {
        std::cerr << "error: " << f.item << ": " << f.message << "\n";
        numeric = numeric || f.numeric;
    }
    return numeric ? 3 : 2;
}

std::vector<fs::path> glob_sorted(const fs::path& dir, const std::string& prefix,
                                  const std::string& suffix) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.size() > prefix.size() + suffix.size() && name.rfind(prefix, 0) == 0 &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

EmbeddingStore slice_store(const EmbeddingStore& full, const KnowledgeGraph& g) {
    EmbeddingStore out(full.dim());
    for (const NodeRecord& n : g.nodes()) {
        std::span<const float> v = full.vec(n.id);
        out.set(n.id, std::vector<float>(v.begin(), v.end()));
    }
    return out;
}

ordered_json retrieval_config_json(const RetrievalConfig& cfg) {
    return ordered_json{{"k_seeds", cfg.k_seeds},
                        {"hops", cfg.hops},
                        {"k_frontier", cfg.k_frontier},
                        {"prize_pool", cfg.prize_pool},
                        {"merge_pool", cfg.merge_pool},
                        {"edge_cost", cfg.edge_cost},
                        {"prize_scale", cfg.prize_scale},
                        {"prize_mode", cfg.prize_mode == PrizeMode::RankLinear ? "rank" : "raw"}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"auditable knowledge-graph retrieval and additive graph encoding"};
    app.require_subcommand(1);
    app.set_config("--config")->description("config file (INI; [subcommand] sections)");
    std::uint64_t seed = 0;
    int jobs = 1;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
    app.add_option("--jobs", jobs, "parallel workers for per-query commands")->capture_default_str();

    // ---- build ----
    auto* build = app.add_subcommand("build", "validate inputs and write a graph bundle");
    std::string b_nodes, b_edges, b_emb, b_emb_bin, b_emb_idx, b_out;
    int b_hash_dim = 0;
    build->add_option("--nodes", b_nodes, "node JSONL file")->required();
    build->add_option("--edges", b_edges, "edge JSONL file")->required();
    build->add_option("--embeddings", b_emb, "embedding text file");
    build->add_option("--embeddings-bin", b_emb_bin, "embedding binary blob");
    build->add_option("--embeddings-idx", b_emb_idx, "embedding binary index");
    build->add_option("--hash-dim", b_hash_dim, "synthesize hash embeddings of this dimension");
    build->add_option("--out", b_out, "bundle output directory")->required();

    // ---- retrieve ----
    auto* retrieve_cmd = app.add_subcommand("retrieve", "construct question-specific subgraphs");
    std::string r_graph, r_queries, r_mode = "single", r_out, r_prize_mode = "rank";
    RetrievalConfig rcfg;
    retrieve_cmd->add_option("--graph", r_graph, "bundle directory")->required();
    retrieve_cmd->add_option("--queries", r_queries, "query JSONL file")->required();
    retrieve_cmd->add_option("--mode", r_mode, "single | multi")->required();
    retrieve_cmd->add_option("--out", r_out, "output directory")->required();
    retrieve_cmd->add_option("--k-seeds", rcfg.k_seeds)->capture_default_str();
    retrieve_cmd->add_option("--hops", rcfg.hops)->capture_default_str();
    retrieve_cmd->add_option("--k-frontier", rcfg.k_frontier)->capture_default_str();
    retrieve_cmd->add_option("--prize-pool", rcfg.prize_pool)->capture_default_str();
    retrieve_cmd->add_option("--merge-pool", rcfg.merge_pool)->capture_default_str();
    retrieve_cmd->add_option("--edge-cost", rcfg.edge_cost)->capture_default_str();
    retrieve_cmd->add_option("--prize-scale", rcfg.prize_scale)->capture_default_str();
    retrieve_cmd->add_option("--prize-mode", r_prize_mode, "rank | raw")->capture_default_str();

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train the additive encoder");
    std::string t_out, t_link = "identity", t_retrieved, t_graph, t_targets, t_hidden = "64,64";
    bool t_planted = false;
    PlantedTaskConfig pcfg;
    TrainConfig tcfg;
    int t_channels = 1, t_knots = 16;
    train_cmd->add_flag("--planted", t_planted, "train on the synthetic planted-importance task");
    train_cmd->add_option("--graphs", pcfg.n_graphs, "planted: graphs")->capture_default_str();
    train_cmd->add_option("--nodes-per-graph", pcfg.nodes_per_graph)->capture_default_str();
    train_cmd->add_option("--planted-count", pcfg.planted)->capture_default_str();
    train_cmd->add_option("--dim", pcfg.dim, "planted: embedding dim")->capture_default_str();
    train_cmd->add_option("--marker-strength", pcfg.marker_strength)->capture_default_str();
    train_cmd->add_option("--retrieved", t_retrieved, "retrieved-subgraph directory (file-backed training)");
    train_cmd->add_option("--graph", t_graph, "bundle directory (with --retrieved)");
    train_cmd->add_option("--targets", t_targets, "target JSONL {qid, target} (with --retrieved)");
    train_cmd->add_option("--hidden", t_hidden, "hidden widths, comma separated")->capture_default_str();
    train_cmd->add_option("--channels", t_channels, "output channels")->capture_default_str();
    train_cmd->add_option("--link", t_link, "identity | sigmoid | softmax")->capture_default_str();
    train_cmd->add_option("--knots", t_knots, "rho knots")->capture_default_str();
    train_cmd->add_option("--lr", tcfg.lr)->capture_default_str();
    train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
    train_cmd->add_option("--batch", tcfg.batch_size)->capture_default_str();
    train_cmd->add_option("--out", t_out, "output directory")->required();

    // ---- attribute ----
    auto* attr_cmd = app.add_subcommand("attribute", "export exact per-node attributions");
    std::string a_model, a_retrieved, a_graph, a_out;
    attr_cmd->add_option("--model", a_model, "model checkpoint")->required();
    attr_cmd->add_option("--retrieved", a_retrieved, "retrieved-subgraph directory")->required();
    attr_cmd->add_option("--graph", a_graph, "bundle directory")->required();
    attr_cmd->add_option("--out", a_out, "output directory")->required();

    // ---- audit ----
    auto* audit_cmd = app.add_subcommand("audit", "evidence-routing audit per query");
    std::string d_retrieved, d_attr, d_out, d_context = "full", d_reduction = "abs0";
    AuditConfig acfg;
    audit_cmd->add_option("--retrieved", d_retrieved, "retrieved-subgraph directory")->required();
    audit_cmd->add_option("--attributions", d_attr, "attribution directory")->required();
    audit_cmd->add_option("--out", d_out, "output directory")->required();
    audit_cmd->add_option("--k", acfg.k, "top-k set size")->capture_default_str();
    audit_cmd->add_option("--bridges", acfg.m_bridges, "bridge candidates reported")->capture_default_str();
    audit_cmd->add_option("--context", d_context, "full | topk | emphasis")->capture_default_str();
    audit_cmd->add_option("--reduction", d_reduction, "abs0 | norm | signed0")->capture_default_str();
    audit_cmd->add_flag("--include-neighbors", acfg.include_neighbors,
                        "retain top-k plus immediate neighbors in the pruned view");

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "aggregate per-query audit reports");
    std::string p_audits, p_out;
    report_cmd->add_option("--audits", p_audits, "audit output directory")->required();
    report_cmd->add_option("--out", p_out, "aggregate JSON file")->required();

    for (CLI::App* sub : app.get_subcommands({}))  // allow --seed/--jobs after the subcommand
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (build->parsed()) {
            KnowledgeGraph g = load_graph(b_nodes, b_edges);
            EmbeddingStore store;
            std::string source;
            if (!b_emb.empty()) {
                store = EmbeddingStore::load_text(b_emb);
                source = "text:" + b_emb;
            } else if (!b_emb_bin.empty() || !b_emb_idx.empty()) {
                if (b_emb_bin.empty() || b_emb_idx.empty())
                    throw DataError("--embeddings-bin and --embeddings-idx must be given together");
                store = EmbeddingStore::load_binary(b_emb_bin, b_emb_idx);
                source = "binary:" + b_emb_bin;
            } else if (b_hash_dim > 0) {
                store = hash_embed_graph(g, b_hash_dim);
                source = "hash";
            } else {
                throw DataError("one of --embeddings, --embeddings-bin/--embeddings-idx, --hash-dim required");
            }
            store.bind_check(g);
            write_canonical_bundle(b_out, g, store, source,
                                   ordered_json{{"seed", seed}, {"hash_dim", b_hash_dim}});
            std::cout << "bundle written to " << b_out << " (" << g.node_count() << " nodes, "
                      << g.edge_count() << " edges, dim " << store.dim() << ")\n";
            return 0;
        }

        if (retrieve_cmd->parsed()) {
            rcfg.prize_mode = r_prize_mode == "raw" ? PrizeMode::RawSimilarity : PrizeMode::RankLinear;
            rcfg.validate();
            RetrievalMode mode;
            if (r_mode == "single") mode = RetrievalMode::SingleHop;
            else if (r_mode == "multi") mode = RetrievalMode::MultiHop;
            else throw DataError("unknown mode: " + r_mode);
            Bundle bundle = load_bundle(r_graph);
            std::vector<Query> queries = load_queries(r_queries);
            fs::create_directories(r_out);
            auto failures = run_parallel(
                queries.size(), jobs, [&](std::size_t i) { return queries[i].qid; },
                [&](std::size_t i) {
                    QueryEmbedding qe = embed_query(queries[i], bundle.store.dim());
                    RetrievedSubgraph sub = retrieve(bundle.graph, bundle.store, qe, rcfg, mode, queries[i].qid);
                    atomic_write_file(fs::path(r_out) / ("retrieved_" + sanitize(queries[i].qid) + ".json"),
                                      retrieved_to_json(sub).dump(2) + "\n");
                });
            ordered_json manifest{{"command", "retrieve"},
                                  {"mode", r_mode},
                                  {"queries", queries.size()},
                                  {"failed", failures.size()},
                                  {"seed", seed},
                                  {"config", retrieval_config_json(rcfg)}};
            atomic_write_file(fs::path(r_out) / "manifest.json", manifest.dump(2) + "\n");
            return finish_run(failures);
        }

        if (train_cmd->parsed()) {
            tcfg.seed = seed;
            std::vector<int> hidden;
            std::stringstream hs(t_hidden);
            std::string tok;
            while (std::getline(hs, tok, ',')) hidden.push_back(std::stoi(tok));
            LinkFn link = link_from_name(t_link);
            tcfg.task = link == LinkFn::Identity ? Task::Regression : Task::Classification;

            Dataset dataset;
            int dim = 0;
            if (t_planted) {
                pcfg.seed = seed;
                dataset = make_planted_task(pcfg);
                dim = pcfg.dim;
            } else {
                if (t_retrieved.empty() || t_graph.empty() || t_targets.empty())
                    throw DataError("file-backed training needs --retrieved, --graph and --targets "
                                    "(or use --planted)");
                Bundle bundle = load_bundle(t_graph);
                dim = bundle.store.dim();
                std::map<std::string, std::vector<double>> targets;
                detail::for_each_jsonl(t_targets, [&](const json& j, std::size_t lineno) {
                    try {
                        std::vector<double> tv;
                        if (j.at("target").is_array()) tv = j.at("target").get<std::vector<double>>();
                        else tv.push_back(j.at("target").get<double>());
                        targets[j.at("qid").get<std::string>()] = tv;
                    } catch (const json::exception& e) {
                        throw DataError("targets:" + std::to_string(lineno) + ": " + e.what());
                    }
                });
                for (const fs::path& p : glob_sorted(t_retrieved, "retrieved_", ".json")) {
                    RetrievedSubgraph sub = retrieved_from_json(json::parse(read_file(p)));
                    auto it = targets.find(sub.qid);
                    if (it == targets.end()) throw DataError("no target for qid " + sub.qid);
                    dataset.emplace_back(sub.graph, slice_store(bundle.store, sub.graph), it->second);
                }
                if (dataset.empty()) throw DataError("no retrieved subgraphs in " + t_retrieved);
            }

            MGnanModel model(FeatureGrouping::single(dim), hidden, t_channels, link, t_knots, seed);
            TrainResult tr = train(model, dataset, tcfg);
            fs::create_directories(t_out);
            save_checkpoint(model, fs::path(t_out) / "model.json");
            std::ostringstream losses;
            losses << "epoch,loss\n";
            for (std::size_t e = 0; e < tr.epoch_losses.size(); ++e)
                losses << e << ',' << tr.epoch_losses[e] << '\n';
            atomic_write_file(fs::path(t_out) / "losses.csv", losses.str());
            ordered_json manifest{{"command", "train"},
                                  {"samples", dataset.size()},
                                  {"epochs", tcfg.epochs},
                                  {"lr", tcfg.lr},
                                  {"batch", tcfg.batch_size},
                                  {"seed", seed},
                                  {"link", t_link},
                                  {"hidden", hidden},
                                  {"knots", t_knots},
                                  {"final_loss", tr.epoch_losses.empty() ? 0.0 : tr.epoch_losses.back()}};
            atomic_write_file(fs::path(t_out) / "manifest.json", manifest.dump(2) + "\n");
            std::cout << "model written to " << t_out << "/model.json (final loss "
                      << (tr.epoch_losses.empty() ? 0.0 : tr.epoch_losses.back()) << ")\n";
            return 0;
        }

        if (attr_cmd->parsed()) {
            MGnanModel model = load_checkpoint(a_model);
            Bundle bundle = load_bundle(a_graph);
            std::vector<fs::path> files = glob_sorted(a_retrieved, "retrieved_", ".json");
            if (files.empty()) throw DataError("no retrieved subgraphs in " + a_retrieved);
            fs::create_directories(a_out);
            auto failures = run_parallel(
                files.size(), jobs, [&](std::size_t i) { return files[i].filename().string(); },
                [&](std::size_t i) {
                    RetrievedSubgraph sub = retrieved_from_json(json::parse(read_file(files[i])));
                    EmbeddingStore store = slice_store(bundle.store, sub.graph);
                    EncodeResult enc = encode(model, sub.graph, store);
                    atomic_write_file(fs::path(a_out) / ("attribution_" + sanitize(sub.qid) + ".json"),
                                      attribution_json(sub.qid, enc.attribution).dump(2) + "\n");
                });
            ordered_json manifest{{"command", "attribute"},
                                  {"model", a_model},
                                  {"queries", files.size()},
                                  {"failed", failures.size()},
                                  {"seed", seed}};
            atomic_write_file(fs::path(a_out) / "manifest.json", manifest.dump(2) + "\n");
            return finish_run(failures);
        }

        if (audit_cmd->parsed()) {
            ContextConfig ccfg;
            ccfg.mode = context_mode_from_name(d_context);
            if (d_reduction == "abs0") acfg.reduction = ImportanceReduction::AbsChannel0;
            else if (d_reduction == "norm") acfg.reduction = ImportanceReduction::NormAllChannels;
            else if (d_reduction == "signed0") acfg.reduction = ImportanceReduction::SignedChannel0;
            else throw DataError("unknown reduction: " + d_reduction);
            std::vector<fs::path> files = glob_sorted(d_retrieved, "retrieved_", ".json");
            if (files.empty()) throw DataError("no retrieved subgraphs in " + d_retrieved);
            fs::create_directories(d_out);
            auto failures = run_parallel(
                files.size(), jobs, [&](std::size_t i) { return files[i].filename().string(); },
                [&](std::size_t i) {
                    RetrievedSubgraph sub = retrieved_from_json(json::parse(read_file(files[i])));
                    fs::path attr_path = fs::path(d_attr) / ("attribution_" + sanitize(sub.qid) + ".json");
                    Attribution att = attribution_from_json(json::parse(read_file(attr_path)));
                    AuditReport rep = audit_query(sub, att, acfg);
                    ContextConfig cq = ccfg;
                    cq.k = rep.k_used;
                    ContextResult ctx = build_context(sub, rep.importance, cq);
                    std::string base = sanitize(sub.qid);
                    atomic_write_file(fs::path(d_out) / ("report_" + base + ".json"),
                                      report_json(rep).dump(2) + "\n");
                    atomic_write_file(fs::path(d_out) / ("bars_" + base + ".csv"), bars_csv(rep));
                    atomic_write_file(fs::path(d_out) / ("nodes_" + base + ".csv"), nodes_csv(rep));
                    atomic_write_file(fs::path(d_out) / ("context_" + base + ".txt"), ctx.text);
                });
            ordered_json manifest{{"command", "audit"},
                                  {"queries", files.size()},
                                  {"failed", failures.size()},
                                  {"k", acfg.k},
                                  {"bridges", acfg.m_bridges},
                                  {"context", d_context},
                                  {"reduction", d_reduction},
                                  {"include_neighbors", acfg.include_neighbors},
                                  {"seed", seed}};
            atomic_write_file(fs::path(d_out) / "manifest.json", manifest.dump(2) + "\n");
            return finish_run(failures);
        }

        if (report_cmd->parsed()) {
            std::vector<AuditReport> reports;
            for (const fs::path& p : glob_sorted(p_audits, "report_", ".json"))
                reports.push_back(report_from_json(json::parse(read_file(p))));
            if (reports.empty()) throw DataError("no audit reports in " + p_audits);
            atomic_write_file(p_out, aggregate_reports(reports).dump(2) + "\n");
            std::cout << "aggregated " << reports.size() << " reports into " << p_out << "\n";
            return 0;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

// Node/query embedding storage and similarity search, plus a deterministic
// hash embedder that stands in for a sentence transformer in tests and demos.
//
// File formats:
//   text    header "dim=<d> count=<n>", then n lines "<id>\t<v1>,<v2>,...,<vd>"
//   binary  blob of little-endian float32 (d consecutive values per node) with
//           a sidecar index: header "dim=<d> count=<n>", then "<id>\t<offset>"
// Both loaders produce identical stores (values are float32 either way).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graphaudit/common.hpp"
#include "graphaudit/graph.hpp"

namespace graphaudit {

class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(int dim) : dim_(dim) {
        if (dim < 1) throw DataError("embedding dim must be positive");
    }

    int dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    bool has(NodeId id) const { return vectors_.count(id) > 0; }

    void set(NodeId id, std::vector<float> v) {
        if (static_cast<int>(v.size()) != dim_)
            throw DataError("embedding for node " + std::to_string(id) + " has length " +
                            std::to_string(v.size()) + ", expected " + std::to_string(dim_));
        vectors_[id] = std::move(v);
    }

    std::span<const float> vec(NodeId id) const {
        auto it = vectors_.find(id);
        if (it == vectors_.end())
            throw DataError("missing embedding for node " + std::to_string(id));
        return it->second;
    }

    std::vector<NodeId> ids() const {
        std::vector<NodeId> out;
        out.reserve(vectors_.size());
        for (const auto& [id, _] : vectors_) out.push_back(id);
        return out;  // ascending: map order
    }

    // Every node of `g` must have a vector.
    void bind_check(const KnowledgeGraph& g) const {
        for (const NodeRecord& n : g.nodes())
            if (!has(n.id)) throw DataError("missing embedding for node " + std::to_string(n.id));
    }

    // ---- text format ----
    static EmbeddingStore load_text(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open file: " + path.string());
        std::string header;
        if (!std::getline(in, header)) throw DataError(path.string() + ": empty embedding file");
        int dim = 0;
        std::size_t count = 0;
        if (std::sscanf(header.c_str(), "dim=%d count=%zu", &dim, &count) != 2 || dim < 1)
            throw DataError(path.string() + ":1: bad header, expected dim=<d> count=<n>");
        EmbeddingStore store(dim);
        std::string line;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing tab separator");
            NodeId id = 0;
            try {
                id = std::stoll(line.substr(0, tab));
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad node id");
            }
            std::vector<float> v;
            v.reserve(static_cast<std::size_t>(dim));
            std::stringstream ss(line.substr(tab + 1));
            std::string tok;
            while (std::getline(ss, tok, ',')) v.push_back(std::strtof(tok.c_str(), nullptr));
            if (static_cast<int>(v.size()) != dim)
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(dim) + " values, got " + std::to_string(v.size()));
            store.set(id, std::move(v));
        }
        if (store.size() != count)
            throw DataError(path.string() + ": header count " + std::to_string(count) +
                            " does not match " + std::to_string(store.size()) + " records");
        return store;
    }

    void save_text(const std::filesystem::path& path) const {
        std::ostringstream out;
        out << "dim=" << dim_ << " count=" << vectors_.size() << "\n";
        out.precision(9);  // round-trips float32
        for (const auto& [id, v] : vectors_) {
            out << id << '\t';
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) out << ',';
                out << v[i];
            }
            out << '\n';
        }
        atomic_write_file(path, out.str());
    }

    // ---- binary format ----
    static EmbeddingStore load_binary(const std::filesystem::path& blob_path,
                                      const std::filesystem::path& index_path) {
        std::string blob = read_file(blob_path);
        std::ifstream in(index_path);
        if (!in) throw DataError("cannot open file: " + index_path.string());
        std::string header;
        if (!std::getline(in, header)) throw DataError(index_path.string() + ": empty index");
        int dim = 0;
        std::size_t count = 0;
        if (std::sscanf(header.c_str(), "dim=%d count=%zu", &dim, &count) != 2 || dim < 1)
            throw DataError(index_path.string() + ":1: bad header, expected dim=<d> count=<n>");
        EmbeddingStore store(dim);
        std::string line;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError(index_path.string() + ":" + std::to_string(lineno) + ": bad index line");
            NodeId id = 0;
            std::uint64_t offset = 0;
            try {
                id = std::stoll(line.substr(0, tab));
                offset = std::stoull(line.substr(tab + 1));
            } catch (const std::exception&) {
                throw DataError(index_path.string() + ":" + std::to_string(lineno) + ": bad index line");
            }
            std::size_t bytes = static_cast<std::size_t>(dim) * sizeof(float);
            if (offset + bytes > blob.size())
                throw DataError(index_path.string() + ":" + std::to_string(lineno) +
                                ": offset past end of blob for node " + std::to_string(id));
            std::vector<float> v(static_cast<std::size_t>(dim));
            std::memcpy(v.data(), blob.data() + offset, bytes);  // little-endian hosts only
            store.set(id, std::move(v));
        }
        if (store.size() != count)
            throw DataError(index_path.string() + ": header count mismatch");
        return store;
    }

    void save_binary(const std::filesystem::path& blob_path,
                     const std::filesystem::path& index_path) const {
        std::string blob;
        std::ostringstream index;
        index << "dim=" << dim_ << " count=" << vectors_.size() << "\n";
        for (const auto& [id, v] : vectors_) {
            index << id << '\t' << blob.size() << '\n';
            blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
        }
        atomic_write_file(blob_path, blob);
        atomic_write_file(index_path, index.str());
    }

private:
    int dim_ = 0;
    std::map<NodeId, std::vector<float>> vectors_;  // ordered: deterministic iteration
};

struct QueryEmbedding {
    std::vector<float> vector;
    std::string source_text;
};

// dot(a,b) / (|a||b|), accumulated in double. Zero-norm inputs indicate a
// missing or corrupt embedding and raise DataError.
template <typename A, typename B>
double cosine_similarity(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size())
        throw DataError("cosine: length mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double x = static_cast<double>(a[i]);
        double y = static_cast<double>(b[i]);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw DataError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename A, typename B>
double cosine_similarity(const std::vector<A>& a, const std::vector<B>& b) {
    return cosine_similarity(std::span<const A>(a), std::span<const B>(b));
}

// Top-k node ids by query similarity, descending; ties broken by ascending id.
// With `restrict_to`, only those nodes are considered.
inline std::vector<std::pair<NodeId, double>> top_k_similar(
    const EmbeddingStore& store, const QueryEmbedding& q, int k,
    const std::vector<NodeId>* restrict_to = nullptr) {
    if (k < 1) throw DataError("top_k_similar: k must be positive");
    std::vector<std::pair<NodeId, double>> scored;
    auto score_one = [&](NodeId id) {
        try {
            scored.emplace_back(id, cosine_similarity(store.vec(id), std::span<const float>(q.vector)));
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " (node " + std::to_string(id) + ")");
        }
    };
    if (restrict_to) {
        if (restrict_to->empty()) throw DataError("top_k_similar: empty restriction set");
        for (NodeId id : *restrict_to) score_one(id);
    } else {
        for (NodeId id : store.ids()) score_one(id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<std::size_t>(k) < scored.size()) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

// Deterministic unit-norm embedding of `text`. The scheme is fixed so values
// are portable across implementations: seed = FNV-1a64(utf-8 bytes), then each
// coordinate is 2*u-1 with u the top-53-bit uniform of a splitmix64 draw, and
// the vector is L2-normalized in double precision.
inline std::vector<double> hash_embedder(std::string_view text, int dim) {
    if (dim < 2) throw DataError("hash_embedder: dim must be >= 2");
    std::uint64_t state = fnv1a64(text);
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = 2.0 * splitmix_unit(state) - 1.0;
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    double norm = std::sqrt(norm2);
    if (norm < 1e-12) {  // unreachable in practice; keeps the contract total
        v.assign(static_cast<std::size_t>(dim), 0.0);
        v[0] = 1.0;
        return v;
    }
    for (auto& x : v) x /= norm;
    return v;
}

inline std::vector<float> to_f32(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

// Store filled by the hash embedder: one vector per node, derived from its
// description (falling back to the name when the description is empty).
inline EmbeddingStore hash_embed_graph(const KnowledgeGraph& g, int dim) {
    EmbeddingStore store(dim);
    for (const NodeRecord& n : g.nodes()) {
        const std::string& text = n.description.empty() ? n.name : n.description;
        store.set(n.id, to_f32(hash_embedder(text, dim)));
    }
    return store;
}

inline QueryEmbedding hash_embed_query(const std::string& text, int dim) {
    return QueryEmbedding{to_f32(hash_embedder(text, dim)), text};
}

}  // namespace graphaudit

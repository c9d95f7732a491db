// Additive graph encoder over feature groups with exact per-node attribution.
//
// Each feature group g has its own MLP shape function f_g. A node j
// contributes f_g(x_j) scaled by a structure weight
//
//     W_j = sum_i  rho(1 / (1 + dist(j,i))) / #dist(j,i)
//
// where #dist(j,i) counts the nodes at the same distance from i as j (the
// distance shell around i) and rho is a learnable nondecreasing function of
// 1/(1+d). Unreachable pairs contribute zero. The pre-link readout is
// sum_{j,g} W_j f_g(x_j), so the inner terms are an exact additive
// decomposition of the encoder output across nodes and groups; node
// representations h_i are the same double sum grouped per i instead.
//
// rho is piecewise linear over `knots` uniform segments of [0,1]; knot values
// are base plus cumulative softplus-transformed increments, which makes it
// nondecreasing for every parameter setting. Training is full reverse-mode
// (shape MLPs and rho parameters; distances are constants) with Adam updates.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaudit/common.hpp"
#include "graphaudit/embedding.hpp"
#include "graphaudit/graph.hpp"

namespace graphaudit {

#ifdef NDEBUG
inline constexpr bool kEncodeOrderCheck = false;
#else
inline constexpr bool kEncodeOrderCheck = true;
#endif

struct FeatureGrouping {
    int dim = 0;
    std::vector<std::vector<int>> groups;  // 0-based index sets, a partition of {0..dim-1}

    static FeatureGrouping single(int dim) {
        FeatureGrouping fg;
        fg.dim = dim;
        fg.groups.emplace_back();
        for (int i = 0; i < dim; ++i) fg.groups.back().push_back(i);
        return fg;
    }

    int group_count() const { return static_cast<int>(groups.size()); }

    void validate() const {
        if (dim < 1) throw DataError("grouping: dim must be positive");
        if (groups.empty()) throw DataError("grouping: at least one group required");
        std::vector<char> seen(static_cast<std::size_t>(dim), 0);
        for (const auto& g : groups) {
            if (g.empty()) throw DataError("grouping: empty feature group");
            for (int idx : g) {
                if (idx < 0 || idx >= dim)
                    throw DataError("grouping: feature index " + std::to_string(idx) + " out of range");
                if (seen[static_cast<std::size_t>(idx)])
                    throw DataError("grouping: feature index " + std::to_string(idx) + " repeated");
                seen[static_cast<std::size_t>(idx)] = 1;
            }
        }
        for (int i = 0; i < dim; ++i)
            if (!seen[static_cast<std::size_t>(i)])
                throw DataError("grouping: feature index " + std::to_string(i) + " not covered");
    }
};

enum class LinkFn { Identity, Sigmoid, Softmax };
enum class Task { Regression, Classification };

inline std::string link_name(LinkFn link) {
    switch (link) {
        case LinkFn::Identity: return "identity";
        case LinkFn::Sigmoid: return "sigmoid";
        case LinkFn::Softmax: return "softmax";
    }
    return "identity";
}

inline LinkFn link_from_name(const std::string& name) {
    if (name == "identity") return LinkFn::Identity;
    if (name == "sigmoid") return LinkFn::Sigmoid;
    if (name == "softmax") return LinkFn::Softmax;
    throw DataError("unknown link function: " + name);
}

namespace detail {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace detail

class MGnanModel {
public:
    MGnanModel() = default;
    MGnanModel(FeatureGrouping grouping, std::vector<int> hidden, int out_channels, LinkFn link,
               int knots, std::uint64_t seed)
        : grouping_(std::move(grouping)),
          hidden_(std::move(hidden)),
          out_channels_(out_channels),
          link_(link),
          knots_(knots),
          seed_(seed) {
        grouping_.validate();
        if (out_channels_ < 1) throw DataError("model: out_channels must be positive");
        if (link_ == LinkFn::Softmax && out_channels_ < 2)
            throw DataError("model: softmax link requires at least 2 channels");
        for (int h : hidden_)
            if (h < 1) throw DataError("model: hidden widths must be positive");
        if (knots_ < 1) throw DataError("model: knots must be positive");
        build_layout();
        init_params();
    }

    const FeatureGrouping& grouping() const { return grouping_; }
    const std::vector<int>& hidden() const { return hidden_; }
    int out_channels() const { return out_channels_; }
    LinkFn link() const { return link_; }
    int knots() const { return knots_; }
    std::uint64_t seed() const { return seed_; }
    int group_count() const { return grouping_.group_count(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    // ---- rho ----
    // Knot values of rho at t = m/knots, m = 0..knots.
    std::vector<double> rho_knot_values() const {
        std::vector<double> v(static_cast<std::size_t>(knots_) + 1);
        v[0] = params_[rho_off_];
        for (int m = 1; m <= knots_; ++m)
            v[static_cast<std::size_t>(m)] = v[static_cast<std::size_t>(m - 1)] +
                detail::softplus(params_[rho_off_ + static_cast<std::size_t>(m)]);
        return v;
    }

    double rho(double t) const { return rho_from_knots(rho_knot_values(), t); }

    double rho_from_knots(const std::vector<double>& v, double t) const {
        t = std::clamp(t, 0.0, 1.0);
        int seg = std::min(static_cast<int>(t * knots_), knots_ - 1);
        double alpha = t * knots_ - seg;
        return v[static_cast<std::size_t>(seg)] +
               (v[static_cast<std::size_t>(seg + 1)] - v[static_cast<std::size_t>(seg)]) * alpha;
    }

    // d rho(t) / d base == 1; d rho(t) / d a_m == sigmoid(a_m) * clamp(t*knots - (m-1), 0, 1).
    void rho_backward(double t, double upstream, std::span<double> grad) const {
        t = std::clamp(t, 0.0, 1.0);
        grad[rho_off_] += upstream;
        for (int m = 1; m <= knots_; ++m) {
            double phi = std::clamp(t * knots_ - (m - 1), 0.0, 1.0);
            if (phi == 0.0) break;  // later knots contribute nothing
            grad[rho_off_ + static_cast<std::size_t>(m)] +=
                upstream * detail::sigmoid(params_[rho_off_ + static_cast<std::size_t>(m)]) * phi;
        }
    }

    // ---- shape functions ----
    struct ShapeCache {
        std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output (linear)
    };

    // Evaluates f_g on a group input (length |F_g|); tanh hidden layers,
    // linear output of out_channels values. `cache` may be null.
    void shape_forward(int g, std::span<const double> x, std::span<double> out,
                       ShapeCache* cache = nullptr) const {
        const auto& widths = widths_[static_cast<std::size_t>(g)];
        std::vector<double> cur(x.begin(), x.end());
        if (cache) {
            cache->acts.clear();
            cache->acts.push_back(cur);
        }
        std::size_t off = group_off_[static_cast<std::size_t>(g)];
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            int in = widths[l], outw = widths[l + 1];
            std::vector<double> next(static_cast<std::size_t>(outw));
            const double* W = params_.data() + off;
            const double* b = W + static_cast<std::size_t>(in) * static_cast<std::size_t>(outw);
            for (int r = 0; r < outw; ++r) {
                double acc = b[r];
                const double* row = W + static_cast<std::size_t>(r) * static_cast<std::size_t>(in);
                for (int c = 0; c < in; ++c) acc += row[c] * cur[static_cast<std::size_t>(c)];
                next[static_cast<std::size_t>(r)] = acc;
            }
            bool last = (l + 2 == widths.size());
            if (!last)
                for (double& v : next) v = std::tanh(v);
            cur = std::move(next);
            if (cache) cache->acts.push_back(cur);
            off += static_cast<std::size_t>(in) * static_cast<std::size_t>(outw) +
                   static_cast<std::size_t>(outw);
        }
        std::copy(cur.begin(), cur.end(), out.begin());
    }

    // Accumulates d loss / d(shape params of group g) into `grad` given the
    // upstream gradient on f_g's output and the forward cache.
    void shape_backward(int g, const ShapeCache& cache, std::span<const double> gout,
                        std::span<double> grad) const {
        const auto& widths = widths_[static_cast<std::size_t>(g)];
        std::size_t n_layers = widths.size() - 1;
        // offsets per layer
        std::vector<std::size_t> offs(n_layers);
        std::size_t off = group_off_[static_cast<std::size_t>(g)];
        for (std::size_t l = 0; l < n_layers; ++l) {
            offs[l] = off;
            off += static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]) +
                   static_cast<std::size_t>(widths[l + 1]);
        }
        std::vector<double> g_cur(gout.begin(), gout.end());
        for (std::size_t l = n_layers; l-- > 0;) {
            int in = widths[l], outw = widths[l + 1];
            const std::vector<double>& a_prev = cache.acts[l];
            const double* W = params_.data() + offs[l];
            double* gW = grad.data() + offs[l];
            double* gb = gW + static_cast<std::size_t>(in) * static_cast<std::size_t>(outw);
            std::vector<double> g_prev(static_cast<std::size_t>(in), 0.0);
            for (int r = 0; r < outw; ++r) {
                double gr = g_cur[static_cast<std::size_t>(r)];
                gb[r] += gr;
                const double* row = W + static_cast<std::size_t>(r) * static_cast<std::size_t>(in);
                double* grow = gW + static_cast<std::size_t>(r) * static_cast<std::size_t>(in);
                for (int c = 0; c < in; ++c) {
                    grow[c] += gr * a_prev[static_cast<std::size_t>(c)];
                    g_prev[static_cast<std::size_t>(c)] += gr * row[c];
                }
            }
            if (l > 0) {  // a_prev is a post-tanh hidden activation
                for (int c = 0; c < in; ++c) {
                    double a = a_prev[static_cast<std::size_t>(c)];
                    g_prev[static_cast<std::size_t>(c)] *= (1.0 - a * a);
                }
            }
            g_cur = std::move(g_prev);
        }
    }

    // Gathers the group-g slice of a full embedding vector.
    template <typename T>
    std::vector<double> group_input(int g, std::span<const T> full) const {
        const auto& idx = grouping_.groups[static_cast<std::size_t>(g)];
        std::vector<double> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            out[i] = static_cast<double>(full[static_cast<std::size_t>(idx[i])]);
        return out;
    }

    std::size_t rho_offset() const { return rho_off_; }

    // Used by the checkpoint loader; params must already have the right size.
    static MGnanModel from_structure(FeatureGrouping grouping, std::vector<int> hidden,
                                     int out_channels, LinkFn link, int knots, std::uint64_t seed,
                                     std::vector<double> params) {
        MGnanModel m(std::move(grouping), std::move(hidden), out_channels, link, knots, seed);
        if (params.size() != m.params_.size())
            throw DataError("checkpoint: expected " + std::to_string(m.params_.size()) +
                            " parameters, got " + std::to_string(params.size()));
        m.params_ = std::move(params);
        return m;
    }

private:
    void build_layout() {
        widths_.clear();
        group_off_.clear();
        std::size_t off = 0;
        for (int g = 0; g < group_count(); ++g) {
            std::vector<int> w;
            w.push_back(static_cast<int>(grouping_.groups[static_cast<std::size_t>(g)].size()));
            for (int h : hidden_) w.push_back(h);
            w.push_back(out_channels_);
            group_off_.push_back(off);
            for (std::size_t l = 0; l + 1 < w.size(); ++l)
                off += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]) +
                       static_cast<std::size_t>(w[l + 1]);
            widths_.push_back(std::move(w));
        }
        rho_off_ = off;
        params_.assign(off + 1 + static_cast<std::size_t>(knots_), 0.0);
    }

    void init_params() {
        std::uint64_t state = seed_ ^ 0x6d676e616eull;  // distinct stream per purpose
        for (int g = 0; g < group_count(); ++g) {
            const auto& w = widths_[static_cast<std::size_t>(g)];
            std::size_t off = group_off_[static_cast<std::size_t>(g)];
            for (std::size_t l = 0; l + 1 < w.size(); ++l) {
                double s = 1.0 / std::sqrt(static_cast<double>(w[l]));
                std::size_t n_w = static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]);
                for (std::size_t i = 0; i < n_w; ++i)
                    params_[off + i] = splitmix_range(state, -s, s);
                // biases stay zero
                off += n_w + static_cast<std::size_t>(w[l + 1]);
            }
        }
        params_[rho_off_] = 0.0;  // rho(0) = 0
        double inc = detail::softplus_inv(1.0 / knots_);  // rho approximately t
        for (int m = 1; m <= knots_; ++m) params_[rho_off_ + static_cast<std::size_t>(m)] = inc;
    }

    FeatureGrouping grouping_;
    std::vector<int> hidden_{64, 64};
    int out_channels_ = 1;
    LinkFn link_ = LinkFn::Identity;
    int knots_ = 16;
    std::uint64_t seed_ = 0;
    std::vector<double> params_;

    std::vector<std::vector<int>> widths_;
    std::vector<std::size_t> group_off_;
    std::size_t rho_off_ = 0;
};

inline void apply_link(LinkFn link, std::span<const double> z, std::span<double> y) {
    switch (link) {
        case LinkFn::Identity:
            std::copy(z.begin(), z.end(), y.begin());
            return;
        case LinkFn::Sigmoid:
            for (std::size_t k = 0; k < z.size(); ++k) y[k] = detail::sigmoid(z[k]);
            return;
        case LinkFn::Softmax: {
            double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (std::size_t k = 0; k < z.size(); ++k) {
                y[k] = std::exp(z[k] - zmax);
                sum += y[k];
            }
            for (std::size_t k = 0; k < z.size(); ++k) y[k] /= sum;
            return;
        }
    }
}

// --- distance machinery -------------------------------------------------------

// Per node j, the aggregated shell coefficients c_j(d) = sum over nodes i at
// distance d of 1 / #dist(j,i), so that W_j = sum_d rho(1/(1+d)) * c_j(d).
// Distances never change during training, so this is computed once per graph.
struct DistanceCoeffs {
    std::vector<std::vector<std::pair<int, double>>> per_node;  // (d, c) sorted by d
    int max_distance = 0;

    static DistanceCoeffs compute(const KnowledgeGraph& g) {
        int n = static_cast<int>(g.node_count());
        DistanceCoeffs dc;
        dc.per_node.assign(static_cast<std::size_t>(n), {});
        std::vector<std::map<int, double>> acc(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            DistanceTable t = detail::bfs_from_index(g, i);
            for (int j = 0; j < n; ++j) {
                int d = t.dist[static_cast<std::size_t>(j)];
                if (d == DistanceTable::kUnreachable) continue;
                acc[static_cast<std::size_t>(j)][d] += 1.0 / t.shell_size(d);
                dc.max_distance = std::max(dc.max_distance, d);
            }
        }
        for (int j = 0; j < n; ++j)
            for (const auto& [d, c] : acc[static_cast<std::size_t>(j)])
                dc.per_node[static_cast<std::size_t>(j)].emplace_back(d, c);
        return dc;
    }
};

// Structure weights W_j for the current rho parameters.
inline std::vector<double> node_weights(const MGnanModel& model, const DistanceCoeffs& coeffs) {
    std::vector<double> knots = model.rho_knot_values();
    std::vector<double> w(coeffs.per_node.size(), 0.0);
    for (std::size_t j = 0; j < coeffs.per_node.size(); ++j)
        for (const auto& [d, c] : coeffs.per_node[j])
            w[j] += model.rho_from_knots(knots, 1.0 / (1.0 + d)) * c;
    return w;
}

// Single-node convenience used by tests: W_j given precomputed distance tables.
inline double node_weight(const MGnanModel& model, const KnowledgeGraph& g, NodeId j) {
    DistanceCoeffs dc = DistanceCoeffs::compute(g);
    int idx = g.index_of(j);
    if (idx < 0) throw DataError("unknown node " + std::to_string(j));
    return node_weights(model, dc)[static_cast<std::size_t>(idx)];
}

// --- encoding ------------------------------------------------------------------

struct AttributionTerm {
    NodeId node = 0;
    int group = 0;
    std::vector<double> value;  // K channels
};

struct Attribution {
    std::vector<AttributionTerm> per_node_group;  // node ascending, then group
    std::vector<double> pre_link_total;           // canonical-order sum of the terms
    std::vector<double> output;                   // link(pre_link_total)
};

struct EncodeResult {
    std::vector<NodeId> ids;                             // ascending
    std::vector<std::vector<std::vector<double>>> reps;  // [i][g][k] node representations
    std::vector<double> node_weights;                    // W_j, indexed like ids
    Attribution attribution;
};

inline EncodeResult encode(const MGnanModel& model, const KnowledgeGraph& sub,
                           const EmbeddingStore& store, bool order_check = kEncodeOrderCheck) {
    if (store.dim() != model.grouping().dim)
        throw DataError("encode: store dim " + std::to_string(store.dim()) +
                        " does not match model dim " + std::to_string(model.grouping().dim));
    store.bind_check(sub);

    const int n = static_cast<int>(sub.node_count());
    const int G = model.group_count();
    const int K = model.out_channels();
    EncodeResult res;
    res.ids.reserve(static_cast<std::size_t>(n));
    for (const NodeRecord& rec : sub.nodes()) res.ids.push_back(rec.id);

    std::vector<DistanceTable> tables;
    tables.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tables.push_back(detail::bfs_from_index(sub, i));

    std::vector<double> knots = model.rho_knot_values();
    auto pair_weight = [&](int i, int j) -> double {  // rho(t_ij) / shell_i(d_ij), 0 if unreachable
        int d = tables[static_cast<std::size_t>(i)].dist[static_cast<std::size_t>(j)];
        if (d == DistanceTable::kUnreachable) return 0.0;
        return model.rho_from_knots(knots, 1.0 / (1.0 + d)) /
               tables[static_cast<std::size_t>(i)].shell_size(d);
    };

    res.node_weights.assign(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            res.node_weights[static_cast<std::size_t>(j)] += pair_weight(i, j);

    // f_g(x_j) for every node and group
    std::vector<std::vector<std::vector<double>>> f(
        static_cast<std::size_t>(n),
        std::vector<std::vector<double>>(static_cast<std::size_t>(G),
                                         std::vector<double>(static_cast<std::size_t>(K))));
    for (int j = 0; j < n; ++j) {
        std::span<const float> x = store.vec(res.ids[static_cast<std::size_t>(j)]);
        for (int g = 0; g < G; ++g) {
            std::vector<double> xg = model.group_input(g, x);
            model.shape_forward(g, xg, f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)]);
        }
    }

    // attribution terms in canonical order, summed channel-wise as we go
    Attribution& att = res.attribution;
    att.pre_link_total.assign(static_cast<std::size_t>(K), 0.0);
    for (int j = 0; j < n; ++j) {
        for (int g = 0; g < G; ++g) {
            AttributionTerm term;
            term.node = res.ids[static_cast<std::size_t>(j)];
            term.group = g;
            term.value.resize(static_cast<std::size_t>(K));
            for (int k = 0; k < K; ++k) {
                term.value[static_cast<std::size_t>(k)] =
                    res.node_weights[static_cast<std::size_t>(j)] *
                    f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
                att.pre_link_total[static_cast<std::size_t>(k)] += term.value[static_cast<std::size_t>(k)];
            }
            att.per_node_group.push_back(std::move(term));
        }
    }

    // node representations: same double sum grouped per i
    res.reps.assign(static_cast<std::size_t>(n),
                    std::vector<std::vector<double>>(static_cast<std::size_t>(G),
                                                     std::vector<double>(static_cast<std::size_t>(K), 0.0)));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double w = pair_weight(i, j);
            if (w == 0.0) continue;
            for (int g = 0; g < G; ++g)
                for (int k = 0; k < K; ++k)
                    res.reps[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)] +=
                        w * f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
        }

    if (order_check) {
        for (int k = 0; k < K; ++k) {
            double per_i = 0.0;
            for (int i = 0; i < n; ++i)
                for (int g = 0; g < G; ++g)
                    per_i += res.reps[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
            if (std::abs(per_i - att.pre_link_total[static_cast<std::size_t>(k)]) > 1e-9)
                throw NumericError("encode: summation-order mismatch on channel " + std::to_string(k));
        }
    }

    att.output.assign(static_cast<std::size_t>(K), 0.0);
    apply_link(model.link(), att.pre_link_total, att.output);
    return res;
}

// --- training -----------------------------------------------------------------

struct TrainSample {
    KnowledgeGraph graph;
    EmbeddingStore store;
    std::vector<double> target;    // K values (regression) or labels (classification)
    std::vector<NodeId> planted;   // ground truth for synthetic tasks; may be empty
    DistanceCoeffs coeffs;

    TrainSample(KnowledgeGraph g, EmbeddingStore s, std::vector<double> t,
                std::vector<NodeId> p = {})
        : graph(std::move(g)), store(std::move(s)), target(std::move(t)), planted(std::move(p)) {
        coeffs = DistanceCoeffs::compute(graph);
    }
};

using Dataset = std::vector<TrainSample>;

namespace detail {

// loss and d loss / d z for one sample; z is the pre-link readout.
inline double sample_loss(LinkFn link, Task task, std::span<const double> z,
                          std::span<const double> target, std::span<double> gz) {
    std::size_t K = z.size();
    if (target.size() != K)
        throw DataError("target length " + std::to_string(target.size()) + " does not match " +
                        std::to_string(K) + " channels");
    double loss = 0.0;
    if (task == Task::Regression) {
        if (link != LinkFn::Identity) throw DataError("regression requires the identity link");
        for (std::size_t k = 0; k < K; ++k) {
            double r = z[k] - target[k];
            loss += r * r / static_cast<double>(K);
            gz[k] = 2.0 * r / static_cast<double>(K);
        }
        return loss;
    }
    if (link == LinkFn::Sigmoid) {
        for (std::size_t k = 0; k < K; ++k) {
            loss += (softplus(z[k]) - target[k] * z[k]) / static_cast<double>(K);
            gz[k] = (sigmoid(z[k]) - target[k]) / static_cast<double>(K);
        }
        return loss;
    }
    if (link == LinkFn::Softmax) {
        double zmax = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (std::size_t k = 0; k < K; ++k) lse += std::exp(z[k] - zmax);
        lse = zmax + std::log(lse);
        for (std::size_t k = 0; k < K; ++k) {
            loss += target[k] * (lse - z[k]);
            gz[k] = std::exp(z[k] - lse) - target[k];
        }
        return loss;
    }
    throw DataError("classification requires sigmoid or softmax link");
}

}  // namespace detail

// Mean loss over the batch and its exact gradient w.r.t. every parameter.
inline std::pair<double, std::vector<double>> loss_and_gradients(
    const MGnanModel& model, const std::vector<const TrainSample*>& batch, Task task) {
    if (batch.empty()) throw DataError("loss_and_gradients: empty batch");
    const int G = model.group_count();
    const int K = model.out_channels();
    std::vector<double> grad(model.param_count(), 0.0);
    std::vector<double> knots = model.rho_knot_values();
    double total_loss = 0.0;

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const TrainSample& s = *batch[b];
        if (s.store.dim() != model.grouping().dim)
            throw DataError("sample " + std::to_string(b) + ": store dim mismatch");
        const int n = static_cast<int>(s.graph.node_count());

        std::vector<double> w(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j)
            for (const auto& [d, c] : s.coeffs.per_node[static_cast<std::size_t>(j)])
                w[static_cast<std::size_t>(j)] += model.rho_from_knots(knots, 1.0 / (1.0 + d)) * c;

        // forward
        std::vector<std::vector<MGnanModel::ShapeCache>> caches(
            static_cast<std::size_t>(n), std::vector<MGnanModel::ShapeCache>(static_cast<std::size_t>(G)));
        std::vector<std::vector<std::vector<double>>> f(
            static_cast<std::size_t>(n),
            std::vector<std::vector<double>>(static_cast<std::size_t>(G),
                                             std::vector<double>(static_cast<std::size_t>(K))));
        std::vector<double> z(static_cast<std::size_t>(K), 0.0);
        for (int j = 0; j < n; ++j) {
            std::span<const float> x = s.store.vec(s.graph.id_at(j));
            for (int g = 0; g < G; ++g) {
                std::vector<double> xg = model.group_input(g, x);
                model.shape_forward(g, xg, f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)],
                                    &caches[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)]);
                for (int k = 0; k < K; ++k)
                    z[static_cast<std::size_t>(k)] +=
                        w[static_cast<std::size_t>(j)] *
                        f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
            }
        }

        std::vector<double> gz(static_cast<std::size_t>(K), 0.0);
        double loss = detail::sample_loss(model.link(), task, z, s.target, gz);
        if (!std::isfinite(loss))
            throw NumericError("non-finite loss at sample " + std::to_string(b));
        total_loss += loss;

        // backward
        std::vector<double> gout(static_cast<std::size_t>(K));
        for (int j = 0; j < n; ++j) {
            double gw = 0.0;  // d loss / d W_j
            for (int g = 0; g < G; ++g) {
                for (int k = 0; k < K; ++k) {
                    gout[static_cast<std::size_t>(k)] =
                        gz[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(j)];
                    gw += gz[static_cast<std::size_t>(k)] *
                          f[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)][static_cast<std::size_t>(k)];
                }
                model.shape_backward(g, caches[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)],
                                     gout, grad);
            }
            for (const auto& [d, c] : s.coeffs.per_node[static_cast<std::size_t>(j)])
                model.rho_backward(1.0 / (1.0 + d), gw * c, grad);
        }
    }

    double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return {total_loss * inv, grad};
}

inline std::pair<double, std::vector<double>> loss_and_gradients(const MGnanModel& model,
                                                                 const Dataset& batch, Task task) {
    std::vector<const TrainSample*> ptrs;
    ptrs.reserve(batch.size());
    for (const TrainSample& s : batch) ptrs.push_back(&s);
    return loss_and_gradients(model, ptrs, task);
}

struct TrainConfig {
    std::uint64_t seed = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 100;
    int batch_size = 8;
    Task task = Task::Regression;
};

struct TrainResult {
    std::vector<double> epoch_losses;
};

// Adam over shuffled mini-batches; fully deterministic given the seed.
inline TrainResult train(MGnanModel& model, const Dataset& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw DataError("train: empty dataset");
    if (cfg.epochs < 0 || cfg.batch_size < 1) throw DataError("train: bad epochs/batch_size");
    std::vector<double> m(model.param_count(), 0.0), v(model.param_count(), 0.0);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::uint64_t shuffle_state = cfg.seed ^ 0x747261696eull;
    TrainResult result;
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        splitmix_shuffle(order, shuffle_state);
        double epoch_loss = 0.0;
        std::size_t covered = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const TrainSample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
            auto [loss, grad] = loss_and_gradients(model, batch, cfg.task);
            if (!std::isfinite(loss))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(end - start);
            covered += end - start;

            ++step;
            double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto& p = model.params();
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(covered));
        if (!std::isfinite(result.epoch_losses.back()))
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
    }
    return result;
}

// --- synthetic planted-importance task ------------------------------------------

struct PlantedTaskConfig {
    int n_graphs = 40;
    int nodes_per_graph = 30;
    int planted = 3;
    int dim = 16;
    std::uint64_t seed = 0;
    double marker_strength = 2.5;  // scale of the planted marker coefficient
};

// Random connected graphs with hash embeddings. The scalar target depends only
// on the embeddings of `planted` randomly chosen nodes: planted embeddings mix
// in a node-varying multiple of a fixed marker direction, and the target is
// the sum of that fixed linear functional (the marker direction) over the
// planted nodes. Non-planted nodes contribute nothing, and their marker
// component stays small, so the recorded planted ids are checkable ground
// truth for attribution recall.
inline Dataset make_planted_task(const PlantedTaskConfig& cfg) {
    if (cfg.planted >= cfg.nodes_per_graph)
        throw DataError("planted task: planted count must be below nodes_per_graph");
    if (cfg.planted < 0 || cfg.n_graphs < 1 || cfg.nodes_per_graph < 1)
        throw DataError("planted task: bad configuration");
    std::string tag = std::to_string(cfg.seed);
    std::vector<double> marker = hash_embedder("planted-marker-" + tag, cfg.dim);
    std::uint64_t state = cfg.seed ^ 0x706c616e74ull;

    Dataset dataset;
    dataset.reserve(static_cast<std::size_t>(cfg.n_graphs));
    for (int gi = 0; gi < cfg.n_graphs; ++gi) {
        const int n = cfg.nodes_per_graph;
        std::vector<NodeRecord> nodes;
        std::vector<EdgeRecord> edges;
        for (int vtx = 0; vtx < n; ++vtx) {
            NodeRecord rec;
            rec.id = vtx;
            rec.name = "n" + std::to_string(vtx);
            rec.entity_type = "synthetic";
            rec.description = "s" + tag + "-g" + std::to_string(gi) + "-n" + std::to_string(vtx);
            nodes.push_back(std::move(rec));
        }
        for (int vtx = 1; vtx < n; ++vtx) {
            NodeId parent = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(vtx)));
            edges.push_back({parent, vtx, "rel"});
        }
        // density varies widely across graphs so structure-blind shortcuts
        // (constant shape outputs) cannot fit the targets
        int extra = static_cast<int>(splitmix_below(state, static_cast<std::uint64_t>(2 * n)));
        for (int e = 0; e < extra; ++e) {
            NodeId a = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
            NodeId b = static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n)));
            if (a != b) edges.push_back({a, b, "rel"});
        }

        std::set<NodeId> planted;
        while (static_cast<int>(planted.size()) < cfg.planted)
            planted.insert(static_cast<NodeId>(splitmix_below(state, static_cast<std::uint64_t>(n))));

        KnowledgeGraph graph = KnowledgeGraph::from_records(std::move(nodes), std::move(edges));
        EmbeddingStore store(cfg.dim);
        for (const NodeRecord& rec : graph.nodes()) {
            std::vector<double> x = hash_embedder(rec.description, cfg.dim);
            double along = 0.0;
            for (int i = 0; i < cfg.dim; ++i)
                along += x[static_cast<std::size_t>(i)] * marker[static_cast<std::size_t>(i)];
            if (planted.count(rec.id)) {
                // replace the marker component with a node-varying signed
                // coefficient, |s| in strength * [0.4, 1.6]: signs keep the
                // targets centered (no constant for the model to smear across
                // background nodes), the floor keeps planted nodes detectable
                double s = cfg.marker_strength * (0.4 + 1.2 * splitmix_unit(state));
                if (splitmix_below(state, 2)) s = -s;
                double norm2 = 0.0;
                for (int i = 0; i < cfg.dim; ++i) {
                    x[static_cast<std::size_t>(i)] += (s - along) * marker[static_cast<std::size_t>(i)];
                    norm2 += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
                }
                double norm = std::sqrt(norm2);
                for (double& xv : x) xv /= norm;
            } else {
                // background nodes carry no marker component at all, so the
                // target provably depends on the planted embeddings alone
                double norm2 = 0.0;
                for (int i = 0; i < cfg.dim; ++i) {
                    x[static_cast<std::size_t>(i)] -= along * marker[static_cast<std::size_t>(i)];
                    norm2 += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
                }
                double norm = std::sqrt(std::max(norm2, 1e-12));
                for (double& xv : x) xv /= norm;
            }
            store.set(rec.id, to_f32(x));
        }
        double target = 0.0;
        for (NodeId id : planted) {
            std::span<const float> x = store.vec(id);
            for (int i = 0; i < cfg.dim; ++i)
                target += marker[static_cast<std::size_t>(i)] * static_cast<double>(x[static_cast<std::size_t>(i)]);
        }
        dataset.emplace_back(std::move(graph), std::move(store), std::vector<double>{target},
                             std::vector<NodeId>(planted.begin(), planted.end()));
    }
    return dataset;
}

// --- checkpoints and exports ----------------------------------------------------

inline nlohmann::ordered_json checkpoint_json(const MGnanModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "mgnan-checkpoint";
    j["version"] = 1;
    j["dim"] = model.grouping().dim;
    j["groups"] = model.grouping().groups;
    j["hidden"] = model.hidden();
    j["out_channels"] = model.out_channels();
    j["link"] = link_name(model.link());
    j["knots"] = model.knots();
    j["seed"] = model.seed();
    j["params"] = model.params();
    return j;
}

inline MGnanModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "mgnan-checkpoint" || j.at("version").get<int>() != 1)
            throw DataError("unsupported checkpoint format/version");
        FeatureGrouping fg;
        fg.dim = j.at("dim").get<int>();
        fg.groups = j.at("groups").get<std::vector<std::vector<int>>>();
        return MGnanModel::from_structure(
            std::move(fg), j.at("hidden").get<std::vector<int>>(), j.at("out_channels").get<int>(),
            link_from_name(j.at("link").get<std::string>()), j.at("knots").get<int>(),
            j.at("seed").get<std::uint64_t>(), j.at("params").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const MGnanModel& model, const std::filesystem::path& path) {
    atomic_write_file(path, checkpoint_json(model).dump(2) + "\n");
}

inline MGnanModel load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw DataError("bad checkpoint JSON: " + path.string());
    return model_from_json(j);
}

// Attribution export: terms sorted by descending |channel 0|, ties by
// ascending (node, group).
inline nlohmann::ordered_json attribution_json(const std::string& qid, const Attribution& att) {
    std::vector<const AttributionTerm*> terms;
    terms.reserve(att.per_node_group.size());
    for (const auto& t : att.per_node_group) terms.push_back(&t);
    std::sort(terms.begin(), terms.end(), [](const AttributionTerm* a, const AttributionTerm* b) {
        double ma = std::abs(a->value[0]), mb = std::abs(b->value[0]);
        if (ma != mb) return ma > mb;
        if (a->node != b->node) return a->node < b->node;
        return a->group < b->group;
    });
    nlohmann::ordered_json j;
    j["qid"] = qid;
    j["pre_link_total"] = att.pre_link_total;
    j["output"] = att.output;
    j["terms"] = nlohmann::ordered_json::array();
    for (const AttributionTerm* t : terms)
        j["terms"].push_back({{"node", t->node}, {"group", t->group}, {"value", t->value}});
    return j;
}

inline Attribution attribution_from_json(const nlohmann::json& j) {
    try {
        Attribution att;
        att.pre_link_total = j.at("pre_link_total").get<std::vector<double>>();
        att.output = j.at("output").get<std::vector<double>>();
        for (const auto& t : j.at("terms")) {
            AttributionTerm term;
            term.node = t.at("node").get<NodeId>();
            term.group = t.at("group").get<int>();
            term.value = t.at("value").get<std::vector<double>>();
            att.per_node_group.push_back(std::move(term));
        }
        std::sort(att.per_node_group.begin(), att.per_node_group.end(),
                  [](const AttributionTerm& a, const AttributionTerm& b) {
                      if (a.node != b.node) return a.node < b.node;
                      return a.group < b.group;
                  });
        return att;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad attribution JSON: ") + e.what());
    }
}

}  // namespace graphaudit

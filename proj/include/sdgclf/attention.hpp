#pragma once
// Differentiable kernels shared by the semantics, country and decision paths:
// token-to-goal scaled dot-product attention, Gumbel-Softmax token
// importance, cross-attention pooling and the small MLP heads.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sdgclf/autograd.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/encoder.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/rng.hpp"

namespace sdgclf {

inline constexpr double kMaskedLogit = -1e9;

enum class HeadOwner { Semantics, Country, Decision };

inline const char* to_string(HeadOwner o) {
    switch (o) {
    case HeadOwner::Semantics: return "semantics";
    case HeadOwner::Country: return "country";
    case HeadOwner::Decision: return "decision";
    }
    return "?";
}

namespace detail {
inline ad::Var normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, stddev);
    return ad::Var::parameter(std::move(m));
}
} // namespace detail

// One query/key pair. Q_i = W_Q e_i and K = W_K k, so in row form
// Q = E W_Q^T.
struct AttentionHead {
    ad::Var w_q; // d x d
    ad::Var w_k; // d x d
    HeadOwner owner = HeadOwner::Semantics;

    static AttentionHead random(HeadOwner owner, int d, Rng& rng) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(d));
        return {detail::normal_matrix(rng, d, d, sd), detail::normal_matrix(rng, d, d, sd), owner};
    }
    static AttentionHead identity(HeadOwner owner, int d) {
        return {ad::Var::parameter(ad::Matrix::Identity(d, d)), ad::Var::parameter(ad::Matrix::Identity(d, d)), owner};
    }

    Eigen::Index width() const { return w_q.cols(); }

    void collect(ad::ParameterList& out, const std::string& prefix) const {
        out.push_back({prefix + ".w_q", w_q});
        out.push_back({prefix + ".w_k", w_k});
    }
};

// Fully connected layer, y = x W^T + b.
struct Linear {
    ad::Var weight; // out x in
    ad::Var bias;   // 1 x out

    ad::Var forward(const ad::Var& x) const { return ad::add_row(ad::matmul_nt(x, weight), bias); }
};

// Linear layers with ReLU between them (none after the last).
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Linear> layers) : layers_(std::move(layers)) {}

    // in -> hidden... -> out, weights N(0, 1/fan_in), zero biases.
    static Mlp random(int in, const std::vector<int>& hidden, int out, Rng& rng) {
        std::vector<Linear> layers;
        int prev = in;
        auto push = [&](int width) {
            layers.push_back({detail::normal_matrix(rng, width, prev, 1.0 / std::sqrt(static_cast<double>(prev))),
                              ad::Var::parameter(ad::Matrix::Zero(1, width))});
            prev = width;
        };
        for (int h : hidden) push(h);
        push(out);
        return Mlp(std::move(layers));
    }
    static Mlp identity(int d) {
        return Mlp({{ad::Var::parameter(ad::Matrix::Identity(d, d)), ad::Var::parameter(ad::Matrix::Zero(1, d))}});
    }
    static Mlp zeros(int in, int out) {
        return Mlp({{ad::Var::parameter(ad::Matrix::Zero(out, in)), ad::Var::parameter(ad::Matrix::Zero(1, out))}});
    }

    Eigen::Index in_width() const { return layers_.front().weight.cols(); }
    Eigen::Index out_width() const { return layers_.back().weight.rows(); }
    const std::vector<Linear>& layers() const { return layers_; }

    ad::Var forward(const ad::Var& x) const {
        require(!layers_.empty(), ErrorKind::Shape, "empty MLP");
        require(x.cols() == in_width(), ErrorKind::Shape,
                "MLP expects width " + std::to_string(in_width()) + ", got " + std::to_string(x.cols()));
        ad::Var h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i].forward(h);
            if (i + 1 < layers_.size()) h = ad::relu(h);
        }
        return h;
    }

    void collect(ad::ParameterList& out, const std::string& prefix) const {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", layers_[i].weight});
            out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", layers_[i].bias});
        }
    }

private:
    std::vector<Linear> layers_;
};

enum class ProjectionOwner { SG, SC, SL };

// d_h -> d_h projection (S_G, S_C, S_L).
struct ProjectionHead {
    Mlp mlp;
    ProjectionOwner owner = ProjectionOwner::SG;

    static ProjectionHead random(ProjectionOwner owner, int d, Rng& rng, int hidden_layers = 1) {
        return {Mlp::random(d, std::vector<int>(static_cast<std::size_t>(hidden_layers), d), d, rng), owner};
    }
    static ProjectionHead identity(ProjectionOwner owner, int d) { return {Mlp::identity(d), owner}; }
};

inline PooledRepresentation project(const PooledRepresentation& v, const ProjectionHead& head) {
    require(head.mlp.in_width() == v.width() && head.mlp.out_width() == v.width(), ErrorKind::Shape,
            "projection width mismatch");
    return {head.mlp.forward(v.vector), RepresentationSource::Derived};
}

// ---- goal attention ---------------------------------------------------------------

// n x 17 matrix A_ij = (W_Q e_i) . (W_K h_gj) / sqrt(d_h). Masked token rows
// carry kMaskedLogit.
inline ad::Var goal_token_attention(const TokenEmbeddingSet& e, std::span<const PooledRepresentation> goals,
                                    const AttentionHead& head) {
    require(head.owner == HeadOwner::Semantics, ErrorKind::Parameter, "goal attention needs the semantics head");
    require(goals.size() == static_cast<std::size_t>(kNumGoals), ErrorKind::Shape, "need 17 goal representations");
    const Eigen::Index d = e.embeddings.cols();
    require(head.width() == d && head.w_q.rows() == d && head.w_k.rows() == d, ErrorKind::Shape,
            "attention head width differs from token width");
    std::vector<ad::Var> rows;
    rows.reserve(goals.size());
    for (const auto& g : goals) {
        require(g.width() == d, ErrorKind::Shape, "goal representation width differs from token width");
        rows.push_back(g.vector);
    }
    ad::Var q = ad::matmul_nt(e.embeddings, head.w_q);
    ad::Var k = ad::matmul_nt(ad::stack_rows(rows), head.w_k);
    ad::Var a = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    if (e.valid_count() == static_cast<int>(e.mask.size())) return a;
    ad::Matrix bias = ad::Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < e.mask.size(); ++i)
        if (!e.mask[i]) bias.row(static_cast<Eigen::Index>(i)).setConstant(kMaskedLogit);
    return ad::add_const(a, bias);
}

struct GumbelImportance {
    ad::Var per_goal;   // n x 17, P_ij, each row on the simplex
    ad::Var importance; // n x 1,  P_i = sum over labelled goals of P_ij
};

// Gumbel noise is drawn i.i.d. per (token, goal) entry in row-major order:
// for token i, goals 1..17.
inline ad::Matrix draw_gumbel_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    ad::Matrix g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) g(i, j) = rng.gumbel();
    return g;
}

// Soft Gumbel-Softmax over goals per token, summed over the labelled goals.
inline GumbelImportance gumbel_importance(const ad::Var& a, const GoalSet& y, double temperature, Rng& rng) {
    require(temperature > 0 && !std::isnan(temperature), ErrorKind::Parameter, "Gumbel temperature must be > 0");
    require(!y.empty(), ErrorKind::Label, "importance needs at least one active label");
    require(a.cols() == kNumGoals, ErrorKind::Shape, "attention matrix must have 17 columns");
    ad::Matrix noise = draw_gumbel_noise(a.rows(), a.cols(), rng);
    ad::Var p = ad::softmax_rows(ad::scale(ad::add_const(a, noise), 1.0 / temperature));
    const auto hot = y.multi_hot();
    ad::Matrix sel(kNumGoals, 1);
    for (int j = 0; j < kNumGoals; ++j) sel(j, 0) = hot[static_cast<std::size_t>(j)];
    return {p, ad::matmul(p, ad::Var::constant(sel))};
}

inline GumbelImportance gumbel_importance(const ad::Var& a, const GoalSet& y, double temperature, std::uint64_t seed) {
    Rng rng(seed);
    return gumbel_importance(a, y, temperature, rng);
}

// ---- cross-attention pooling ---------------------------------------------------------

// Attention of every token against one key vector, softmax over the valid
// tokens, then AvgPool({A_i e_i}) = (1/n_valid) sum_i A_i e_i. With
// weighted_sum the 1/n_valid factor is dropped (conventional attention pool).
inline PooledRepresentation cross_attention_pool(const TokenEmbeddingSet& e, const PooledRepresentation& key,
                                                 const AttentionHead& head, bool weighted_sum = false,
                                                 ad::Var* weights_out = nullptr) {
    require(head.owner == HeadOwner::Country || head.owner == HeadOwner::Decision, ErrorKind::Parameter,
            "cross-attention needs a country or decision head");
    const Eigen::Index d = e.embeddings.cols();
    require(key.width() == d && head.width() == d, ErrorKind::Shape, "cross-attention width mismatch");
    const int valid = e.valid_count();
    require(valid > 0, ErrorKind::EmptyInput, "empty pool: every token is masked");
    ad::Var q = ad::matmul_nt(e.embeddings, head.w_q);             // n x d
    ad::Var k = ad::matmul_nt(key.vector, head.w_k);               // 1 x d
    ad::Var logits = ad::scale(ad::matmul_nt(k, q), 1.0 / std::sqrt(static_cast<double>(d))); // 1 x n
    if (valid != static_cast<int>(e.mask.size())) {
        ad::Matrix bias = ad::Matrix::Zero(1, logits.cols());
        for (std::size_t i = 0; i < e.mask.size(); ++i)
            if (!e.mask[i]) bias(0, static_cast<Eigen::Index>(i)) = kMaskedLogit;
        logits = ad::add_const(logits, bias);
    }
    ad::Var weights = ad::transpose(ad::softmax_rows(logits)); // n x 1
    if (weights_out) *weights_out = weights;
    ad::Var pooled = ad::mean_rows_masked(ad::scale_rows(e.embeddings, weights), e.mask);
    if (weighted_sum) pooled = ad::scale(pooled, static_cast<double>(valid));
    return {pooled, RepresentationSource::Derived};
}

} // namespace sdgclf

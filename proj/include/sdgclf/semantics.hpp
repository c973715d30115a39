#pragma once
// Goal-conditioned positive samples and the in-batch contrastive loss.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sdgclf/attention.hpp"
#include "sdgclf/autograd.hpp"
#include "sdgclf/encoder.hpp"
#include "sdgclf/error.hpp"

namespace sdgclf {

struct PositiveSample {
    std::vector<int> token_ids; // padding id at dropped positions
    std::vector<bool> kept_mask;
    std::string source_id;
    double tau = 0.0;

    int kept_count() const { return static_cast<int>(std::count(kept_mask.begin(), kept_mask.end(), true)); }
};

// Keeps token i iff P_i > tau; every other position becomes the padding id.
// Importance values within 1e-9 outside [0, 1] are clamped (summation
// rounding); anything further out is a shape/precondition error.
inline PositiveSample build_positive_sample(std::span<const int> token_ids, std::span<const double> importance,
                                            double tau, std::string source_id = {}) {
    require(token_ids.size() == importance.size(), ErrorKind::Shape, "importance length differs from token count");
    PositiveSample s;
    s.source_id = std::move(source_id);
    s.tau = tau;
    s.token_ids.resize(token_ids.size());
    s.kept_mask.resize(token_ids.size());
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        double p = importance[i];
        require(std::isfinite(p) && p >= -1e-9 && p <= 1.0 + 1e-9, ErrorKind::Shape,
                "importance " + std::to_string(p) + " outside [0,1]");
        p = std::clamp(p, 0.0, 1.0);
        s.kept_mask[i] = p > tau;
        s.token_ids[i] = s.kept_mask[i] ? token_ids[i] : Vocabulary::kPad;
    }
    return s;
}

inline PositiveSample build_positive_sample(std::span<const int> token_ids, const ad::Var& importance, double tau,
                                            std::string source_id = {}) {
    require(importance.cols() == 1, ErrorKind::Shape, "importance must be a column");
    std::vector<double> p(importance.value().col(0).data(), importance.value().col(0).data() + importance.rows());
    return build_positive_sample(token_ids, p, tau, std::move(source_id));
}

// Mean over anchors of
//   -log( exp(s(x, x~)) / (exp(s(x, x~)) + sum_{k != x} exp(s(x, k))) )
// with s the cosine similarity of S_G projections divided by temperature.
// The negatives are the other anchors' original representations.
inline ad::Var contrastive_loss(std::span<const PooledRepresentation> batch, std::span<const PooledRepresentation> positives,
                                const ProjectionHead& head, double temperature = 1.0) {
    require(batch.size() == positives.size(), ErrorKind::Shape, "anchor and positive lists differ in length");
    require(batch.size() >= 2, ErrorKind::Batch, "contrastive loss needs at least 2 anchors (no negatives)");
    require(temperature > 0, ErrorKind::Parameter, "contrastive temperature must be > 0");
    std::vector<ad::Var> a, p;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        a.push_back(batch[i].vector);
        p.push_back(positives[i].vector);
    }
    ad::Var za = ad::normalize_rows(head.mlp.forward(ad::stack_rows(a)));
    ad::Var zp = ad::normalize_rows(head.mlp.forward(ad::stack_rows(p)));
    const auto b = static_cast<Eigen::Index>(batch.size());
    ad::Var pos = ad::rowwise_dot(za, zp);                                               // b x 1
    ad::Var neg = ad::add_const(ad::matmul_nt(za, za), ad::Matrix::Identity(b, b) * kMaskedLogit); // b x b
    ad::Var logits = ad::scale(ad::concat_cols(pos, neg), 1.0 / temperature);
    ad::Var per_anchor = ad::sub(ad::logsumexp_rows(logits), ad::select_col(logits, 0));
    return ad::mean(per_anchor);
}

} // namespace sdgclf

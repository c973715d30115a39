#pragma once
// LLM-decision guidance: decision representation, decision/usefulness
// losses and the calibrated fused representation.

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "sdgclf/attention.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/encoder.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/losses.hpp"

namespace sdgclf {

struct DecisionVector {
    GoalSet goals; // may be empty (abstention / unparseable answer)
    std::string raw_response;
    std::string provider_id;
    std::string prompt_hash;
    std::vector<std::string> warnings;

    bool empty() const { return goals.empty(); }
};

struct UsefulnessLabel {
    int value = 0; // 1 iff y and the decision overlap
};

inline UsefulnessLabel usefulness_label(const GoalSet& y, const DecisionVector& decision) {
    return {y.intersects(decision.goals) ? 1 : 0};
}

// S_L(prod_{j in decision} h_gj), element-wise product. With layer_norm each
// goal vector is standardised first so long products do not underflow.
// Returns nullopt for an empty decision.
inline std::optional<PooledRepresentation> decision_representation(const DecisionVector& decision,
                                                                   std::span<const PooledRepresentation> goals,
                                                                   const ProjectionHead& head, bool layer_norm = true) {
    require(goals.size() == static_cast<std::size_t>(kNumGoals), ErrorKind::Shape, "need 17 goal representations");
    if (decision.empty()) return std::nullopt;
    ad::Var prod;
    for (int g : decision.goals.goals()) {
        ad::Var v = goals[static_cast<std::size_t>(g - 1)].vector;
        if (layer_norm) v = ad::layer_norm_rows(v);
        prod = prod.defined() ? ad::cmul(prod, v) : v;
    }
    return project({prod, RepresentationSource::Derived}, head);
}

inline PooledRepresentation decision_guided_representation(const TokenEmbeddingSet& e,
                                                           const PooledRepresentation& decision_rep,
                                                           const AttentionHead& head, bool weighted_sum = false) {
    require(head.owner == HeadOwner::Decision, ErrorKind::Parameter, "decision guidance needs the decision head");
    return cross_attention_pool(e, decision_rep, head, weighted_sum);
}

struct DecisionLosses {
    ad::Var decision;   // L_D
    ad::Var usefulness; // L_U
};

// L_D = BCE(y, f_l(h-bar)), L_U = BCE(y_u, f_u(h-bar)).
inline DecisionLosses decision_losses(const PooledRepresentation& guided, const GoalSet& y, UsefulnessLabel y_u,
                                      const Mlp& f_l, const Mlp& f_u) {
    require(f_l.out_width() == kNumGoals, ErrorKind::Shape, "f_l must produce 17 logits");
    require(f_u.out_width() == 1, ErrorKind::Shape, "f_u must produce one logit");
    return {multilabel_bce(f_l.forward(guided.vector), y), binary_bce(f_u.forward(guided.vector), y_u.value)};
}

struct CalibratedRepresentation {
    ad::Var fused;     // h^cls = h^ + alpha * h-bar
    ad::Var alpha;     // 1 x 1, sigmoid(f_u(h-bar)); 0 for empty decisions
    ad::Var guided;    // h^
    ad::Var decision;  // h-bar (undefined for empty decisions)

    double alpha_value() const { return alpha.scalar(); }
};

// fused = h^ + alpha * h-bar with alpha = sigmoid(f_u(h-bar)). Passing no
// decision representation (empty decision or ablation) forces alpha = 0.
inline CalibratedRepresentation calibrate(const PooledRepresentation& guided,
                                          const std::optional<PooledRepresentation>& decision, const Mlp& f_u) {
    if (!decision)
        return {guided.vector, ad::Var::constant(ad::Matrix::Zero(1, 1)), guided.vector, {}};
    require(guided.width() == decision->width(), ErrorKind::Shape, "calibration width mismatch");
    require(f_u.out_width() == 1, ErrorKind::Shape, "f_u must produce one logit");
    ad::Var alpha = ad::sigmoid(f_u.forward(decision->vector));
    ad::Var fused = ad::add(guided.vector, ad::mul_scalar(decision->vector, alpha));
    return {fused, alpha, guided.vector, decision->vector};
}

} // namespace sdgclf

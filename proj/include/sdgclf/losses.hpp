#pragma once

#include "sdgclf/autograd.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/error.hpp"

namespace sdgclf {

inline ad::Matrix goal_row(const GoalSet& y) {
    ad::Matrix t(1, kNumGoals);
    const auto hot = y.multi_hot();
    for (int j = 0; j < kNumGoals; ++j) t(0, j) = hot[static_cast<std::size_t>(j)];
    return t;
}

// Mean BCE over the 17 labels between sigmoid(logits) and y.
inline ad::Var multilabel_bce(const ad::Var& logits, const GoalSet& y) {
    require(!y.empty(), ErrorKind::Label, "label set is empty");
    require(logits.rows() == 1 && logits.cols() == kNumGoals, ErrorKind::Shape, "expected 1 x 17 logits");
    return ad::bce_with_logits(logits, goal_row(y));
}

// BCE for one binary target against a single logit.
inline ad::Var binary_bce(const ad::Var& logit, int target) {
    require(target == 0 || target == 1, ErrorKind::Label, "binary target must be 0 or 1");
    require(logit.rows() == 1 && logit.cols() == 1, ErrorKind::Shape, "expected a single logit");
    return ad::bce_with_logits(logit, ad::Matrix::Constant(1, 1, target));
}

} // namespace sdgclf

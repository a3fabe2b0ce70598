#pragma once

#include <freetalk/metrics/motion.hpp>
#include <freetalk/nn/autograd.hpp>

namespace freetalk::nn {

/// Unified motion loss as a tape op; `prediction` is T x 3K, `truth` constant.
Var motion_loss(const Var& prediction, const Mat& truth, metrics::LossWeights weights);

} // namespace freetalk::nn

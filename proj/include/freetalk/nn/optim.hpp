#pragma once

#include <freetalk/nn/autograd.hpp>

namespace freetalk::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

/// Decoupled weight decay Adam. Parameters flagged `decay = false` (biases,
/// norms) skip the decay term.
class AdamW {
public:
    explicit AdamW(AdamWConfig config) : config_(config) {}
    void step(ParamStore& store);
    long long steps() const { return step_; }

private:
    AdamWConfig config_;
    long long step_ = 0;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

double grad_norm(const ParamStore& store);

} // namespace freetalk::nn

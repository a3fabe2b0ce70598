#include <freetalk/nn/optim.hpp>

#include <cmath>

namespace freetalk::nn {

void AdamW::step(ParamStore& store)
{
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, double(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(step_));
    for (auto& [_, p] : store.all()) {
        if (p.decay && config_.weight_decay > 0) p.value *= 1.0 - config_.lr * config_.weight_decay;
        p.adam_m = config_.beta1 * p.adam_m + (1.0 - config_.beta1) * p.grad;
        p.adam_v = config_.beta2 * p.adam_v + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
        p.value.array() -=
            config_.lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + config_.eps);
    }
}

double grad_norm(const ParamStore& store)
{
    double sq = 0.0;
    for (const auto& [_, p] : store.all()) sq += p.grad.squaredNorm();
    return std::sqrt(sq);
}

double clip_grad_norm(ParamStore& store, double max_norm)
{
    const double norm = grad_norm(store);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / (norm + 1e-6);
        for (auto& [_, p] : store.all()) p.grad *= s;
    }
    return norm;
}

} // namespace freetalk::nn

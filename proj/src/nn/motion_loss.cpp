#include <freetalk/nn/motion_loss.hpp>

namespace freetalk::nn {

Var motion_loss(const Var& prediction, const Mat& truth, metrics::LossWeights weights)
{
    metrics::TrajectoryPair pair{truth, prediction.value()};
    Mat value(1, 1);
    value(0, 0) = metrics::motion_loss(pair, weights);
    Node* p = prediction.node();
    return prediction.tape()->record(std::move(value), {prediction}, [p, pair = std::move(pair), weights](Node& n) {
        if (p->requires_grad) p->grad_buffer() += n.grad(0, 0) * metrics::motion_loss_gradient(pair, weights);
    });
}

} // namespace freetalk::nn

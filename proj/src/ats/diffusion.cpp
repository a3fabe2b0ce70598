#include <freetalk/ats/diffusion.hpp>
#include <freetalk/error.hpp>
#include <freetalk/nn/motion_loss.hpp>

#include <cmath>

namespace freetalk::ats {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

std::vector<NoiseDraw> draw_noise(const std::vector<const AtsExample*>& batch, const DiffusionSchedule& schedule,
                                  std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> step_dist(1, schedule.steps());
    std::vector<NoiseDraw> draws;
    draws.reserve(batch.size());
    for (const auto* item : batch) {
        NoiseDraw d;
        d.step = step_dist(rng);
        d.noise = gaussian(item->x0.rows(), item->x0.cols(), rng);
        draws.push_back(std::move(d));
    }
    return draws;
}

nn::Var ats_loss(nn::Tape& tape, const Denoiser& model, const DiffusionSchedule& schedule,
                 const std::vector<const AtsExample*>& batch, const std::vector<NoiseDraw>& draws,
                 metrics::LossWeights weights, std::vector<metrics::MotionLossTerms>* per_item)
{
    require(!batch.empty(), ErrorKind::Validation, "empty training batch");
    require(draws.size() == batch.size(), ErrorKind::Shape, "one noise draw per batch item required");
    if (per_item) per_item->clear();
    nn::Var total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& item = *batch[b];
        const auto& draw = draws[b];
        require(draw.step >= 1 && draw.step <= schedule.steps(), ErrorKind::Validation,
                "training step outside [1, T_d]");
        const Eigen::MatrixXd noisy = forward_diffuse(item.x0, draw.step, draw.noise, schedule);
        const nn::Var pred = model.forward(tape, noisy, draw.step, item.audio, item.affect);
        const nn::Var loss = nn::motion_loss(pred, item.x0, weights);
        if (per_item) per_item->push_back(metrics::motion_loss_terms({item.x0, pred.value()}, weights));
        total = b == 0 ? loss : nn::add(total, loss);
    }
    return nn::scale(total, 1.0 / double(batch.size()));
}

nn::Var ats_loss(nn::Tape& tape, const Denoiser& model, const DiffusionSchedule& schedule,
                 const std::vector<const AtsExample*>& batch, std::mt19937_64& rng, metrics::LossWeights weights)
{
    return ats_loss(tape, model, schedule, batch, draw_noise(batch, schedule, rng), weights);
}

std::vector<int> ddim_timesteps(int ddim_steps, int diffusion_steps)
{
    require(ddim_steps >= 1 && ddim_steps <= diffusion_steps, ErrorKind::Config,
            "ddim_steps must lie in [1, T_d]");
    std::vector<int> taus;
    for (int k = ddim_steps; k >= 0; --k)
        taus.push_back(int((long long)k * diffusion_steps / ddim_steps));
    return taus;
}

Eigen::MatrixXd ddim_sample(const DenoiseFn& denoise, Eigen::Index rows, Eigen::Index cols,
                            const DiffusionSchedule& schedule, const SamplerConfig& sampler)
{
    const std::vector<int> taus = ddim_timesteps(sampler.ddim_steps, schedule.steps());
    std::mt19937_64 rng(sampler.seed);
    Eigen::MatrixXd x = gaussian(rows, cols, rng);
    Eigen::MatrixXd x0_hat;
    for (std::size_t k = 0; k + 1 < taus.size(); ++k) {
        const int step = taus[k];
        const int next = taus[k + 1];
        x0_hat = denoise(x, step);
        require(x0_hat.rows() == rows && x0_hat.cols() == cols, ErrorKind::Shape, "denoiser changed the shape");
        require(x0_hat.allFinite(), ErrorKind::Numerical, "non-finite denoiser output at step " + std::to_string(step));
        const double ab = schedule.alpha_bar(step);
        const double ab_next = schedule.alpha_bar(next);
        if (ab_next == 1.0) {
            x = x0_hat;
            continue;
        }
        const Eigen::MatrixXd eps = (x - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
        x = std::sqrt(ab_next) * x0_hat + std::sqrt(1.0 - ab_next) * eps;
    }
    return x0_hat;
}

Eigen::MatrixXd ddim_sample(const Denoiser& model, const Eigen::MatrixXd& audio, const AffectLabel& affect,
                            const DiffusionSchedule& schedule, const SamplerConfig& sampler)
{
    validate(affect, model.vocabulary());
    const auto fn = [&](const Eigen::MatrixXd& x, int step) {
        nn::Tape tape(false);
        return Eigen::MatrixXd(model.forward(tape, x, step, audio, affect, sampler.band_radius).value());
    };
    return ddim_sample(fn, audio.rows(), model.config().motion_dim(), schedule, sampler);
}

} // namespace freetalk::ats

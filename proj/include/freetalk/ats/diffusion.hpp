#pragma once

#include <freetalk/ats/denoiser.hpp>
#include <freetalk/ats/schedule.hpp>
#include <freetalk/metrics/motion.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace freetalk::ats {

/// One training item: normalized displacements, frame-aligned audio, label.
struct AtsExample {
    Eigen::MatrixXd x0;     // T x D
    Eigen::MatrixXd audio;  // T x C
    AffectLabel affect;
};

/// The random quantities of one item's loss term.
struct NoiseDraw {
    int step = 1;
    Eigen::MatrixXd noise;
};

inline constexpr metrics::LossWeights kAtsLossWeights{0.3, 0.1};

/// Draws step ~ U{1..T_d} and eps ~ N(0, I) for each item, in batch order.
std::vector<NoiseDraw> draw_noise(const std::vector<const AtsExample*>& batch, const DiffusionSchedule& schedule,
                                  std::mt19937_64& rng);

/// Batch-mean motion loss of the x0 prediction for given draws. When
/// `per_item` is set it receives each item's loss terms.
nn::Var ats_loss(nn::Tape& tape, const Denoiser& model, const DiffusionSchedule& schedule,
                 const std::vector<const AtsExample*>& batch, const std::vector<NoiseDraw>& draws,
                 metrics::LossWeights weights = kAtsLossWeights,
                 std::vector<metrics::MotionLossTerms>* per_item = nullptr);

/// Same with fresh draws from `rng`.
nn::Var ats_loss(nn::Tape& tape, const Denoiser& model, const DiffusionSchedule& schedule,
                 const std::vector<const AtsExample*>& batch, std::mt19937_64& rng,
                 metrics::LossWeights weights = kAtsLossWeights);

struct SamplerConfig {
    int ddim_steps = 100;
    std::optional<int> band_radius;  // overrides the model's radius when set
    std::uint64_t seed = 0;
};

/// Decreasing timesteps tau_S > ... > tau_0 = 0 with tau_k = floor(k T_d / S).
std::vector<int> ddim_timesteps(int ddim_steps, int diffusion_steps);

/// Predicts x0 from (x_l, l).
using DenoiseFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, int step)>;

/// Deterministic (eta = 0) reverse process in x0 form starting from a
/// Gaussian draw seeded by `sampler.seed`. Returns the final x0 prediction.
Eigen::MatrixXd ddim_sample(const DenoiseFn& denoise, Eigen::Index rows, Eigen::Index cols,
                            const DiffusionSchedule& schedule, const SamplerConfig& sampler);

Eigen::MatrixXd ddim_sample(const Denoiser& model, const Eigen::MatrixXd& audio, const AffectLabel& affect,
                            const DiffusionSchedule& schedule, const SamplerConfig& sampler);

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

} // namespace freetalk::ats

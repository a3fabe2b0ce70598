#pragma once

#include <Eigen/Core>

namespace freetalk::ats {

/// Linear beta schedule over steps 1..T_d. Index 0 is the clean boundary
/// with alpha_bar = 1.
struct DiffusionSchedule {
    Eigen::VectorXd betas;       // [1..T_d] stored at [0..T_d-1]
    Eigen::VectorXd alphas;
    Eigen::VectorXd alpha_bars;

    int steps() const { return int(betas.size()); }
    /// alpha_bar at step l in [0, T_d]; alpha_bar(0) = 1.
    double alpha_bar(int step) const;
    double beta_start() const { return betas(0); }
    double beta_end() const { return betas(betas.size() - 1); }
};

/// Throws Config unless T_d >= 1 and 0 < beta_start < beta_end < 1
/// (T_d = 1 uses beta_start alone).
DiffusionSchedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02);

/// sqrt(alpha_bar_l) x0 + sqrt(1 - alpha_bar_l) eps.
Eigen::MatrixXd forward_diffuse(const Eigen::MatrixXd& x0, int step, const Eigen::MatrixXd& noise,
                                const DiffusionSchedule& schedule);

/// Cross-attention bias: 0 where |j - i| <= radius, -1e9 elsewhere.
Eigen::MatrixXd band_mask(Eigen::Index rows, Eigen::Index cols, int radius);

constexpr double kMaskedLogit = -1e9;

} // namespace freetalk::ats

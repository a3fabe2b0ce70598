#include <freetalk/ats/schedule.hpp>
#include <freetalk/error.hpp>

#include <cmath>
#include <cstdlib>

namespace freetalk::ats {

double DiffusionSchedule::alpha_bar(int step) const
{
    require(step >= 0 && step <= steps(), ErrorKind::Validation,
            "diffusion step " + std::to_string(step) + " outside [0, " + std::to_string(steps()) + "]");
    return step == 0 ? 1.0 : alpha_bars(step - 1);
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end)
{
    require(steps >= 1, ErrorKind::Config, "diffusion needs at least one step");
    require(beta_start > 0.0 && beta_start < 1.0, ErrorKind::Config, "beta_start must lie in (0, 1)");
    if (steps > 1)
        require(beta_end > beta_start && beta_end < 1.0, ErrorKind::Config,
                "beta_end must lie in (beta_start, 1)");
    DiffusionSchedule s;
    s.betas.resize(steps);
    for (int l = 0; l < steps; ++l)
        s.betas(l) = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(l) / double(steps - 1);
    s.alphas = 1.0 - s.betas.array();
    s.alpha_bars.resize(steps);
    double prod = 1.0;
    for (int l = 0; l < steps; ++l) {
        prod *= s.alphas(l);
        s.alpha_bars(l) = prod;
    }
    return s;
}

Eigen::MatrixXd forward_diffuse(const Eigen::MatrixXd& x0, int step, const Eigen::MatrixXd& noise,
                                const DiffusionSchedule& schedule)
{
    require(x0.rows() == noise.rows() && x0.cols() == noise.cols(), ErrorKind::Shape,
            "forward_diffuse: noise shape differs from x0");
    const double ab = schedule.alpha_bar(step);
    if (ab == 1.0) return x0;
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Eigen::MatrixXd band_mask(Eigen::Index rows, Eigen::Index cols, int radius)
{
    require(radius >= 0, ErrorKind::Validation, "band radius must be nonnegative");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::abs(j - i) <= radius ? 0.0 : kMaskedLogit;
    return m;
}

} // namespace freetalk::ats

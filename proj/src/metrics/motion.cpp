#include <freetalk/error.hpp>
#include <freetalk/metrics/motion.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace freetalk::metrics {

namespace {

void check_mask(const std::vector<int>& mask, Eigen::Index points, const char* what)
{
    require(!mask.empty(), ErrorKind::Validation, std::string(what) + " mask is empty");
    for (int k : mask)
        require(k >= 0 && k < points, ErrorKind::Validation, std::string(what) + " mask index out of range");
}

double point_error(const TrajectoryPair& p, Eigen::Index t, Eigen::Index k)
{
    return (p.prediction.block(t, 3 * k, 1, 3) - p.truth.block(t, 3 * k, 1, 3)).norm();
}

double max_error_mean(const TrajectoryPair& pair, const std::vector<int>& mask)
{
    double total = 0.0;
    for (Eigen::Index t = 0; t < pair.frames(); ++t) {
        double worst = 0.0;
        for (int k : mask) worst = std::max(worst, point_error(pair, t, k));
        total += worst;
    }
    return total / double(pair.frames());
}

Eigen::MatrixXd stacked(const Trajectory& a, const std::vector<int>& mask)
{
    Eigen::MatrixXd out(a.rows(), 3 * Eigen::Index(mask.size()));
    for (std::size_t i = 0; i < mask.size(); ++i) out.middleCols(3 * Eigen::Index(i), 3) = a.middleCols(3 * mask[i], 3);
    return out;
}

} // namespace

void validate(const TrajectoryPair& pair)
{
    require(pair.truth.rows() >= 1, ErrorKind::Shape, "trajectory needs at least one frame");
    require(pair.truth.cols() % 3 == 0 && pair.truth.cols() > 0, ErrorKind::Shape,
            "trajectory width must be a positive multiple of 3");
    require(pair.truth.rows() == pair.prediction.rows() && pair.truth.cols() == pair.prediction.cols(),
            ErrorKind::Shape, "prediction and ground truth shapes differ");
}

MotionLossTerms motion_loss_terms(const TrajectoryPair& pair, LossWeights w)
{
    validate(pair);
    const Eigen::Index T = pair.frames();
    const double K = double(pair.points());
    const Eigen::MatrixXd e = pair.truth - pair.prediction;
    MotionLossTerms out;
    out.position = e.squaredNorm() / (double(T) * K);
    if (T >= 2) {
        const Eigen::MatrixXd v = e.bottomRows(T - 1) - e.topRows(T - 1);
        out.velocity = v.squaredNorm() / (double(T - 1) * K);
    }
    if (T >= 3) {
        const Eigen::MatrixXd a = e.bottomRows(T - 2) - 2.0 * e.middleRows(1, T - 2) + e.topRows(T - 2);
        out.acceleration = a.squaredNorm() / (double(T - 2) * K);
    }
    out.total = out.position + w.velocity * out.velocity + w.acceleration * out.acceleration;
    return out;
}

double motion_loss(const TrajectoryPair& pair, LossWeights w)
{
    return motion_loss_terms(pair, w).total;
}

Eigen::MatrixXd motion_loss_gradient(const TrajectoryPair& pair, LossWeights w)
{
    validate(pair);
    const Eigen::Index T = pair.frames();
    const double K = double(pair.points());
    const Eigen::MatrixXd d = pair.prediction - pair.truth;
    Eigen::MatrixXd g = d * (2.0 / (double(T) * K));
    if (T >= 2 && w.velocity != 0.0) {
        const double c = 2.0 * w.velocity / (double(T - 1) * K);
        const Eigen::MatrixXd v = d.bottomRows(T - 1) - d.topRows(T - 1);
        g.bottomRows(T - 1) += c * v;
        g.topRows(T - 1) -= c * v;
    }
    if (T >= 3 && w.acceleration != 0.0) {
        const double c = 2.0 * w.acceleration / (double(T - 2) * K);
        const Eigen::MatrixXd a = d.bottomRows(T - 2) - 2.0 * d.middleRows(1, T - 2) + d.topRows(T - 2);
        g.bottomRows(T - 2) += c * a;
        g.middleRows(1, T - 2) -= 2.0 * c * a;
        g.topRows(T - 2) += c * a;
    }
    return g;
}

double lve(const TrajectoryPair& pair, const std::vector<int>& mouth)
{
    validate(pair);
    check_mask(mouth, pair.points(), "mouth");
    return max_error_mean(pair, mouth);
}

double mve(const TrajectoryPair& pair)
{
    validate(pair);
    std::vector<int> all(std::size_t(pair.points()));
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = int(k);
    return max_error_mean(pair, all);
}

double fdd(const TrajectoryPair& pair, const std::vector<int>& upper)
{
    validate(pair);
    check_mask(upper, pair.points(), "upper-face");
    const Eigen::Index T = pair.frames();
    auto temporal_std = [T](const Trajectory& y, int k) {
        Eigen::VectorXd mag(T);
        for (Eigen::Index t = 0; t < T; ++t) mag(t) = y.block(t, 3 * k, 1, 3).norm();
        const double mu = mag.mean();
        return std::sqrt((mag.array() - mu).square().sum() / double(T));
    };
    double total = 0.0;
    for (int k : upper) total += std::abs(temporal_std(pair.prediction, k) - temporal_std(pair.truth, k));
    return total / double(upper.size());
}

Eigen::MatrixXd frame_distances(const Trajectory& a, const Trajectory& b, const std::vector<int>& mask)
{
    const Eigen::MatrixXd sa = stacked(a, mask), sb = stacked(b, mask);
    Eigen::MatrixXd d(sa.rows(), sb.rows());
    for (Eigen::Index i = 0; i < sa.rows(); ++i)
        for (Eigen::Index j = 0; j < sb.rows(); ++j) d(i, j) = (sa.row(i) - sb.row(j)).norm();
    return d;
}

double dtw_from_distances(const Eigen::MatrixXd& dist)
{
    const Eigen::Index n = dist.rows(), m = dist.cols();
    require(n > 0 && m > 0, ErrorKind::Validation, "dtw of an empty sequence");
    // (cost, length) compared lexicographically
    Eigen::MatrixXd cost(n, m);
    Eigen::MatrixXi len(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == 0 && j == 0) {
                cost(i, j) = dist(i, j);
                len(i, j) = 1;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            int best_len = 0;
            auto consider = [&](Eigen::Index a, Eigen::Index b) {
                if (a < 0 || b < 0) return;
                if (cost(a, b) < best || (cost(a, b) == best && len(a, b) < best_len)) {
                    best = cost(a, b);
                    best_len = len(a, b);
                }
            };
            consider(i - 1, j - 1);
            consider(i - 1, j);
            consider(i, j - 1);
            cost(i, j) = best + dist(i, j);
            len(i, j) = best_len + 1;
        }
    return cost(n - 1, m - 1) / double(len(n - 1, m - 1));
}

double dtw(const TrajectoryPair& pair, const std::vector<int>& lips)
{
    validate(pair);
    check_mask(lips, pair.points(), "lip");
    return dtw_from_distances(frame_distances(pair.truth, pair.prediction, lips));
}

namespace {

Eigen::MatrixXd frechet_table(const Eigen::MatrixXd& dist)
{
    const Eigen::Index n = dist.rows(), m = dist.cols();
    require(n > 0 && m > 0, ErrorKind::Validation, "dfd of an empty sequence");
    Eigen::MatrixXd c(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == 0 && j == 0) c(i, j) = dist(0, 0);
            else if (i == 0) c(i, j) = std::max(c(i, j - 1), dist(i, j));
            else if (j == 0) c(i, j) = std::max(c(i - 1, j), dist(i, j));
            else c(i, j) = std::max(std::min({c(i - 1, j), c(i - 1, j - 1), c(i, j - 1)}), dist(i, j));
        }
    return c;
}

} // namespace

double dfd_from_distances(const Eigen::MatrixXd& dist)
{
    const Eigen::MatrixXd c = frechet_table(dist);
    return c(c.rows() - 1, c.cols() - 1);
}

std::vector<std::pair<int, int>> dfd_coupling(const Eigen::MatrixXd& dist)
{
    const Eigen::MatrixXd c = frechet_table(dist);
    std::vector<std::pair<int, int>> path;
    int i = int(c.rows()) - 1, j = int(c.cols()) - 1;
    path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) --j;
        else if (j == 0) --i;
        else {
            const double diag = c(i - 1, j - 1), up = c(i - 1, j), left = c(i, j - 1);
            if (diag <= up && diag <= left) { --i; --j; }
            else if (up <= left) --i;
            else --j;
        }
        path.emplace_back(i, j);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

double dfd(const TrajectoryPair& pair, const std::vector<int>& lips)
{
    validate(pair);
    check_mask(lips, pair.points(), "lip");
    return dfd_from_distances(frame_distances(pair.truth, pair.prediction, lips));
}

double delta_m(const TrajectoryPair& pair)
{
    validate(pair);
    const Eigen::Index T = pair.frames();
    require(T >= 2, ErrorKind::Validation, "delta_m needs at least two frames");
    const Eigen::MatrixXd e = (pair.prediction.bottomRows(T - 1) - pair.prediction.topRows(T - 1)) -
                              (pair.truth.bottomRows(T - 1) - pair.truth.topRows(T - 1));
    return e.squaredNorm() / (double(T - 1) * double(pair.points()));
}

double delta_cd(const TrajectoryPair& pair)
{
    validate(pair);
    const Eigen::Index T = pair.frames();
    require(T >= 2, ErrorKind::Validation, "delta_cd needs at least two frames");
    double total = 0.0;
    for (Eigen::Index t = 0; t + 1 < T; ++t)
        for (Eigen::Index k = 0; k < pair.points(); ++k) {
            const Eigen::RowVector3d a = pair.prediction.block(t + 1, 3 * k, 1, 3) - pair.prediction.block(t, 3 * k, 1, 3);
            const Eigen::RowVector3d b = pair.truth.block(t + 1, 3 * k, 1, 3) - pair.truth.block(t, 3 * k, 1, 3);
            const double na = a.norm(), nb = b.norm();
            const bool za = na < 1e-9, zb = nb < 1e-9;
            if (za && zb) continue;
            if (za || zb) total += 1.0;
            else total += 1.0 - std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
        }
    return total / (double(T - 1) * double(pair.points()));
}

MetricReport evaluate_metrics(const TrajectoryPair& pair, const RegionMasks& masks)
{
    MetricReport r;
    r.lve = lve(pair, masks.mouth);
    r.mve = mve(pair);
    r.fdd = fdd(pair, masks.upper_face);
    r.dtw = dtw(pair, masks.lips);
    r.dfd = dfd(pair, masks.lips);
    if (pair.frames() >= 2) {
        r.delta_m = delta_m(pair);
        r.delta_cd = delta_cd(pair);
    }
    return r;
}

std::vector<std::pair<std::string, double>> report_fields(const MetricReport& r)
{
    return {{"lve", r.lve}, {"mve", r.mve}, {"fdd", r.fdd}, {"dtw", r.dtw},
            {"dfd", r.dfd}, {"delta_m", r.delta_m}, {"delta_cd", r.delta_cd}};
}

} // namespace freetalk::metrics

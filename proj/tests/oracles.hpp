#pragma once

// Brute-force reference implementations used by unit and acceptance tests.

#include <freetalk/metrics/motion.hpp>
#include <freetalk/nn/autograd.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline Eigen::Vector3d point(const Mat& traj, Eigen::Index t, int k)
{
    return traj.row(t).segment<3>(3 * k).transpose();
}

/// Sum of squared frame norms over 3K coordinates, normalized per term.
inline double motion_loss(const Mat& y, const Mat& yh, double wv, double wa)
{
    const Eigen::Index T = y.rows();
    const double K = double(y.cols() / 3);
    const Mat e = yh - y;
    double pos = 0.0, vel = 0.0, acc = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) pos += e.row(t).squaredNorm();
    pos /= double(T) * K;
    if (T >= 2) {
        for (Eigen::Index t = 1; t < T; ++t) vel += (e.row(t) - e.row(t - 1)).squaredNorm();
        vel /= double(T - 1) * K;
    }
    if (T >= 3) {
        for (Eigen::Index t = 2; t < T; ++t) acc += (e.row(t) - 2.0 * e.row(t - 1) + e.row(t - 2)).squaredNorm();
        acc /= double(T - 2) * K;
    }
    return pos + wv * vel + wa * acc;
}

inline double max_error_mean(const Mat& y, const Mat& yh, const std::vector<int>& mask)
{
    double total = 0.0;
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        double worst = 0.0;
        for (int k : mask) worst = std::max(worst, (point(yh, t, k) - point(y, t, k)).norm());
        total += worst;
    }
    return total / double(y.rows());
}

inline double fdd(const Mat& y, const Mat& yh, const std::vector<int>& mask)
{
    const auto std_of = [](const Mat& traj, int k) {
        std::vector<double> mags;
        for (Eigen::Index t = 0; t < traj.rows(); ++t) mags.push_back(point(traj, t, k).norm());
        double mean = 0.0;
        for (double m : mags) mean += m / double(mags.size());
        double var = 0.0;
        for (double m : mags) var += (m - mean) * (m - mean) / double(mags.size());
        return std::sqrt(var);
    };
    double total = 0.0;
    for (int k : mask) total += std::abs(std_of(yh, k) - std_of(y, k));
    return total / double(mask.size());
}

inline double delta_m(const Mat& y, const Mat& yh)
{
    const int K = int(y.cols() / 3);
    double total = 0.0;
    for (Eigen::Index t = 0; t + 1 < y.rows(); ++t)
        for (int k = 0; k < K; ++k) {
            const Eigen::Vector3d dp = point(yh, t + 1, k) - point(yh, t, k);
            const Eigen::Vector3d dg = point(y, t + 1, k) - point(y, t, k);
            total += (dp - dg).squaredNorm();
        }
    return total / double((y.rows() - 1) * K);
}

inline double delta_cd(const Mat& y, const Mat& yh)
{
    const int K = int(y.cols() / 3);
    double total = 0.0;
    for (Eigen::Index t = 0; t + 1 < y.rows(); ++t)
        for (int k = 0; k < K; ++k) {
            const Eigen::Vector3d dp = point(yh, t + 1, k) - point(yh, t, k);
            const Eigen::Vector3d dg = point(y, t + 1, k) - point(y, t, k);
            const bool zp = dp.norm() < 1e-9, zg = dg.norm() < 1e-9;
            if (zp && zg) continue;
            if (zp || zg) {
                total += 1.0;
                continue;
            }
            total += 1.0 - dp.dot(dg) / (dp.norm() * dg.norm());
        }
    return total / double((y.rows() - 1) * K);
}

/// Every monotone path (steps (1,0), (0,1), (1,1)) from (0,0) to the corner.
inline void for_each_path(int rows, int cols, const std::function<void(const std::vector<std::pair<int, int>>&)>& fn)
{
    std::vector<std::pair<int, int>> path{{0, 0}};
    std::function<void()> walk = [&] {
        const auto [i, j] = path.back();
        if (i == rows - 1 && j == cols - 1) {
            fn(path);
            return;
        }
        const std::pair<int, int> steps[3] = {{i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
        for (const auto& s : steps) {
            if (s.first >= rows || s.second >= cols) continue;
            path.push_back(s);
            walk();
            path.pop_back();
        }
    };
    walk();
}

/// Cheapest total cost over all monotone paths (shorter path on ties), divided by its length.
inline double dtw(const Mat& dist)
{
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_len = 0;
    for_each_path(int(dist.rows()), int(dist.cols()), [&](const auto& path) {
        double cost = 0.0;
        for (const auto& [i, j] : path) cost += dist(i, j);
        if (cost < best || (cost == best && path.size() < best_len)) {
            best = cost;
            best_len = path.size();
        }
    });
    return best / double(best_len);
}

/// Minimum over couplings of the maximum frame distance along the coupling.
inline double dfd(const Mat& dist)
{
    double best = std::numeric_limits<double>::infinity();
    for_each_path(int(dist.rows()), int(dist.cols()), [&](const auto& path) {
        double worst = 0.0;
        for (const auto& [i, j] : path) worst = std::max(worst, dist(i, j));
        best = std::min(best, worst);
    });
    return best;
}

inline Mat frame_distances(const Mat& a, const Mat& b, const std::vector<int>& mask)
{
    Mat d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (int k : mask) s += (point(a, i, k) - point(b, j, k)).squaredNorm();
            d(i, j) = std::sqrt(s);
        }
    return d;
}

/// Row-wise softmax(q k^T / sqrt(d) + bias) v.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v, const Mat* bias = nullptr)
{
    Mat logits = q * k.transpose() / std::sqrt(double(q.cols()));
    if (bias) logits += *bias;
    Mat w(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - m);
        for (Eigen::Index j = 0; j < logits.cols(); ++j) w(i, j) = std::exp(logits(i, j) - m) / z;
    }
    return w * v;
}

struct GradCheck {
    double worst_relative = 0.0;
    int directions = 0;
};

/// Compares the analytic directional derivative of `loss` over every
/// parameter in `store` with central differences along random directions.
/// Relative error |a - n| / max(|a| + |n|, floor).
inline GradCheck check_gradients(freetalk::nn::ParamStore& store,
                                 const std::function<freetalk::nn::Var(freetalk::nn::Tape&)>& loss, int directions,
                                 std::uint64_t seed, double eps = 1e-5, double floor = 1e-8)
{
    std::mt19937_64 rng(seed);
    store.zero_grad();
    {
        freetalk::nn::Tape tape(true);
        tape.backward(loss(tape));
    }
    std::map<std::string, Mat> grads;
    for (auto& [name, p] : store.all()) grads[name] = p.grad.size() ? p.grad : Mat::Zero(p.value.rows(), p.value.cols());
    const auto eval = [&] {
        freetalk::nn::Tape tape(false);
        return loss(tape).value()(0, 0);
    };
    GradCheck result;
    for (int d = 0; d < directions; ++d) {
        std::map<std::string, Mat> dir;
        double norm2 = 0.0;
        for (auto& [name, p] : store.all()) {
            dir[name] = random_matrix(p.value.rows(), p.value.cols(), rng);
            norm2 += dir[name].squaredNorm();
        }
        double analytic = 0.0;
        for (auto& [name, m] : dir) {
            m /= std::sqrt(norm2);
            analytic += (grads[name].array() * m.array()).sum();
        }
        const auto shift = [&](double s) {
            for (auto& [name, p] : store.all()) p.value += s * dir[name];
        };
        shift(eps);
        const double plus = eval();
        shift(-2.0 * eps);
        const double minus = eval();
        shift(eps);
        const double numeric = (plus - minus) / (2.0 * eps);
        const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
        result.worst_relative = std::max(result.worst_relative, rel);
        ++result.directions;
    }
    store.zero_grad();
    return result;
}

} // namespace oracle

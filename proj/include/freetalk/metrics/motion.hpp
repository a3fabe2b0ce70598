#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace freetalk::metrics {

/// T frames of K points, stored T x 3K with row t = [x0 y0 z0 x1 y1 z1 ...].
/// Metric inputs are displacement trajectories (positions minus template).
using Trajectory = Eigen::MatrixXd;

struct TrajectoryPair {
    Trajectory truth;
    Trajectory prediction;

    Eigen::Index frames() const { return truth.rows(); }
    Eigen::Index points() const { return truth.cols() / 3; }
};

/// Throws Shape unless both sides are T x 3K with T >= 1.
void validate(const TrajectoryPair& pair);

struct LossWeights {
    double velocity = 0.0;
    double acceleration = 0.0;
};

struct MotionLossTerms {
    double position = 0.0;
    double velocity = 0.0;
    double acceleration = 0.0;
    double total = 0.0;
};

/// L_pos + w_v L_vel + w_a L_acc with per-term normalizations 1/(TK),
/// 1/((T-1)K), 1/((T-2)K). A term whose difference window exceeds T is 0.
MotionLossTerms motion_loss_terms(const TrajectoryPair& pair, LossWeights weights);
double motion_loss(const TrajectoryPair& pair, LossWeights weights);
/// d(motion_loss) / d(prediction), same shape as the prediction.
Eigen::MatrixXd motion_loss_gradient(const TrajectoryPair& pair, LossWeights weights);

/// Mean over frames of the max per-point L2 error over the masked points.
double lve(const TrajectoryPair& pair, const std::vector<int>& mouth);
double mve(const TrajectoryPair& pair);

/// Mean |std_t ||pred_t,k|| - std_t ||truth_t,k||| over masked points
/// (population std over time).
double fdd(const TrajectoryPair& pair, const std::vector<int>& upper);

/// T x T' Euclidean distances between stacked masked frames.
Eigen::MatrixXd frame_distances(const Trajectory& a, const Trajectory& b, const std::vector<int>& mask);

/// Dynamic time warping over masked frames: cost of the cheapest monotone
/// alignment divided by its length (ties broken toward shorter paths).
double dtw(const TrajectoryPair& pair, const std::vector<int>& lips);
double dtw_from_distances(const Eigen::MatrixXd& dist);

/// Discrete Frechet distance over masked frames.
double dfd(const TrajectoryPair& pair, const std::vector<int>& lips);
double dfd_from_distances(const Eigen::MatrixXd& dist);
/// Optimal coupling found by the DP, as (i, j) cells from (0,0) to the end.
std::vector<std::pair<int, int>> dfd_coupling(const Eigen::MatrixXd& dist);

/// Mean squared L2 error of consecutive-frame displacement vectors.
double delta_m(const TrajectoryPair& pair);
/// Mean cosine distance of consecutive-frame displacement vectors; near-zero
/// vectors (norm < 1e-9): both zero -> 0, one zero -> 1.
double delta_cd(const TrajectoryPair& pair);

struct MetricReport {
    double lve = 0.0;
    double mve = 0.0;
    double fdd = 0.0;
    double dtw = 0.0;
    double dfd = 0.0;
    double delta_m = 0.0;
    double delta_cd = 0.0;
};

struct RegionMasks {
    std::vector<int> mouth;
    std::vector<int> upper_face;
    std::vector<int> lips;
};

MetricReport evaluate_metrics(const TrajectoryPair& pair, const RegionMasks& masks);

std::vector<std::pair<std::string, double>> report_fields(const MetricReport& report);

} // namespace freetalk::metrics

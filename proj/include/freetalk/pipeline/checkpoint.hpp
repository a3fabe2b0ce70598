#pragma once

#include <freetalk/ats/denoiser.hpp>
#include <freetalk/ats/schedule.hpp>
#include <freetalk/audio/features.hpp>
#include <freetalk/stm/model.hpp>

#include <filesystem>
#include <memory>

namespace freetalk::pipeline {

/// Everything needed to sample from a trained ATS model.
struct AtsCheckpoint {
    std::unique_ptr<ats::Denoiser> model;
    ats::DiffusionSchedule schedule;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    audio::FeatureConfig features;
    Eigen::RowVector3d motion_std = Eigen::RowVector3d::Ones();  // x0 = displacement / std per axis
    Eigen::RowVectorXd audio_mean;
    Eigen::RowVectorXd audio_std;
    double fps = 30.0;
    std::string dataset_id;

    /// (features - mean) / std per channel.
    Eigen::MatrixXd normalize_audio(const Eigen::MatrixXd& features) const;
    /// Normalized x0 (T x 3N) back to displacements.
    Eigen::MatrixXd denormalize_motion(const Eigen::MatrixXd& x0) const;
};

struct StmCheckpoint {
    std::unique_ptr<stm::StmModel> model;
    double diffusion_time = 0.0;
    std::string dataset_id;
};

void save_ats_checkpoint(const AtsCheckpoint& ckpt, const std::filesystem::path& path);
AtsCheckpoint load_ats_checkpoint(const std::filesystem::path& path);

void save_stm_checkpoint(const StmCheckpoint& ckpt, const std::filesystem::path& path);
StmCheckpoint load_stm_checkpoint(const std::filesystem::path& path);

/// Scales column j by factor(j % 3).
Eigen::MatrixXd scale_axes(const Eigen::MatrixXd& trajectory, const Eigen::RowVector3d& factor);

} // namespace freetalk::pipeline

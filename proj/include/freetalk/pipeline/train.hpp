#pragma once

#include <freetalk/ats/denoiser.hpp>
#include <freetalk/audio/features.hpp>
#include <freetalk/metrics/motion.hpp>
#include <freetalk/stm/model.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace freetalk::pipeline {

struct OptimConfig {
    double lr = 1e-4;
    double weight_decay = 1e-2;
    double grad_clip = 1.0;
};

struct AtsTrainConfig {
    std::filesystem::path dataset;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    int workers = 1;
    ats::AtsConfig model;  // landmarks / audio_channels are taken from the data
    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    OptimConfig optim;
    int batch_size = 16;
    int epochs = 100;
    std::optional<long long> max_steps;
    int val_every = 1;  // epochs between validation / checkpoint selection
    metrics::LossWeights loss{0.3, 0.1};
    audio::FeatureConfig features;
    std::string train_split = "train";
    std::string val_split = "val";
};

struct StmTrainConfig {
    std::filesystem::path dataset;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    int workers = 1;
    stm::StmConfig model;
    OptimConfig optim;
    int epochs = 30;
    int window = 8;         // consecutive frames per training window
    int batch_windows = 1;  // windows per optimizer step
    std::optional<long long> max_steps;
    int val_every = 1;
    metrics::LossWeights loss{0.5, 0.2};
    std::string train_split = "train";
    std::string val_split = "val";
};

nlohmann::json to_json(const AtsTrainConfig& c);
AtsTrainConfig ats_train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StmTrainConfig& c);
StmTrainConfig stm_train_config_from_json(const nlohmann::json& j);

struct TrainSummary {
    std::filesystem::path checkpoint;  // best by validation loss
    std::filesystem::path last_checkpoint;
    std::filesystem::path log;
    int epochs = 0;
    long long steps = 0;
    double first_epoch_loss = 0.0;
    double first_epoch_position = 0.0;
    double final_loss = 0.0;
    double final_position = 0.0;
    double best_val_loss = 0.0;
};

struct SequenceBundle;

/// Features of the bundle's audio resampled to the animation timeline and
/// truncated to `frames` rows (not normalized).
Eigen::MatrixXd bundle_audio_features(const SequenceBundle& bundle, const audio::FeatureConfig& config,
                                      Eigen::Index frames);

/// Optimizes the ATS loss; writes ats.ckpt (best), ats.last.ckpt and
/// ats_train.csv into `out`. Throws Numerical on a non-finite loss.
TrainSummary train_ats(const AtsTrainConfig& config);

/// Same for STM on dense vertex trajectories (stm.ckpt, stm_train.csv).
TrainSummary train_stm(const StmTrainConfig& config);

} // namespace freetalk::pipeline

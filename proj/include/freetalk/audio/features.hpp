#pragma once

#include <freetalk/audio/wave.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <memory>
#include <string>

namespace freetalk::audio {

enum class ExtractorKind { LogMel, External };

struct FeatureConfig {
    double window_ms = 25.0;
    double hop_ms = 10.0;
    int n_mels = 80;
    ExtractorKind extractor = ExtractorKind::LogMel;
    /// Command for the external encoder; "{wav}" and "{out}" are replaced by
    /// the input WAV path and the feature file the command must write.
    std::string external_command;
    int external_channels = 768;
};

/// S x C features; row s is stamped at time (s + 0.5) / native_rate.
struct AudioFeatures {
    Eigen::MatrixXd matrix;
    double native_rate = 100.0;
};

/// T x C features, one row per animation frame.
struct FrameAlignedFeatures {
    Eigen::MatrixXd matrix;
    double fps = 30.0;
};

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual AudioFeatures extract(const Waveform& wave) const = 0;
    virtual int channels() const = 0;
};

/// log(mel power + 1e-6) with a Hann window.
class LogMelExtractor final : public FeatureExtractor {
public:
    explicit LogMelExtractor(FeatureConfig config);
    AudioFeatures extract(const Waveform& wave) const override;
    int channels() const override { return config_.n_mels; }

private:
    FeatureConfig config_;
};

/// Delegates to an external pretrained speech encoder through a command line.
class ExternalExtractor final : public FeatureExtractor {
public:
    explicit ExternalExtractor(FeatureConfig config);
    AudioFeatures extract(const Waveform& wave) const override;
    int channels() const override { return config_.external_channels; }

private:
    FeatureConfig config_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const FeatureConfig& config);

AudioFeatures extract_features(const Waveform& wave, const FeatureConfig& config);

/// Number of analysis frames: floor((samples - window) / hop) + 1.
Eigen::Index frame_count(std::size_t samples, double sample_rate, const FeatureConfig& config);

/// Linear interpolation at t_k = (k + 0.5) / fps clamped to [0, duration];
/// exactly round(duration * fps) rows.
FrameAlignedFeatures resample_to_frames(const AudioFeatures& feats, double fps, double duration);

/// Packed feature file: "FTF1", u32 rows, u32 cols, f64 native_rate,
/// rows x cols float32 little-endian, row-major.
void save_feature_file(const AudioFeatures& feats, const std::filesystem::path& path);
AudioFeatures load_feature_file(const std::filesystem::path& path);

} // namespace freetalk::audio

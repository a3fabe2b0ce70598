#pragma once

#include <freetalk/ats/schedule.hpp>
#include <freetalk/nn/layers.hpp>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace freetalk::ats {

/// Emotion categories plus intensity levels 1..max_intensity. "neutral" is
/// always present.
class AffectVocabulary {
public:
    AffectVocabulary() = default;
    AffectVocabulary(std::vector<std::string> emotions, int max_intensity);

    int emotion_id(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::string& emotion_name(int id) const;
    int size() const { return int(emotions_.size()); }
    int max_intensity() const { return max_intensity_; }
    const std::vector<std::string>& emotions() const { return emotions_; }

    bool operator==(const AffectVocabulary&) const = default;

private:
    std::vector<std::string> emotions_{"neutral"};
    int max_intensity_ = 3;
};

struct AffectLabel {
    int emotion = 0;
    int intensity = 1;
};

/// Throws Validation when the label is outside the vocabulary.
void validate(const AffectLabel& label, const AffectVocabulary& vocab);

nlohmann::json to_json(const AffectVocabulary& vocab);
AffectVocabulary vocabulary_from_json(const nlohmann::json& j);

struct AtsConfig {
    int landmarks = 68;        // N; D = 3N
    int audio_channels = 80;   // C
    int d_model = 512;
    int heads = 8;
    int layers = 6;
    int ff_dim = 2048;
    double dropout = 0.1;
    int max_frames = 600;      // positional table length
    int band_radius = 2;

    int motion_dim() const { return 3 * landmarks; }
};

nlohmann::json to_json(const AtsConfig& config);
AtsConfig ats_config_from_json(const nlohmann::json& j);

/// Transformer decoder predicting the clean displacement sequence from a
/// noisy one, conditioned on frame-aligned audio, the diffusion step and an
/// affect label. Pre-norm residual layers: self-attention, band-masked
/// cross-attention to the audio memory, GELU feed-forward.
class Denoiser {
public:
    Denoiser(AtsConfig config, AffectVocabulary vocab, std::uint64_t seed);

    const AtsConfig& config() const { return config_; }
    const AffectVocabulary& vocabulary() const { return vocab_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    /// noisy: T x D, audio: T x C. Returns x0_hat, T x D. `band_radius`
    /// overrides the configured radius.
    nn::Var forward(nn::Tape& tape, const Eigen::MatrixXd& noisy, int step, const Eigen::MatrixXd& audio,
                    const AffectLabel& affect, std::optional<int> band_radius = std::nullopt) const;
    /// Inference convenience (no gradient, dropout off).
    Eigen::MatrixXd denoise(const Eigen::MatrixXd& noisy, int step, const Eigen::MatrixXd& audio,
                            const AffectLabel& affect) const;

    /// emotion_table[e] + intensity_table[i - 1], projected to d_model (1 x d).
    nn::Var embed_affect(nn::Tape& tape, const AffectLabel& affect) const;
    Eigen::RowVectorXd embed_affect(const AffectLabel& affect) const;

    /// Sinusoidal step code followed by a 2-layer GELU MLP (1 x d).
    nn::Var embed_timestep(nn::Tape& tape, int step) const;

    /// One layer's masked cross-attention on already-normalized queries.
    nn::Var cross_attention(nn::Tape& tape, int layer, const nn::Var& queries, const nn::Var& memory,
                            const Eigen::MatrixXd& bias, Eigen::MatrixXd* weights = nullptr) const;

    /// Overwrites params with a consistent copy (checkpoint restore).
    void load(const nn::ParamStore& other);

private:
    struct Layer {
        nn::LayerNorm norm_self, norm_cross, norm_ff;
        nn::MultiHeadAttention self_attn, cross_attn;
        nn::Linear ff_in, ff_out;
    };

    AtsConfig config_;
    AffectVocabulary vocab_;
    nn::ParamStore params_;
    nn::Linear in_motion_, in_audio_;
    nn::Parameter* pos_target_ = nullptr;
    nn::Parameter* pos_memory_ = nullptr;
    nn::Linear time_fc1_, time_fc2_;
    nn::Parameter* emotion_table_ = nullptr;
    nn::Parameter* intensity_table_ = nullptr;
    nn::Linear affect_proj_;
    std::vector<Layer> layers_;
    nn::LayerNorm norm_out_;
    nn::Linear head_;
};

/// Sinusoidal code of a diffusion step, 1 x dim.
Eigen::RowVectorXd sinusoidal_embedding(int step, int dim);

} // namespace freetalk::ats

#include <freetalk/ats/denoiser.hpp>
#include <freetalk/error.hpp>

#include <algorithm>
#include <cmath>

namespace freetalk::ats {

using nn::Mat;
using nn::Var;

AffectVocabulary::AffectVocabulary(std::vector<std::string> emotions, int max_intensity)
    : emotions_(std::move(emotions)), max_intensity_(max_intensity)
{
    require(max_intensity_ >= 1, ErrorKind::Config, "max intensity must be at least 1");
    require(std::find(emotions_.begin(), emotions_.end(), "neutral") != emotions_.end(), ErrorKind::Config,
            "emotion vocabulary must contain \"neutral\"");
    for (std::size_t i = 0; i < emotions_.size(); ++i)
        for (std::size_t j = i + 1; j < emotions_.size(); ++j)
            require(emotions_[i] != emotions_[j], ErrorKind::Config, "duplicate emotion " + emotions_[i]);
}

int AffectVocabulary::emotion_id(const std::string& name) const
{
    auto it = std::find(emotions_.begin(), emotions_.end(), name);
    if (it == emotions_.end()) fail(ErrorKind::Validation, "unknown emotion \"" + name + "\"");
    return int(it - emotions_.begin());
}

bool AffectVocabulary::contains(const std::string& name) const
{
    return std::find(emotions_.begin(), emotions_.end(), name) != emotions_.end();
}

const std::string& AffectVocabulary::emotion_name(int id) const
{
    require(id >= 0 && id < size(), ErrorKind::Validation, "emotion id " + std::to_string(id) + " out of range");
    return emotions_[std::size_t(id)];
}

void validate(const AffectLabel& label, const AffectVocabulary& vocab)
{
    require(label.emotion >= 0 && label.emotion < vocab.size(), ErrorKind::Validation,
            "emotion id " + std::to_string(label.emotion) + " not in vocabulary");
    require(label.intensity >= 1 && label.intensity <= vocab.max_intensity(), ErrorKind::Validation,
            "intensity " + std::to_string(label.intensity) + " outside [1, " +
                std::to_string(vocab.max_intensity()) + "]");
}

nlohmann::json to_json(const AffectVocabulary& vocab)
{
    return {{"emotions", vocab.emotions()}, {"max_intensity", vocab.max_intensity()}};
}

AffectVocabulary vocabulary_from_json(const nlohmann::json& j)
{
    return AffectVocabulary(j.at("emotions").get<std::vector<std::string>>(), j.at("max_intensity").get<int>());
}

nlohmann::json to_json(const AtsConfig& c)
{
    return {{"landmarks", c.landmarks}, {"audio_channels", c.audio_channels}, {"d_model", c.d_model},
            {"heads", c.heads},         {"layers", c.layers},                 {"ff_dim", c.ff_dim},
            {"dropout", c.dropout},     {"max_frames", c.max_frames},         {"band_radius", c.band_radius}};
}

AtsConfig ats_config_from_json(const nlohmann::json& j)
{
    AtsConfig c;
    c.landmarks = j.value("landmarks", c.landmarks);
    c.audio_channels = j.value("audio_channels", c.audio_channels);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.max_frames = j.value("max_frames", c.max_frames);
    c.band_radius = j.value("band_radius", c.band_radius);
    return c;
}

Eigen::RowVectorXd sinusoidal_embedding(int step, int dim)
{
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * double(k) / double(std::max(half, 1)));
        e(k) = std::sin(step * freq);
        e(half + k) = std::cos(step * freq);
    }
    return e;
}

Denoiser::Denoiser(AtsConfig config, AffectVocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab))
{
    const auto& c = config_;
    require(c.landmarks >= 1 && c.audio_channels >= 1 && c.layers >= 1 && c.ff_dim >= 1 && c.max_frames >= 1,
            ErrorKind::Config, "denoiser dimensions must be positive");
    require(c.dropout >= 0.0 && c.dropout < 1.0, ErrorKind::Config, "dropout must lie in [0, 1)");
    require(c.band_radius >= 0, ErrorKind::Config, "band radius must be nonnegative");

    nn::Rng rng(seed);
    const int d = c.d_model;
    in_motion_ = nn::Linear::create(params_, "ats.in_motion", c.motion_dim(), d, rng);
    in_audio_ = nn::Linear::create(params_, "ats.in_audio", c.audio_channels, d, rng);
    pos_target_ = &params_.create("ats.pos_target", nn::normal_init(c.max_frames, d, 0.02, rng), false);
    pos_memory_ = &params_.create("ats.pos_memory", nn::normal_init(c.max_frames, d, 0.02, rng), false);
    time_fc1_ = nn::Linear::create(params_, "ats.time.fc1", d, d, rng);
    time_fc2_ = nn::Linear::create(params_, "ats.time.fc2", d, d, rng);
    emotion_table_ = &params_.create("ats.affect.emotion", nn::normal_init(vocab_.size(), d, 1.0, rng), false);
    intensity_table_ =
        &params_.create("ats.affect.intensity", nn::normal_init(vocab_.max_intensity(), d, 1.0, rng), false);
    affect_proj_ = nn::Linear::create(params_, "ats.affect.proj", d, d, rng);
    for (int l = 0; l < c.layers; ++l) {
        const std::string p = "ats.layer" + std::to_string(l);
        layers_.push_back({nn::LayerNorm::create(params_, p + ".norm_self", d),
                           nn::LayerNorm::create(params_, p + ".norm_cross", d),
                           nn::LayerNorm::create(params_, p + ".norm_ff", d),
                           nn::MultiHeadAttention::create(params_, p + ".self", d, d, d, c.heads, rng),
                           nn::MultiHeadAttention::create(params_, p + ".cross", d, d, d, c.heads, rng),
                           nn::Linear::create(params_, p + ".ff_in", d, c.ff_dim, rng),
                           nn::Linear::create(params_, p + ".ff_out", c.ff_dim, d, rng)});
    }
    norm_out_ = nn::LayerNorm::create(params_, "ats.norm_out", d);
    head_ = nn::Linear::create(params_, "ats.head", d, c.motion_dim(), rng);
}

Var Denoiser::embed_affect(nn::Tape& tape, const AffectLabel& affect) const
{
    validate(affect, vocab_);
    const Var e = nn::gather_rows(tape.param(*emotion_table_), {affect.emotion});
    const Var i = nn::gather_rows(tape.param(*intensity_table_), {affect.intensity - 1});
    return affect_proj_(tape, nn::add(e, i));
}

Eigen::RowVectorXd Denoiser::embed_affect(const AffectLabel& affect) const
{
    nn::Tape tape(false);
    return embed_affect(tape, affect).value();
}

Var Denoiser::embed_timestep(nn::Tape& tape, int step) const
{
    const Var code = tape.constant(sinusoidal_embedding(step, config_.d_model));
    return time_fc2_(tape, nn::gelu(time_fc1_(tape, code)));
}

Var Denoiser::cross_attention(nn::Tape& tape, int layer, const Var& queries, const Var& memory,
                              const Eigen::MatrixXd& bias, Eigen::MatrixXd* weights) const
{
    require(layer >= 0 && layer < int(layers_.size()), ErrorKind::Validation, "layer index out of range");
    return layers_[std::size_t(layer)].cross_attn(tape, queries, memory, &bias, weights);
}

Var Denoiser::forward(nn::Tape& tape, const Eigen::MatrixXd& noisy, int step, const Eigen::MatrixXd& audio,
                      const AffectLabel& affect, std::optional<int> band_radius) const
{
    const auto& c = config_;
    const Eigen::Index T = noisy.rows();
    require(T >= 1, ErrorKind::Shape, "denoiser input has no frames");
    require(noisy.cols() == c.motion_dim(), ErrorKind::Shape,
            "denoiser input width " + std::to_string(noisy.cols()) + " != " + std::to_string(c.motion_dim()));
    require(audio.rows() == T, ErrorKind::Shape, "audio frames do not match motion frames");
    require(audio.cols() == c.audio_channels, ErrorKind::Shape, "audio channel count mismatch");
    require(T <= c.max_frames, ErrorKind::Shape,
            "sequence of " + std::to_string(T) + " frames exceeds positional table (" +
                std::to_string(c.max_frames) + ")");

    const Var pos_t = nn::slice_rows(tape.param(*pos_target_), 0, T);
    const Var pos_m = nn::slice_rows(tape.param(*pos_memory_), 0, T);
    const Var cond = nn::add(embed_timestep(tape, step), embed_affect(tape, affect));

    Var z = nn::add(in_motion_(tape, tape.constant(noisy)), pos_t);
    z = nn::add_row(z, cond);
    const Var memory = nn::add(in_audio_(tape, tape.constant(audio)), pos_m);
    const Mat bias = band_mask(T, T, band_radius.value_or(c.band_radius));

    for (const auto& layer : layers_) {
        const Var zn = layer.norm_self(tape, z);
        z = nn::add(z, nn::dropout(layer.self_attn(tape, zn, zn), c.dropout));
        z = nn::add(z, nn::dropout(layer.cross_attn(tape, layer.norm_cross(tape, z), memory, &bias), c.dropout));
        const Var h = nn::dropout(nn::gelu(layer.ff_in(tape, layer.norm_ff(tape, z))), c.dropout);
        z = nn::add(z, nn::dropout(layer.ff_out(tape, h), c.dropout));
    }
    return head_(tape, norm_out_(tape, z));
}

Eigen::MatrixXd Denoiser::denoise(const Eigen::MatrixXd& noisy, int step, const Eigen::MatrixXd& audio,
                                  const AffectLabel& affect) const
{
    nn::Tape tape(false);
    return forward(tape, noisy, step, audio, affect).value();
}

void Denoiser::load(const nn::ParamStore& other)
{
    for (auto& [name, p] : params_.all()) {
        require(other.contains(name), ErrorKind::Format, "checkpoint lacks parameter " + name);
        const auto& src = other.at(name).value;
        require(src.rows() == p.value.rows() && src.cols() == p.value.cols(), ErrorKind::Format,
                "checkpoint parameter " + name + " has wrong shape");
        p.value = src;
    }
}

} // namespace freetalk::ats

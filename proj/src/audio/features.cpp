#include <freetalk/audio/features.hpp>
#include <freetalk/error.hpp>

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>

namespace freetalk::audio {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels x (n_fft/2 + 1) triangular filters spanning [0, sr/2].
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, double sample_rate)
{
    const int bins = n_fft / 2 + 1;
    const double top = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (int m = 0; m < n_mels + 2; ++m) edges[m] = mel_to_hz(top * m / (n_mels + 1));
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int b = 0; b < bins; ++b) {
            const double hz = b * sample_rate / n_fft;
            if (hz > lo && hz <= mid) fb(m, b) = (hz - lo) / (mid - lo);
            else if (hz > mid && hz < hi) fb(m, b) = (hi - hz) / (hi - mid);
        }
    }
    return fb;
}

std::size_t samples_for(double ms, double sample_rate) { return std::size_t(std::lround(ms * 1e-3 * sample_rate)); }

} // namespace

Eigen::Index frame_count(std::size_t samples, double sample_rate, const FeatureConfig& config)
{
    const std::size_t win = samples_for(config.window_ms, sample_rate);
    const std::size_t hop = samples_for(config.hop_ms, sample_rate);
    if (win == 0 || hop == 0 || samples < win) return 0;
    return Eigen::Index((samples - win) / hop + 1);
}

LogMelExtractor::LogMelExtractor(FeatureConfig config) : config_(std::move(config))
{
    require(config_.window_ms > 0 && config_.hop_ms > 0 && config_.n_mels > 0, ErrorKind::Config,
            "window_ms, hop_ms and n_mels must be positive");
}

AudioFeatures LogMelExtractor::extract(const Waveform& wave) const
{
    require(wave.sample_rate > 0, ErrorKind::Validation, "sample rate must be positive");
    const std::size_t win = samples_for(config_.window_ms, wave.sample_rate);
    const std::size_t hop = samples_for(config_.hop_ms, wave.sample_rate);
    const Eigen::Index frames = frame_count(wave.samples.size(), wave.sample_rate, config_);
    require(frames > 0, ErrorKind::Validation, "audio is shorter than one analysis window");

    int n_fft = 1;
    while (std::size_t(n_fft) < win) n_fft *= 2;
    const Eigen::MatrixXd fb = mel_filterbank(config_.n_mels, n_fft, wave.sample_rate);

    std::vector<double> window(win);
    for (std::size_t i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(win));

    Eigen::FFT<double> fft;
    std::vector<double> buf(n_fft);
    std::vector<std::complex<double>> spec;
    Eigen::VectorXd power(n_fft / 2 + 1);

    AudioFeatures out;
    out.native_rate = 1000.0 / config_.hop_ms;
    out.matrix.resize(frames, config_.n_mels);
    for (Eigen::Index s = 0; s < frames; ++s) {
        std::fill(buf.begin(), buf.end(), 0.0);
        for (std::size_t i = 0; i < win; ++i) buf[i] = wave.samples[std::size_t(s) * hop + i] * window[i];
        fft.fwd(spec, buf);
        for (int b = 0; b <= n_fft / 2; ++b) power(b) = std::norm(spec[b]);
        out.matrix.row(s) = ((fb * power).array() + 1e-6).log().transpose();
    }
    return out;
}

ExternalExtractor::ExternalExtractor(FeatureConfig config) : config_(std::move(config))
{
    require(!config_.external_command.empty(), ErrorKind::Config, "external extractor needs external_command");
}

AudioFeatures ExternalExtractor::extract(const Waveform& wave) const
{
    const auto dir = std::filesystem::temp_directory_path();
    const auto stem = "freetalk_ext_" + std::to_string(std::uintptr_t(this)) + "_" + std::to_string(wave.samples.size());
    const auto wav = dir / (stem + ".wav");
    const auto out = dir / (stem + ".ftf");
    save_wav(wave, wav, WavEncoding::Float32);

    std::string cmd = config_.external_command;
    auto replace = [&](const std::string& key, const std::string& value) {
        for (std::size_t p; (p = cmd.find(key)) != std::string::npos;) cmd.replace(p, key.size(), value);
    };
    replace("{wav}", wav.string());
    replace("{out}", out.string());
    const int rc = std::system(cmd.c_str());
    std::filesystem::remove(wav);
    if (rc != 0) fail(ErrorKind::Io, "external feature command failed: " + cmd);
    AudioFeatures feats = load_feature_file(out);
    std::filesystem::remove(out);
    require(feats.matrix.cols() == config_.external_channels, ErrorKind::Shape,
            "external extractor produced " + std::to_string(feats.matrix.cols()) + " channels, expected " +
                std::to_string(config_.external_channels));
    return feats;
}

std::unique_ptr<FeatureExtractor> make_extractor(const FeatureConfig& config)
{
    if (config.extractor == ExtractorKind::External) return std::make_unique<ExternalExtractor>(config);
    return std::make_unique<LogMelExtractor>(config);
}

AudioFeatures extract_features(const Waveform& wave, const FeatureConfig& config)
{
    return make_extractor(config)->extract(wave);
}

FrameAlignedFeatures resample_to_frames(const AudioFeatures& feats, double fps, double duration)
{
    require(fps > 0, ErrorKind::Validation, "fps must be positive");
    require(feats.matrix.rows() > 0 && feats.matrix.cols() > 0, ErrorKind::Validation, "empty feature matrix");
    const auto frames = Eigen::Index(std::lround(duration * fps));
    const Eigen::Index S = feats.matrix.rows();

    FrameAlignedFeatures out;
    out.fps = fps;
    out.matrix.resize(frames, feats.matrix.cols());
    for (Eigen::Index k = 0; k < frames; ++k) {
        const double t = std::clamp((double(k) + 0.5) / fps, 0.0, duration);
        const double pos = std::clamp(t * feats.native_rate - 0.5, 0.0, double(S - 1));
        const auto lo = Eigen::Index(std::floor(pos));
        const Eigen::Index hi = std::min(lo + 1, S - 1);
        const double w = pos - double(lo);
        if (w == 0.0) out.matrix.row(k) = feats.matrix.row(lo);
        else out.matrix.row(k) = (1.0 - w) * feats.matrix.row(lo) + w * feats.matrix.row(hi);
    }
    return out;
}

void save_feature_file(const AudioFeatures& feats, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write feature file " + path.string());
    out.write("FTF1", 4);
    const std::uint32_t rows = std::uint32_t(feats.matrix.rows()), cols = std::uint32_t(feats.matrix.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(&feats.native_rate), 8);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) {
            const float v = float(feats.matrix(r, c));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    if (!out) fail(ErrorKind::Io, "failed writing feature file " + path.string());
}

AudioFeatures load_feature_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open feature file " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FTF1", 4) != 0) fail(ErrorKind::Format, "bad feature file magic in " + path.string());
    std::uint32_t rows = 0, cols = 0;
    AudioFeatures f;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    in.read(reinterpret_cast<char*>(&f.native_rate), 8);
    if (!in) fail(ErrorKind::Format, "truncated feature file header");
    f.matrix.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) {
            float v;
            in.read(reinterpret_cast<char*>(&v), 4);
            f.matrix(r, c) = v;
        }
    if (!in) fail(ErrorKind::Format, "truncated feature file data");
    return f;
}

} // namespace freetalk::audio

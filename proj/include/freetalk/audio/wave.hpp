#pragma once

#include <filesystem>
#include <vector>

namespace freetalk::audio {

/// Mono waveform with samples in [-1, 1].
struct Waveform {
    std::vector<double> samples;
    double sample_rate = 16000.0;

    double duration() const { return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0; }
};

enum class WavEncoding { Pcm16, Float32 };

/// RIFF/WAVE, PCM 16-bit or IEEE float 32-bit, mono or stereo (averaged).
Waveform load_wav(const std::filesystem::path& path);

/// Writes `channels` identical copies of the mono signal.
void save_wav(const Waveform& wave, const std::filesystem::path& path, WavEncoding encoding = WavEncoding::Pcm16,
              int channels = 1);

} // namespace freetalk::audio

#include <freetalk/audio/wave.hpp>
#include <freetalk/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace freetalk::audio {

namespace {

template <typename T>
T get(const std::vector<char>& buf, std::size_t off)
{
    if (off + sizeof(T) > buf.size()) fail(ErrorKind::Format, "corrupt WAV header");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    return v;
}

template <typename T>
void put(std::ofstream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

} // namespace

Waveform load_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open audio file " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        fail(ErrorKind::Format, "not a RIFF/WAVE file: " + path.string());

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;
    std::size_t off = 12;
    while (off + 8 <= buf.size()) {
        const std::string id(buf.data() + off, 4);
        const auto len = get<std::uint32_t>(buf, off + 4);
        const std::size_t body = off + 8;
        if (id == "fmt ") {
            format = get<std::uint16_t>(buf, body);
            channels = get<std::uint16_t>(buf, body + 2);
            rate = get<std::uint32_t>(buf, body + 4);
            bits = get<std::uint16_t>(buf, body + 14);
            if (format == 0xFFFE && len >= 26) format = get<std::uint16_t>(buf, body + 24);  // extensible
            have_fmt = true;
        } else if (id == "data") {
            data_off = body;
            data_len = std::min<std::size_t>(len, buf.size() - body);
            break;
        }
        off = body + len + (len & 1u);
    }
    if (!have_fmt || data_off == 0) fail(ErrorKind::Format, "WAV file lacks fmt or data chunk");
    if (channels < 1 || channels > 2) fail(ErrorKind::Format, "only mono or stereo WAV is supported");
    if (rate == 0) fail(ErrorKind::Format, "WAV sample rate is zero");

    const bool pcm16 = format == 1 && bits == 16;
    const bool f32 = format == 3 && bits == 32;
    if (!pcm16 && !f32) fail(ErrorKind::Format, "unsupported WAV codec (need PCM16 or float32)");

    const std::size_t bytes = bits / 8;
    const std::size_t frames = data_len / (bytes * channels);
    Waveform w;
    w.sample_rate = double(rate);
    w.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t at = data_off + (i * channels + c) * bytes;
            acc += pcm16 ? double(get<std::int16_t>(buf, at)) / 32768.0 : double(get<float>(buf, at));
        }
        w.samples[i] = acc / double(channels);
        if (!std::isfinite(w.samples[i])) fail(ErrorKind::Format, "non-finite WAV sample");
    }
    return w;
}

void save_wav(const Waveform& wave, const std::filesystem::path& path, WavEncoding encoding, int channels)
{
    require(channels == 1 || channels == 2, ErrorKind::Validation, "channels must be 1 or 2");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write audio file " + path.string());
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint16_t fmt = encoding == WavEncoding::Pcm16 ? 1 : 3;
    const std::uint32_t rate = std::uint32_t(std::lround(wave.sample_rate));
    const std::uint32_t block = std::uint32_t(channels) * bits / 8;
    const std::uint32_t data_len = std::uint32_t(wave.samples.size()) * block;

    out.write("RIFF", 4);
    put<std::uint32_t>(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put<std::uint32_t>(out, 16);
    put<std::uint16_t>(out, fmt);
    put<std::uint16_t>(out, std::uint16_t(channels));
    put<std::uint32_t>(out, rate);
    put<std::uint32_t>(out, rate * block);
    put<std::uint16_t>(out, std::uint16_t(block));
    put<std::uint16_t>(out, bits);
    out.write("data", 4);
    put<std::uint32_t>(out, data_len);
    for (double s : wave.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        for (int ch = 0; ch < channels; ++ch) {
            if (encoding == WavEncoding::Pcm16)
                put<std::int16_t>(out, std::int16_t(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0))));
            else
                put<float>(out, float(c));
        }
    }
    if (!out) fail(ErrorKind::Io, "failed writing audio file " + path.string());
}

} // namespace freetalk::audio

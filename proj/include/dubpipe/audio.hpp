#pragma once

// Working audio representation plus the WAV, resampling and framing
// primitives every DSP stage is built on.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dubpipe/error.hpp"

namespace dubpipe::audio {

inline constexpr int kDefaultWorkingRate = 16000;

/// Mono PCM in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate = kDefaultWorkingRate;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    double duration_seconds() const noexcept {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }

    friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

struct FrameSpec {
    std::size_t frame_length = 2048;
    std::size_t hop_length = 512;

    void validate() const {
        if (hop_length == 0 || hop_length > frame_length)
            throw ArgumentError("frame spec requires 0 < hop_length <= frame_length");
    }
};

inline void require_valid(const AudioBuffer& buf) {
    if (buf.sample_rate <= 0)
        throw ArgumentError("sample rate must be positive");
}

/// Pure tone generator; phase starts at zero.
inline AudioBuffer tone(double frequency_hz, double seconds, int sample_rate = kDefaultWorkingRate,
                        double amplitude = 0.5) {
    AudioBuffer out;
    out.sample_rate = sample_rate;
    auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    out.samples.resize(n);
    const double w = 2.0 * std::numbers::pi * frequency_hz / sample_rate;
    for (std::size_t i = 0; i < n; ++i)
        out.samples[i] = static_cast<float>(amplitude * std::sin(w * static_cast<double>(i)));
    return out;
}

inline AudioBuffer silence(double seconds, int sample_rate = kDefaultWorkingRate) {
    AudioBuffer out;
    out.sample_rate = sample_rate;
    out.samples.assign(static_cast<std::size_t>(std::llround(seconds * sample_rate)), 0.0f);
    return out;
}

// ---------------------------------------------------------------------------
// WAV container

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) noexcept {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) noexcept {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) {
    out.insert(out.end(), tag, tag + 4);
}

inline bool tag_is(const std::uint8_t* p, std::string_view tag) noexcept {
    return std::memcmp(p, tag.data(), 4) == 0;
}

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

} // namespace detail

/// Decodes a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Stereo input is downmixed by averaging the two channels.
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
    using namespace detail;
    if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE"))
        throw FormatError("not a RIFF/WAVE container");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* hdr = bytes.data() + pos;
        std::size_t chunk_size = read_u32(hdr + 4);
        std::size_t body = pos + 8;
        std::size_t available = bytes.size() - body;
        if (tag_is(hdr, "fmt ")) {
            if (chunk_size < 16 || available < 16) throw FormatError("truncated fmt chunk");
            format = read_u16(hdr + 8);
            channels = read_u16(hdr + 10);
            rate = read_u32(hdr + 12);
            bits = read_u16(hdr + 22);
            if (format == kFormatExtensible) {
                if (chunk_size < 40 || available < 40) throw FormatError("truncated extensible fmt chunk");
                format = read_u16(hdr + 8 + 24);
            }
            have_fmt = true;
        } else if (tag_is(hdr, "data")) {
            data = hdr + 8;
            // Streaming writers leave the size field unset; take what is there.
            data_size = std::min(chunk_size, available);
            break;
        }
        if (chunk_size > available) throw FormatError("chunk extends past end of file");
        pos = body + chunk_size + (chunk_size & 1u);
    }

    if (!have_fmt) throw FormatError("missing fmt chunk");
    if (data == nullptr) throw FormatError("missing data chunk");
    if (rate == 0) throw FormatError("sample rate is zero");
    if (channels != 1 && channels != 2)
        throw UnsupportedError("unsupported channel count " + std::to_string(channels));

    std::size_t bytes_per_sample = 0;
    if (format == kFormatPcm && bits == 16) {
        bytes_per_sample = 2;
    } else if (format == kFormatFloat && bits == 32) {
        bytes_per_sample = 4;
    } else {
        throw UnsupportedError("unsupported encoding: format tag " + std::to_string(format) + ", " +
                               std::to_string(bits) + " bits");
    }

    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_size / frame_bytes;

    auto sample_at = [&](std::size_t index) -> double {
        const std::uint8_t* p = data + index * bytes_per_sample;
        if (bytes_per_sample == 2)
            return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
        return std::bit_cast<float>(read_u32(p));
    };

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) acc += sample_at(f * channels + c);
        acc /= channels;
        out.samples[f] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
    }
    return out;
}

inline AudioBuffer decode_wav(std::string_view bytes) {
    return decode_wav(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

/// Encodes as mono 16-bit PCM with the canonical 44-byte header.
inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf) {
    using namespace detail;
    require_valid(buf);
    const auto data_size = static_cast<std::uint32_t>(buf.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    put_tag(out, "data");
    put_u32(out, data_size);
    for (float s : buf.samples) {
        double q = std::round(static_cast<double>(s) * 32768.0);
        auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

inline AudioBuffer read_wav_file(const std::filesystem::path& path) {
    return decode_wav(read_file_bytes(path));
}

inline void write_wav_file(const std::filesystem::path& path, const AudioBuffer& buf) {
    write_file_bytes(path, encode_wav(buf));
}

// ---------------------------------------------------------------------------
// Sample-rate conversion

namespace detail {

inline double sinc(double x) noexcept {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

// Blackman window on [-1, 1].
inline double blackman(double x) noexcept {
    if (std::abs(x) >= 1.0) return 0.0;
    return 0.42 + 0.5 * std::cos(std::numbers::pi * x) + 0.08 * std::cos(2.0 * std::numbers::pi * x);
}

constexpr double kSincZeroCrossings = 16.0;
constexpr double kSincRolloff = 0.97;

} // namespace detail

/// Band-limited rescaling of the time axis: output length is
/// round(len * ratio), and ratio < 1 low-passes to the new Nyquist.
inline std::vector<float> resample_by_ratio(std::span<const float> in, double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ArgumentError("resample ratio must be positive");
    const double cutoff = detail::kSincRolloff * std::min(1.0, ratio);
    const double half_width = detail::kSincZeroCrossings / cutoff;
    const auto n_in = static_cast<std::ptrdiff_t>(in.size());
    const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));

    std::vector<float> out(n_out);
    for (std::size_t n = 0; n < n_out; ++n) {
        const double t = static_cast<double>(n) / ratio;
        auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
        auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
        lo = std::max<std::ptrdiff_t>(lo, 0);
        hi = std::min<std::ptrdiff_t>(hi, n_in - 1);
        double acc = 0.0;
        for (std::ptrdiff_t k = lo; k <= hi; ++k) {
            const double x = t - static_cast<double>(k);
            acc += in[static_cast<std::size_t>(k)] * cutoff * detail::sinc(cutoff * x) *
                   detail::blackman(x / half_width);
        }
        out[n] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
    }
    return out;
}

/// Converts to target_rate; output length is round(len * target_rate / source_rate).
inline AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
    require_valid(buf);
    if (target_rate <= 0) throw ArgumentError("target_rate must be positive");
    if (target_rate == buf.sample_rate) return buf;
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples = resample_by_ratio(buf.samples, static_cast<double>(target_rate) / buf.sample_rate);
    return out;
}

// ---------------------------------------------------------------------------
// Framing

/// RMS of each frame starting at multiples of hop_length. Frames running past
/// the end are zero-padded, so the result has ceil(len / hop) entries.
inline std::vector<double> rms_frames(const AudioBuffer& buf, const FrameSpec& spec) {
    spec.validate();
    if (buf.empty()) throw ArgumentError("rms_frames requires at least one sample");

    const std::size_t n = buf.samples.size();
    std::vector<double> energy(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = buf.samples[i];
        energy[i + 1] = energy[i] + s * s;
    }
    const std::size_t count = (n + spec.hop_length - 1) / spec.hop_length;
    std::vector<double> out(count);
    for (std::size_t f = 0; f < count; ++f) {
        const std::size_t start = f * spec.hop_length;
        const std::size_t end = std::min(n, start + spec.frame_length);
        const double sum = std::max(0.0, energy[end] - energy[start]);
        out[f] = std::sqrt(sum / static_cast<double>(spec.frame_length));
    }
    return out;
}

} // namespace dubpipe::audio

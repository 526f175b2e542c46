#pragma once

// Speech refinement: fit synthesized speech to the source chunk's duration
// (phase-vocoder time-scale modification) and to the source speaker's mean
// pitch (fixed pitch shifting by a step count derived from the two mean
// fundamental frequencies).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dubpipe/audio.hpp"
#include "dubpipe/detail/fft.hpp"
#include "dubpipe/error.hpp"

namespace dubpipe::refine {

using audio::AudioBuffer;

/// Accepted range for fundamental-frequency candidates.
struct VocalBand {
    double low = 87.31;    // F2
    double high = 1567.98; // G6

    void validate() const {
        if (!(low > 0.0 && low < high)) throw ArgumentError("vocal band requires 0 < low < high");
    }

    /// F2..G2, the pair of frequencies quoted alongside the note names.
    static VocalBand strict() { return {87.31, 98.00}; }
};

struct PitchEstimate {
    double mean_f0 = 0.0; // Hz, mean over voiced frames
    double voiced_fraction = 0.0;
};

enum class StepReading {
    signed_log,  // 2 * log2(f_src / f_tgt)
    squared_log, // (log2(f_src / f_tgt))^2, direction lost
};

struct ShiftSteps {
    double n_steps = 0.0;
};

struct PitchConfig {
    audio::FrameSpec frame{};
    double threshold = 0.1;         // cumulative-mean-normalized difference
    double silence_floor = 1e-4;    // absolute frame RMS below which a frame is unvoiced
    double relative_floor_db = 40.0; // frames this far below the loudest are unvoiced
};

namespace detail {

// Linear-phase low-pass FIR (Blackman-windowed sinc); cutoff in Hz.
inline std::vector<double> lowpass(const AudioBuffer& buf, double cutoff_hz, std::size_t taps = 255) {
    const double fc = cutoff_hz / buf.sample_rate;
    const auto half = static_cast<std::ptrdiff_t>(taps / 2);
    std::vector<double> kernel(taps);
    double sum = 0.0;
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        const double h = 2.0 * fc * audio::detail::sinc(2.0 * fc * static_cast<double>(i)) *
                         audio::detail::blackman(static_cast<double>(i) / (half + 1));
        kernel[static_cast<std::size_t>(i + half)] = h;
        sum += h;
    }
    for (auto& h : kernel) h /= sum;

    const auto n = static_cast<std::ptrdiff_t>(buf.size());
    std::vector<double> out(buf.size(), 0.0);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        double acc = 0.0;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, t + half);
        for (std::ptrdiff_t k = lo; k <= hi; ++k)
            acc += buf.samples[static_cast<std::size_t>(k)] * kernel[static_cast<std::size_t>(t - k + half)];
        out[static_cast<std::size_t>(t)] = acc;
    }
    return out;
}

// YIN on one frame. Returns the period in samples, or nothing if unvoiced.
inline std::optional<double> yin_period(const double* x, std::size_t window, std::size_t tau_min,
                                        std::size_t tau_max, double threshold) {
    std::vector<double> diff(tau_max + 2, 0.0);
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
        double acc = 0.0;
        for (std::size_t j = 0; j < window; ++j) {
            const double d = x[j] - x[j + tau];
            acc += d * d;
        }
        diff[tau] = acc;
    }
    std::vector<double> cmnd(tau_max + 2, 1.0);
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
        running += diff[tau];
        cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
    }

    std::size_t best = 0;
    for (std::size_t tau = tau_min; tau <= tau_max; ++tau) {
        if (cmnd[tau] < threshold) {
            while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
            best = tau;
            break;
        }
    }
    if (best == 0) return std::nullopt;

    double shift = 0.0;
    if (best > 1) {
        const double a = cmnd[best - 1], b = cmnd[best], c = cmnd[best + 1];
        const double denom = a - 2.0 * b + c;
        if (std::abs(denom) > 1e-12) shift = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
    }
    return static_cast<double>(best) + shift;
}

} // namespace detail

/// Mean fundamental frequency over voiced frames. The signal is first
/// band-limited just above band.high so components outside the band cannot
/// produce candidates; candidates outside [band.low, band.high] are rejected.
inline PitchEstimate estimate_pitch(const AudioBuffer& buf, const VocalBand& band = {},
                                    const PitchConfig& cfg = {}) {
    audio::require_valid(buf);
    band.validate();
    cfg.frame.validate();
    const double sr = buf.sample_rate;

    const auto tau_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / band.high)));
    const auto tau_max = static_cast<std::size_t>(std::ceil(sr / band.low));
    const std::size_t frame_len = std::min(cfg.frame.frame_length, buf.size());
    if (frame_len < 2 * (tau_max + 2))
        throw ArgumentError("buffer too short for pitch estimation: " + std::to_string(buf.size()) +
                            " samples, need " + std::to_string(2 * (tau_max + 2)));
    const std::size_t window = frame_len - tau_max - 1;

    const auto x = detail::lowpass(buf, std::min(band.high * 1.1, 0.45 * sr));

    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + frame_len <= x.size(); s += cfg.frame.hop_length) starts.push_back(s);

    std::vector<double> frame_rms(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < frame_len; ++j) acc += x[starts[i] + j] * x[starts[i] + j];
        frame_rms[i] = std::sqrt(acc / static_cast<double>(frame_len));
    }
    const double loudest = *std::max_element(frame_rms.begin(), frame_rms.end());
    const double floor = std::max(cfg.silence_floor, loudest * std::pow(10.0, -cfg.relative_floor_db / 20.0));

    double sum_f0 = 0.0;
    std::size_t voiced = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (frame_rms[i] < floor) continue;
        auto period = detail::yin_period(x.data() + starts[i], window, tau_min, tau_max, cfg.threshold);
        if (!period) continue;
        const double f0 = sr / *period;
        if (f0 < band.low || f0 > band.high) continue;
        sum_f0 += f0;
        ++voiced;
    }
    if (voiced == 0) throw UnvoicedError("no voiced frames within the vocal band");
    return {sum_f0 / static_cast<double>(voiced), static_cast<double>(voiced) / static_cast<double>(starts.size())};
}

/// Shift amount from the mean frequency of the audio being shifted (f_src)
/// and the frequency it should match (f_tgt).
inline ShiftSteps shift_steps(double f_src, double f_tgt, StepReading reading = StepReading::signed_log) {
    if (!(f_src > 0.0) || !(f_tgt > 0.0) || !std::isfinite(f_src) || !std::isfinite(f_tgt))
        throw ArgumentError("shift_steps requires positive finite frequencies");
    const double octaves = std::log2(f_src / f_tgt);
    switch (reading) {
    case StepReading::squared_log:
        return {octaves * octaves};
    case StepReading::signed_log:
    default:
        return {2.0 * octaves};
    }
}

// ---------------------------------------------------------------------------
// Time-scale modification

struct StretchConfig {
    std::size_t n_fft = 2048;
    std::size_t hop = 512;
};

/// Phase-vocoder time stretch. rate > 1 speeds up. Output length is exactly
/// round(len / rate); pitch is unchanged.
inline AudioBuffer time_stretch(const AudioBuffer& buf, double rate, const StretchConfig& cfg = {}) {
    audio::require_valid(buf);
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ArgumentError("stretch rate must be positive");
    if (cfg.hop == 0 || cfg.hop > cfg.n_fft || cfg.n_fft % 2 != 0) throw ArgumentError("invalid stretch config");
    if (rate == 1.0 || buf.empty()) {
        AudioBuffer out = buf;
        out.samples.resize(static_cast<std::size_t>(std::llround(static_cast<double>(buf.size()) / rate)), 0.0f);
        return out;
    }

    const std::size_t n_fft = cfg.n_fft, hop = cfg.hop, half = n_fft / 2, bins = n_fft / 2 + 1;
    const std::size_t out_len = static_cast<std::size_t>(std::llround(static_cast<double>(buf.size()) / rate));

    std::vector<double> window(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_fft));

    // Centered frames: pad half a window on the left, enough on the right to
    // fill the last frame.
    const std::size_t n_frames = buf.size() / hop + 1;
    std::vector<double> padded((n_frames - 1) * hop + n_fft, 0.0);
    for (std::size_t i = 0; i < buf.size(); ++i) padded[i + half] = buf.samples[i];

    dubpipe::detail::RealFft fft(n_fft);
    std::vector<std::vector<std::complex<double>>> stft(n_frames + 1, std::vector<std::complex<double>>(bins));
    std::vector<double> frame(n_fft);
    for (std::size_t f = 0; f < n_frames; ++f) {
        for (std::size_t i = 0; i < n_fft; ++i) frame[i] = padded[f * hop + i] * window[i];
        fft.forward(frame, stft[f]);
    }
    // stft[n_frames] stays zero so interpolation at the tail is defined.

    std::vector<double> advance(bins);
    for (std::size_t k = 0; k < bins; ++k)
        advance[k] = 2.0 * std::numbers::pi * static_cast<double>(hop * k) / static_cast<double>(n_fft);

    const auto steps = static_cast<std::size_t>(std::ceil(static_cast<double>(n_frames) / rate));
    std::vector<double> phase(bins);
    for (std::size_t k = 0; k < bins; ++k) phase[k] = std::arg(stft[0][k]);

    std::vector<double> output((steps - 1) * hop + n_fft, 0.0);
    std::vector<double> norm(output.size(), 0.0);
    std::vector<std::complex<double>> column(bins);
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * rate;
        const auto idx = std::min(static_cast<std::size_t>(t), n_frames - 1);
        const double alpha = t - static_cast<double>(idx);
        const auto& a = stft[idx];
        const auto& b = stft[idx + 1];
        for (std::size_t k = 0; k < bins; ++k) {
            const double mag = (1.0 - alpha) * std::abs(a[k]) + alpha * std::abs(b[k]);
            column[k] = std::polar(mag, phase[k]);
            double dphi = std::arg(b[k]) - std::arg(a[k]) - advance[k];
            dphi -= 2.0 * std::numbers::pi * std::round(dphi / (2.0 * std::numbers::pi));
            phase[k] += advance[k] + dphi;
        }
        fft.inverse(column, frame);
        const std::size_t offset = s * hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            output[offset + i] += frame[i] / static_cast<double>(n_fft) * window[i];
            norm[offset + i] += window[i] * window[i];
        }
    }

    AudioBuffer out;
    out.sample_rate = buf.sample_rate;
    out.samples.assign(out_len, 0.0f);
    for (std::size_t i = 0; i < out_len && i + half < output.size(); ++i) {
        const double w = norm[i + half];
        const double v = w > 1e-8 ? output[i + half] / w : 0.0;
        out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return out;
}

/// Shifts pitch by `semitones` (12 per octave) keeping the length: time
/// stretch by 2^(-n/12), then resample back to the original length.
inline AudioBuffer pitch_shift(const AudioBuffer& buf, double semitones, const StretchConfig& cfg = {}) {
    audio::require_valid(buf);
    if (buf.empty()) throw ArgumentError("pitch_shift requires a non-empty buffer");
    if (!std::isfinite(semitones)) throw ArgumentError("pitch shift amount must be finite");
    if (semitones == 0.0) return buf;

    const double rate = std::exp2(-semitones / 12.0);
    const AudioBuffer stretched = time_stretch(buf, rate, cfg);
    AudioBuffer out;
    out.sample_rate = buf.sample_rate;
    out.samples = audio::resample_by_ratio(stretched.samples, rate);
    out.samples.resize(buf.size(), 0.0f);
    return out;
}

inline AudioBuffer pitch_shift(const AudioBuffer& buf, ShiftSteps steps, const StretchConfig& cfg = {}) {
    return pitch_shift(buf, steps.n_steps, cfg);
}

// ---------------------------------------------------------------------------
// Segment matching

struct RefineConfig {
    VocalBand band{};
    StepReading reading = StepReading::signed_log;
    // Step units per octave for the shift computed from the two mean
    // frequencies. 2 makes the signed reading land exactly on f_tgt; 12
    // treats the figure as semitones.
    double steps_per_octave = 2.0;
    double max_stretch_rate = 3.0;
    double min_voiced_fraction = 0.25;
    PitchConfig pitch{};
    StretchConfig stretch{};

    void validate() const {
        band.validate();
        if (!(steps_per_octave > 0.0)) throw ArgumentError("steps_per_octave must be positive");
        if (!(max_stretch_rate >= 1.0)) throw ArgumentError("max_stretch_rate must be >= 1");
    }
};

struct MatchResult {
    AudioBuffer audio;
    double stretch_rate = 1.0;
    std::optional<double> synth_f0;
    std::optional<double> source_f0;
    std::optional<double> applied_semitones;
    std::vector<std::string> warnings;
};

/// Stretches `synth` to the duration of `source_chunk`, then shifts its mean
/// pitch toward the source speaker's. The pitch step is skipped (with a
/// warning) when either side is unvoiced.
inline MatchResult match_segment(const AudioBuffer& synth, const AudioBuffer& source_chunk,
                                 const RefineConfig& cfg = {}) {
    cfg.validate();
    if (synth.empty() || source_chunk.empty()) throw ArgumentError("match_segment requires non-empty buffers");
    if (synth.sample_rate != source_chunk.sample_rate)
        throw ArgumentError("sample rate mismatch: synth " + std::to_string(synth.sample_rate) + " Hz vs source " +
                            std::to_string(source_chunk.sample_rate) + " Hz");

    MatchResult result;
    const double wanted = static_cast<double>(synth.size()) / static_cast<double>(source_chunk.size());
    double rate = std::clamp(wanted, 1.0 / cfg.max_stretch_rate, cfg.max_stretch_rate);
    result.stretch_rate = rate;

    AudioBuffer fitted = time_stretch(synth, rate, cfg.stretch);
    if (rate != wanted) {
        result.warnings.push_back("stretch rate " + std::to_string(wanted) + " clamped to " + std::to_string(rate) +
                                  (rate < wanted ? "; speech tail trimmed" : "; padded with silence"));
    }
    fitted.samples.resize(source_chunk.size(), 0.0f);

    auto try_pitch = [&](const AudioBuffer& b, const char* what) -> std::optional<double> {
        try {
            auto est = estimate_pitch(b, cfg.band, cfg.pitch);
            if (est.voiced_fraction < cfg.min_voiced_fraction) {
                result.warnings.push_back(std::string(what) + " mostly unvoiced; pitch matching skipped");
                return std::nullopt;
            }
            return est.mean_f0;
        } catch (const UnvoicedError&) {
            result.warnings.push_back(std::string(what) + " unvoiced; pitch matching skipped");
        } catch (const ArgumentError& e) {
            result.warnings.push_back(std::string(what) + ": " + e.what() + "; pitch matching skipped");
        }
        return std::nullopt;
    };

    result.synth_f0 = try_pitch(synth, "synthesized speech");
    if (result.synth_f0) result.source_f0 = try_pitch(source_chunk, "source chunk");

    if (result.synth_f0 && result.source_f0) {
        const auto steps = shift_steps(*result.synth_f0, *result.source_f0, cfg.reading);
        const double semitones = -steps.n_steps * 12.0 / cfg.steps_per_octave;
        result.applied_semitones = semitones;
        if (semitones != 0.0) fitted = pitch_shift(fitted, semitones, cfg.stretch);
    }
    result.audio = std::move(fitted);
    return result;
}

inline MatchResult match_segment(const AudioBuffer& synth, const AudioBuffer& source_chunk, const VocalBand& band) {
    RefineConfig cfg;
    cfg.band = band;
    return match_segment(synth, source_chunk, cfg);
}

} // namespace dubpipe::refine

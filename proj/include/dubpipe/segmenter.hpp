#pragma once

// Energy-based splitting of a recording into non-silent speech intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dubpipe/audio.hpp"
#include "dubpipe/error.hpp"
#include "json.hpp"

namespace dubpipe::segment {

using audio::AudioBuffer;
using audio::FrameSpec;

/// Half-open sample range [start_sample, end_sample).
struct SpeechInterval {
    std::size_t start_sample = 0;
    std::size_t end_sample = 0;

    std::size_t length() const noexcept { return end_sample - start_sample; }
    friend bool operator==(const SpeechInterval&, const SpeechInterval&) = default;
};

struct SilenceConfig {
    double top_db = 40.0; // threshold below the loudest frame
    FrameSpec frame{};
    double min_gap_s = 0.3;
    double min_len_s = 0.1;

    void validate() const {
        frame.validate();
        if (!(top_db > 0.0)) throw ArgumentError("top_db must be positive");
        if (min_gap_s < 0.0) throw ArgumentError("min_gap_s must be non-negative");
        if (min_len_s < 0.0) throw ArgumentError("min_len_s must be non-negative");
    }
};

/// Maximal runs of frames within top_db of the loudest frame, mapped to
/// samples, then gap-merged and length-filtered.
///
/// Frame i covers [i*hop, i*hop + frame_length). A run of active frames
/// [first, last] maps to [first*hop + frame_length - hop, (last + 1)*hop),
/// which brackets the true onset to within one hop before it and the true
/// offset to within one hop after it. A run starting at frame 0 has no
/// silent predecessor, so its start is the first hop-sized block whose own
/// energy alone would make a frame active.
inline std::vector<SpeechInterval> split_nonsilent(const AudioBuffer& buf, const SilenceConfig& cfg) {
    cfg.validate();
    audio::require_valid(buf);
    if (buf.empty()) throw ArgumentError("split_nonsilent requires a non-empty buffer");

    const auto rms = audio::rms_frames(buf, cfg.frame);
    const double peak = *std::max_element(rms.begin(), rms.end());
    if (peak <= 0.0) return {};

    // Compare in the power domain: 20*log10(rms/peak) > -top_db.
    const double floor_rms = peak * std::pow(10.0, -cfg.top_db / 20.0);
    const std::size_t hop = cfg.frame.hop_length;
    const std::size_t lead = cfg.frame.frame_length - hop;
    const std::size_t n = buf.size();

    auto leading_onset = [&]() -> std::size_t {
        const double need = floor_rms * floor_rms * static_cast<double>(cfg.frame.frame_length);
        for (std::size_t k = 0; k * hop < std::min(n, cfg.frame.frame_length); ++k) {
            double sum = 0.0;
            for (std::size_t i = k * hop; i < std::min(n, (k + 1) * hop); ++i)
                sum += static_cast<double>(buf.samples[i]) * buf.samples[i];
            if (sum > need) return k * hop;
        }
        return 0;
    };

    std::vector<SpeechInterval> raw;
    for (std::size_t f = 0; f < rms.size();) {
        if (rms[f] <= floor_rms) {
            ++f;
            continue;
        }
        std::size_t last = f;
        while (last + 1 < rms.size() && rms[last + 1] > floor_rms) ++last;
        std::size_t start = f == 0 ? leading_onset() : std::min(n, f * hop + lead);
        std::size_t end = std::min(n, (last + 1) * hop);
        if (start < end) raw.push_back({start, end});
        f = last + 1;
    }

    const auto min_gap = static_cast<std::size_t>(std::llround(cfg.min_gap_s * buf.sample_rate));
    const auto min_len = static_cast<std::size_t>(std::llround(cfg.min_len_s * buf.sample_rate));

    std::vector<SpeechInterval> merged;
    for (const auto& iv : raw) {
        if (!merged.empty() && iv.start_sample < merged.back().end_sample + min_gap)
            merged.back().end_sample = std::max(merged.back().end_sample, iv.end_sample);
        else
            merged.push_back(iv);
    }

    std::erase_if(merged, [&](const SpeechInterval& iv) { return iv.length() < min_len; });
    return merged;
}

/// Copies each interval's samples out of buf.
inline std::vector<AudioBuffer> extract_chunks(const AudioBuffer& buf, const std::vector<SpeechInterval>& intervals) {
    std::vector<AudioBuffer> chunks;
    chunks.reserve(intervals.size());
    for (const auto& iv : intervals) {
        if (iv.start_sample >= iv.end_sample || iv.end_sample > buf.size())
            throw ArgumentError("interval [" + std::to_string(iv.start_sample) + ", " +
                                std::to_string(iv.end_sample) + ") invalid for buffer of " +
                                std::to_string(buf.size()) + " samples");
        AudioBuffer chunk;
        chunk.sample_rate = buf.sample_rate;
        chunk.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(iv.start_sample),
                             buf.samples.begin() + static_cast<std::ptrdiff_t>(iv.end_sample));
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

/// Segment manifest: [{index, start_sample, end_sample, start_s, end_s}, ...]
inline nlohmann::json manifest_json(const std::vector<SpeechInterval>& intervals, int sample_rate) {
    auto doc = nlohmann::json::array();
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        doc.push_back({{"index", i},
                       {"start_sample", iv.start_sample},
                       {"end_sample", iv.end_sample},
                       {"start_s", static_cast<double>(iv.start_sample) / sample_rate},
                       {"end_s", static_cast<double>(iv.end_sample) / sample_rate}});
    }
    return doc;
}

inline std::vector<SpeechInterval> intervals_from_manifest(const nlohmann::json& doc) {
    if (!doc.is_array()) throw FormatError("segment manifest must be a JSON array");
    std::vector<SpeechInterval> out;
    try {
        for (const auto& e : doc)
            out.push_back({e.at("start_sample").get<std::size_t>(), e.at("end_sample").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("segment manifest: ") + e.what());
    }
    return out;
}

} // namespace dubpipe::segment

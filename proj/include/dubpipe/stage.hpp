#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dubpipe/error.hpp"

namespace dubpipe {

/// Pipeline stages in execution order.
enum class Stage { extract, segment, asr, translate, tts, refine, assemble, lipsync, mux };

inline constexpr std::array kAllStages{Stage::extract, Stage::segment,  Stage::asr,
                                       Stage::translate, Stage::tts,   Stage::refine,
                                       Stage::assemble, Stage::lipsync, Stage::mux};

constexpr std::string_view to_string(Stage s) noexcept {
    switch (s) {
    case Stage::extract: return "extract";
    case Stage::segment: return "segment";
    case Stage::asr: return "asr";
    case Stage::translate: return "translate";
    case Stage::tts: return "tts";
    case Stage::refine: return "refine";
    case Stage::assemble: return "assemble";
    case Stage::lipsync: return "lipsync";
    case Stage::mux: return "mux";
    }
    return "?";
}

constexpr std::size_t stage_index(Stage s) noexcept { return static_cast<std::size_t>(s); }

inline std::optional<Stage> try_parse_stage(std::string_view text) noexcept {
    for (auto s : kAllStages)
        if (text == to_string(s)) return s;
    return std::nullopt;
}

/// Failure inside an ASR, MT or TTS backend.
class BackendError : public Error {
public:
    BackendError(Stage stage, const std::string& message)
        : Error(std::string(to_string(stage)) + ": " + message), stage_(stage) {}
    Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

} // namespace dubpipe

#pragma once

// End-to-end dubbing run: extract -> segment -> asr -> translate -> tts ->
// refine -> assemble -> lipsync -> mux. External tools (audio extraction,
// muxing, lip sync) are shell command templates with {in}, {out} and
// {audio} placeholders.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dubpipe/audio.hpp"
#include "dubpipe/backends.hpp"
#include "dubpipe/digest.hpp"
#include "dubpipe/error.hpp"
#include "dubpipe/language.hpp"
#include "dubpipe/refine.hpp"
#include "dubpipe/segmenter.hpp"
#include "dubpipe/stage.hpp"

namespace dubpipe::pipeline {

namespace fs = std::filesystem;
using audio::AudioBuffer;
using segment::SpeechInterval;

enum class LipsyncMode { external_adapter, audio_replace };

constexpr std::string_view to_string(LipsyncMode m) noexcept {
    return m == LipsyncMode::external_adapter ? "external" : "audio-replace";
}

inline LipsyncMode parse_lipsync_mode(std::string_view text) {
    if (text == "external" || text == "external_adapter") return LipsyncMode::external_adapter;
    if (text == "audio-replace" || text == "audio_replace") return LipsyncMode::audio_replace;
    throw ArgumentError("unknown lipsync mode '" + std::string(text) + "' (expected external or audio-replace)");
}

inline const char* kDefaultExtractorCmd =
    "ffmpeg -nostdin -loglevel error -y -i {in} -vn -ac 1 -ar 16000 -c:a pcm_s16le {out}";
inline const char* kDefaultMuxerCmd =
    "ffmpeg -nostdin -loglevel error -y -i {in} -i {audio} -map 0:v:0 -map 1:a:0 -c:v copy -shortest {out}";
// Invocation shape of the Wav2Lip inference script.
inline const char* kDefaultLipsyncCmd = "python3 inference.py --face {in} --audio {audio} --outfile {out}";

// ---------------------------------------------------------------------------
// Subprocess plumbing

/// An external command failed. Carries its exit status and combined stdout/stderr.
class CommandError : public Error {
public:
    CommandError(const std::string& what, int exit_code, std::string output)
        : Error(what), exit_code_(exit_code), output_(std::move(output)) {}
    int exit_code() const noexcept { return exit_code_; }
    const std::string& output() const noexcept { return output_; }

private:
    int exit_code_;
    std::string output_;
};

class ExtractError : public CommandError {
public:
    using CommandError::CommandError;
};

struct CommandResult {
    int exit_code = 0;
    std::string output;
};

inline std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

inline CommandResult run_command(const std::string& command) {
    const std::string wrapped = "( " + command + " ) 2>&1";
    FILE* pipe = ::popen(wrapped.c_str(), "r");
    if (!pipe) throw IoError("cannot start shell for: " + command);
    CommandResult result;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status == -1) result.exit_code = -1;
    else if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
    else result.exit_code = -1;
    return result;
}

struct CommandTemplate {
    std::string text;

    /// Every placeholder must be one of {in}, {out}, {audio}; `required`
    /// lists those that must appear at least once.
    void validate(std::string_view name, std::initializer_list<std::string_view> required) const {
        if (text.empty()) throw ConfigError(std::string(name) + " command template is empty");
        static const std::regex placeholder(R"(\{([^{}]*)\})");
        for (auto it = std::sregex_iterator(text.begin(), text.end(), placeholder); it != std::sregex_iterator(); ++it) {
            const auto key = (*it)[1].str();
            if (key != "in" && key != "out" && key != "audio")
                throw ConfigError(std::string(name) + " command template has unknown placeholder {" + key + "}");
        }
        for (auto key : required)
            if (text.find("{" + std::string(key) + "}") == std::string::npos)
                throw ConfigError(std::string(name) + " command template is missing the {" + std::string(key) +
                                  "} placeholder");
    }

    std::string render(const fs::path& in, const fs::path& out, const std::optional<fs::path>& audio = {}) const {
        std::string result;
        for (std::size_t i = 0; i < text.size();) {
            auto try_key = [&](std::string_view key, const std::string& value) {
                if (text.compare(i, key.size(), key) != 0) return false;
                result += value;
                i += key.size();
                return true;
            };
            if (try_key("{in}", shell_quote(in.string())) || try_key("{out}", shell_quote(out.string())) ||
                (audio && try_key("{audio}", shell_quote(audio->string()))))
                continue;
            result.push_back(text[i++]);
        }
        return result;
    }
};

// ---------------------------------------------------------------------------
// Configuration and results

struct PipelineConfig {
    Language source_lang = Language::en;
    Language target_lang = Language::hi;
    backends::VoiceModel voice = backends::VoiceModel::standard(Language::hi, Gender::female);
    segment::SilenceConfig silence{};
    refine::RefineConfig refine{};
    backends::BackendConfig asr{}, mt{}, tts{};
    LipsyncMode lipsync_mode = LipsyncMode::audio_replace;
    CommandTemplate extractor_cmd{kDefaultExtractorCmd};
    CommandTemplate muxer_cmd{kDefaultMuxerCmd};
    CommandTemplate lipsync_cmd{kDefaultLipsyncCmd};
    int working_rate = audio::kDefaultWorkingRate;
    // Threads for the per-segment stages; 0 means hardware concurrency.
    std::size_t workers = 0;

    void validate() const {
        if (target_lang == source_lang)
            throw ConfigError("target language must differ from source language (" + std::string(code(source_lang)) + ")");
        voice.validate();
        if (voice.language != target_lang)
            throw ConfigError("voice model language " + std::string(code(voice.language)) +
                              " does not match target language " + std::string(code(target_lang)));
        silence.validate();
        refine.validate();
        asr.validate();
        mt.validate();
        tts.validate();
        for (const auto* b : {&asr, &mt, &tts})
            if (b->kind == backends::BackendKind::remote) backends::detail::parse_endpoint(b->endpoint);
        if (working_rate <= 0) throw ConfigError("working sample rate must be positive");
        extractor_cmd.validate("extractor", {"in", "out"});
        muxer_cmd.validate("muxer", {"in", "out", "audio"});
        if (lipsync_mode == LipsyncMode::external_adapter) lipsync_cmd.validate("lipsync", {"in", "out", "audio"});
    }
};

struct StageArtifact {
    Stage stage = Stage::extract;
    fs::path path;
    std::string checksum;  // SHA-256 of digest::checksum_path(path)
    double duration_ms = 0.0;
};

struct TranscriptEntry {
    std::size_t index = 0;
    double start_s = 0.0, end_s = 0.0;
    std::string source_text, target_text;

    bool operator==(const TranscriptEntry&) const = default;
};

inline nlohmann::json transcript_json(const std::vector<TranscriptEntry>& entries) {
    auto out = nlohmann::json::array();
    for (const auto& e : entries)
        out.push_back({{"index", e.index},
                       {"start_s", e.start_s},
                       {"end_s", e.end_s},
                       {"source_text", e.source_text},
                       {"target_text", e.target_text}});
    return out;
}

inline std::vector<TranscriptEntry> transcript_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw FormatError("transcript must be a JSON array");
    std::vector<TranscriptEntry> out;
    try {
        for (const auto& e : doc)
            out.push_back({e.at("index").get<std::size_t>(), e.at("start_s").get<double>(), e.at("end_s").get<double>(),
                           e.at("source_text").get<std::string>(), e.at("target_text").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("malformed transcript entry: ") + ex.what());
    }
    return out;
}

struct DubResult {
    fs::path video_out;
    std::vector<TranscriptEntry> transcript;
    std::vector<SpeechInterval> intervals;
    AudioBuffer track;
    std::vector<std::string> warnings;
    std::vector<StageArtifact> artifacts;
};

/// A stage failed. Artifacts of the stages that completed are kept on disk
/// and listed here.
class PipelineError : public Error {
public:
    PipelineError(Stage stage, const std::string& message, std::vector<StageArtifact> artifacts)
        : Error(std::string(to_string(stage)) + " stage failed: " + message), stage_(stage),
          artifacts_(std::move(artifacts)) {}
    Stage stage() const noexcept { return stage_; }
    const std::vector<StageArtifact>& artifacts() const noexcept { return artifacts_; }

private:
    Stage stage_;
    std::vector<StageArtifact> artifacts_;
};

struct PipelineObserver {
    std::function<void(Stage)> on_stage_start;
    std::function<void(const StageArtifact&)> on_stage_done;
};

inline nlohmann::json artifacts_json(const std::vector<StageArtifact>& artifacts) {
    auto out = nlohmann::json::array();
    for (const auto& a : artifacts)
        out.push_back({{"stage", to_string(a.stage)},
                       {"path", a.path.string()},
                       {"checksum", a.checksum},
                       {"duration_ms", a.duration_ms}});
    return out;
}

// ---------------------------------------------------------------------------
// Stage operations

inline AudioBuffer extract_audio(const fs::path& video, const PipelineConfig& cfg, const fs::path& out_wav) {
    cfg.extractor_cmd.validate("extractor", {"in", "out"});
    if (!fs::is_regular_file(video)) throw IoError("input video '" + video.string() + "' does not exist");
    const auto res = run_command(cfg.extractor_cmd.render(video, out_wav));
    if (res.exit_code != 0)
        throw ExtractError("extractor exited with status " + std::to_string(res.exit_code) +
                               (res.output.empty() ? "" : ": " + res.output),
                           res.exit_code, res.output);
    if (!fs::is_regular_file(out_wav))
        throw ExtractError("extractor produced no output at '" + out_wav.string() + "'", 0, res.output);
    auto buf = audio::read_wav_file(out_wav);
    return buf.sample_rate == cfg.working_rate ? buf : audio::resample(buf, cfg.working_rate);
}

/// Extracts into a temporary WAV that is removed afterwards.
inline AudioBuffer extract_audio(const fs::path& video, const PipelineConfig& cfg) {
    static std::atomic<unsigned> counter{0};
    const auto tmp = fs::temp_directory_path() /
                     ("dubpipe-extract-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".wav");
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove(p, ec);
        }
    } cleanup{tmp};
    return extract_audio(video, cfg, tmp);
}

/// Places each refined chunk at its interval start on a silent track of
/// `source_len` samples. Chunks longer than their interval are cut at the
/// interval end and a warning is appended to `warnings`.
inline AudioBuffer assemble_track(std::size_t source_len, const std::vector<SpeechInterval>& intervals,
                                  const std::vector<AudioBuffer>& refined, int sample_rate = audio::kDefaultWorkingRate,
                                  std::vector<std::string>* warnings = nullptr) {
    if (intervals.size() != refined.size())
        throw ArgumentError("assemble_track: " + std::to_string(intervals.size()) + " intervals but " +
                            std::to_string(refined.size()) + " chunks");
    if (sample_rate <= 0) throw ArgumentError("sample rate must be positive");
    AudioBuffer out{std::vector<float>(source_len, 0.0f), sample_rate};
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        const auto& chunk = refined[i];
        if (iv.start_sample >= iv.end_sample || iv.end_sample > source_len)
            throw ArgumentError("assemble_track: interval " + std::to_string(i) + " lies outside the track");
        if (chunk.sample_rate != sample_rate)
            throw ArgumentError("assemble_track: chunk " + std::to_string(i) + " is at " +
                                std::to_string(chunk.sample_rate) + " Hz, track at " + std::to_string(sample_rate) +
                                " Hz");
        std::size_t n = chunk.size();
        if (n > iv.length()) {
            if (warnings)
                warnings->push_back("segment " + std::to_string(i) + ": chunk of " + std::to_string(n) +
                                    " samples trimmed to its " + std::to_string(iv.length()) + "-sample interval");
            n = iv.length();
        }
        std::copy_n(chunk.samples.begin(), n, out.samples.begin() + static_cast<std::ptrdiff_t>(iv.start_sample));
    }
    return out;
}

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. If several calls
/// throw, the exception of the lowest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string chunk_name(std::size_t i) {
    std::ostringstream os;
    os << std::setw(3) << std::setfill('0') << i << ".wav";
    return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    audio::write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

} // namespace detail

/// Runs every stage in order, writing artifacts under `out_dir`:
/// extracted.wav, segments.json, asr.json, transcript.json, tts/NNN.wav,
/// refined/NNN.wav, dubbed.wav, [lipsync<ext>] and video_out<ext>.
/// In audio_replace mode the lipsync stage passes the source video through.
inline DubResult run_pipeline(const fs::path& video, const fs::path& out_dir, const PipelineConfig& cfg,
                              const PipelineObserver& observer = {}) {
    cfg.validate();
    if (!fs::is_regular_file(video)) throw IoError("input video '" + video.string() + "' does not exist");

    DubResult result;
    Stage current = Stage::extract;
    auto started = std::chrono::steady_clock::now();

    auto begin = [&](Stage s) {
        current = s;
        started = std::chrono::steady_clock::now();
        if (observer.on_stage_start) observer.on_stage_start(s);
    };
    auto finish = [&](const fs::path& artifact) {
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - started;
        StageArtifact a{current, artifact, digest::checksum_path(artifact), elapsed.count()};
        result.artifacts.push_back(a);
        if (observer.on_stage_done) observer.on_stage_done(a);
    };

    const auto asr = backends::make_recognizer(cfg.asr);
    const auto mt = backends::make_translator(cfg.mt);
    const auto tts = backends::make_synthesizer(cfg.tts);
    fs::create_directories(out_dir);

    try {
        const auto ext = video.extension().string();

        begin(Stage::extract);
        const auto extracted_path = out_dir / "extracted.wav";
        const AudioBuffer source = extract_audio(video, cfg, extracted_path);
        finish(extracted_path);

        begin(Stage::segment);
        result.intervals =
            source.empty() ? std::vector<SpeechInterval>{} : segment::split_nonsilent(source, cfg.silence);
        const auto chunks = segment::extract_chunks(source, result.intervals);
        const std::size_t n = chunks.size();
        detail::write_text(out_dir / "segments.json",
                           segment::manifest_json(result.intervals, source.sample_rate).dump(2) + "\n");
        finish(out_dir / "segments.json");

        begin(Stage::asr);
        std::vector<backends::TranscriptChunk> heard(n);
        detail::parallel_for(n, cfg.workers, [&](std::size_t i) { heard[i] = asr->transcribe(chunks[i], cfg.source_lang, i); });
        result.transcript.resize(n);
        auto asr_doc = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            const double rate = source.sample_rate;
            result.transcript[i] = {i, static_cast<double>(result.intervals[i].start_sample) / rate,
                                    static_cast<double>(result.intervals[i].end_sample) / rate, heard[i].text, ""};
            asr_doc.push_back({{"index", i}, {"text", heard[i].text}});
        }
        detail::write_text(out_dir / "asr.json", asr_doc.dump(2) + "\n");
        finish(out_dir / "asr.json");

        begin(Stage::translate);
        detail::parallel_for(n, cfg.workers, [&](std::size_t i) {
            auto& e = result.transcript[i];
            if (!detail::blank(e.source_text)) e.target_text = mt->translate(e.source_text, cfg.source_lang, cfg.target_lang);
        });
        for (const auto& e : result.transcript)
            if (detail::blank(e.source_text))
                result.warnings.push_back("segment " + std::to_string(e.index) + ": empty transcript; left silent");
        detail::write_text(out_dir / "transcript.json", transcript_json(result.transcript).dump(2) + "\n");
        finish(out_dir / "transcript.json");

        begin(Stage::tts);
        fs::create_directories(out_dir / "tts");
        std::vector<std::optional<AudioBuffer>> speech(n);
        detail::parallel_for(n, cfg.workers, [&](std::size_t i) {
            if (detail::blank(result.transcript[i].target_text)) return;
            auto buf = tts->synthesize(result.transcript[i].target_text, cfg.voice);
            if (buf.sample_rate != cfg.working_rate) buf = audio::resample(buf, cfg.working_rate);
            audio::write_wav_file(out_dir / "tts" / detail::chunk_name(i), buf);
            speech[i] = std::move(buf);
        });
        finish(out_dir / "tts");

        begin(Stage::refine);
        fs::create_directories(out_dir / "refined");
        std::vector<AudioBuffer> refined(n);
        std::vector<std::vector<std::string>> seg_warnings(n);
        detail::parallel_for(n, cfg.workers, [&](std::size_t i) {
            if (speech[i] && !speech[i]->empty()) {
                auto m = refine::match_segment(*speech[i], chunks[i], cfg.refine);
                refined[i] = std::move(m.audio);
                seg_warnings[i] = std::move(m.warnings);
            } else {
                refined[i] = AudioBuffer{std::vector<float>(chunks[i].size(), 0.0f), cfg.working_rate};
            }
            audio::write_wav_file(out_dir / "refined" / detail::chunk_name(i), refined[i]);
        });
        for (std::size_t i = 0; i < n; ++i)
            for (auto& w : seg_warnings[i]) result.warnings.push_back("segment " + std::to_string(i) + ": " + w);
        finish(out_dir / "refined");

        begin(Stage::assemble);
        result.track = assemble_track(source.size(), result.intervals, refined, cfg.working_rate, &result.warnings);
        const auto dubbed = out_dir / "dubbed.wav";
        audio::write_wav_file(dubbed, result.track);
        finish(dubbed);

        begin(Stage::lipsync);
        fs::path picture = video;
        if (cfg.lipsync_mode == LipsyncMode::external_adapter) {
            picture = out_dir / ("lipsync" + ext);
            const auto res = run_command(cfg.lipsync_cmd.render(video, picture, dubbed));
            if (res.exit_code != 0)
                throw CommandError("lip-sync command exited with status " + std::to_string(res.exit_code) +
                                       (res.output.empty() ? "" : ": " + res.output),
                                   res.exit_code, res.output);
            if (!fs::is_regular_file(picture)) throw CommandError("lip-sync command produced no output", 0, res.output);
        }
        finish(picture);

        begin(Stage::mux);
        result.video_out = out_dir / ("video_out" + ext);
        const auto res = run_command(cfg.muxer_cmd.render(picture, result.video_out, dubbed));
        if (res.exit_code != 0)
            throw CommandError("muxer exited with status " + std::to_string(res.exit_code) +
                                   (res.output.empty() ? "" : ": " + res.output),
                               res.exit_code, res.output);
        if (!fs::is_regular_file(result.video_out)) throw CommandError("muxer produced no output", 0, res.output);
        finish(result.video_out);
    } catch (const PipelineError&) {
        throw;
    } catch (const BackendError& e) {
        throw PipelineError(e.stage(), e.what(), result.artifacts);
    } catch (const std::exception& e) {
        throw PipelineError(current, e.what(), result.artifacts);
    }
    return result;
}

} // namespace dubpipe::pipeline

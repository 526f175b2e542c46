#pragma once

// Command-line front end.
//
//   dubpipe translate  --in VIDEO --target LANG --voice GENDER --out DIR [...]
//   dubpipe agreement  --ratings CSV [--language L] [--criterion C] [--format table|json]
//   dubpipe pcc-check  --matrices JSON [--tolerance T]
//   dubpipe serve      [--host H] [--port P] [--store DIR] [...]
//
// Exit codes: 0 success; 1 failed check or insufficient data; 2 usage or
// configuration error; 3 unreadable or malformed input; 10 + stage index
// when translate fails in a pipeline stage (10 extract ... 18 mux).

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dubpipe/agreement.hpp"
#include "dubpipe/error.hpp"
#include "dubpipe/language.hpp"
#include "dubpipe/pipeline.hpp"
#include "dubpipe/service.hpp"
#include "dubpipe/stage.hpp"

#ifndef DUBPIPE_DEFAULT_DATA_DIR
#define DUBPIPE_DEFAULT_DATA_DIR "data"
#endif

namespace dubpipe::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitStageBase = 10;

constexpr int exit_code_for(Stage s) noexcept { return kExitStageBase + static_cast<int>(stage_index(s)); }

namespace detail {

/// Pipeline flags shared by translate and serve.
struct PipelineFlags {
    std::string backends = "mock";
    std::string asr_endpoint, mt_endpoint, tts_endpoint;
    double timeout_s = 30.0;
    int retries = 2;
    std::string data_dir = DUBPIPE_DEFAULT_DATA_DIR;
    std::string extractor_cmd = pipeline::kDefaultExtractorCmd;
    std::string muxer_cmd = pipeline::kDefaultMuxerCmd;
    std::string lipsync_cmd = pipeline::kDefaultLipsyncCmd;
    std::string lipsync = "audio-replace";
    std::size_t segment_workers = 0;
    double top_db = 40.0;
    double min_gap_s = 0.3;
    double min_len_s = 0.1;
    bool strict_band = false;
    std::string step_reading = "signed";
    double steps_per_octave = 2.0;
    double max_stretch_rate = 3.0;

    void attach(CLI::App& app) {
        app.add_option("--backends", backends, "Backend kind for ASR, MT and TTS")
            ->check(CLI::IsMember({"mock", "remote"}))
            ->capture_default_str();
        app.add_option("--asr-endpoint", asr_endpoint, "Remote ASR URL")->envname("DUBPIPE_ASR_ENDPOINT");
        app.add_option("--mt-endpoint", mt_endpoint, "Remote MT URL")->envname("DUBPIPE_MT_ENDPOINT");
        app.add_option("--tts-endpoint", tts_endpoint, "Remote TTS URL")->envname("DUBPIPE_TTS_ENDPOINT");
        app.add_option("--timeout", timeout_s, "Remote request timeout in seconds")->capture_default_str();
        app.add_option("--retries", retries, "Retries per remote request")->capture_default_str();
        app.add_option("--data-dir", data_dir, "Mock fixture directory (dictionaries, ASR table)")
            ->envname("DUBPIPE_DATA_DIR")
            ->capture_default_str();
        app.add_option("--extractor-cmd", extractor_cmd, "Audio extraction command template ({in}, {out})")
            ->envname("DUBPIPE_EXTRACTOR_CMD");
        app.add_option("--muxer-cmd", muxer_cmd, "Muxing command template ({in}, {audio}, {out})")
            ->envname("DUBPIPE_MUXER_CMD");
        app.add_option("--lipsync-cmd", lipsync_cmd, "Lip-sync command template ({in}, {audio}, {out})")
            ->envname("DUBPIPE_LIPSYNC_CMD");
        app.add_option("--lipsync", lipsync, "Lip-sync mode")
            ->check(CLI::IsMember({"external", "audio-replace"}))
            ->capture_default_str();
        app.add_option("--segment-workers", segment_workers, "Threads per job for segment stages (0 = all cores)");
        app.add_option("--top-db", top_db, "Silence threshold below the loudest frame, dB")->capture_default_str();
        app.add_option("--min-gap", min_gap_s, "Merge speech separated by less than this many seconds")
            ->capture_default_str();
        app.add_option("--min-len", min_len_s, "Drop speech shorter than this many seconds")->capture_default_str();
        app.add_flag("--strict-band", strict_band, "Use the narrow 87.31-98.00 Hz vocal band");
        app.add_option("--step-reading", step_reading, "Reading of the pitch-step formula")
            ->check(CLI::IsMember({"signed", "squared"}))
            ->capture_default_str();
        app.add_option("--steps-per-octave", steps_per_octave, "Units of the pitch-step figure")->capture_default_str();
        app.add_option("--max-stretch-rate", max_stretch_rate, "Largest time-stretch factor")->capture_default_str();
    }

    pipeline::PipelineConfig build() const {
        pipeline::PipelineConfig cfg;
        const auto kind = backends::parse_backend_kind(backends);
        for (auto [b, url] : {std::pair{&cfg.asr, &asr_endpoint}, {&cfg.mt, &mt_endpoint}, {&cfg.tts, &tts_endpoint}}) {
            b->kind = kind;
            b->endpoint = *url;
            b->timeout_s = timeout_s;
            b->retries = retries;
            b->data_dir = data_dir;
        }
        cfg.extractor_cmd = {extractor_cmd};
        cfg.muxer_cmd = {muxer_cmd};
        cfg.lipsync_cmd = {lipsync_cmd};
        cfg.lipsync_mode = pipeline::parse_lipsync_mode(lipsync);
        cfg.workers = segment_workers;
        cfg.silence.top_db = top_db;
        cfg.silence.min_gap_s = min_gap_s;
        cfg.silence.min_len_s = min_len_s;
        if (strict_band) cfg.refine.band = refine::VocalBand::strict();
        cfg.refine.reading = step_reading == "squared" ? refine::StepReading::squared_log : refine::StepReading::signed_log;
        cfg.refine.steps_per_octave = steps_per_octave;
        cfg.refine.max_stretch_rate = max_stretch_rate;
        return cfg;
    }
};

inline std::string fmt3(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

inline std::atomic<bool> g_stop_requested{false};

inline void on_stop_signal(int) { g_stop_requested = true; }

} // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

struct TranslateArgs {
    std::string in, target, voice, out;
    bool quiet = false;
    detail::PipelineFlags flags;
};

inline int cmd_translate(const TranslateArgs& a, std::ostream& out, std::ostream& err) {
    if (!fs::is_regular_file(a.in)) {
        err << "error: input video '" << a.in << "' not found\n";
        return kExitInput;
    }
    pipeline::PipelineConfig cfg;
    try {
        cfg = a.flags.build();
        cfg.target_lang = parse_language(a.target);
        cfg.voice = backends::VoiceModel::standard(cfg.target_lang, parse_gender(a.voice));
        cfg.validate();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    pipeline::PipelineObserver observer;
    if (!a.quiet)
        observer.on_stage_done = [&](const pipeline::StageArtifact& s) {
            err << "[" << to_string(s.stage) << "] " << detail::fmt3(s.duration_ms) << " ms\n";
        };
    try {
        auto result = pipeline::run_pipeline(a.in, a.out, cfg, observer);
        nlohmann::json summary{{"video_out", result.video_out.string()},
                               {"segments", result.intervals.size()},
                               {"stages", pipeline::artifacts_json(result.artifacts)},
                               {"warnings", result.warnings}};
        std::ofstream(fs::path(a.out) / "stages.json") << summary.dump(2) << "\n";
        for (const auto& w : result.warnings) err << "warning: " << w << "\n";
        out << "wrote " << result.video_out.string() << " (" << result.intervals.size() << " segment"
            << (result.intervals.size() == 1 ? "" : "s") << ")\n";
        return kExitOk;
    } catch (const pipeline::PipelineError& e) {
        err << "error: " << e.what() << "\n";
        err << "artifacts kept for " << e.artifacts().size() << " completed stage(s) in " << a.out << "\n";
        return exit_code_for(e.stage());
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

struct AgreementArgs {
    std::string ratings, language, criterion, format = "table";
};

inline int cmd_agreement(const AgreementArgs& a, std::ostream& out, std::ostream& err) {
    std::ifstream in(a.ratings, std::ios::binary);
    if (!in) {
        err << "error: cannot open ratings file '" << a.ratings << "'\n";
        return kExitInput;
    }
    std::vector<agreement::RatingRecord> records;
    try {
        records = agreement::parse_ratings_csv(in);
    } catch (const FormatError& e) {
        err << "error: " << a.ratings << ": " << e.what() << "\n";
        return kExitInput;
    }
    agreement::ReportQuery query;
    try {
        if (!a.language.empty()) query.language = parse_language(a.language);
        if (!a.criterion.empty()) query.criterion = agreement::parse_criterion(a.criterion);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    agreement::AgreementReport report;
    try {
        report = agreement::build_report(records, query);
    } catch (const ArgumentError& e) {
        err << "error: insufficient data: " << e.what() << "\n";
        return kExitFailure;
    }
    if (a.format == "json") {
        out << agreement::to_json(report).dump(2) << "\n";
    } else {
        out << agreement::to_table(report);
    }
    return kExitOk;
}

struct PccArgs {
    std::string matrices;
    double tolerance = agreement::kPccTolerance;
};

inline int cmd_pcc_check(const PccArgs& a, std::ostream& out, std::ostream& err) {
    std::ifstream in(a.matrices, std::ios::binary);
    if (!in) {
        err << "error: cannot open matrix bundle '" << a.matrices << "'\n";
        return kExitInput;
    }
    std::vector<agreement::PccCheckRow> rows;
    try {
        rows = agreement::check_pcc(agreement::parse_pcc_bundle(nlohmann::json::parse(in)), a.tolerance);
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << a.matrices << ": invalid JSON: " << e.what() << "\n";
        return kExitInput;
    } catch (const Error& e) {
        err << "error: " << a.matrices << ": " << e.what() << "\n";
        return kExitInput;
    }
    std::size_t matched = 0;
    for (const auto& r : rows) {
        out << "table " << std::setw(2) << r.source.table << "  " << std::left << std::setw(8)
            << display_name(r.source.language) << std::setw(9) << agreement::short_name(r.source.criterion)
            << std::right << "computed " << detail::fmt3(r.computed) << "  published "
            << detail::fmt3(r.source.published) << "  " << (r.match ? "MATCH" : "MISMATCH") << "\n";
        matched += r.match ? 1 : 0;
    }
    out << matched << "/" << rows.size() << " matrices match within " << a.tolerance << "\n";
    return matched == rows.size() ? kExitOk : kExitFailure;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store = "dubpipe-data";
    std::size_t workers = 0;
    double upload_limit_mb = 512;
    std::string token;
    detail::PipelineFlags flags;
};

inline int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    service::ServiceConfig cfg;
    try {
        cfg.host = a.host;
        cfg.port = a.port;
        cfg.data_dir = a.store;
        cfg.workers = a.workers;
        if (!(a.upload_limit_mb > 0)) throw ConfigError("upload limit must be positive");
        cfg.upload_limit = static_cast<std::size_t>(a.upload_limit_mb * 1024.0 * 1024.0);
        if (!a.token.empty()) cfg.token = a.token;
        cfg.pipeline = a.flags.build();
        cfg.validate();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        service::Service svc(cfg);
        detail::g_stop_requested = false;
        std::signal(SIGINT, detail::on_stop_signal);
        std::signal(SIGTERM, detail::on_stop_signal);
        svc.start();
        out << "listening on http://" << cfg.host << ":" << svc.port() << "/api/v1" << std::endl;
        while (!detail::g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        err << "shutting down\n";
        svc.stop();
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Video dubbing pipeline and rating-agreement toolkit", "dubpipe"};
    app.require_subcommand(1);

    TranslateArgs tr;
    auto* translate = app.add_subcommand("translate", "Dub a video into a target language");
    translate->add_option("--in", tr.in, "Source video")->required();
    translate->add_option("--target", tr.target, "Target language")
        ->required()
        ->check(CLI::IsMember({"bn", "hi", "ne", "te"}));
    translate->add_option("--voice", tr.voice, "Voice gender")->required()->check(CLI::IsMember({"male", "female"}));
    translate->add_option("--out", tr.out, "Output directory")->required();
    translate->add_flag("--quiet", tr.quiet, "Do not print per-stage timings");
    tr.flags.attach(*translate);

    AgreementArgs ag;
    auto* agree = app.add_subcommand("agreement", "Inter-annotator agreement report from a ratings CSV");
    agree->add_option("--ratings", ag.ratings, "Ratings CSV")->required();
    agree->add_option("--language", ag.language, "Only this language")->check(CLI::IsMember({"en", "bn", "hi", "ne", "te"}));
    agree->add_option("--criterion", ag.criterion, "Only this criterion")
        ->check(CLI::IsMember({"lip_sync", "translation_quality", "audio_quality"}));
    agree->add_option("--format", ag.format, "Output format")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();

    PccArgs pcc;
    auto* pcc_cmd = app.add_subcommand("pcc-check", "Check published Pearson averages against their rater matrices");
    pcc_cmd->add_option("--matrices", pcc.matrices, "Matrix bundle JSON")->required();
    pcc_cmd->add_option("--tolerance", pcc.tolerance, "Allowed absolute difference")->capture_default_str();

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
    serve->add_option("--host", sv.host, "Listen address")->envname("DUBPIPE_HOST")->capture_default_str();
    serve->add_option("--port", sv.port, "Listen port (0 picks a free one)")->envname("DUBPIPE_PORT")->capture_default_str();
    serve->add_option("--store", sv.store, "Job store directory")->envname("DUBPIPE_STORE")->capture_default_str();
    serve->add_option("--workers", sv.workers, "Concurrent jobs (0 = CPU count)")->envname("DUBPIPE_WORKERS");
    serve->add_option("--upload-limit-mb", sv.upload_limit_mb, "Largest accepted upload")
        ->envname("DUBPIPE_UPLOAD_LIMIT_MB")
        ->capture_default_str();
    serve->add_option("--token", sv.token, "Require this bearer token")->envname("DUBPIPE_TOKEN");
    sv.flags.attach(*serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (translate->parsed()) return cmd_translate(tr, out, err);
    if (agree->parsed()) return cmd_agreement(ag, out, err);
    if (pcc_cmd->parsed()) return cmd_pcc_check(pcc, out, err);
    if (serve->parsed()) return cmd_serve(sv, out, err);
    return kExitUsage;
}

} // namespace dubpipe::cli

#pragma once

// Job-oriented HTTP service over the dubbing pipeline.
//
// Storage layout under the data directory:
//   jobs/<id>/job.json      job manifest, replaced atomically on every update
//   jobs/<id>/source<ext>   the uploaded video, byte for byte
//   jobs/<id>/work/         pipeline artifacts
//   ratings.csv             all survey ratings, in the agreement CSV format
//
// Endpoints (all under /api/v1):
//   POST /jobs                      multipart {video, target_language, voice_gender} -> 202 {job_id}
//   GET  /jobs                      list of {job_id, state}
//   GET  /jobs/{id}                 status document
//   GET  /jobs/{id}/result/{video|transcript|source}
//   POST /jobs/{id}/ratings         {rater_id, lip_sync, translation_quality, audio_quality} -> 201
//   GET  /agreement?language=&criterion=
//   GET  /health

#include <openssl/rand.h>

#include <array>
#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dubpipe/agreement.hpp"
#include "dubpipe/error.hpp"
#include "dubpipe/language.hpp"
#include "dubpipe/pipeline.hpp"
#include "dubpipe/stage.hpp"

namespace dubpipe::service {

namespace fs = std::filesystem;
using nlohmann::json;

enum class JobState {
    queued,
    extracting,
    segmenting,
    transcribing,
    translating,
    synthesizing,
    refining,
    lipsync,
    muxing,
    done,
    failed
};

inline constexpr std::array kAllJobStates{JobState::queued,       JobState::extracting, JobState::segmenting,
                                          JobState::transcribing, JobState::translating, JobState::synthesizing,
                                          JobState::refining,     JobState::lipsync,    JobState::muxing,
                                          JobState::done,         JobState::failed};

constexpr std::string_view to_string(JobState s) noexcept {
    switch (s) {
    case JobState::queued: return "queued";
    case JobState::extracting: return "extracting";
    case JobState::segmenting: return "segmenting";
    case JobState::transcribing: return "transcribing";
    case JobState::translating: return "translating";
    case JobState::synthesizing: return "synthesizing";
    case JobState::refining: return "refining";
    case JobState::lipsync: return "lipsync";
    case JobState::muxing: return "muxing";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    }
    return "?";
}

inline std::optional<JobState> try_parse_job_state(std::string_view text) noexcept {
    for (auto s : kAllJobStates)
        if (text == to_string(s)) return s;
    return std::nullopt;
}

constexpr bool is_terminal(JobState s) noexcept { return s == JobState::done || s == JobState::failed; }

/// Position in the declared order.
constexpr std::size_t state_rank(JobState s) noexcept { return static_cast<std::size_t>(s); }

/// Job state shown while a pipeline stage runs. Assembly is reported as
/// part of refining.
constexpr JobState state_for(Stage s) noexcept {
    switch (s) {
    case Stage::extract: return JobState::extracting;
    case Stage::segment: return JobState::segmenting;
    case Stage::asr: return JobState::transcribing;
    case Stage::translate: return JobState::translating;
    case Stage::tts: return JobState::synthesizing;
    case Stage::refine:
    case Stage::assemble: return JobState::refining;
    case Stage::lipsync: return JobState::lipsync;
    case Stage::mux: return JobState::muxing;
    }
    return JobState::failed;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    ::gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

struct StateChange {
    JobState state = JobState::queued;
    std::string at;
    std::string note;
};

struct DubJob {
    std::string id;
    std::string created_at;
    Language target_lang = Language::hi;
    Gender voice_gender = Gender::female;
    std::string original_filename;
    std::string source_file;  // name inside the job directory
    JobState state = JobState::queued;
    std::vector<StateChange> history;
    std::size_t completed_stages = 0;
    std::optional<Stage> failed_stage;
    std::optional<std::string> error;
    std::string video_out;  // name inside work/, set when done
    std::vector<std::string> warnings;

    void transition(JobState next, std::string note = {}) {
        state = next;
        history.push_back({next, utc_timestamp(), std::move(note)});
    }
};

inline json to_json(const DubJob& j) {
    json history = json::array();
    for (const auto& h : j.history) {
        json e{{"state", to_string(h.state)}, {"at", h.at}};
        if (!h.note.empty()) e["note"] = h.note;
        history.push_back(std::move(e));
    }
    json doc{{"id", j.id},
             {"created_at", j.created_at},
             {"target_language", code(j.target_lang)},
             {"voice_gender", to_string(j.voice_gender)},
             {"original_filename", j.original_filename},
             {"source_file", j.source_file},
             {"state", to_string(j.state)},
             {"history", std::move(history)},
             {"completed_stages", j.completed_stages},
             {"video_out", j.video_out},
             {"warnings", j.warnings}};
    doc["failed_stage"] = j.failed_stage ? json(to_string(*j.failed_stage)) : json(nullptr);
    doc["error"] = j.error ? json(*j.error) : json(nullptr);
    return doc;
}

inline DubJob job_from_json(const json& doc) {
    try {
        DubJob j;
        j.id = doc.at("id").get<std::string>();
        j.created_at = doc.at("created_at").get<std::string>();
        j.target_lang = parse_language(doc.at("target_language").get<std::string>());
        j.voice_gender = parse_gender(doc.at("voice_gender").get<std::string>());
        j.original_filename = doc.value("original_filename", "");
        j.source_file = doc.at("source_file").get<std::string>();
        auto state = try_parse_job_state(doc.at("state").get<std::string>());
        if (!state) throw FormatError("unknown job state");
        j.state = *state;
        for (const auto& h : doc.at("history")) {
            auto s = try_parse_job_state(h.at("state").get<std::string>());
            if (!s) throw FormatError("unknown job state in history");
            j.history.push_back({*s, h.at("at").get<std::string>(), h.value("note", "")});
        }
        j.completed_stages = doc.value("completed_stages", std::size_t{0});
        if (doc.contains("failed_stage") && doc["failed_stage"].is_string())
            j.failed_stage = try_parse_stage(doc["failed_stage"].get<std::string>());
        if (doc.contains("error") && doc["error"].is_string()) j.error = doc["error"].get<std::string>();
        j.video_out = doc.value("video_out", "");
        j.warnings = doc.value("warnings", std::vector<std::string>{});
        return j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed job manifest: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("malformed job manifest: ") + e.what());
    }
}

/// Job ids are 32 lowercase hex digits; anything else is never a valid id
/// (and never reaches the filesystem).
inline bool is_valid_job_id(std::string_view id) noexcept {
    if (id.size() != 32) return false;
    return std::all_of(id.begin(), id.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

inline std::string new_job_id() {
    std::array<unsigned char, 16> raw{};
    if (RAND_bytes(raw.data(), static_cast<int>(raw.size())) != 1) throw Error("random id generation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    for (auto b : raw) {
        id.push_back(kHex[b >> 4]);
        id.push_back(kHex[b & 0xF]);
    }
    return id;
}

inline bool is_valid_rater_id(std::string_view id) noexcept {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '@';
    });
}

enum class RatingOutcome { added, duplicate };

// ---------------------------------------------------------------------------
// Durable store

class JobStore {
public:
    explicit JobStore(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_ / "jobs");
        if (fs::exists(ratings_path())) {
            std::ifstream in(ratings_path());
            ratings_ = agreement::parse_ratings_csv(in);
        }
    }

    const fs::path& root() const noexcept { return root_; }
    fs::path job_dir(const std::string& id) const { return root_ / "jobs" / id; }
    fs::path work_dir(const std::string& id) const { return job_dir(id) / "work"; }
    fs::path source_path(const DubJob& j) const { return job_dir(j.id) / j.source_file; }
    fs::path transcript_path(const DubJob& j) const { return work_dir(j.id) / "transcript.json"; }
    fs::path video_out_path(const DubJob& j) const { return work_dir(j.id) / j.video_out; }
    fs::path ratings_path() const { return root_ / "ratings.csv"; }

    DubJob create(Language target, Gender gender, std::string_view video_bytes, const std::string& original_filename) {
        std::lock_guard lock(mu_);
        DubJob j;
        do {
            j.id = new_job_id();
        } while (!fs::create_directory(job_dir(j.id)));
        j.created_at = utc_timestamp();
        j.target_lang = target;
        j.voice_gender = gender;
        j.original_filename = original_filename;
        j.source_file = "source" + safe_extension(original_filename);
        j.transition(JobState::queued);
        write_atomic(job_dir(j.id) / j.source_file, video_bytes);
        save_locked(j);
        return j;
    }

    std::optional<DubJob> load(const std::string& id) const {
        if (!is_valid_job_id(id)) return std::nullopt;
        std::lock_guard lock(mu_);
        return load_locked(id);
    }

    void save(const DubJob& j) {
        std::lock_guard lock(mu_);
        save_locked(j);
    }

    /// Applies `fn` to the stored job and persists the result atomically.
    DubJob update(const std::string& id, const std::function<void(DubJob&)>& fn) {
        std::lock_guard lock(mu_);
        auto j = load_locked(id);
        if (!j) throw ArgumentError("unknown job " + id);
        fn(*j);
        save_locked(*j);
        return *j;
    }

    std::vector<DubJob> list() const {
        std::lock_guard lock(mu_);
        std::vector<DubJob> out;
        for (const auto& entry : fs::directory_iterator(root_ / "jobs")) {
            const auto id = entry.path().filename().string();
            if (!is_valid_job_id(id)) continue;
            if (auto j = load_locked(id)) out.push_back(std::move(*j));
        }
        std::sort(out.begin(), out.end(), [](const DubJob& a, const DubJob& b) {
            return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
        });
        return out;
    }

    /// Brings the store to a consistent state after a restart. Unfinished
    /// jobs whose upload is intact go back to queued (their partial work is
    /// discarded); the rest are marked failed. Returns the ids to schedule,
    /// oldest first. A job directory with an unreadable manifest is left
    /// untouched and not listed.
    std::vector<std::string> recover() {
        std::vector<std::string> pending;
        for (auto j : list()) {
            if (is_terminal(j.state)) continue;
            std::lock_guard lock(mu_);
            if (fs::is_regular_file(source_path(j))) {
                std::error_code ec;
                fs::remove_all(work_dir(j.id), ec);
                if (j.state != JobState::queued) {
                    j.completed_stages = 0;
                    j.transition(JobState::queued, "requeued after restart (was " +
                                                       std::string(to_string(j.history.back().state)) + ")");
                }
                save_locked(j);
                pending.push_back(j.id);
            } else {
                j.error = "uploaded source missing after restart";
                j.transition(JobState::failed, *j.error);
                save_locked(j);
            }
        }
        return pending;
    }

    RatingOutcome add_ratings(const DubJob& job, const std::string& rater_id,
                              const std::array<std::pair<agreement::Criterion, int>, 3>& scores) {
        std::lock_guard lock(mu_);
        for (const auto& r : ratings_)
            if (r.video_id == job.id && r.rater_id == rater_id) return RatingOutcome::duplicate;
        auto next = ratings_;
        for (const auto& [criterion, score] : scores) {
            agreement::RatingRecord r{job.target_lang, job.id, rater_id, criterion, score};
            agreement::validate_record(r);
            next.push_back(std::move(r));
        }
        write_atomic(ratings_path(), agreement::to_csv(next));
        ratings_ = std::move(next);
        return RatingOutcome::added;
    }

    std::vector<agreement::RatingRecord> ratings() const {
        std::lock_guard lock(mu_);
        return ratings_;
    }

private:
    static std::string safe_extension(const std::string& filename) {
        auto ext = fs::path(filename).extension().string();
        if (ext.size() > 10) return "";
        for (char c : ext.substr(ext.empty() ? 0 : 1))
            if (!std::isalnum(static_cast<unsigned char>(c))) return "";
        return ext;
    }

    static void write_atomic(const fs::path& path, std::string_view bytes) {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write '" + tmp.string() + "'");
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!out) throw IoError("short write to '" + tmp.string() + "'");
        }
        fs::rename(tmp, path);
    }

    void save_locked(const DubJob& j) { write_atomic(job_dir(j.id) / "job.json", to_json(j).dump(2) + "\n"); }

    std::optional<DubJob> load_locked(const std::string& id) const {
        const auto path = job_dir(id) / "job.json";
        std::ifstream in(path);
        if (!in) return std::nullopt;
        try {
            return job_from_json(json::parse(in));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    fs::path root_;
    mutable std::mutex mu_;
    std::vector<agreement::RatingRecord> ratings_;
};

// ---------------------------------------------------------------------------
// Job status document

inline json status_json(const DubJob& j) {
    json doc{{"job_id", j.id},
             {"state", to_string(j.state)},
             {"created_at", j.created_at},
             {"target_language", code(j.target_lang)},
             {"voice_gender", to_string(j.voice_gender)}};
    json progress{{"completed", j.completed_stages}, {"total", kAllStages.size()}};
    progress["current_stage"] =
        (!is_terminal(j.state) && j.state != JobState::queued && j.completed_stages < kAllStages.size())
            ? json(to_string(kAllStages[j.completed_stages]))
            : json(nullptr);
    doc["stage_progress"] = std::move(progress);
    json history = json::array();
    for (const auto& h : j.history) history.push_back({{"state", to_string(h.state)}, {"at", h.at}});
    doc["history"] = std::move(history);
    if (j.error) doc["error"] = {{"stage", j.failed_stage ? json(to_string(*j.failed_stage)) : json(nullptr)},
                                 {"message", *j.error}};
    if (j.state == JobState::done) {
        const std::string base = "/api/v1/jobs/" + j.id + "/result/";
        doc["result_links"] = {{"video", base + "video"}, {"transcript", base + "transcript"}, {"source", base + "source"}};
        doc["warnings"] = j.warnings;
    }
    return doc;
}

inline std::string media_type_for(const fs::path& p) {
    static const std::map<std::string, std::string> kTypes{
        {".mp4", "video/mp4"},   {".m4v", "video/mp4"},        {".mov", "video/quicktime"}, {".webm", "video/webm"},
        {".mkv", "video/x-matroska"}, {".avi", "video/x-msvideo"}, {".wav", "audio/wav"},       {".json", "application/json"}};
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto it = kTypes.find(ext);
    return it == kTypes.end() ? "application/octet-stream" : it->second;
}

// ---------------------------------------------------------------------------
// Service

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    fs::path data_dir = "dubpipe-data";
    std::size_t workers = 0;  // 0 means hardware concurrency
    std::size_t upload_limit = 512u * 1024u * 1024u;
    std::optional<std::string> token;
    // Template for every job; target language and voice come from the upload.
    pipeline::PipelineConfig pipeline{};

    void validate() const {
        if (port < 0 || port > 65535) throw ConfigError("port must be in [0, 65535]");
        if (upload_limit == 0) throw ConfigError("upload limit must be positive");
        if (token && token->empty()) throw ConfigError("bearer token must be non-empty");
        auto probe = pipeline;
        probe.target_lang = Language::hi;
        probe.voice = backends::VoiceModel::standard(Language::hi, Gender::female);
        probe.validate();
    }
};

class Service {
public:
    explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        store_.emplace(cfg_.data_dir);
    }

    ~Service() { stop(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Recovers the store, binds the listener and starts the workers.
    /// Returns once the server accepts connections.
    void start() {
        if (running_) return;
        for (const auto& id : store_->recover()) enqueue(id);
        routes();
        port_ = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : (server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
        if (port_ < 0) throw IoError("cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
        stopping_ = false;
        const std::size_t n = cfg_.workers ? cfg_.workers : std::max(1u, std::thread::hardware_concurrency());
        for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { work(); });
        http_thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        running_ = true;
    }

    /// Stops accepting requests and waits for running jobs to finish. Jobs
    /// still queued stay queued on disk and are picked up by the next start.
    void stop() {
        if (!running_) return;
        server_.stop();
        if (http_thread_.joinable()) http_thread_.join();
        {
            std::lock_guard lock(queue_mu_);
            stopping_ = true;
        }
        queue_cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
        running_ = false;
    }

    int port() const noexcept { return port_; }
    JobStore& store() { return *store_; }
    const ServiceConfig& config() const noexcept { return cfg_; }

private:
    void enqueue(const std::string& id) {
        {
            std::lock_guard lock(queue_mu_);
            queue_.push_back(id);
        }
        queue_cv_.notify_one();
    }

    void work() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(queue_mu_);
                queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (stopping_) return;
                id = std::move(queue_.front());
                queue_.pop_front();
            }
            process(id);
        }
    }

    void process(const std::string& id) {
        auto job = store_->load(id);
        if (!job || job->state != JobState::queued) return;
        auto cfg = cfg_.pipeline;
        cfg.target_lang = job->target_lang;
        cfg.voice = backends::VoiceModel::standard(job->target_lang, job->voice_gender);
        std::error_code ec;
        fs::remove_all(store_->work_dir(id), ec);

        pipeline::PipelineObserver observer;
        observer.on_stage_start = [&](Stage s) {
            const auto next = state_for(s);
            store_->update(id, [&](DubJob& j) {
                if (j.state != next) j.transition(next);
            });
        };
        observer.on_stage_done = [&](const pipeline::StageArtifact&) {
            store_->update(id, [](DubJob& j) { ++j.completed_stages; });
        };

        try {
            auto result = pipeline::run_pipeline(store_->source_path(*job), store_->work_dir(id), cfg, observer);
            store_->update(id, [&](DubJob& j) {
                j.video_out = result.video_out.filename().string();
                j.warnings = result.warnings;
                j.transition(JobState::done);
            });
        } catch (const pipeline::PipelineError& e) {
            fail(id, e.stage(), e.what());
        } catch (const std::exception& e) {
            fail(id, std::nullopt, e.what());
        }
    }

    void fail(const std::string& id, std::optional<Stage> stage, const std::string& message) {
        store_->update(id, [&](DubJob& j) {
            j.failed_stage = stage;
            j.error = message;
            j.transition(JobState::failed);
        });
    }

    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& message,
                           const std::optional<std::string>& field = std::nullopt) {
        json body{{"error", message}};
        if (field) body["field"] = *field;
        send_json(res, status, body);
    }

    static std::optional<std::string> form_value(const httplib::Request& req, const std::string& name) {
        if (!req.has_file(name)) return std::nullopt;
        return req.get_file_value(name).content;
    }

    void routes() {
        // Multipart framing adds a little on top of the file itself.
        server_.set_payload_max_length(cfg_.upload_limit + 64 * 1024);
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            send_error(res, 500, what);
        });
        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            if (res.status == 413) send_error(res, 413, "upload exceeds the configured size limit");
            else if (res.status == 404) send_error(res, 404, "not found");
        });
        if (cfg_.token) {
            server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
                if (!req.path.starts_with("/api/v1/") || req.path == "/api/v1/health")
                    return httplib::Server::HandlerResponse::Unhandled;
                if (req.get_header_value("Authorization") == "Bearer " + *cfg_.token)
                    return httplib::Server::HandlerResponse::Unhandled;
                res.set_header("WWW-Authenticate", "Bearer");
                send_error(res, 401, "missing or invalid bearer token");
                return httplib::Server::HandlerResponse::Handled;
            });
        }

        server_.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });

        server_.Post("/api/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) { create_job(req, res); });

        server_.Get("/api/v1/jobs", [this](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& j : store_->list()) out.push_back({{"job_id", j.id}, {"state", to_string(j.state)}});
            send_json(res, 200, out);
        });

        server_.Get(R"(/api/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto job = store_->load(req.matches[1]);
            if (!job) return send_error(res, 404, "unknown job id");
            send_json(res, 200, status_json(*job));
        });

        server_.Get(R"(/api/v1/jobs/([^/]+)/result/([^/]+))",
                    [this](const httplib::Request& req, httplib::Response& res) { get_result(req, res); });

        server_.Post(R"(/api/v1/jobs/([^/]+)/ratings)",
                     [this](const httplib::Request& req, httplib::Response& res) { post_rating(req, res); });

        server_.Get("/api/v1/agreement", [this](const httplib::Request& req, httplib::Response& res) {
            agreement::ReportQuery query;
            if (req.has_param("language") && !req.get_param_value("language").empty()) {
                query.language = try_parse_language(req.get_param_value("language"));
                if (!query.language) return send_error(res, 400, "unknown language", "language");
            }
            if (req.has_param("criterion") && !req.get_param_value("criterion").empty()) {
                query.criterion = agreement::try_parse_criterion(req.get_param_value("criterion"));
                if (!query.criterion) return send_error(res, 400, "unknown criterion", "criterion");
            }
            try {
                send_json(res, 200, agreement::to_json(agreement::build_report(store_->ratings(), query)));
            } catch (const ArgumentError& e) {
                send_error(res, 422, std::string("insufficient data: ") + e.what());
            }
        });
    }

    void create_job(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) return send_error(res, 400, "expected multipart/form-data upload");
        if (!req.has_file("video")) return send_error(res, 400, "a video file is required", "video");
        const auto& video = req.get_file_value("video");
        if (video.content.empty()) return send_error(res, 400, "the uploaded video is empty", "video");
        if (video.content.size() > cfg_.upload_limit)
            return send_error(res, 413, "upload exceeds the " + std::to_string(cfg_.upload_limit) + "-byte limit",
                              "video");

        const auto lang_text = form_value(req, "target_language");
        if (!lang_text) return send_error(res, 400, "target_language is required", "target_language");
        const auto lang = try_parse_language(*lang_text);
        if (!lang || *lang == cfg_.pipeline.source_lang)
            return send_error(res, 400, "unsupported target_language '" + *lang_text + "' (expected bn, hi, ne or te)",
                              "target_language");

        const auto gender_text = form_value(req, "voice_gender");
        if (!gender_text) return send_error(res, 400, "voice_gender is required", "voice_gender");
        const auto gender = try_parse_gender(*gender_text);
        if (!gender)
            return send_error(res, 400, "unsupported voice_gender '" + *gender_text + "' (expected male or female)",
                              "voice_gender");

        auto job = store_->create(*lang, *gender, video.content, video.filename);
        enqueue(job.id);
        res.set_header("Location", "/api/v1/jobs/" + job.id);
        send_json(res, 202, {{"job_id", job.id}, {"state", to_string(job.state)}});
    }

    void get_result(const httplib::Request& req, httplib::Response& res) {
        auto job = store_->load(req.matches[1]);
        if (!job) return send_error(res, 404, "unknown job id");
        const std::string artifact = req.matches[2];
        if (artifact != "video" && artifact != "transcript" && artifact != "source")
            return send_error(res, 404, "unknown artifact '" + artifact + "' (expected video, transcript or source)");
        if (job->state != JobState::done)
            return send_error(res, 409, "job is " + std::string(to_string(job->state)) + ", results exist once it is done");

        fs::path path;
        std::string download;
        if (artifact == "video") {
            path = store_->video_out_path(*job);
            download = "dubbed-" + job->id + path.extension().string();
        } else if (artifact == "transcript") {
            path = store_->transcript_path(*job);
            download = "transcript-" + job->id + ".json";
        } else {
            path = store_->source_path(*job);
            download = job->original_filename.empty() ? path.filename().string() : job->original_filename;
        }
        if (!fs::is_regular_file(path)) return send_error(res, 500, "artifact missing from the job directory");
        const auto bytes = audio::read_file_bytes(path);
        res.set_header("Content-Disposition", "attachment; filename=\"" + sanitize_filename(download) + "\"");
        res.set_content(std::string(bytes.begin(), bytes.end()), media_type_for(path));
    }

    void post_rating(const httplib::Request& req, httplib::Response& res) {
        auto job = store_->load(req.matches[1]);
        if (!job) return send_error(res, 404, "unknown job id");
        if (job->state != JobState::done)
            return send_error(res, 409, "job is " + std::string(to_string(job->state)) + "; only finished jobs can be rated");
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            return send_error(res, 400, "request body is not valid JSON");
        }
        if (!body.is_object()) return send_error(res, 400, "request body must be a JSON object");
        if (!body.contains("rater_id") || !body["rater_id"].is_string() ||
            !is_valid_rater_id(body["rater_id"].get<std::string>()))
            return send_error(res, 422, "rater_id must be 1-64 characters of letters, digits, '_', '-', '.' or '@'",
                              "rater_id");
        std::array<std::pair<agreement::Criterion, int>, 3> scores{};
        for (std::size_t i = 0; i < agreement::kAllCriteria.size(); ++i) {
            const auto c = agreement::kAllCriteria[i];
            const std::string name(agreement::to_string(c));
            const auto it = body.find(name);
            if (it == body.end() || !it->is_number_integer())
                return send_error(res, 422, name + " must be an integer from 1 to 5", name);
            const auto v = it->get<long long>();
            if (v < agreement::kMinScore || v > agreement::kMaxScore)
                return send_error(res, 422, name + " must be an integer from 1 to 5 (got " + std::to_string(v) + ")",
                                  name);
            scores[i] = {c, static_cast<int>(v)};
        }
        const auto rater = body["rater_id"].get<std::string>();
        if (store_->add_ratings(*job, rater, scores) == RatingOutcome::duplicate)
            return send_error(res, 409, "rater '" + rater + "' has already rated this job");
        send_json(res, 201, {{"job_id", job->id}, {"rater_id", rater}, {"records", scores.size()}});
    }

    static std::string sanitize_filename(std::string name) {
        for (auto& c : name)
            if (c == '"' || c == '\\' || static_cast<unsigned char>(c) < 0x20) c = '_';
        return name;
    }

    ServiceConfig cfg_;
    std::optional<JobStore> store_;
    httplib::Server server_;
    int port_ = -1;
    std::atomic<bool> running_{false};
    std::thread http_thread_;
    std::vector<std::thread> workers_;
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<std::string> queue_;
    bool stopping_ = false;
};

} // namespace dubpipe::service

#pragma once

// ASR, translation and TTS stage interfaces. Each stage has a deterministic
// offline mock and a generic HTTP/JSON adapter.
//
// Remote wire format (one POST per request, JSON in and out):
//   ASR  {"audio_b64", "src"}               -> {"text"}
//   MT   {"text", "src", "tgt"}             -> {"translation"}
//   TTS  {"text", "tgt", "voice", "gender"} -> {"audio_b64"}   (WAV bytes)

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dubpipe/audio.hpp"
#include "dubpipe/digest.hpp"
#include "dubpipe/error.hpp"
#include "dubpipe/language.hpp"
#include "dubpipe/stage.hpp"

namespace dubpipe::backends {

using audio::AudioBuffer;

struct VoiceModel {
    std::string id = "default";
    Gender gender = Gender::female;
    Language language = Language::hi;

    void validate() const {
        if (id.empty()) throw ArgumentError("voice model id must be non-empty");
    }

    static VoiceModel standard(Language lang, Gender gender) {
        return {std::string(code(lang)) + "-" + std::string(to_string(gender)), gender, lang};
    }
};

struct TranscriptChunk {
    std::size_t segment_index = 0;
    std::string text;
    Language language = Language::en;

    bool operator==(const TranscriptChunk&) const = default;
};

enum class BackendKind { mock, remote };

constexpr std::string_view to_string(BackendKind k) noexcept { return k == BackendKind::mock ? "mock" : "remote"; }

inline BackendKind parse_backend_kind(std::string_view text) {
    if (text == "mock") return BackendKind::mock;
    if (text == "remote") return BackendKind::remote;
    throw ArgumentError("unknown backend kind '" + std::string(text) + "' (expected mock or remote)");
}

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string endpoint;  // remote only, e.g. http://127.0.0.1:8080/asr
    double timeout_s = 30.0;
    int retries = 2;
    // Root of the mock fixtures: dictionaries/<src>-<tgt>.tsv and an optional
    // asr_fixtures.tsv. Empty means built-in ASR table and no dictionaries.
    std::filesystem::path data_dir;

    void validate() const {
        if (kind == BackendKind::remote && endpoint.empty())
            throw ConfigError("remote backend requires an endpoint");
        if (!(timeout_s > 0.0)) throw ConfigError("backend timeout_s must be positive");
        if (retries < 0 || retries > 10) throw ConfigError("backend retries must be in [0, 10]");
    }
};

// ---------------------------------------------------------------------------
// Interfaces

class SpeechRecognizer {
public:
    virtual ~SpeechRecognizer() = default;
    virtual TranscriptChunk transcribe(const AudioBuffer& chunk, Language source, std::size_t segment_index) const = 0;
};

class Translator {
public:
    virtual ~Translator() = default;
    virtual std::string translate(const std::string& text, Language src, Language tgt) const = 0;
};

class Synthesizer {
public:
    virtual ~Synthesizer() = default;
    virtual AudioBuffer synthesize(const std::string& text, const VoiceModel& voice) const = 0;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    if (!lines.empty() && lines.front().starts_with("\xEF\xBB\xBF")) lines.front().erase(0, 3);
    return lines;
}

inline bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

/// Decodes UTF-8 into code points; malformed bytes become U+FFFD.
inline std::vector<char32_t> codepoints(std::string_view s) {
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < s.size();) {
        const auto b = static_cast<unsigned char>(s[i]);
        std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        char32_t cp = len == 1 ? b : b & (0xFF >> (len + 1));
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto c = static_cast<unsigned char>(s[i + k]);
            if ((c >> 6) != 0x2) ok = false;
            cp = (cp << 6) | (c & 0x3F);
        }
        out.push_back(ok ? cp : 0xFFFD);
        i += ok ? len : 1;
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) words.push_back(std::move(w));
    return words;
}

inline std::string ascii_lower(std::string s) {
    for (auto& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
    constexpr std::string_view kScheme = "http://";
    if (!url.starts_with(kScheme)) {
        if (url.starts_with("https://"))
            throw ConfigError("https endpoints are not supported; put a TLS-terminating proxy in front");
        throw ConfigError("endpoint '" + url + "' must start with http://");
    }
    const auto slash = url.find('/', kScheme.size());
    Endpoint ep;
    ep.origin = url.substr(0, slash);
    ep.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (ep.origin.size() == kScheme.size()) throw ConfigError("endpoint '" + url + "' has no host");
    return ep;
}

/// POSTs `body` and returns the parsed JSON reply. Transport errors and 5xx
/// replies are retried up to cfg.retries times; 4xx replies fail at once.
inline nlohmann::json post_json(const BackendConfig& cfg, Stage stage, const nlohmann::json& body) {
    const auto ep = parse_endpoint(cfg.endpoint);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        httplib::Client client(ep.origin);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        auto res = client.Post(ep.path, payload, "application/json");
        if (!res) {
            last_error = "request to " + cfg.endpoint + " failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + " from " + cfg.endpoint;
            continue;
        }
        if (res->status >= 400)
            throw BackendError(stage, "HTTP " + std::to_string(res->status) + " from " + cfg.endpoint + ": " +
                                          res->body.substr(0, 200));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
            throw BackendError(stage, "malformed JSON reply from " + cfg.endpoint);
        }
    }
    throw BackendError(stage, last_error + " (" + std::to_string(cfg.retries + 1) + " attempts)");
}

inline std::string reply_string(const nlohmann::json& reply, const char* field, Stage stage) {
    auto it = reply.find(field);
    if (it == reply.end() || !it->is_string())
        throw BackendError(stage, std::string("reply has no string field '") + field + "'");
    return it->get<std::string>();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Mock ASR

/// Duration-keyed canned transcripts. A chunk maps to the entry whose
/// duration is nearest its own (ties go to the shorter entry).
class AsrFixtureTable {
public:
    AsrFixtureTable() = default;
    explicit AsrFixtureTable(std::vector<std::pair<double, std::string>> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw ArgumentError("ASR fixture table is empty");
        for (const auto& [d, text] : entries_)
            if (!(d > 0.0) || text.empty()) throw ArgumentError("ASR fixture entries need a positive duration and text");
        std::stable_sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    static AsrFixtureTable builtin() {
        return AsrFixtureTable({{0.5, "yes"},
                                {1.0, "hello world"},
                                {1.5, "good morning friends"},
                                {2.0, "thank you very much"},
                                {3.0, "welcome everyone"},
                                {4.0, "today we speak about language and voice"}});
    }

    /// Lines of "seconds<TAB>text"; blank lines and '#' comments are skipped.
    static AsrFixtureTable load(const std::filesystem::path& path) {
        std::vector<std::pair<double, std::string>> entries;
        const auto lines = detail::read_lines(path);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (detail::skippable(lines[i])) continue;
            const auto tab = lines[i].find('\t');
            double d = 0.0;
            try {
                if (tab == std::string::npos) throw std::invalid_argument("no tab");
                d = std::stod(lines[i].substr(0, tab));
            } catch (const std::exception&) {
                throw FormatError(path.string() + ": line " + std::to_string(i + 1) + ": expected seconds<TAB>text");
            }
            entries.emplace_back(d, lines[i].substr(tab + 1));
        }
        return AsrFixtureTable(std::move(entries));
    }

    const std::string& lookup(double seconds) const {
        const auto* best = &entries_.front();
        for (const auto& e : entries_)
            if (std::abs(e.first - seconds) < std::abs(best->first - seconds)) best = &e;
        return best->second;
    }

    const std::vector<std::pair<double, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<double, std::string>> entries_;
};

class MockRecognizer final : public SpeechRecognizer {
public:
    explicit MockRecognizer(AsrFixtureTable table = AsrFixtureTable::builtin()) : table_(std::move(table)) {}

    TranscriptChunk transcribe(const AudioBuffer& chunk, Language source, std::size_t segment_index) const override {
        if (chunk.empty()) throw ArgumentError("cannot transcribe an empty chunk");
        audio::require_valid(chunk);
        return {segment_index, table_.lookup(chunk.duration_seconds()), source};
    }

private:
    AsrFixtureTable table_;
};

// ---------------------------------------------------------------------------
// Mock MT

using Dictionary = std::unordered_map<std::string, std::string>;

/// Lines of "source<TAB>target". Later duplicates override earlier ones.
inline Dictionary load_dictionary(const std::filesystem::path& path) {
    Dictionary dict;
    const auto lines = detail::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::skippable(lines[i])) continue;
        const auto tab = lines[i].find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == lines[i].size())
            throw FormatError(path.string() + ": line " + std::to_string(i + 1) + ": expected source<TAB>target");
        dict[lines[i].substr(0, tab)] = lines[i].substr(tab + 1);
    }
    return dict;
}

class MockTranslator final : public Translator {
public:
    MockTranslator() = default;

    void add(Language src, Language tgt, Dictionary dict) { dicts_[{src, tgt}] = std::move(dict); }

    /// Loads every dictionaries/<src>-<tgt>.tsv found under `data_dir`.
    static MockTranslator from_directory(const std::filesystem::path& data_dir) {
        MockTranslator t;
        for (auto src : kAllLanguages)
            for (auto tgt : kAllLanguages) {
                if (src == tgt) continue;
                const auto p = data_dir / "dictionaries" / (std::string(code(src)) + "-" + std::string(code(tgt)) + ".tsv");
                if (std::filesystem::exists(p)) t.add(src, tgt, load_dictionary(p));
            }
        return t;
    }

    bool has_dictionary(Language src, Language tgt) const { return dicts_.count({src, tgt}) != 0; }

    /// Word-for-word lookup. A word is tried verbatim, then lower-cased, then
    /// with trailing punctuation split off; unknown words pass through.
    std::string translate(const std::string& text, Language src, Language tgt) const override {
        if (src == tgt) throw ArgumentError("source and target language are both " + std::string(code(src)));
        const auto words = detail::split_words(text);
        if (words.empty()) throw ArgumentError("cannot translate empty text");
        const auto it = dicts_.find({src, tgt});
        std::string out;
        for (const auto& w : words) {
            if (!out.empty()) out.push_back(' ');
            out += it == dicts_.end() ? w : lookup(it->second, w);
        }
        return out;
    }

private:
    static std::string lookup(const Dictionary& dict, const std::string& word) {
        if (auto hit = find(dict, word)) return *hit;
        std::size_t cut = word.size();
        while (cut > 0 && std::ispunct(static_cast<unsigned char>(word[cut - 1]))) --cut;
        if (cut > 0 && cut < word.size())
            if (auto hit = find(dict, word.substr(0, cut))) return *hit + word.substr(cut);
        return word;
    }

    static std::optional<std::string> find(const Dictionary& dict, const std::string& word) {
        if (auto it = dict.find(word); it != dict.end()) return it->second;
        if (auto it = dict.find(detail::ascii_lower(word)); it != dict.end()) return it->second;
        return std::nullopt;
    }

    std::map<std::pair<Language, Language>, Dictionary> dicts_;
};

// ---------------------------------------------------------------------------
// Mock TTS

inline constexpr double kMockCharSeconds = 0.080;
inline constexpr double kMockAmplitude = 0.5;

constexpr double mock_base_frequency(Gender g) noexcept { return g == Gender::male ? 110.0 : 220.0; }

/// Tone frequency for one code point. The per-character offset is
/// 10 Hz per step at the male base and scales with the base, so the
/// female voice is exactly one octave above the male one for any text.
constexpr double mock_char_frequency(char32_t cp, Gender g) noexcept {
    const double base = mock_base_frequency(g);
    return base + 10.0 * (base / 110.0) * static_cast<double>(cp % 16);
}

class MockSynthesizer final : public Synthesizer {
public:
    explicit MockSynthesizer(int sample_rate = audio::kDefaultWorkingRate) : rate_(sample_rate) {
        if (rate_ <= 0) throw ArgumentError("sample rate must be positive");
    }

    AudioBuffer synthesize(const std::string& text, const VoiceModel& voice) const override {
        voice.validate();
        const auto cps = detail::codepoints(text);
        if (cps.empty()) throw ArgumentError("cannot synthesize empty text");
        const auto per_char = static_cast<std::size_t>(std::lround(kMockCharSeconds * rate_));
        AudioBuffer out{std::vector<float>(per_char * cps.size()), rate_};
        double phase = 0.0;
        std::size_t n = 0;
        for (char32_t cp : cps) {
            const double step = 2.0 * std::numbers::pi * mock_char_frequency(cp, voice.gender) / rate_;
            for (std::size_t i = 0; i < per_char; ++i, ++n) {
                out.samples[n] = static_cast<float>(kMockAmplitude * std::sin(phase));
                phase = std::fmod(phase + step, 2.0 * std::numbers::pi);
            }
        }
        return out;
    }

private:
    int rate_;
};

// ---------------------------------------------------------------------------
// Remote adapters

class RemoteRecognizer final : public SpeechRecognizer {
public:
    explicit RemoteRecognizer(BackendConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        detail::parse_endpoint(cfg_.endpoint);
    }

    TranscriptChunk transcribe(const AudioBuffer& chunk, Language source, std::size_t segment_index) const override {
        if (chunk.empty()) throw ArgumentError("cannot transcribe an empty chunk");
        const auto wav = audio::encode_wav(chunk);
        nlohmann::json body{{"audio_b64", digest::base64_encode(wav)}, {"src", code(source)}};
        const auto reply = detail::post_json(cfg_, Stage::asr, body);
        return {segment_index, detail::reply_string(reply, "text", Stage::asr), source};
    }

private:
    BackendConfig cfg_;
};

class RemoteTranslator final : public Translator {
public:
    explicit RemoteTranslator(BackendConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        detail::parse_endpoint(cfg_.endpoint);
    }

    std::string translate(const std::string& text, Language src, Language tgt) const override {
        if (src == tgt) throw ArgumentError("source and target language are both " + std::string(code(src)));
        if (text.empty()) throw ArgumentError("cannot translate empty text");
        nlohmann::json body{{"text", text}, {"src", code(src)}, {"tgt", code(tgt)}};
        return detail::reply_string(detail::post_json(cfg_, Stage::translate, body), "translation", Stage::translate);
    }

private:
    BackendConfig cfg_;
};

class RemoteSynthesizer final : public Synthesizer {
public:
    explicit RemoteSynthesizer(BackendConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        detail::parse_endpoint(cfg_.endpoint);
    }

    AudioBuffer synthesize(const std::string& text, const VoiceModel& voice) const override {
        voice.validate();
        if (text.empty()) throw ArgumentError("cannot synthesize empty text");
        nlohmann::json body{
            {"text", text}, {"tgt", code(voice.language)}, {"voice", voice.id}, {"gender", to_string(voice.gender)}};
        const auto b64 = detail::reply_string(detail::post_json(cfg_, Stage::tts, body), "audio_b64", Stage::tts);
        try {
            return audio::decode_wav(digest::base64_decode(b64));
        } catch (const Error& e) {
            throw BackendError(Stage::tts, std::string("undecodable audio in reply: ") + e.what());
        }
    }

private:
    BackendConfig cfg_;
};

// ---------------------------------------------------------------------------
// Factories and one-shot helpers

inline std::shared_ptr<const SpeechRecognizer> make_recognizer(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == BackendKind::remote) return std::make_shared<RemoteRecognizer>(cfg);
    const auto table = cfg.data_dir / "asr_fixtures.tsv";
    if (!cfg.data_dir.empty() && std::filesystem::exists(table))
        return std::make_shared<MockRecognizer>(AsrFixtureTable::load(table));
    return std::make_shared<MockRecognizer>();
}

inline std::shared_ptr<const Translator> make_translator(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == BackendKind::remote) return std::make_shared<RemoteTranslator>(cfg);
    return std::make_shared<MockTranslator>(cfg.data_dir.empty() ? MockTranslator{}
                                                                  : MockTranslator::from_directory(cfg.data_dir));
}

inline std::shared_ptr<const Synthesizer> make_synthesizer(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == BackendKind::remote) return std::make_shared<RemoteSynthesizer>(cfg);
    return std::make_shared<MockSynthesizer>();
}

inline TranscriptChunk asr_transcribe(const AudioBuffer& chunk, Language source_lang, const BackendConfig& cfg,
                                      std::size_t segment_index = 0) {
    return make_recognizer(cfg)->transcribe(chunk, source_lang, segment_index);
}

inline std::string translate_text(const std::string& text, Language src, Language tgt, const BackendConfig& cfg) {
    return make_translator(cfg)->translate(text, src, tgt);
}

inline AudioBuffer tts_synthesize(const std::string& text, const VoiceModel& voice, const BackendConfig& cfg) {
    return make_synthesizer(cfg)->synthesize(text, voice);
}

} // namespace dubpipe::backends

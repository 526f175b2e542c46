#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "dubpipe/backends.hpp"
#include "dubpipe/refine.hpp"
#include "support/oracles.hpp"

using namespace dubpipe;
using namespace dubpipe::backends;

namespace {

const std::filesystem::path kDataDir = std::filesystem::path(DUBPIPE_SOURCE_DIR) / "data";

// Minimal HTTP stub on an ephemeral port; handlers are set per test.
class StubServer {
public:
    StubServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig remote(const std::string& endpoint, int retries = 0) {
    BackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint = endpoint;
    cfg.timeout_s = 2.0;
    cfg.retries = retries;
    return cfg;
}

BackendConfig mock_with_data() {
    BackendConfig cfg;
    cfg.data_dir = kDataDir;
    return cfg;
}

} // namespace

TEST(BackendConfig, Validation) {
    BackendConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.kind = BackendKind::remote;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.endpoint = "http://localhost:1/x";
    cfg.timeout_s = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(backends::detail::parse_endpoint("https://x/y"), ConfigError);
    EXPECT_THROW(backends::detail::parse_endpoint("ftp://x"), ConfigError);
    auto ep = backends::detail::parse_endpoint("http://h:81/a/b");
    EXPECT_EQ(ep.origin, "http://h:81");
    EXPECT_EQ(ep.path, "/a/b");
    EXPECT_EQ(backends::detail::parse_endpoint("http://h").path, "/");
}

TEST(MockAsr, FixtureLookupByDuration) {
    MockRecognizer asr(AsrFixtureTable({{1.0, "hello world"}}));
    auto chunk = audio::tone(200, 1.0);
    auto t = asr.transcribe(chunk, Language::en, 3);
    EXPECT_EQ(t.text, "hello world");
    EXPECT_EQ(t.segment_index, 3u);
    EXPECT_EQ(t.language, Language::en);
}

TEST(MockAsr, NearestEntryWins) {
    MockRecognizer asr;
    EXPECT_EQ(asr.transcribe(audio::tone(200, 0.9), Language::en, 0).text, "hello world");
    EXPECT_EQ(asr.transcribe(audio::tone(200, 0.1), Language::en, 0).text, "yes");
    EXPECT_EQ(asr.transcribe(audio::tone(200, 9.0), Language::en, 0).text,
              AsrFixtureTable::builtin().entries().back().second);
}

TEST(MockAsr, EmptyChunkRejected) {
    MockRecognizer asr;
    EXPECT_THROW(asr.transcribe(audio::AudioBuffer{{}, 16000}, Language::en, 0), ArgumentError);
}

TEST(MockAsr, TableFileParsing) {
    auto path = std::filesystem::temp_directory_path() / "dubpipe_asr_table.tsv";
    {
        std::ofstream(path) << "# comment\n0.7\tshort one\n2.5\tlonger one\n";
    }
    auto table = AsrFixtureTable::load(path);
    EXPECT_EQ(table.lookup(0.6), "short one");
    EXPECT_EQ(table.lookup(2.0), "longer one");
    {
        std::ofstream(path) << "0.7 no tab here\n";
    }
    EXPECT_THROW(AsrFixtureTable::load(path), FormatError);
    std::filesystem::remove(path);
}

TEST(MockMt, DictionaryLookupAndPassthrough) {
    MockTranslator mt;
    mt.add(Language::en, Language::hi, {{"hello", "नमस्ते"}});
    EXPECT_EQ(mt.translate("hello", Language::en, Language::hi), "नमस्ते");
    EXPECT_EQ(mt.translate("zzxy hello", Language::en, Language::hi), "zzxy नमस्ते");
    EXPECT_EQ(mt.translate("Hello!", Language::en, Language::hi), "नमस्ते!");
}

TEST(MockMt, ErrorCases) {
    MockTranslator mt;
    EXPECT_THROW(mt.translate("hello", Language::hi, Language::hi), ArgumentError);
    EXPECT_THROW(mt.translate("", Language::en, Language::hi), ArgumentError);
    EXPECT_THROW(mt.translate("   ", Language::en, Language::hi), ArgumentError);
}

TEST(MockMt, ShippedDictionariesCoverEveryTarget) {
    auto mt = MockTranslator::from_directory(kDataDir);
    for (auto tgt : kTargetLanguages) EXPECT_TRUE(mt.has_dictionary(Language::en, tgt)) << code(tgt);
    EXPECT_EQ(mt.translate("hello", Language::en, Language::hi), "नमस्ते");
    // Every fixture transcript translates fully.
    const auto table = AsrFixtureTable::builtin();
    for (const auto& [d, text] : table.entries())
        for (auto tgt : kTargetLanguages) {
            auto out = backends::detail::split_words(mt.translate(text, Language::en, tgt));
            auto in = backends::detail::split_words(text);
            ASSERT_EQ(out.size(), in.size());
            for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NE(out[i], in[i]) << text << " -> " << code(tgt);
        }
}

TEST(MockMt, TokenCountPreservedForInDictionaryInput) {
    auto dict = load_dictionary(kDataDir / "dictionaries" / "en-te.tsv");
    std::vector<std::string> keys;
    for (const auto& [k, v] : dict) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    MockTranslator mt;
    mt.add(Language::en, Language::te, dict);
    std::mt19937 rng(8);
    std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1), len(1, 12);
    for (int trial = 0; trial < 100; ++trial) {
        std::string text;
        std::size_t n = len(rng);
        for (std::size_t i = 0; i < n; ++i) text += (i ? " " : "") + keys[pick(rng)];
        EXPECT_EQ(backends::detail::split_words(mt.translate(text, Language::en, Language::te)).size(), n);
    }
}

TEST(MockMt, MalformedDictionaryLineNamed) {
    auto path = std::filesystem::temp_directory_path() / "dubpipe_bad_dict.tsv";
    {
        std::ofstream(path) << "good\tok\nbroken line\n";
    }
    try {
        load_dictionary(path);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST(MockTts, DurationIsEightyMillisecondsPerCharacter) {
    MockSynthesizer tts;
    auto buf = tts.synthesize("abcdefghij", VoiceModel::standard(Language::hi, Gender::male));
    EXPECT_EQ(buf.sample_rate, 16000);
    EXPECT_NEAR(buf.duration_seconds(), 0.80, 1.0 / 16000);
    // Code points, not bytes: four Devanagari characters are twelve bytes.
    auto hi = tts.synthesize("नमस्ते", VoiceModel::standard(Language::hi, Gender::male));
    EXPECT_EQ(hi.size(), 6u * 1280u);
}

TEST(MockTts, Deterministic) {
    MockSynthesizer tts;
    auto v = VoiceModel::standard(Language::bn, Gender::female);
    EXPECT_EQ(tts.synthesize("hello there", v), tts.synthesize("hello there", v));
}

TEST(MockTts, FemaleIsOneOctaveAboveMale) {
    MockSynthesizer tts;
    auto male = tts.synthesize("aaaa", VoiceModel::standard(Language::hi, Gender::male));
    auto female = tts.synthesize("aaaa", VoiceModel::standard(Language::hi, Gender::female));
    const double fm = refine::estimate_pitch(male).mean_f0;
    const double ff = refine::estimate_pitch(female).mean_f0;
    EXPECT_NEAR(ff / fm, 2.0, 0.04);
    // Independent check of the per-character frequency: 'a' = 97, 97 mod 16 = 1.
    EXPECT_NEAR(oracle::zero_crossing_frequency(male.samples, 16000), 120.0, 1.2);
    EXPECT_NEAR(oracle::zero_crossing_frequency(female.samples, 16000), 240.0, 2.4);
}

TEST(MockTts, AmplitudeAndEmptyText) {
    MockSynthesizer tts;
    auto buf = tts.synthesize("xyz", VoiceModel{});
    float peak = 0;
    for (float s : buf.samples) peak = std::max(peak, std::abs(s));
    EXPECT_NEAR(peak, 0.5f, 1e-3);
    EXPECT_THROW(tts.synthesize("", VoiceModel{}), ArgumentError);
    EXPECT_THROW(tts.synthesize("a", VoiceModel{"", Gender::male, Language::hi}), ArgumentError);
}

TEST(MockTts, PhaseContinuousAcrossCharacters) {
    MockSynthesizer tts;
    auto buf = tts.synthesize("ab", VoiceModel::standard(Language::te, Gender::male));
    // Largest sample-to-sample jump is bounded by the steepest tone's slope.
    const double max_step = 2 * std::numbers::pi * 130.0 / 16000 * 0.5 * 1.01;
    for (std::size_t i = 1; i < buf.size(); ++i) ASSERT_LE(std::abs(buf.samples[i] - buf.samples[i - 1]), max_step);
}

TEST(RemoteAsr, ReturnsServiceText) {
    StubServer stub;
    nlohmann::json seen;
    stub.server().Post("/asr", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"text":"good morning"})", "application/json");
    });
    auto chunk = audio::tone(300, 0.25);
    auto t = asr_transcribe(chunk, Language::en, remote(stub.url("/asr")), 2);
    EXPECT_EQ(t.text, "good morning");
    EXPECT_EQ(t.segment_index, 2u);
    EXPECT_EQ(seen["src"], "en");
    EXPECT_EQ(audio::decode_wav(digest::base64_decode(seen["audio_b64"].get<std::string>())).size(), chunk.size());
}

TEST(RemoteMt, ReturnsServiceTranslation) {
    StubServer stub;
    nlohmann::json seen;
    stub.server().Post("/mt", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"translation":"नमस्ते दुनिया"})", "application/json");
    });
    EXPECT_EQ(translate_text("hello world", Language::en, Language::hi, remote(stub.url("/mt"))), "नमस्ते दुनिया");
    EXPECT_EQ(seen["text"], "hello world");
    EXPECT_EQ(seen["tgt"], "hi");
}

TEST(RemoteTts, DecodesReturnedAudio) {
    StubServer stub;
    auto reply_audio = audio::tone(440, 0.1, 22050);
    stub.server().Post("/tts", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        EXPECT_EQ(body["gender"], "male");
        res.set_content(nlohmann::json{{"audio_b64", digest::base64_encode(audio::encode_wav(reply_audio))}}.dump(),
                        "application/json");
    });
    auto buf = tts_synthesize("hi", VoiceModel::standard(Language::ne, Gender::male), remote(stub.url("/tts")));
    EXPECT_EQ(buf.sample_rate, 22050);
    EXPECT_EQ(buf.size(), reply_audio.size());
}

TEST(RemoteAdapters, ServerErrorsRetriedAtMostRetriesTimes) {
    StubServer stub;
    std::atomic<int> hits{0};
    stub.server().Post("/asr", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    for (int retries : {0, 1, 3}) {
        hits = 0;
        try {
            asr_transcribe(audio::tone(200, 0.1), Language::en, remote(stub.url("/asr"), retries));
            FAIL();
        } catch (const BackendError& e) {
            EXPECT_EQ(e.stage(), Stage::asr);
        }
        EXPECT_EQ(hits.load(), retries + 1);
    }
}

TEST(RemoteAdapters, ClientErrorsAreNotRetried) {
    StubServer stub;
    std::atomic<int> hits{0};
    stub.server().Post("/mt", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad", "text/plain");
    });
    try {
        translate_text("x", Language::en, Language::bn, remote(stub.url("/mt"), 4));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.stage(), Stage::translate);
        EXPECT_NE(std::string(e.what()).find("400"), std::string::npos);
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST(RemoteAdapters, UnreachableEndpointTaggedWithStage) {
    // Port 1 on loopback refuses connections.
    try {
        tts_synthesize("x", VoiceModel{}, remote("http://127.0.0.1:1/tts", 1));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.stage(), Stage::tts);
    }
}

TEST(RemoteAdapters, MalformedReplies) {
    StubServer stub;
    stub.server().Post("/asr", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    stub.server().Post("/tts", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"audio_b64":"AAAA"})", "application/json");
    });
    EXPECT_THROW(asr_transcribe(audio::tone(200, 0.1), Language::en, remote(stub.url("/asr"))), BackendError);
    EXPECT_THROW(tts_synthesize("x", VoiceModel{}, remote(stub.url("/tts"))), BackendError);
}

TEST(RemoteAdapters, ConcurrentRequests) {
    StubServer stub;
    stub.server().Post("/mt", [](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        res.set_content(nlohmann::json{{"translation", "<" + body["text"].get<std::string>() + ">"}}.dump(),
                        "application/json");
    });
    RemoteTranslator mt(remote(stub.url("/mt")));
    std::vector<std::thread> threads;
    std::vector<std::string> out(8);
    for (std::size_t i = 0; i < out.size(); ++i)
        threads.emplace_back([&, i] { out[i] = mt.translate("w" + std::to_string(i), Language::en, Language::ne); });
    for (auto& t : threads) t.join();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], "<w" + std::to_string(i) + ">");
}

TEST(Digest, Base64RoundTripAndSha256) {
    std::mt19937 rng(2);
    for (std::size_t n = 0; n < 40; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
        EXPECT_EQ(digest::base64_decode(digest::base64_encode(bytes)), bytes);
    }
    EXPECT_EQ(digest::base64_encode(std::vector<std::uint8_t>{'M', 'a'}), "TWE=");
    EXPECT_THROW(digest::base64_decode("abc"), FormatError);
    EXPECT_EQ(digest::sha256_hex(std::string_view("abc")),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

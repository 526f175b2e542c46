#include <gtest/gtest.h>

#include <random>

#include "dubpipe/segmenter.hpp"

using namespace dubpipe;
using namespace dubpipe::segment;
using audio::AudioBuffer;

namespace {

AudioBuffer concat(std::initializer_list<AudioBuffer> parts) {
    AudioBuffer out;
    for (const auto& p : parts) out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
    return out;
}

std::size_t covered(const std::vector<SpeechInterval>& ivs) {
    std::size_t total = 0;
    for (const auto& iv : ivs) total += iv.length();
    return total;
}

} // namespace

TEST(SplitNonsilent, DigitalSilenceHasNoIntervals) {
    EXPECT_TRUE(split_nonsilent(audio::silence(1.0), {}).empty());
}

TEST(SplitNonsilent, ConstantSignalIsOneInterval) {
    AudioBuffer b;
    b.samples.assign(20000, 0.5f);
    auto ivs = split_nonsilent(b, {});
    ASSERT_EQ(ivs.size(), 1u);
    EXPECT_EQ(ivs[0], (SpeechInterval{0, 20000}));
}

TEST(SplitNonsilent, ToneBetweenSilencesWithinOneHop) {
    auto b = concat({audio::silence(1.0), audio::tone(440.0, 1.0, 16000, 0.5), audio::silence(1.0)});
    auto ivs = split_nonsilent(b, {});
    ASSERT_EQ(ivs.size(), 1u);
    EXPECT_NEAR(static_cast<double>(ivs[0].start_sample), 16000.0, 512.0);
    EXPECT_NEAR(static_cast<double>(ivs[0].end_sample), 32000.0, 512.0);
}

TEST(SplitNonsilent, OnsetInsideFirstFrameIsRefined) {
    auto b = concat({audio::silence(0.0625), audio::tone(300.0, 0.5, 16000, 0.5), audio::silence(0.6)});
    auto ivs = split_nonsilent(b, {});
    ASSERT_EQ(ivs.size(), 1u);
    EXPECT_NEAR(static_cast<double>(ivs[0].start_sample), 1000.0, 512.0);
}

TEST(SplitNonsilent, ShortGapsMergeAndShortBlipsDrop) {
    SilenceConfig cfg;
    auto merged = concat({audio::silence(0.5), audio::tone(300, 0.4), audio::silence(0.1), audio::tone(300, 0.4),
                          audio::silence(0.5)});
    EXPECT_EQ(split_nonsilent(merged, cfg).size(), 1u);

    auto blip = concat({audio::silence(0.5), audio::tone(300, 0.01), audio::silence(0.5)});
    cfg.frame = {256, 128};
    EXPECT_TRUE(split_nonsilent(blip, cfg).empty());
}

TEST(SplitNonsilent, EmptyBufferIsArgumentError) {
    EXPECT_THROW(split_nonsilent(AudioBuffer{}, {}), ArgumentError);
}

TEST(SplitNonsilent, InvalidConfigRejected) {
    SilenceConfig cfg;
    cfg.top_db = 0;
    EXPECT_THROW(split_nonsilent(audio::tone(100, 0.5), cfg), ArgumentError);
    cfg = {};
    cfg.min_gap_s = -1;
    EXPECT_THROW(split_nonsilent(audio::tone(100, 0.5), cfg), ArgumentError);
}

TEST(SplitNonsilent, RaisingTopDbNeverShrinksCoverage) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> amp(0.001, 0.8), dur(0.05, 0.6);
    for (int trial = 0; trial < 20; ++trial) {
        AudioBuffer b;
        for (int k = 0; k < 6; ++k) {
            auto part = k % 2 ? audio::tone(200 + 50 * k, dur(rng), 16000, amp(rng)) : audio::silence(dur(rng));
            b.samples.insert(b.samples.end(), part.samples.begin(), part.samples.end());
        }
        std::size_t previous = 0;
        for (double db : {10.0, 20.0, 30.0, 40.0, 60.0, 80.0}) {
            SilenceConfig cfg;
            cfg.top_db = db;
            auto ivs = split_nonsilent(b, cfg);
            for (std::size_t i = 1; i < ivs.size(); ++i) ASSERT_LT(ivs[i - 1].end_sample, ivs[i].start_sample);
            const auto now = covered(ivs);
            EXPECT_GE(now, previous) << "top_db " << db;
            previous = now;
        }
    }
}

TEST(ExtractChunks, SlicesExactly) {
    AudioBuffer ramp;
    for (int i = 0; i < 30; ++i) ramp.samples.push_back(static_cast<float>(i) / 100.0f);
    auto chunks = extract_chunks(ramp, {{0, 10}, {20, 30}});
    ASSERT_EQ(chunks.size(), 2u);
    for (int i = 0; i < 10; ++i) {
        EXPECT_FLOAT_EQ(chunks[0].samples[static_cast<std::size_t>(i)], static_cast<float>(i) / 100.0f);
        EXPECT_FLOAT_EQ(chunks[1].samples[static_cast<std::size_t>(i)], static_cast<float>(i + 20) / 100.0f);
    }
    EXPECT_EQ(chunks[0].sample_rate, ramp.sample_rate);
}

TEST(ExtractChunks, EmptyAndWholeBuffer) {
    auto b = audio::tone(100, 0.1);
    EXPECT_TRUE(extract_chunks(b, {}).empty());
    auto whole = extract_chunks(b, {{0, b.size()}});
    ASSERT_EQ(whole.size(), 1u);
    EXPECT_EQ(whole[0], b);
}

TEST(ExtractChunks, OutOfRangeIsArgumentError) {
    auto b = audio::tone(100, 0.1);
    EXPECT_THROW(extract_chunks(b, {{0, b.size() + 1}}), ArgumentError);
    EXPECT_THROW(extract_chunks(b, {{10, 10}}), ArgumentError);
}

TEST(Manifest, CarriesSampleAndSecondBounds) {
    auto doc = manifest_json({{1600, 3200}}, 16000);
    ASSERT_EQ(doc.size(), 1u);
    EXPECT_EQ(doc[0]["index"], 0);
    EXPECT_EQ(doc[0]["start_sample"], 1600);
    EXPECT_DOUBLE_EQ(doc[0]["start_s"].get<double>(), 0.1);
    EXPECT_DOUBLE_EQ(doc[0]["end_s"].get<double>(), 0.2);
    EXPECT_EQ(intervals_from_manifest(doc), (std::vector<SpeechInterval>{{1600, 3200}}));
    EXPECT_THROW(intervals_from_manifest(nlohmann::json::object()), FormatError);
}

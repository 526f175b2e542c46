#include <gtest/gtest.h>

#include <random>

#include "dubpipe/refine.hpp"
#include "support/oracles.hpp"

using namespace dubpipe;
using namespace dubpipe::refine;
using audio::AudioBuffer;
using dubpipe::oracle::zero_crossing_frequency;

namespace {

AudioBuffer from(std::vector<float> s, int rate = 16000) {
    AudioBuffer b;
    b.sample_rate = rate;
    b.samples = std::move(s);
    return b;
}

AudioBuffer white_noise(double seconds, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    AudioBuffer b;
    b.samples.resize(static_cast<std::size_t>(seconds * b.sample_rate));
    for (auto& s : b.samples) s = u(rng);
    return b;
}

} // namespace

TEST(EstimatePitch, PureToneAt440) {
    auto est = estimate_pitch(audio::tone(440.0, 1.0, 16000));
    EXPECT_NEAR(est.mean_f0, 440.0, 4.4);
    EXPECT_GT(est.voiced_fraction, 0.9);
}

TEST(EstimatePitch, SilenceIsUnvoiced) {
    EXPECT_THROW(estimate_pitch(audio::silence(1.0)), UnvoicedError);
}

TEST(EstimatePitch, OutOfBandComponentIgnored) {
    auto low = oracle::sine(100.0, 1.0, 16000, 0.4);
    auto high = oracle::sine(3000.0, 1.0, 16000, 0.4);
    for (std::size_t i = 0; i < low.size(); ++i) low[i] += high[i];
    auto est = estimate_pitch(from(low));
    EXPECT_NEAR(est.mean_f0, 100.0, 2.0);
}

TEST(EstimatePitch, StrictBandRejectsTonesAboveIt) {
    EXPECT_THROW(estimate_pitch(audio::tone(440.0, 1.0), VocalBand::strict()), UnvoicedError);
    auto est = estimate_pitch(audio::tone(92.0, 1.0), VocalBand::strict());
    EXPECT_NEAR(est.mean_f0, 92.0, 1.0);
}

TEST(EstimatePitch, WhiteNoiseIsUnvoiced) {
    EXPECT_THROW(estimate_pitch(white_noise(1.0, 5)), UnvoicedError);
}

TEST(EstimatePitch, TooShortIsArgumentError) {
    EXPECT_THROW(estimate_pitch(audio::tone(440.0, 0.01)), ArgumentError);
}

TEST(EstimatePitch, InvalidBandRejected) {
    EXPECT_THROW(estimate_pitch(audio::tone(440.0, 1.0), VocalBand{200, 100}), ArgumentError);
}

TEST(ShiftSteps, EqualFrequenciesGiveZero) {
    EXPECT_DOUBLE_EQ(shift_steps(100, 100).n_steps, 0.0);
    EXPECT_DOUBLE_EQ(shift_steps(100, 100, StepReading::squared_log).n_steps, 0.0);
}

TEST(ShiftSteps, OctaveUnderBothReadings) {
    EXPECT_NEAR(shift_steps(174.62, 87.31).n_steps, 2.0, 1e-12);
    EXPECT_NEAR(shift_steps(174.62, 87.31, StepReading::squared_log).n_steps, 1.0, 1e-12);
    EXPECT_NEAR(shift_steps(87.31, 174.62).n_steps, -2.0, 1e-12);
    EXPECT_NEAR(shift_steps(87.31, 174.62, StepReading::squared_log).n_steps, 1.0, 1e-12);
}

TEST(ShiftSteps, NonPositiveFrequencyRejected) {
    EXPECT_THROW(shift_steps(0, 100), ArgumentError);
    EXPECT_THROW(shift_steps(100, -1), ArgumentError);
}

TEST(PitchShift, ZeroStepsIsIdentity) {
    auto b = audio::tone(440.0, 0.5);
    auto out = pitch_shift(b, 0.0);
    EXPECT_EQ(out, b);
    EXPECT_NEAR(zero_crossing_frequency(out.samples, 16000), 440.0, 2.2);
}

TEST(PitchShift, OctaveUpAndDown) {
    auto b = audio::tone(440.0, 1.0);
    auto up = pitch_shift(b, 12.0);
    auto down = pitch_shift(b, -12.0);
    EXPECT_EQ(up.size(), b.size());
    EXPECT_EQ(down.size(), b.size());
    EXPECT_NEAR(zero_crossing_frequency(up.samples, 16000), 880.0, 17.6);
    EXPECT_NEAR(zero_crossing_frequency(down.samples, 16000), 220.0, 4.4);
}

TEST(PitchShift, EmptyIsArgumentError) {
    EXPECT_THROW(pitch_shift(AudioBuffer{}, 3.0), ArgumentError);
}

TEST(TimeStretch, UnitRateKeepsDuration) {
    auto b = audio::tone(300.0, 1.0);
    EXPECT_EQ(time_stretch(b, 1.0).size(), b.size());
}

TEST(TimeStretch, DoubleRateHalvesDuration) {
    auto out = time_stretch(audio::tone(300.0, 2.0), 2.0);
    EXPECT_NEAR(out.duration_seconds(), 1.0, std::max(0.02, 2048.0 / 16000));
}

TEST(TimeStretch, PreservesPitch) {
    auto out = time_stretch(audio::tone(440.0, 1.0), 1.5);
    EXPECT_NEAR(zero_crossing_frequency(out.samples, 16000), 440.0, 8.8);
}

TEST(TimeStretch, NonPositiveRateRejected) {
    EXPECT_THROW(time_stretch(audio::tone(300.0, 0.1), 0.0), ArgumentError);
    EXPECT_THROW(time_stretch(audio::tone(300.0, 0.1), -2.0), ArgumentError);
}

TEST(TimeStretch, InverseRecoversDuration) {
    auto b = audio::tone(250.0, 0.8);
    auto back = time_stretch(time_stretch(b, 1.7), 1.0 / 1.7);
    EXPECT_LE(std::abs(static_cast<double>(back.size()) - static_cast<double>(b.size())), 2.0 * 2048);
}

TEST(MatchSegment, SameDurationSamePitchIsNearIdentity) {
    auto synth = audio::tone(200.0, 1.0);
    auto res = match_segment(synth, audio::tone(200.0, 1.0), VocalBand{});
    ASSERT_TRUE(res.applied_semitones.has_value());
    EXPECT_NEAR(*res.applied_semitones, 0.0, 0.1);
    EXPECT_DOUBLE_EQ(res.stretch_rate, 1.0);
    EXPECT_EQ(res.audio.size(), synth.size());
    EXPECT_NEAR(zero_crossing_frequency(res.audio.samples, 16000), 200.0, 2.0);
}

TEST(MatchSegment, FitsDurationAndPitchOfSource) {
    auto res = match_segment(audio::tone(220.0, 2.0), audio::tone(110.0, 1.0), VocalBand{});
    EXPECT_EQ(res.audio.size(), 16000u);
    ASSERT_TRUE(res.applied_semitones.has_value());
    EXPECT_NEAR(*res.applied_semitones, -12.0, 0.3);
    EXPECT_NEAR(zero_crossing_frequency(res.audio.samples, 16000), 110.0, 2.2);
    EXPECT_TRUE(res.warnings.empty());
}

TEST(MatchSegment, SemitoneReadingMovesOnlyTwoSemitones) {
    RefineConfig cfg;
    cfg.steps_per_octave = 12.0;
    auto res = match_segment(audio::tone(220.0, 1.0), audio::tone(110.0, 1.0), cfg);
    ASSERT_TRUE(res.applied_semitones.has_value());
    EXPECT_NEAR(*res.applied_semitones, -2.0, 0.05);
    EXPECT_NEAR(zero_crossing_frequency(res.audio.samples, 16000), 220.0 * std::exp2(-2.0 / 12.0), 220 * 0.02);
}

TEST(MatchSegment, UnvoicedSynthSkipsPitchWithWarning) {
    auto res = match_segment(white_noise(1.5, 9), audio::tone(150.0, 1.0), VocalBand{});
    EXPECT_EQ(res.audio.size(), 16000u);
    EXPECT_FALSE(res.applied_semitones.has_value());
    ASSERT_FALSE(res.warnings.empty());
    EXPECT_NE(res.warnings[0].find("unvoiced"), std::string::npos);
}

TEST(MatchSegment, ExtremeRatioClampedWithWarning) {
    auto res = match_segment(audio::tone(200.0, 2.0), audio::tone(200.0, 0.2), VocalBand{});
    EXPECT_DOUBLE_EQ(res.stretch_rate, 3.0);
    EXPECT_EQ(res.audio.size(), 3200u);
    EXPECT_FALSE(res.warnings.empty());
}

TEST(MatchSegment, SampleRateMismatchRejected) {
    EXPECT_THROW(match_segment(audio::tone(200.0, 1.0, 16000), audio::tone(200.0, 1.0, 8000), VocalBand{}),
                 ArgumentError);
}

TEST(MatchSegment, OutputDurationMatchesSourceForRandomInputs) {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> dur(0.3, 1.5), f(110.0, 330.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto src = audio::tone(f(rng), dur(rng));
        auto res = match_segment(audio::tone(f(rng), dur(rng)), src, VocalBand{});
        const double tol = std::max(0.02 * static_cast<double>(src.size()), 2048.0);
        EXPECT_LE(std::abs(static_cast<double>(res.audio.size()) - static_cast<double>(src.size())), tol);
    }
}

#pragma once

// Stand-ins for the external tools and a synthetic "video" for pipeline,
// service and CLI tests. The fixture video is a WAV file; the stub extractor
// copies it and the stub muxer concatenates picture and audio.

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "dubpipe/audio.hpp"
#include "dubpipe/pipeline.hpp"

namespace dubpipe::fixture {

namespace fs = std::filesystem;

inline const fs::path kDataDir = fs::path(DUBPIPE_SOURCE_DIR) / "data";

inline constexpr const char* kStubExtractor = "cp {in} {out}";
inline constexpr const char* kStubMuxer = "cat {in} {audio} > {out}";
inline constexpr const char* kStubLipsync = "cp {in} {out}";

/// 1 s silence, 1 s of a 150 Hz tone, 1 s silence at 16 kHz.
inline audio::AudioBuffer three_second_layout() {
    auto buf = audio::silence(1.0);
    auto t = audio::tone(150.0, 1.0);
    buf.samples.insert(buf.samples.end(), t.samples.begin(), t.samples.end());
    auto tail = audio::silence(1.0);
    buf.samples.insert(buf.samples.end(), tail.samples.begin(), tail.samples.end());
    return buf;
}

/// Fresh empty directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                ("dubpipe-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline fs::path write_fixture_video(const fs::path& dir, const audio::AudioBuffer& buf = three_second_layout(),
                                    const std::string& name = "source.wav") {
    audio::write_wav_file(dir / name, buf);
    return dir / name;
}

inline pipeline::PipelineConfig stub_config(Language target = Language::hi, Gender gender = Gender::female) {
    pipeline::PipelineConfig cfg;
    cfg.target_lang = target;
    cfg.voice = backends::VoiceModel::standard(target, gender);
    cfg.extractor_cmd = {kStubExtractor};
    cfg.muxer_cmd = {kStubMuxer};
    cfg.lipsync_cmd = {kStubLipsync};
    cfg.asr.data_dir = cfg.mt.data_dir = cfg.tts.data_dir = kDataDir;
    return cfg;
}

} // namespace dubpipe::fixture

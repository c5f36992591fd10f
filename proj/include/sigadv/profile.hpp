#pragma once

#include "sigadv/attack.hpp"
#include "sigadv/detector.hpp"
#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

namespace sigadv::desk {

// Desk-scale experiment profile: 128x128 spectrograms (n_fft 256, 128 frames),
// 3 burst classes, ~200 signals. The recording sample rate is nominal.

inline constexpr int kSampleRate = 1'000'000;
inline constexpr int kFrames = 128;
inline constexpr int kNFiles = 200;
inline constexpr double kValFrac = 0.2;

inline StftConfig stft_config() {
    StftConfig cfg;
    cfg.n_fft = 256;
    cfg.overlap = 128;  // 50% overlap, hop 128
    return cfg;
}

/// Configuration used by the reference experiments (2048-point, 48 overlap).
inline StftConfig paper_stft_config() {
    StftConfig cfg;
    cfg.n_fft = 2048;
    cfg.overlap = 48;  // hop 2000
    return cfg;
}

inline std::size_t signal_length(const StftConfig& cfg, int frames = kFrames) {
    return static_cast<std::size_t>(frames - 1) * cfg.hop() +
           static_cast<std::size_t>(cfg.win_len());
}

inline GenConfig gen_config(std::uint64_t seed) {
    GenConfig cfg;
    cfg.seed = seed;
    cfg.sample_rate = kSampleRate;
    cfg.signal_length = signal_length(stft_config());
    return cfg;
}

inline DetectorConfig detector_config() {
    DetectorConfig cfg;
    cfg.input_h = 128;
    cfg.input_w = 128;
    cfg.grid_s = 8;
    cfg.n_classes = 3;
    cfg.channels = {16, 32, 64, 64};
    return cfg;
}

inline TrainOptions train_options(std::uint64_t seed) {
    TrainOptions opt;
    opt.seed = seed;
    return opt;
}

inline AttackConfig attack_config() { return AttackConfig{}; }

}  // namespace sigadv::desk

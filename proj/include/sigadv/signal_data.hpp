#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sigadv {

/// Real-valued time-domain samples, normalized to [-1, 1].
struct SignalBuffer {
    std::vector<double> samples;
    int sample_rate = 0;  // Hz

    std::size_t size() const { return samples.size(); }
};

/// Normalized box label. cx is the time-center fraction of the recording,
/// cy the frequency-center fraction of [0, fs/2] (0 = DC, 1 = Nyquist).
struct GroundTruthLabel {
    int class_id = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
};

enum class BurstKind { Tone, LinearChirp, TwoToneFsk };

struct GenConfig {
    int n_bursts_min = 0;
    int n_bursts_max = 6;
    double freq_min_hz = 40'000.0;
    double freq_max_hz = 460'000.0;
    double duration_min_s = 0.002;
    double duration_max_s = 0.004;
    double amplitude_min = 0.3;
    double amplitude_max = 0.8;
    double noise_floor_std = 0.01;
    std::vector<BurstKind> burst_kinds = {BurstKind::Tone, BurstKind::LinearChirp,
                                          BurstKind::TwoToneFsk};
    std::size_t signal_length = 16512;
    int sample_rate = 1'000'000;
    std::uint64_t seed = 0;
};

struct GeneratedSignal {
    SignalBuffer signal;
    std::vector<GroundTruthLabel> labels;
};

struct DatasetEntry {
    std::string signal_path;  // relative to the manifest directory
    std::string label_path;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    int sample_rate = 0;
    std::uint64_t master_seed = 0;
    std::size_t signal_length = 0;
    std::vector<DatasetEntry> entries;
};

/// Raw little-endian signed 16-bit integers, no header; values scaled by 1/32768.
SignalBuffer read_signal_file(const std::filesystem::path& path, int sample_rate);

/// Quantizes via round(sample*32767). Out-of-range samples are clamped;
/// returns how many were.
std::size_t write_signal_file(const SignalBuffer& buffer, const std::filesystem::path& path);

std::vector<GroundTruthLabel> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::vector<GroundTruthLabel>& labels,
                      const std::filesystem::path& path);

/// Deterministic multi-burst synthesis: each burst yields exactly one label
/// covering its time-frequency support, over a white noise floor.
GeneratedSignal generate_burst_signal(const GenConfig& config);

DatasetManifest build_dataset(int n_files, const GenConfig& config,
                              const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace sigadv

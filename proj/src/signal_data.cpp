#include "sigadv/signal_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sigadv/common.hpp"

namespace sigadv {

namespace fs = std::filesystem;

SignalBuffer read_signal_file(const fs::path& path, int sample_rate) {
    if (sample_rate <= 0) throw std::invalid_argument("read_signal_file: sample_rate must be positive");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_signal_file: cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes == 0) throw std::runtime_error("read_signal_file: empty file " + path.string());
    if (bytes % 2 != 0)
        throw std::runtime_error("read_signal_file: odd byte count in " + path.string());

    std::vector<unsigned char> raw(static_cast<std::size_t>(bytes));
    in.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (!in) throw std::runtime_error("read_signal_file: short read from " + path.string());

    SignalBuffer buf;
    buf.sample_rate = sample_rate;
    buf.samples.resize(raw.size() / 2);
    for (std::size_t i = 0; i < buf.samples.size(); ++i) {
        const auto lo = static_cast<std::uint16_t>(raw[2 * i]);
        const auto hi = static_cast<std::uint16_t>(raw[2 * i + 1]);
        const auto u = static_cast<std::uint16_t>(lo | (hi << 8));
        buf.samples[i] = static_cast<double>(static_cast<std::int16_t>(u)) / 32768.0;
    }
    return buf;
}

std::size_t write_signal_file(const SignalBuffer& buffer, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_signal_file: cannot open " + path.string());
    std::size_t clamped = 0;
    std::vector<unsigned char> raw(buffer.samples.size() * 2);
    for (std::size_t i = 0; i < buffer.samples.size(); ++i) {
        double s = buffer.samples[i];
        if (!std::isfinite(s)) throw std::runtime_error("write_signal_file: non-finite sample");
        if (s > 1.0 || s < -1.0) {
            s = std::clamp(s, -1.0, 1.0);
            ++clamped;
        }
        const auto q = static_cast<std::int16_t>(std::lround(s * 32767.0));
        const auto u = static_cast<std::uint16_t>(q);
        raw[2 * i] = static_cast<unsigned char>(u & 0xff);
        raw[2 * i + 1] = static_cast<unsigned char>(u >> 8);
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write_signal_file: short write to " + path.string());
    return clamped;
}

std::vector<GroundTruthLabel> read_label_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_label_file: cannot open " + path.string());
    std::vector<GroundTruthLabel> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        GroundTruthLabel l;
        if (!(ls >> l.class_id >> l.cx >> l.cy >> l.w >> l.h))
            throw std::runtime_error("read_label_file: malformed line in " + path.string());
        out.push_back(l);
    }
    return out;
}

void write_label_file(const std::vector<GroundTruthLabel>& labels, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_label_file: cannot open " + path.string());
    for (const auto& l : labels) {
        out << l.class_id << ' ' << fmt_double(l.cx) << ' ' << fmt_double(l.cy) << ' '
            << fmt_double(l.w) << ' ' << fmt_double(l.h) << '\n';
    }
}

namespace {

// Spectral-leakage allowance added to label heights, as a fraction of Nyquist.
constexpr double kFreqLabelMargin = 0.07;

GroundTruthLabel clamp_to_unit_square(GroundTruthLabel l) {
    const double x0 = std::clamp(l.cx - l.w / 2, 0.0, 1.0);
    const double x1 = std::clamp(l.cx + l.w / 2, 0.0, 1.0);
    const double y0 = std::clamp(l.cy - l.h / 2, 0.0, 1.0);
    const double y1 = std::clamp(l.cy + l.h / 2, 0.0, 1.0);
    l.cx = (x0 + x1) / 2;
    l.cy = (y0 + y1) / 2;
    l.w = x1 - x0;
    l.h = y1 - y0;
    return l;
}

}  // namespace

GeneratedSignal generate_burst_signal(const GenConfig& config) {
    if (config.signal_length == 0) throw std::invalid_argument("generate_burst_signal: empty signal");
    if (config.sample_rate <= 0) throw std::invalid_argument("generate_burst_signal: bad sample rate");
    if (config.burst_kinds.empty()) throw std::invalid_argument("generate_burst_signal: no burst kinds");
    if (config.n_bursts_min > config.n_bursts_max)
        throw std::invalid_argument("generate_burst_signal: n_bursts range inverted");
    const double fs = config.sample_rate;
    const auto max_dur = static_cast<std::size_t>(config.duration_max_s * fs);
    if (config.n_bursts_max > 0 && max_dur > config.signal_length)
        throw std::invalid_argument("generate_burst_signal: burst longer than signal");

    Rng rng(config.seed);
    GeneratedSignal out;
    out.signal.sample_rate = config.sample_rate;
    out.signal.samples.assign(config.signal_length, 0.0);
    auto& x = out.signal.samples;

    for (auto& s : x) s = config.noise_floor_std * rng.normal();

    const auto n_bursts =
        static_cast<int>(rng.uniform_int(config.n_bursts_min, config.n_bursts_max));
    const double nyquist = fs / 2;
    const std::size_t total = config.signal_length;

    for (int b = 0; b < n_bursts; ++b) {
        const BurstKind kind =
            config.burst_kinds[static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(config.burst_kinds.size()) - 1))];
        const double amp = rng.uniform(config.amplitude_min, config.amplitude_max);
        const double dur_s = rng.uniform(config.duration_min_s, config.duration_max_s);
        const auto dur = std::max<std::size_t>(16, static_cast<std::size_t>(dur_s * fs));
        const auto start = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(total - std::min(dur, total))));
        const double f0 = rng.uniform(config.freq_min_hz, config.freq_max_hz);

        double f1 = f0;           // chirp end frequency
        double fsk_delta = 0.0;   // FSK tone spacing
        std::size_t fsk_chunk = dur;
        if (kind == BurstKind::LinearChirp) {
            const double span = rng.uniform(0.05, 0.15) * nyquist;
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            f1 = std::clamp(f0 + sign * span, config.freq_min_hz, config.freq_max_hz);
        } else if (kind == BurstKind::TwoToneFsk) {
            fsk_delta = rng.uniform(0.06, 0.12) * nyquist;
            if (f0 + fsk_delta > config.freq_max_hz) fsk_delta = -fsk_delta;
            fsk_chunk = std::max<std::size_t>(
                32, dur / static_cast<std::size_t>(rng.uniform_int(4, 10)));
        }
        const double phase0 = rng.uniform(0.0, 2 * kPi);

        const std::size_t end = std::min(total, start + dur);
        const std::size_t ramp = std::max<std::size_t>(8, dur / 20);
        double phase = phase0;
        for (std::size_t n = start; n < end; ++n) {
            const std::size_t k = n - start;
            double f_inst = f0;
            if (kind == BurstKind::LinearChirp) {
                f_inst = f0 + (f1 - f0) * static_cast<double>(k) / static_cast<double>(dur);
            } else if (kind == BurstKind::TwoToneFsk) {
                f_inst = ((k / fsk_chunk) % 2 == 0) ? f0 : f0 + fsk_delta;
            }
            phase += 2 * kPi * f_inst / fs;
            double env = 1.0;
            if (k < ramp) env = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(k) / ramp);
            const std::size_t from_end = end - 1 - n;
            if (from_end < ramp)
                env = std::min(env, 0.5 - 0.5 * std::cos(kPi * static_cast<double>(from_end) / ramp));
            x[n] += amp * env * std::sin(phase);
        }

        GroundTruthLabel label;
        label.class_id = static_cast<int>(kind);
        label.cx = (static_cast<double>(start) + static_cast<double>(end - start) / 2) /
                   static_cast<double>(total);
        label.w = static_cast<double>(end - start) / static_cast<double>(total);
        if (kind == BurstKind::LinearChirp) {
            label.cy = (f0 + f1) / 2 / nyquist;
            label.h = std::abs(f1 - f0) / nyquist + kFreqLabelMargin;
        } else if (kind == BurstKind::TwoToneFsk) {
            label.cy = (f0 + f0 + fsk_delta) / 2 / nyquist;
            label.h = std::abs(fsk_delta) / nyquist + kFreqLabelMargin;
        } else {
            label.cy = f0 / nyquist;
            label.h = kFreqLabelMargin;
        }
        out.labels.push_back(clamp_to_unit_square(label));
    }

    double peak = 0.0;
    for (double s : x) peak = std::max(peak, std::abs(s));
    if (peak > 0.99) {
        const double scale = 0.99 / peak;
        for (auto& s : x) s *= scale;
    }
    return out;
}

DatasetManifest build_dataset(int n_files, const GenConfig& config, const fs::path& out_dir) {
    if (n_files < 0) throw std::invalid_argument("build_dataset: negative file count");
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.sample_rate = config.sample_rate;
    manifest.master_seed = config.seed;
    manifest.signal_length = config.signal_length;
    manifest.entries.resize(static_cast<std::size_t>(n_files));

    parallel_for(static_cast<std::size_t>(n_files), 0, [&](std::size_t i) {
        char sig_name[32], lab_name[32];
        std::snprintf(sig_name, sizeof(sig_name), "sig_%04zu.i16", i);
        std::snprintf(lab_name, sizeof(lab_name), "sig_%04zu.txt", i);
        GenConfig local = config;
        local.seed = derive_seed(config.seed, i);
        const GeneratedSignal gen = generate_burst_signal(local);
        write_signal_file(gen.signal, out_dir / sig_name);
        write_label_file(gen.labels, out_dir / lab_name);
        manifest.entries[i] = DatasetEntry{sig_name, lab_name, local.seed};
    });

    write_manifest(manifest, out_dir / "manifest.txt");
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path.string());
    out << "# sigadv dataset manifest\n";
    out << "sample_rate " << manifest.sample_rate << '\n';
    out << "master_seed " << manifest.master_seed << '\n';
    out << "signal_length " << manifest.signal_length << '\n';
    out << "count " << manifest.entries.size() << '\n';
    for (const auto& e : manifest.entries)
        out << "entry " << e.signal_path << ' ' << e.label_path << ' ' << e.seed << '\n';
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + path.string());
    DatasetManifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "sample_rate") ls >> m.sample_rate;
        else if (key == "master_seed") ls >> m.master_seed;
        else if (key == "signal_length") ls >> m.signal_length;
        else if (key == "count") { std::size_t n; ls >> n; m.entries.reserve(n); }
        else if (key == "entry") {
            DatasetEntry e;
            ls >> e.signal_path >> e.label_path >> e.seed;
            m.entries.push_back(e);
        } else {
            throw std::runtime_error("read_manifest: unknown key '" + key + "'");
        }
        if (!ls) throw std::runtime_error("read_manifest: malformed line '" + line + "'");
    }
    return m;
}

}  // namespace sigadv

#include "sigadv/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sigadv/attack.hpp"
#include "sigadv/common.hpp"
#include "sigadv/detector.hpp"
#include "sigadv/metrics.hpp"
#include "sigadv/norm_theory.hpp"
#include "sigadv/profile.hpp"
#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

namespace sigadv {

namespace fs = std::filesystem;

namespace {

/// Expands "--config FILE" into --key value... tokens placed before the
/// user's explicit flags, so the command line overrides the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    out.reserve(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] != "--config") {
            out.push_back(args[i]);
            continue;
        }
        if (i + 1 >= args.size()) throw std::invalid_argument("--config requires a file path");
        const fs::path cfg_path = args[++i];
        std::ifstream in(cfg_path);
        if (!in) throw std::invalid_argument("cannot read config file " + cfg_path.string());
        std::vector<std::string> expanded;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::replace(line.begin(), line.end(), '=', ' ');
            std::istringstream ls(line);
            std::string key;
            if (!(ls >> key)) continue;
            expanded.push_back("--" + key);
            std::string tok;
            while (ls >> tok) expanded.push_back(tok);
        }
        // file-provided tokens go right after the subcommand token so that
        // later command-line flags take precedence
        const std::size_t pos = std::min<std::size_t>(out.size(), 1);
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), expanded.begin(),
                   expanded.end());
    }
    return out;
}

void write_run_config(const fs::path& out_dir, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "run_config.txt");
    if (!out) throw std::runtime_error("cannot write run_config.txt in " + out_dir.string());
    out << "command " << command << '\n';
    for (const auto& [k, v] : kv) out << k << ' ' << v << '\n';
}

DatasetManifest subset_manifest(const DatasetManifest& m, const std::string& which,
                                double val_frac) {
    if (which == "all") return m;
    DatasetManifest out = m;
    out.entries.clear();
    const std::size_t n = m.entries.size();
    const auto n_val = static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(n)));
    const std::size_t split = n - std::min(n, n_val);
    if (which == "train") {
        out.entries.assign(m.entries.begin(), m.entries.begin() + static_cast<std::ptrdiff_t>(split));
    } else if (which == "val") {
        out.entries.assign(m.entries.begin() + static_cast<std::ptrdiff_t>(split), m.entries.end());
    } else {
        throw std::invalid_argument("unknown subset '" + which + "' (use all|train|val)");
    }
    return out;
}

struct StftFlags {
    int n_fft;
    int overlap;

    explicit StftFlags(const StftConfig& defaults)
        : n_fft(defaults.n_fft), overlap(defaults.overlap) {}

    void attach(CLI::App* cmd) {
        cmd->add_option("--n-fft", n_fft, "FFT size / window length")->capture_default_str();
        cmd->add_option("--overlap", overlap, "Overlap samples between frames")
            ->capture_default_str();
    }
    StftConfig config() const {
        StftConfig cfg;
        cfg.n_fft = n_fft;
        cfg.overlap = overlap;
        cfg.validate();
        return cfg;
    }
};

AttackMethod parse_method(const std::string& name) {
    if (name == "pgd") return AttackMethod::Pgd;
    if (name == "fgm") return AttackMethod::Fgm;
    if (name == "rn") return AttackMethod::RandomNoise;
    throw std::invalid_argument("unknown attack method '" + name + "' (use pgd|fgm|rn)");
}

NormScope parse_scope(const std::string& name) {
    if (name == "full") return NormScope::FullMatrix;
    if (name == "half") return NormScope::HalfSpectrum;
    throw std::invalid_argument("unknown norm scope '" + name + "' (use full|half)");
}

std::string joined(const std::vector<double>& v) {
    std::string out;
    for (double x : v) {
        if (!out.empty()) out += ' ';
        out += fmt_double(x);
    }
    return out;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string out;
    int n = desk::kNFiles;
    std::uint64_t seed = 42;
    int frames = desk::kFrames;
    StftFlags stft{desk::stft_config()};
    int sample_rate = desk::kSampleRate;
    int bursts_min = 0;
    int bursts_max = 6;
    double freq_min = 40'000, freq_max = 460'000;
    double dur_min = 0.0015, dur_max = 0.004;
    double amp_min = 0.25, amp_max = 0.8;
    double noise_std = 0.01;
};

int run_gen_data(const GenDataArgs& a) {
    if (a.bursts_min > a.bursts_max)
        throw std::invalid_argument("invalid range: bursts-min > bursts-max");
    if (a.freq_min > a.freq_max)
        throw std::invalid_argument("invalid range: freq-min > freq-max");
    if (a.dur_min > a.dur_max)
        throw std::invalid_argument("invalid range: dur-min > dur-max");
    if (a.amp_min > a.amp_max)
        throw std::invalid_argument("invalid range: amp-min > amp-max");
    const StftConfig stft_cfg = a.stft.config();

    GenConfig cfg;
    cfg.seed = a.seed;
    cfg.sample_rate = a.sample_rate;
    cfg.signal_length = desk::signal_length(stft_cfg, a.frames);
    cfg.n_bursts_min = a.bursts_min;
    cfg.n_bursts_max = a.bursts_max;
    cfg.freq_min_hz = a.freq_min;
    cfg.freq_max_hz = a.freq_max;
    cfg.duration_min_s = a.dur_min;
    cfg.duration_max_s = a.dur_max;
    cfg.amplitude_min = a.amp_min;
    cfg.amplitude_max = a.amp_max;
    cfg.noise_floor_std = a.noise_std;

    const DatasetManifest manifest = build_dataset(a.n, cfg, a.out);
    write_run_config(a.out, "gen-data",
                     {{"n", std::to_string(a.n)},
                      {"seed", std::to_string(a.seed)},
                      {"frames", std::to_string(a.frames)},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)},
                      {"sample_rate", std::to_string(a.sample_rate)},
                      {"signal_length", std::to_string(cfg.signal_length)},
                      {"bursts_min", std::to_string(a.bursts_min)},
                      {"bursts_max", std::to_string(a.bursts_max)},
                      {"freq_min", fmt_double(a.freq_min)},
                      {"freq_max", fmt_double(a.freq_max)},
                      {"dur_min", fmt_double(a.dur_min)},
                      {"dur_max", fmt_double(a.dur_max)},
                      {"amp_min", fmt_double(a.amp_min)},
                      {"amp_max", fmt_double(a.amp_max)},
                      {"noise_std", fmt_double(a.noise_std)}});
    std::cout << "wrote " << manifest.entries.size() << " signal/label pairs to " << a.out
              << '\n';
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string out;
    StftFlags stft{desk::stft_config()};
    int epochs = 320;
    int batch = 8;
    double lr = 0.003;
    double momentum = 0.9;
    double lr_drop_frac = 0.8;
    double lr_drop_factor = 0.1;
    double jitter = 0.1;
    std::uint64_t seed = 1;
    double val_frac = desk::kValFrac;
    int val_interval = 10;
    int threads = 0;
    int grid = 8;
    std::vector<int> channels = {16, 32, 64, 64};
    double conf = 0.25;
    double nms = 0.45;
};

int run_train(const TrainArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const DatasetManifest manifest = read_manifest(fs::path(a.data) / "manifest.txt");
    if (manifest.entries.empty()) throw std::invalid_argument("dataset manifest is empty");

    const DatasetManifest train_m = subset_manifest(manifest, "train", a.val_frac);
    const DatasetManifest val_m = subset_manifest(manifest, "val", a.val_frac);
    if (train_m.entries.empty()) throw std::invalid_argument("training split is empty");

    const auto train_samples = load_samples(train_m, a.data, stft_cfg, a.threads);
    const auto val_samples = load_samples(val_m, a.data, stft_cfg, a.threads);

    DetectorConfig det_cfg;
    det_cfg.input_h = stft_cfg.n_fft / 2;
    det_cfg.input_w = static_cast<int>((manifest.signal_length - stft_cfg.win_len()) /
                                       static_cast<std::size_t>(stft_cfg.hop())) +
                      1;
    det_cfg.grid_s = a.grid;
    det_cfg.n_classes = 3;
    det_cfg.channels = a.channels;
    det_cfg.conf_thresh = a.conf;
    det_cfg.nms_iou = a.nms;
    det_cfg.validate();

    TrainOptions opt;
    opt.epochs = a.epochs;
    opt.batch_size = a.batch;
    opt.lr = a.lr;
    opt.momentum = a.momentum;
    opt.lr_drop_epoch_frac = a.lr_drop_frac;
    opt.lr_drop_factor = a.lr_drop_factor;
    opt.jitter_alpha_max = a.jitter;
    opt.seed = a.seed;
    opt.threads = a.threads;
    opt.val_interval = a.val_interval;

    EvalOptions eval_opt;
    eval_opt.threads = a.threads;

    TrainHistory history;
    const DetectorModel model0 = init_model(det_cfg, a.seed);
    const DetectorModel model =
        train(model0, train_samples, opt,
              val_samples.empty()
                  ? std::function<double(const DetectorModel&)>()
                  : [&](const DetectorModel& m) {
                        return evaluate_samples(m, val_samples, eval_opt).map;
                    },
              &history);

    fs::create_directories(a.out);
    save_model(model, fs::path(a.out) / "model.bin");
    {
        std::ofstream hist(fs::path(a.out) / "history.csv");
        hist << "epoch,train_loss,val_map\n";
        std::size_t v = 0;
        for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) {
            double val = -1.0;
            if (v < history.val_map.size() &&
                history.val_map[v].first == static_cast<int>(e) + 1)
                val = history.val_map[v++].second;
            hist << (e + 1) << ',' << fmt_double(history.epoch_loss[e]) << ','
                 << fmt_double(val) << '\n';
        }
    }
    write_run_config(a.out, "train",
                     {{"data", a.data},
                      {"epochs", std::to_string(a.epochs)},
                      {"batch", std::to_string(a.batch)},
                      {"lr", fmt_double(a.lr)},
                      {"momentum", fmt_double(a.momentum)},
                      {"lr_drop_frac", fmt_double(a.lr_drop_frac)},
                      {"lr_drop_factor", fmt_double(a.lr_drop_factor)},
                      {"jitter", fmt_double(a.jitter)},
                      {"seed", std::to_string(a.seed)},
                      {"val_frac", fmt_double(a.val_frac)},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)},
                      {"grid", std::to_string(a.grid)},
                      {"conf", fmt_double(a.conf)},
                      {"nms", fmt_double(a.nms)}});
    const double final_map = history.val_map.empty() ? -1.0 : history.val_map.back().second;
    std::cout << "trained " << a.epochs << " epochs; final val mAP = " << fmt_double(final_map)
              << '\n';
    return 0;
}

// ------------------------------------------------------------------ attack

struct AttackArgs {
    std::string data;
    std::string model;
    std::string out;
    StftFlags stft{desk::stft_config()};
    std::string method = "pgd";
    double alpha = 0.02;
    int iters = 50;
    double step_eps = 0.0;
    double clip_eps = 0.0;
    double decay = 0.5;
    double lambda = 1.0;
    std::uint64_t seed = 7;
    std::string norm_scope = "full";
    std::string subset = "all";
    double val_frac = desk::kValFrac;
    int threads = 0;
};

int run_attack(const AttackArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const AttackMethod method = parse_method(a.method);
    const DatasetManifest full = read_manifest(fs::path(a.data) / "manifest.txt");
    if (full.entries.empty()) throw std::invalid_argument("dataset manifest is empty");
    const DatasetManifest manifest = subset_manifest(full, a.subset, a.val_frac);

    const DetectorModel model = load_model(a.model);
    const int frames = static_cast<int>((full.signal_length - stft_cfg.win_len()) /
                                        static_cast<std::size_t>(stft_cfg.hop())) +
                       1;
    if (model.config.input_h != stft_cfg.n_fft / 2 || model.config.input_w != frames)
        throw std::invalid_argument("model input dims do not match the dataset/stft geometry");

    AttackConfig cfg;
    cfg.method = method;
    cfg.alpha = a.alpha;
    cfg.n_iter = a.iters;
    cfg.step_eps = a.step_eps;
    cfg.clip_eps = a.clip_eps;
    cfg.decay = a.decay;
    cfg.lambda = a.lambda;
    cfg.norm_scope = parse_scope(a.norm_scope);
    cfg.validate();

    fs::create_directories(a.out);
    const std::size_t n = manifest.entries.size();
    std::vector<std::pair<std::string, AttackReport>> rows(n);
    parallel_for(n, a.threads, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        const SignalBuffer sig = read_signal_file(fs::path(a.data) / entry.signal_path,
                                                  manifest.sample_rate);
        AdversarialExample adv;
        if (method == AttackMethod::RandomNoise) {
            adv = random_noise_baseline(sig, stft_cfg, a.alpha, derive_seed(a.seed, i));
            adv.report.detections_before =
                static_cast<int>(detect_signal(model, sig, stft_cfg).size());
            adv.report.detections_after =
                static_cast<int>(detect_signal(model, adv.signal, stft_cfg).size());
        } else {
            const TimeFreqMatrix y = stft(sig, stft_cfg);
            auto [mag, phase] = split(y);
            const DbMapping mapping = DbMapping::from_magnitude(mag);
            adv = method == AttackMethod::Fgm
                      ? fgm_attack(model, sig, stft_cfg, mapping, cfg)
                      : pgd_attack(model, sig, stft_cfg, mapping, cfg);
        }
        write_signal_file(adv.signal, fs::path(a.out) / ("adv_" + entry.signal_path));
        rows[i] = {entry.signal_path, std::move(adv.report)};
    });
    write_attack_report_csv(rows, fs::path(a.out) / "attack_report.csv");

    int violations = 0;
    for (const auto& [file, r] : rows)
        if (r.tf_ratio > a.alpha + 1e-6) ++violations;
    write_run_config(a.out, "attack",
                     {{"data", a.data},
                      {"model", a.model},
                      {"method", a.method},
                      {"alpha", fmt_double(a.alpha)},
                      {"iters", std::to_string(a.iters)},
                      {"step_eps", fmt_double(a.step_eps)},
                      {"clip_eps", fmt_double(a.clip_eps)},
                      {"decay", fmt_double(a.decay)},
                      {"lambda", fmt_double(a.lambda)},
                      {"seed", std::to_string(a.seed)},
                      {"norm_scope", a.norm_scope},
                      {"subset", a.subset},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)}});
    std::cout << "attacked " << n << " signals; tf-ratio violations: " << violations << '\n';
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string model;
    std::string out;
    StftFlags stft{desk::stft_config()};
    std::vector<double> alphas = {0.01, 0.02};
    std::vector<double> rn_alphas = {0.01, 0.02, 0.05, 0.1};
    std::vector<double> ratio_alphas = {0.01, 0.02, 0.05};
    std::string subset = "val";
    double val_frac = desk::kValFrac;
    std::uint64_t seed = 99;
    int iters = 50;
    double decay = 0.5;
    double lambda = 1.0;
    int threads = 0;
};

int run_eval(const EvalArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const DatasetManifest full = read_manifest(fs::path(a.data) / "manifest.txt");
    if (full.entries.empty()) throw std::invalid_argument("dataset manifest is empty");
    const DatasetManifest manifest = subset_manifest(full, a.subset, a.val_frac);
    if (manifest.entries.empty()) throw std::invalid_argument("selected subset is empty");

    const DetectorModel model = load_model(a.model);
    AttackConfig base;
    base.n_iter = a.iters;
    base.decay = a.decay;
    base.lambda = a.lambda;

    EvalOptions opt;
    opt.threads = a.threads;
    opt.seed = a.seed;

    const AttackExperimentResult result = attack_experiment(
        manifest, a.data, model, stft_cfg, a.alphas, a.rn_alphas, base, opt);
    const std::vector<RatioRow> ratios =
        ratio_experiment(manifest, a.data, &model, stft_cfg,
                         {AttackMethod::Fgm, AttackMethod::Pgd}, a.ratio_alphas, base, opt);

    fs::create_directories(a.out);
    write_table2_csv(result.rows, fs::path(a.out) / "table2_detection.csv");
    write_table1_csv(ratios, fs::path(a.out) / "table1_ratios.csv");

    for (const auto& row : result.rows)
        std::cout << row.sample_type << "  mAP=" << fmt_double(row.metrics.map)
                  << " recall=" << fmt_double(row.metrics.recall)
                  << " precision=" << fmt_double(row.metrics.precision) << '\n';
    for (const auto& r : ratios)
        std::cout << r.method << '_' << fmt_double(r.alpha)
                  << "  time-ratio mean=" << fmt_double(r.mean_ratio)
                  << " max=" << fmt_double(r.max_ratio) << " min=" << fmt_double(r.min_ratio)
                  << '\n';

    write_run_config(a.out, "eval",
                     {{"data", a.data},
                      {"model", a.model},
                      {"alphas", joined(a.alphas)},
                      {"rn_alphas", joined(a.rn_alphas)},
                      {"ratio_alphas", joined(a.ratio_alphas)},
                      {"subset", a.subset},
                      {"seed", std::to_string(a.seed)},
                      {"iters", std::to_string(a.iters)},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)}});
    return 0;
}

// --------------------------------------------------------------- roundtrip

struct RoundtripArgs {
    std::string data;
    std::string out;
    StftFlags stft{desk::paper_stft_config()};
    int threads = 0;
};

int run_roundtrip(const RoundtripArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const DatasetManifest manifest = read_manifest(fs::path(a.data) / "manifest.txt");
    if (manifest.entries.empty()) throw std::invalid_argument("dataset manifest is empty");
    EvalOptions opt;
    opt.threads = a.threads;
    const std::vector<RatioRow> rows =
        ratio_experiment(manifest, a.data, nullptr, stft_cfg, {}, {}, AttackConfig{}, opt);
    fs::create_directories(a.out);
    write_table1_csv(rows, fs::path(a.out) / "roundtrip.csv");
    write_run_config(a.out, "roundtrip",
                     {{"data", a.data},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)}});
    std::cout << "round-trip relative L2 error: mean=" << fmt_double(rows[0].mean_ratio)
              << " max=" << fmt_double(rows[0].max_ratio)
              << " min=" << fmt_double(rows[0].min_ratio) << '\n';
    return 0;
}

// ---------------------------------------------------------- verify-theorem

struct VerifyArgs {
    std::string data;
    std::string out;
    StftFlags stft{desk::paper_stft_config()};
    int trials = 1000;
    int max_signals = 8;
    std::uint64_t seed = 5;
    int threads = 0;
};

int run_verify_theorem(const VerifyArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const DatasetManifest manifest = read_manifest(fs::path(a.data) / "manifest.txt");
    if (manifest.entries.empty()) throw std::invalid_argument("dataset manifest is empty");

    std::vector<SignalBuffer> signals;
    for (std::size_t i = 0; i < manifest.entries.size() &&
                            i < static_cast<std::size_t>(a.max_signals);
         ++i)
        signals.push_back(read_signal_file(fs::path(a.data) / manifest.entries[i].signal_path,
                                           manifest.sample_rate));

    const auto rows = bound_monte_carlo(signals, stft_cfg, a.trials, a.seed, a.threads);
    fs::create_directories(a.out);
    write_bound_csv(rows, fs::path(a.out) / "bound_mc.csv");

    int holds = 0;
    double slack_min = 1e300, slack_max = 0, slack_sum = 0;
    for (const auto& r : rows) {
        holds += r.holds ? 1 : 0;
        slack_min = std::min(slack_min, r.slack_ratio);
        slack_max = std::max(slack_max, r.slack_ratio);
        slack_sum += r.slack_ratio;
    }
    // the cross-term inequality as written fails for aligned phases at n = 5
    const VectorSumCheck counter =
        vector_sum_inequality_check({1, 1, 1, 1, 1}, {0, 0, 0, 0, 0});

    std::ostringstream summary;
    summary << "trials=" << rows.size() << " holds=" << holds << " violations="
            << (rows.size() - static_cast<std::size_t>(holds))
            << " slack_mean=" << fmt_double(slack_sum / static_cast<double>(rows.size()))
            << " slack_min=" << fmt_double(slack_min) << " slack_max=" << fmt_double(slack_max)
            << " bound_constant=" << fmt_double(bound_constant(stft_cfg.n_fft))
            << " aligned5_lhs=" << fmt_double(counter.lhs)
            << " aligned5_rhs=" << fmt_double(counter.rhs)
            << " aligned5_holds=" << (counter.holds ? 1 : 0);
    {
        std::ofstream sum_out(fs::path(a.out) / "summary.txt");
        sum_out << summary.str() << '\n';
    }
    write_run_config(a.out, "verify-theorem",
                     {{"data", a.data},
                      {"trials", std::to_string(a.trials)},
                      {"max_signals", std::to_string(a.max_signals)},
                      {"seed", std::to_string(a.seed)},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)}});
    std::cout << summary.str() << '\n';
    return 0;
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
    std::string signal;
    std::string adv;
    std::string out;
    StftFlags stft{desk::stft_config()};
    int sample_rate = desk::kSampleRate;
    std::size_t start = 0;
    std::size_t count = 0;  // 0 = all
};

int run_plot(const PlotArgs& a) {
    const StftConfig stft_cfg = a.stft.config();
    const SignalBuffer clean = read_signal_file(a.signal, a.sample_rate);
    const SignalBuffer adv = read_signal_file(a.adv, a.sample_rate);
    if (clean.size() != adv.size())
        throw std::invalid_argument("clean/adversarial signals differ in length");

    fs::create_directories(a.out);
    {
        auto [mag, phase] = split(stft(clean, stft_cfg));
        write_pgm(to_grayscale(mag, DbMapping::from_magnitude(mag)),
                  fs::path(a.out) / "clean.pgm");
    }
    {
        auto [mag, phase] = split(stft(adv, stft_cfg));
        write_pgm(to_grayscale(mag, DbMapping::from_magnitude(mag)), fs::path(a.out) / "adv.pgm");
    }
    {
        // %.17g keeps every double bit-exact through the text round trip, so
        // the perturbation column stays exactly adversarial - clean
        auto full = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        std::ofstream csv(fs::path(a.out) / "waveform.csv");
        csv << "sample,clean,adversarial,perturbation\n";
        const std::size_t begin = std::min(a.start, clean.size());
        const std::size_t end =
            a.count == 0 ? clean.size() : std::min(clean.size(), begin + a.count);
        for (std::size_t i = begin; i < end; ++i) {
            csv << i << ',' << full(clean.samples[i]) << ',' << full(adv.samples[i]) << ','
                << full(adv.samples[i] - clean.samples[i]) << '\n';
        }
    }
    write_run_config(a.out, "plot",
                     {{"signal", a.signal},
                      {"adv", a.adv},
                      {"n_fft", std::to_string(stft_cfg.n_fft)},
                      {"overlap", std::to_string(stft_cfg.overlap)},
                      {"start", std::to_string(a.start)},
                      {"count", std::to_string(a.count)}});
    std::cout << "wrote clean.pgm, adv.pgm, waveform.csv to " << a.out << '\n';
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Adversarial spectrogram perturbations for signal detection"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic burst dataset");
    gen->add_option("--out", gen_args.out, "Output directory")->required();
    gen->add_option("--n", gen_args.n, "Number of signal files")->capture_default_str();
    gen->add_option("--seed", gen_args.seed, "Master seed")->capture_default_str();
    gen->add_option("--frames", gen_args.frames, "Spectrogram frame count")
        ->capture_default_str();
    gen_args.stft.attach(gen);
    gen->add_option("--sample-rate", gen_args.sample_rate)->capture_default_str();
    gen->add_option("--bursts-min", gen_args.bursts_min)->capture_default_str();
    gen->add_option("--bursts-max", gen_args.bursts_max)->capture_default_str();
    gen->add_option("--freq-min", gen_args.freq_min)->capture_default_str();
    gen->add_option("--freq-max", gen_args.freq_max)->capture_default_str();
    gen->add_option("--dur-min", gen_args.dur_min)->capture_default_str();
    gen->add_option("--dur-max", gen_args.dur_max)->capture_default_str();
    gen->add_option("--amp-min", gen_args.amp_min)->capture_default_str();
    gen->add_option("--amp-max", gen_args.amp_max)->capture_default_str();
    gen->add_option("--noise-std", gen_args.noise_std)->capture_default_str();

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "Train the grid detector");
    tr->add_option("--data", train_args.data, "Dataset directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    tr->add_option("--out", train_args.out, "Output directory")->required();
    train_args.stft.attach(tr);
    tr->add_option("--epochs", train_args.epochs)->capture_default_str();
    tr->add_option("--batch", train_args.batch)->capture_default_str();
    tr->add_option("--lr", train_args.lr)->capture_default_str();
    tr->add_option("--momentum", train_args.momentum)->capture_default_str();
    tr->add_option("--lr-drop-frac", train_args.lr_drop_frac)->capture_default_str();
    tr->add_option("--lr-drop-factor", train_args.lr_drop_factor)->capture_default_str();
    tr->add_option("--jitter", train_args.jitter, "Max magnitude-noise jitter alpha")
        ->capture_default_str();
    tr->add_option("--seed", train_args.seed)->capture_default_str();
    tr->add_option("--val-frac", train_args.val_frac)->capture_default_str();
    tr->add_option("--val-interval", train_args.val_interval)->capture_default_str();
    tr->add_option("--threads", train_args.threads)->capture_default_str();
    tr->add_option("--grid", train_args.grid)->capture_default_str();
    tr->add_option("--channels", train_args.channels)->capture_default_str();
    tr->add_option("--conf", train_args.conf)->capture_default_str();
    tr->add_option("--nms", train_args.nms)->capture_default_str();

    AttackArgs attack_args;
    auto* at = app.add_subcommand("attack", "Generate adversarial signals");
    at->add_option("--data", attack_args.data)->required()->check(CLI::ExistingDirectory);
    at->add_option("--model", attack_args.model)->required()->check(CLI::ExistingFile);
    at->add_option("--out", attack_args.out)->required();
    attack_args.stft.attach(at);
    at->add_option("--method", attack_args.method, "pgd|fgm|rn")->capture_default_str();
    at->add_option("--alpha", attack_args.alpha)->capture_default_str();
    at->add_option("--iters", attack_args.iters)->capture_default_str();
    at->add_option("--step-eps", attack_args.step_eps)->capture_default_str();
    at->add_option("--clip-eps", attack_args.clip_eps)->capture_default_str();
    at->add_option("--decay", attack_args.decay)->capture_default_str();
    at->add_option("--lambda", attack_args.lambda)->capture_default_str();
    at->add_option("--seed", attack_args.seed)->capture_default_str();
    at->add_option("--norm-scope", attack_args.norm_scope, "full|half")->capture_default_str();
    at->add_option("--subset", attack_args.subset, "all|train|val")->capture_default_str();
    at->add_option("--val-frac", attack_args.val_frac)->capture_default_str();
    at->add_option("--threads", attack_args.threads)->capture_default_str();

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "Detection-quality and ratio experiments");
    ev->add_option("--data", eval_args.data)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--model", eval_args.model)->required()->check(CLI::ExistingFile);
    ev->add_option("--out", eval_args.out)->required();
    eval_args.stft.attach(ev);
    ev->add_option("--alphas", eval_args.alphas, "FGM/PGD alphas")->capture_default_str();
    ev->add_option("--rn-alphas", eval_args.rn_alphas)->capture_default_str();
    ev->add_option("--ratio-alphas", eval_args.ratio_alphas)->capture_default_str();
    ev->add_option("--subset", eval_args.subset)->capture_default_str();
    ev->add_option("--val-frac", eval_args.val_frac)->capture_default_str();
    ev->add_option("--seed", eval_args.seed)->capture_default_str();
    ev->add_option("--iters", eval_args.iters)->capture_default_str();
    ev->add_option("--decay", eval_args.decay)->capture_default_str();
    ev->add_option("--lambda", eval_args.lambda)->capture_default_str();
    ev->add_option("--threads", eval_args.threads)->capture_default_str();

    RoundtripArgs rt_args;
    auto* rt = app.add_subcommand("roundtrip", "Clean-signal reconstruction error baseline");
    rt->add_option("--data", rt_args.data)->required()->check(CLI::ExistingDirectory);
    rt->add_option("--out", rt_args.out)->required();
    rt_args.stft.attach(rt);
    rt->add_option("--threads", rt_args.threads)->capture_default_str();

    VerifyArgs verify_args;
    auto* vt = app.add_subcommand("verify-theorem", "Norm-bound Monte-Carlo verifier");
    vt->add_option("--data", verify_args.data)->required()->check(CLI::ExistingDirectory);
    vt->add_option("--out", verify_args.out)->required();
    verify_args.stft.attach(vt);
    vt->add_option("--trials", verify_args.trials)->capture_default_str();
    vt->add_option("--max-signals", verify_args.max_signals)->capture_default_str();
    vt->add_option("--seed", verify_args.seed)->capture_default_str();
    vt->add_option("--threads", verify_args.threads)->capture_default_str();

    PlotArgs plot_args;
    auto* pl = app.add_subcommand("plot", "Spectrogram PGMs and waveform CSV");
    pl->add_option("--signal", plot_args.signal)->required()->check(CLI::ExistingFile);
    pl->add_option("--adv", plot_args.adv)->required()->check(CLI::ExistingFile);
    pl->add_option("--out", plot_args.out)->required();
    plot_args.stft.attach(pl);
    pl->add_option("--sample-rate", plot_args.sample_rate)->capture_default_str();
    pl->add_option("--start", plot_args.start)->capture_default_str();
    pl->add_option("--count", plot_args.count)->capture_default_str();

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = expand_config(args);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    std::vector<const char*> cargs;
    cargs.push_back(argc > 0 ? argv[0] : "sigadv");
    for (const auto& s : args) cargs.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (tr->parsed()) return run_train(train_args);
        if (at->parsed()) return run_attack(attack_args);
        if (ev->parsed()) return run_eval(eval_args);
        if (rt->parsed()) return run_roundtrip(rt_args);
        if (vt->parsed()) return run_verify_theorem(verify_args);
        if (pl->parsed()) return run_plot(plot_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace sigadv

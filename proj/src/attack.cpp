#include "sigadv/attack.hpp"

#include <algorithm>
#include <cmath>

#include "sigadv/common.hpp"
#include "sigadv/norm_theory.hpp"

namespace sigadv {

namespace {

double scoped_norm(const Matrix& m, NormScope scope) {
    if (scope == NormScope::FullMatrix) return l2_norm(m.v);
    const int half = m.rows / 2;
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c)
        for (int r = 0; r < half; ++r) acc += m.at(r, c) * m.at(r, c);
    return std::sqrt(acc);
}

double scoped_distance(const Matrix& a, const Matrix& b, NormScope scope) {
    if (scope == NormScope::FullMatrix) return l2_distance(a.v, b.v);
    const int half = a.rows / 2;
    double acc = 0.0;
    for (int c = 0; c < a.cols; ++c)
        for (int r = 0; r < half; ++r) {
            const double d = a.at(r, c) - b.at(r, c);
            acc += d * d;
        }
    return std::sqrt(acc);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

int count_detections(const DetectorModel& model, const MagnitudeMatrix& mag,
                     const DbMapping& mapping, RawGrid* raw_out) {
    const SpectrogramImage img = to_grayscale(mag, mapping);
    RawGrid raw = forward(model, img);
    const auto dets = decode(raw, model.config.conf_thresh, model.config.nms_iou);
    if (raw_out) *raw_out = std::move(raw);
    return static_cast<int>(dets.size());
}

/// Finalize: phase-preserving inversion plus norm accounting.
AdversarialExample finish_example(const SignalBuffer& original, const StftConfig& cfg,
                                  const MagnitudeMatrix& mag0, const MagnitudeMatrix& mag,
                                  const PhaseMatrix& phase, NormScope scope,
                                  AttackReport report) {
    const TimeFreqMatrix y_adv = recombine(mag, phase, cfg);
    IstftResult inv = istft(y_adv, cfg, original.size());
    inv.signal.sample_rate = original.sample_rate;

    AdversarialExample out;
    out.signal = std::move(inv.signal);
    out.perturbed_magnitude = mag;
    report.imag_residue = inv.imag_residue;
    report.beta_norm = l2_distance(mag.v, mag0.v);
    report.tf_ratio = scoped_distance(mag, mag0, scope) /
                      std::max(scoped_norm(mag0, scope), 1e-300);
    report.delta_norm = l2_distance(out.signal.samples, original.samples);
    report.time_ratio = report.delta_norm / std::max(l2_norm(original.samples), 1e-300);
    report.bound_rhs = bound_constant(cfg.n_fft) * report.beta_norm;
    out.report = std::move(report);
    return out;
}

/// Gradient of the vanishing loss with respect to the magnitude matrix.
Matrix magnitude_gradient(const DetectorModel& model, const MagnitudeMatrix& mag,
                          const DbMapping& mapping, double lambda, double* loss_out) {
    const SpectrogramImage img = to_grayscale(mag, mapping);
    const RawGrid raw = forward(model, img);
    const LossResult lr = attack_loss(raw, {}, lambda);
    if (!std::isfinite(lr.loss)) throw std::runtime_error("attack: non-finite loss");
    if (loss_out) *loss_out = lr.loss;
    const Matrix d_img = backward_to_input(model, img, lr.grad);
    return grayscale_grad(mag, mapping, d_img);
}

}  // namespace

void AttackConfig::validate() const {
    if (!(alpha >= 0)) throw std::invalid_argument("AttackConfig: alpha must be >= 0");
    if (n_iter < 1) throw std::invalid_argument("AttackConfig: n_iter must be >= 1");
    if (!(decay > 0 && decay < 1)) throw std::invalid_argument("AttackConfig: decay must be in (0,1)");
    if (max_decay_steps < 1) throw std::invalid_argument("AttackConfig: max_decay_steps must be >= 1");
}

std::string to_string(TerminationReason r) {
    return r == TerminationReason::Vanished ? "vanished" : "max_iter";
}

Matrix clip2(const Matrix& step, double clip_eps) {
    if (!(clip_eps > 0)) throw std::invalid_argument("clip2: clip_eps must be positive");
    Matrix out = step;
    for (auto& x : out.v) x = std::clamp(x, -clip_eps, clip_eps);
    return out;
}

AdversarialExample pgd_attack(const DetectorModel& model, const SignalBuffer& signal,
                              const StftConfig& stft_config, const DbMapping& mapping,
                              const AttackConfig& config) {
    config.validate();
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag0, phase] = split(y);
    const double norm_y = scoped_norm(mag0, config.norm_scope);
    const double budget = config.alpha * norm_y;
    const double step_eps = config.step_eps > 0 ? config.step_eps : 0.2 * budget;
    const double clip_eps =
        config.clip_eps > 0 ? config.clip_eps : std::max(10.0 * median_of(mag0.v), 1e-12);

    AttackReport report;
    report.method = "PGD";
    report.alpha = config.alpha;
    report.terminated_by = TerminationReason::MaxIter;

    MagnitudeMatrix mag = mag0;
    int n = 0;
    for (; n < config.n_iter; ++n) {
        const int dets = count_detections(model, mag, mapping, nullptr);
        if (n == 0) report.detections_before = dets;
        if (dets == 0) {
            report.terminated_by = TerminationReason::Vanished;
            break;
        }
        double loss = 0.0;
        Matrix g = magnitude_gradient(model, mag, mapping, config.lambda, &loss);
        report.loss_history.push_back(loss);
        const double g_norm = scoped_norm(g, config.norm_scope);
        if (g_norm == 0.0) break;  // zero gradient: nothing to follow

        Matrix beta = g;
        for (auto& x : beta.v) x *= step_eps / g_norm;
        beta = clip2(beta, clip_eps);

        // shrink the step until the accumulated perturbation re-enters the
        // L2 ball; project exactly if the decay loop exhausts
        auto candidate_dist = [&] {
            double acc = 0.0;
            const int half = mag.rows / 2;
            for (int c = 0; c < mag.cols; ++c) {
                const int r_end = config.norm_scope == NormScope::FullMatrix ? mag.rows : half;
                for (int r = 0; r < r_end; ++r) {
                    const double d = mag.at(r, c) - beta.at(r, c) - mag0.at(r, c);
                    acc += d * d;
                }
            }
            return std::sqrt(acc);
        };
        int decays = 0;
        while (candidate_dist() > budget && decays < config.max_decay_steps) {
            for (auto& x : beta.v) x *= config.decay;
            ++decays;
        }
        MagnitudeMatrix next = mag;
        for (std::size_t i = 0; i < next.v.size(); ++i) next.v[i] -= beta.v[i];
        const double dist = scoped_distance(next, mag0, config.norm_scope);
        if (dist > budget) {
            const double scale = budget / dist;
            for (std::size_t i = 0; i < next.v.size(); ++i)
                next.v[i] = mag0.v[i] + scale * (next.v[i] - mag0.v[i]);
        }
        for (auto& x : next.v) x = std::max(0.0, x);
        mag = std::move(next);
    }
    report.iterations_used = n;
    report.detections_after = count_detections(model, mag, mapping, nullptr);
    if (report.detections_before < 0) report.detections_before = report.detections_after;
    return finish_example(signal, stft_config, mag0, mag, phase, config.norm_scope,
                          std::move(report));
}

AdversarialExample fgm_attack(const DetectorModel& model, const SignalBuffer& signal,
                              const StftConfig& stft_config, const DbMapping& mapping,
                              const AttackConfig& config) {
    config.validate();
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag0, phase] = split(y);
    const double norm_y = scoped_norm(mag0, config.norm_scope);

    AttackReport report;
    report.method = "FGM";
    report.alpha = config.alpha;
    report.iterations_used = 1;
    report.detections_before = count_detections(model, mag0, mapping, nullptr);

    MagnitudeMatrix mag = mag0;
    if (config.alpha > 0) {
        double loss = 0.0;
        Matrix g = magnitude_gradient(model, mag0, mapping, config.lambda, &loss);
        report.loss_history.push_back(loss);
        const double g_norm = scoped_norm(g, config.norm_scope);
        if (g_norm > 0) {
            const double scale = config.alpha * norm_y / g_norm;
            for (std::size_t i = 0; i < mag.v.size(); ++i)
                mag.v[i] = std::max(0.0, mag.v[i] - scale * g.v[i]);
        }
    }
    report.detections_after = count_detections(model, mag, mapping, nullptr);
    report.terminated_by = report.detections_after == 0 ? TerminationReason::Vanished
                                                        : TerminationReason::MaxIter;
    return finish_example(signal, stft_config, mag0, mag, phase, config.norm_scope,
                          std::move(report));
}

AdversarialExample random_noise_baseline(const SignalBuffer& signal,
                                         const StftConfig& stft_config, double alpha,
                                         std::uint64_t seed) {
    if (!(alpha > 0)) throw std::invalid_argument("random_noise_baseline: alpha must be > 0");
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag0, phase] = split(y);

    Rng rng(seed);
    Matrix noise = hermitian_noise(mag0.rows, mag0.cols, rng);
    const double n_norm = l2_norm(noise.v);
    const double target = alpha * l2_norm(mag0.v);
    MagnitudeMatrix mag = mag0;
    if (n_norm > 0) {
        const double scale = target / n_norm;
        for (std::size_t i = 0; i < mag.v.size(); ++i)
            mag.v[i] = std::max(0.0, mag.v[i] + scale * noise.v[i]);
    }

    AttackReport report;
    report.method = "RN";
    report.alpha = alpha;
    report.iterations_used = 1;
    return finish_example(signal, stft_config, mag0, mag, phase, NormScope::FullMatrix,
                          std::move(report));
}

std::pair<double, double> perturbation_ratios(const SignalBuffer& original,
                                              const AdversarialExample& adv,
                                              const StftConfig& stft_config) {
    if (original.size() != adv.signal.size())
        throw std::invalid_argument("perturbation_ratios: length mismatch");
    const TimeFreqMatrix y = stft(original, stft_config);
    auto [mag0, phase] = split(y);
    if (mag0.rows != adv.perturbed_magnitude.rows || mag0.cols != adv.perturbed_magnitude.cols)
        throw std::invalid_argument("perturbation_ratios: magnitude dimension mismatch");
    const double tf = l2_distance(adv.perturbed_magnitude.v, mag0.v) /
                      std::max(l2_norm(mag0.v), 1e-300);
    const double time = l2_distance(adv.signal.samples, original.samples) /
                        std::max(l2_norm(original.samples), 1e-300);
    return {tf, time};
}

}  // namespace sigadv

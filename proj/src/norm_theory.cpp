#include "sigadv/norm_theory.hpp"

#include <cmath>
#include <complex>
#include <fstream>

#include "sigadv/common.hpp"
#include "sigadv/detector.hpp"

namespace sigadv {

double bound_constant(int n_fft) {
    if (n_fft < 1) throw std::invalid_argument("bound_constant: n_fft must be >= 1");
    return std::sqrt(3.0 / static_cast<double>(n_fft));
}

double alpha_prime(double alpha, int n_fft) {
    if (alpha < 0) throw std::invalid_argument("alpha_prime: alpha must be >= 0");
    return bound_constant(n_fft) * alpha;
}

BoundCheck verify_bound(const SignalBuffer& original, const MagnitudeMatrix& perturbed_mag,
                        const StftConfig& stft_config) {
    const TimeFreqMatrix y = stft(original, stft_config);
    auto [mag0, phase] = split(y);
    if (mag0.rows != perturbed_mag.rows || mag0.cols != perturbed_mag.cols)
        throw std::invalid_argument("verify_bound: magnitude dimension mismatch");

    BoundCheck out;
    out.beta_norm = l2_distance(perturbed_mag.v, mag0.v);
    out.rhs = bound_constant(stft_config.n_fft) * out.beta_norm;

    const SignalBuffer x_rt = istft(recombine(mag0, phase, stft_config), stft_config,
                                    original.size())
                                  .signal;
    const SignalBuffer x1 = istft(recombine(perturbed_mag, phase, stft_config), stft_config,
                                  original.size())
                                .signal;

    out.delta_norm = l2_distance(x1.samples, x_rt.samples);
    out.delta_vs_raw = l2_distance(x1.samples, original.samples);
    out.roundtrip_floor = l2_distance(x_rt.samples, original.samples);
    out.slack_ratio = out.rhs > 0 ? out.delta_norm / out.rhs : (out.delta_norm > 0 ? 1e300 : 0.0);
    out.holds = out.delta_norm <= std::max(out.rhs, out.roundtrip_floor) + 1e-9;
    return out;
}

VectorSumCheck vector_sum_inequality_check(const std::vector<double>& magnitudes,
                                           const std::vector<double>& angles) {
    if (magnitudes.size() != angles.size())
        throw std::invalid_argument("vector_sum_inequality_check: length mismatch");
    std::complex<double> v(0.0, 0.0);
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
        v += std::polar(magnitudes[i], angles[i]);
        sum_sq += magnitudes[i] * magnitudes[i];
    }
    VectorSumCheck out;
    out.lhs = std::norm(v);
    out.rhs = 3.0 * sum_sq;
    out.holds = out.lhs <= out.rhs;
    return out;
}

std::vector<BoundTrialRow> bound_monte_carlo(const std::vector<SignalBuffer>& signals,
                                             const StftConfig& stft_config, int trials,
                                             std::uint64_t seed, int threads) {
    if (signals.empty()) throw std::invalid_argument("bound_monte_carlo: no signals");
    if (trials < 1) throw std::invalid_argument("bound_monte_carlo: trials must be >= 1");
    std::vector<BoundTrialRow> rows(static_cast<std::size_t>(trials));
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
        const SignalBuffer& sig = signals[t % signals.size()];
        Rng rng(derive_seed(seed, t));
        const TimeFreqMatrix y = stft(sig, stft_config);
        auto [mag0, phase] = split(y);
        Matrix noise = hermitian_noise(mag0.rows, mag0.cols, rng);
        const double ratio = rng.uniform(0.001, 0.1);
        const double n_norm = l2_norm(noise.v);
        MagnitudeMatrix pert = mag0;
        if (n_norm > 0) {
            const double scale = ratio * l2_norm(mag0.v) / n_norm;
            for (std::size_t i = 0; i < pert.v.size(); ++i)
                pert.v[i] = std::max(0.0, pert.v[i] + scale * noise.v[i]);
        }
        const BoundCheck check = verify_bound(sig, pert, stft_config);
        rows[t] = BoundTrialRow{static_cast<int>(t), check.beta_norm, check.delta_norm,
                                check.rhs, check.slack_ratio, check.holds};
    });
    return rows;
}

void write_bound_csv(const std::vector<BoundTrialRow>& rows,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_bound_csv: cannot open " + path.string());
    out << "trial,beta_norm,delta_norm,rhs,slack_ratio,holds\n";
    for (const auto& r : rows) {
        out << r.trial << ',' << fmt_double(r.beta_norm) << ',' << fmt_double(r.delta_norm)
            << ',' << fmt_double(r.rhs) << ',' << fmt_double(r.slack_ratio) << ','
            << (r.holds ? 1 : 0) << '\n';
    }
}

}  // namespace sigadv

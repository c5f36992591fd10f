#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

namespace sigadv {

/// sqrt(3/N) for an N-point window.
double bound_constant(int n_fft);

/// Time-domain budget implied by a time-frequency budget: sqrt(3/N) * alpha.
double alpha_prime(double alpha, int n_fft);

struct BoundCheck {
    double beta_norm = 0;        // Frobenius norm of the magnitude difference
    double delta_norm = 0;       // perturbation-induced time deviation (vs round-trip)
    double rhs = 0;              // sqrt(3/N) * beta_norm
    double slack_ratio = 0;      // delta_norm / rhs (0 when both vanish)
    double roundtrip_floor = 0;  // clean-signal reconstruction error ||x_rt - x||
    double delta_vs_raw = 0;     // ||x1 - x|| including reconstruction error
    bool holds = false;          // delta_norm <= max(rhs, roundtrip_floor) + 1e-9
};

/// Rebuilds x1 by phase-preserving inversion of the perturbed magnitudes and
/// evaluates the time/time-frequency norm inequality. delta is measured
/// against the round-tripped clean signal so reconstruction loss does not
/// masquerade as perturbation.
BoundCheck verify_bound(const SignalBuffer& original, const MagnitudeMatrix& perturbed_mag,
                        const StftConfig& stft_config);

struct VectorSumCheck {
    double lhs = 0;  // |sum a_i e^{j theta_i}|^2
    double rhs = 0;  // 3 * sum a_i^2
    bool holds = false;
};

/// The cross-term step of the proof chain, evaluated as written; aligned
/// phases with n >= 4 equal vectors violate it.
VectorSumCheck vector_sum_inequality_check(const std::vector<double>& magnitudes,
                                           const std::vector<double>& angles);

struct BoundTrialRow {
    int trial = 0;
    double beta_norm = 0;
    double delta_norm = 0;
    double rhs = 0;
    double slack_ratio = 0;
    bool holds = false;
};

/// Random magnitude perturbations (round-robin over the given signals);
/// reports, never asserts, the inequality.
std::vector<BoundTrialRow> bound_monte_carlo(const std::vector<SignalBuffer>& signals,
                                             const StftConfig& stft_config, int trials,
                                             std::uint64_t seed, int threads);

void write_bound_csv(const std::vector<BoundTrialRow>& rows,
                     const std::filesystem::path& path);

}  // namespace sigadv

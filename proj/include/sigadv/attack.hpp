#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sigadv/detector.hpp"
#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

namespace sigadv {

enum class AttackMethod { Fgm, Pgd, RandomNoise };

/// Norm accounting: the full mirrored matrix (default) or the positive half.
enum class NormScope { FullMatrix, HalfSpectrum };

struct AttackConfig {
    AttackMethod method = AttackMethod::Pgd;
    double alpha = 0.02;      // time-frequency L2 budget as a fraction of ||Y||
    int n_iter = 50;
    double step_eps = 0.0;    // per-step L2 scale; <=0 selects 0.2*alpha*||Y||
    double clip_eps = 0.0;    // element-wise bound; <=0 selects 10*median(|Y|)
    double decay = 0.5;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    NormScope norm_scope = NormScope::FullMatrix;
    int max_decay_steps = 60;

    void validate() const;
};

enum class TerminationReason { Vanished, MaxIter };

std::string to_string(TerminationReason r);

struct AttackReport {
    std::string method;
    double alpha = 0;
    int iterations_used = 0;
    double tf_ratio = 0;     // ||beta||/||Y|| in the configured norm scope
    double time_ratio = 0;   // ||x' - x|| / ||x||
    double beta_norm = 0;    // full-matrix magnitude perturbation norm
    double delta_norm = 0;   // ||x' - x||
    double bound_rhs = 0;    // sqrt(3/n_fft) * beta_norm
    int detections_before = -1;
    int detections_after = -1;
    TerminationReason terminated_by = TerminationReason::MaxIter;
    double imag_residue = 0;
    std::vector<double> loss_history;
};

struct AdversarialExample {
    SignalBuffer signal;                // x' = x + delta
    MagnitudeMatrix perturbed_magnitude;
    AttackReport report;
};

/// Element-wise clamp of a step matrix to [-clip_eps, +clip_eps].
Matrix clip2(const Matrix& step, double clip_eps);

/// Iterative magnitude-domain attack: normalized gradient steps, element
/// clamp, geometric decay against the L2 budget (hard projection after
/// max_decay_steps), phase-preserving inversion.
AdversarialExample pgd_attack(const DetectorModel& model, const SignalBuffer& signal,
                              const StftConfig& stft_config, const DbMapping& mapping,
                              const AttackConfig& config);

/// Single normalized step of size alpha*||Y||.
AdversarialExample fgm_attack(const DetectorModel& model, const SignalBuffer& signal,
                              const StftConfig& stft_config, const DbMapping& mapping,
                              const AttackConfig& config);

/// Gaussian magnitude noise scaled to exactly alpha*||Y||, mirrored for
/// Hermitian symmetry; no model involved.
AdversarialExample random_noise_baseline(const SignalBuffer& signal,
                                         const StftConfig& stft_config, double alpha,
                                         std::uint64_t seed);

/// (tf_ratio, time_ratio) recomputed from the stored artifacts.
std::pair<double, double> perturbation_ratios(const SignalBuffer& original,
                                              const AdversarialExample& adv,
                                              const StftConfig& stft_config);

}  // namespace sigadv

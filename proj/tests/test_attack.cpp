#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sigadv/attack.hpp"
#include "sigadv/common.hpp"
#include "sigadv/detector.hpp"
#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

using namespace sigadv;

namespace {

StftConfig small_stft() {
    StftConfig c;
    c.n_fft = 32;
    c.overlap = 16;
    return c;
}

DetectorConfig small_detector() {
    DetectorConfig cfg;
    cfg.input_h = 16;
    cfg.input_w = 16;
    cfg.grid_s = 4;
    cfg.n_classes = 3;
    cfg.channels = {4, 8};
    return cfg;
}

SignalBuffer small_signal(std::uint64_t seed) {
    Rng rng(seed);
    SignalBuffer sig;
    sig.sample_rate = 8000;
    sig.samples.resize(32 + 15 * 16);  // 16 frames at hop 16
    for (std::size_t n = 0; n < sig.samples.size(); ++n)
        sig.samples[n] = 0.25 * std::sin(2 * kPi * 5.0 * n / 32.0) + 0.05 * rng.normal();
    return sig;
}

/// Model whose objectness stays glued to a fixed logit.
DetectorModel frozen_model(double obj_logit) {
    const DetectorConfig cfg = small_detector();
    DetectorModel model = init_model(cfg, 1);
    std::fill(model.weights.begin(), model.weights.end(), 0.0);
    model.weights[cfg.param_count() - cfg.raw_channels()] = obj_logit;
    return model;
}

SignalBuffer roundtrip_via_polar(const SignalBuffer& sig, const StftConfig& cfg) {
    auto [mag, phase] = split(stft(sig, cfg));
    return istft(recombine(mag, phase, cfg), cfg, sig.size()).signal;
}

AttackConfig pgd_config(double alpha, int iters = 8) {
    AttackConfig c;
    c.method = AttackMethod::Pgd;
    c.alpha = alpha;
    c.n_iter = iters;
    return c;
}

}  // namespace

TEST_CASE("clip2 clamps element-wise") {
    Matrix step(4, 3);
    Rng rng(5);
    for (auto& v : step.v) v = 3.0 * rng.normal();
    const Matrix clipped = clip2(step, 0.75);
    double linf = 0;
    for (std::size_t i = 0; i < step.v.size(); ++i) {
        linf = std::max(linf, std::abs(clipped.v[i]));
        if (std::abs(step.v[i]) <= 0.75) CHECK(clipped.v[i] == step.v[i]);
    }
    CHECK(linf <= 0.75);

    Matrix one(1, 1);
    one.v[0] = 2.0;
    CHECK(clip2(one, 1.0).v[0] == 1.0);
    CHECK_THROWS_AS(clip2(one, 0.0), std::invalid_argument);
}

TEST_CASE("iterative attack exits immediately when nothing is detected") {
    const DetectorModel model = frozen_model(-10.0);
    const SignalBuffer sig = small_signal(2);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    const AdversarialExample adv = pgd_attack(model, sig, cfg, mapping, pgd_config(0.05));
    CHECK(adv.report.iterations_used == 0);
    CHECK(adv.report.terminated_by == TerminationReason::Vanished);
    CHECK(adv.report.detections_before == 0);
    CHECK(adv.report.detections_after == 0);
    CHECK(adv.report.beta_norm == 0.0);

    const SignalBuffer rt = roundtrip_via_polar(sig, cfg);
    REQUIRE(adv.signal.size() == rt.size());
    for (std::size_t n = 0; n < rt.size(); ++n)
        CHECK(adv.signal.samples[n] == doctest::Approx(rt.samples[n]).epsilon(1e-12));
}

TEST_CASE("single-step attack with zero budget returns the round trip") {
    const DetectorModel model = frozen_model(4.0);  // plenty of detections
    const SignalBuffer sig = small_signal(3);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    AttackConfig c;
    c.method = AttackMethod::Fgm;
    c.alpha = 0.0;
    const AdversarialExample adv = fgm_attack(model, sig, cfg, mapping, c);
    const SignalBuffer rt = roundtrip_via_polar(sig, cfg);
    for (std::size_t n = 0; n < rt.size(); ++n)
        CHECK(adv.signal.samples[n] == doctest::Approx(rt.samples[n]).epsilon(1e-12));
    CHECK(adv.report.tf_ratio == 0.0);
}

TEST_CASE("budget constraint holds for gradient attacks") {
    const DetectorConfig cfg_d = small_detector();
    const DetectorModel model = init_model(cfg_d, 9);
    const SignalBuffer sig = small_signal(4);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    for (double alpha : {0.005, 0.02, 0.05}) {
        AttackConfig fc;
        fc.method = AttackMethod::Fgm;
        fc.alpha = alpha;
        const AdversarialExample f = fgm_attack(model, sig, cfg, mapping, fc);
        CHECK(f.report.tf_ratio <= alpha + 1e-6);

        const AdversarialExample p = pgd_attack(model, sig, cfg, mapping, pgd_config(alpha, 6));
        CHECK(p.report.tf_ratio <= alpha + 1e-6);
        CHECK(p.report.imag_residue < 1e-9);
    }
}

TEST_CASE("iterative attack is deterministic") {
    const DetectorModel model = init_model(small_detector(), 10);
    const SignalBuffer sig = small_signal(5);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    const AdversarialExample a = pgd_attack(model, sig, cfg, mapping, pgd_config(0.03, 5));
    const AdversarialExample b = pgd_attack(model, sig, cfg, mapping, pgd_config(0.03, 5));
    CHECK(a.signal.samples == b.signal.samples);
    CHECK(a.report.tf_ratio == b.report.tf_ratio);
    CHECK(a.report.iterations_used == b.report.iterations_used);
}

TEST_CASE("phase is preserved by construction") {
    const DetectorModel model = init_model(small_detector(), 11);
    const SignalBuffer sig = small_signal(6);
    const StftConfig cfg = small_stft();
    auto [mag0, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag0);

    const AdversarialExample adv = pgd_attack(model, sig, cfg, mapping, pgd_config(0.05, 4));
    // re-synthesizing the reported magnitudes with the clean phases must
    // reproduce the emitted signal exactly
    const SignalBuffer resynth =
        istft(recombine(adv.perturbed_magnitude, phase, cfg), cfg, sig.size()).signal;
    CHECK(resynth.samples == adv.signal.samples);
}

TEST_CASE("random noise baseline scales exactly and reproducibly") {
    // loud dense signal -> the non-negativity clamp never binds, so the
    // post-clamp ratio equals alpha exactly
    Rng rng(7);
    SignalBuffer sig;
    sig.sample_rate = 8000;
    sig.samples.resize(32 + 15 * 16);
    for (auto& s : sig.samples) s = 0.5 * rng.normal();
    const StftConfig cfg = small_stft();

    const AdversarialExample a = random_noise_baseline(sig, cfg, 0.001, 99);
    const auto [tf, time] = perturbation_ratios(sig, a, cfg);
    CHECK(tf == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(a.report.tf_ratio == doctest::Approx(0.001).epsilon(1e-9));
    CHECK(a.report.imag_residue < 1e-9);

    const AdversarialExample b = random_noise_baseline(sig, cfg, 0.001, 99);
    CHECK(a.signal.samples == b.signal.samples);
    const AdversarialExample c = random_noise_baseline(sig, cfg, 0.001, 100);
    CHECK(a.signal.samples != c.signal.samples);

    SUBCASE("clamped runs still respect the budget") {
        const AdversarialExample big = random_noise_baseline(sig, cfg, 0.25, 5);
        CHECK(big.report.tf_ratio <= 0.25 + 1e-6);
    }
    CHECK_THROWS_AS(random_noise_baseline(sig, cfg, 0.0, 1), std::invalid_argument);
}

TEST_CASE("perturbation ratios recompute from artifacts") {
    const StftConfig cfg = small_stft();
    const SignalBuffer sig = small_signal(8);
    auto [mag0, phase] = split(stft(sig, cfg));

    SUBCASE("round trip of the original registers ~zero tf change") {
        AdversarialExample adv;
        adv.perturbed_magnitude = mag0;
        adv.signal = istft(recombine(mag0, phase, cfg), cfg, sig.size()).signal;
        const auto [tf, time] = perturbation_ratios(sig, adv, cfg);
        CHECK(tf < 1e-12);
        const double rt_err = l2_distance(adv.signal.samples, sig.samples) /
                              l2_norm(sig.samples);
        CHECK(time == doctest::Approx(rt_err).epsilon(1e-12));
    }
    SUBCASE("single-bin bump matches hand arithmetic") {
        MagnitudeMatrix pert = mag0;
        const double bump = 0.125;
        pert.at(3, 2) += bump;
        AdversarialExample adv;
        adv.perturbed_magnitude = pert;
        adv.signal = istft(recombine(pert, phase, cfg), cfg, sig.size()).signal;
        const auto [tf, time] = perturbation_ratios(sig, adv, cfg);
        CHECK(tf == doctest::Approx(bump / l2_norm(mag0.v)).epsilon(1e-12));
        CHECK(time > 0.0);
    }
    SUBCASE("length mismatch is rejected") {
        AdversarialExample adv;
        adv.perturbed_magnitude = mag0;
        adv.signal.samples.assign(10, 0.0);
        CHECK_THROWS_AS(perturbation_ratios(sig, adv, cfg), std::invalid_argument);
    }
}

TEST_CASE("attack loss is non-increasing across almost all accepted steps") {
    const DetectorModel model = init_model(small_detector(), 12);
    const SignalBuffer sig = small_signal(9);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    AttackConfig c = pgd_config(0.08, 24);
    const AdversarialExample adv = pgd_attack(model, sig, cfg, mapping, c);
    const auto& hist = adv.report.loss_history;
    if (hist.size() >= 2) {
        int down = 0;
        for (std::size_t i = 1; i < hist.size(); ++i)
            if (hist[i] <= hist[i - 1] + 1e-12) ++down;
        CHECK(static_cast<double>(down) / static_cast<double>(hist.size() - 1) >= 0.95);
    }
}

TEST_CASE("norm scope switch tightens the accounting to the positive half") {
    const DetectorModel model = init_model(small_detector(), 13);
    const SignalBuffer sig = small_signal(10);
    const StftConfig cfg = small_stft();
    auto [mag, phase] = split(stft(sig, cfg));
    const DbMapping mapping = DbMapping::from_magnitude(mag);

    AttackConfig c = pgd_config(0.02, 4);
    c.norm_scope = NormScope::HalfSpectrum;
    const AdversarialExample adv = pgd_attack(model, sig, cfg, mapping, c);
    CHECK(adv.report.tf_ratio <= 0.02 + 1e-6);
    CHECK(adv.report.imag_residue < 1e-9);
}

TEST_CASE("attack config validation") {
    AttackConfig c;
    c.decay = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = AttackConfig{};
    c.n_iter = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = AttackConfig{};
    c.alpha = -0.1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("reports expose the documented termination labels") {
    CHECK(to_string(TerminationReason::Vanished) == "vanished");
    CHECK(to_string(TerminationReason::MaxIter) == "max_iter");
}

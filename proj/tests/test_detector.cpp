#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sigadv/common.hpp"
#include "sigadv/detector.hpp"
#include "sigadv/stft.hpp"

using namespace sigadv;

namespace {

DetectorConfig small_config() {
    DetectorConfig cfg;
    cfg.input_h = 16;
    cfg.input_w = 16;
    cfg.grid_s = 4;
    cfg.n_classes = 3;
    cfg.channels = {4, 8};
    return cfg;
}

SpectrogramImage random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    SpectrogramImage img;
    img.h = h;
    img.w = w;
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

RawGrid make_grid(int s, int n_classes, double obj_logit = -10.0) {
    RawGrid raw;
    raw.grid_s = s;
    raw.n_classes = n_classes;
    raw.v.assign(static_cast<std::size_t>(s) * s * (5 + n_classes), 0.0);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) raw.at(i, j, 0) = obj_logit;
    return raw;
}

}  // namespace

TEST_CASE("init is deterministic and counts parameters correctly") {
    const DetectorConfig cfg = small_config();
    const DetectorModel a = init_model(cfg, 7);
    const DetectorModel b = init_model(cfg, 7);
    CHECK(a.weights == b.weights);
    const DetectorModel c = init_model(cfg, 8);
    CHECK(a.weights != c.weights);

    // closed-form parameter count: conv blocks (3x3) then a 1x1 head
    std::size_t expect = 0;
    expect += 4u * 1 * 9 + 4;   // block 1
    expect += 8u * 4 * 9 + 8;   // block 2
    expect += 8u * 8 + 8;       // head (5 + 3 channels)
    CHECK(cfg.param_count() == expect);
    CHECK(a.weights.size() == expect);
}

TEST_CASE("initial objectness sits near the 0.01 prior") {
    const DetectorConfig cfg = small_config();
    double mean = 0;
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const DetectorModel model = init_model(cfg, seed);
        const RawGrid raw = forward(model, random_image(16, 16, 100 + seed));
        for (int i = 0; i < cfg.grid_s; ++i)
            for (int j = 0; j < cfg.grid_s; ++j) {
                mean += sigmoid(raw.at(i, j, 0));
                ++count;
            }
    }
    mean /= count;
    CHECK(std::abs(mean - 0.01) <= 0.01);
}

TEST_CASE("config validation rejects inconsistent geometry") {
    DetectorConfig cfg = small_config();
    cfg.grid_s = 8;  // 16 / 2^2 = 4 != 8
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.input_h = 17;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.n_classes = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero-weight model outputs constant bias planes") {
    const DetectorConfig cfg = small_config();
    DetectorModel model = init_model(cfg, 1);
    std::fill(model.weights.begin(), model.weights.end(), 0.0);
    // re-apply a recognizable head bias pattern
    const std::size_t head_bias = cfg.param_count() - cfg.raw_channels();
    for (int c = 0; c < cfg.raw_channels(); ++c)
        model.weights[head_bias + c] = 0.25 * c;

    const RawGrid raw = forward(model, random_image(16, 16, 5));
    for (int i = 0; i < cfg.grid_s; ++i)
        for (int j = 0; j < cfg.grid_s; ++j)
            for (int c = 0; c < cfg.raw_channels(); ++c)
                CHECK(raw.at(i, j, c) == doctest::Approx(0.25 * c).epsilon(1e-12));
}

TEST_CASE("forward validates image dimensions and output shape") {
    const DetectorConfig cfg = small_config();
    const DetectorModel model = init_model(cfg, 1);
    CHECK_THROWS_AS(forward(model, random_image(8, 16, 1)), std::invalid_argument);
    const RawGrid raw = forward(model, random_image(16, 16, 2));
    CHECK(raw.grid_s == 4);
    CHECK(raw.v.size() == 4u * 4 * 8);
}

TEST_CASE("perturbing a hidden weight changes the output") {
    const DetectorConfig cfg = small_config();
    DetectorModel model = init_model(cfg, 3);
    const SpectrogramImage img = random_image(16, 16, 4);
    const RawGrid before = forward(model, img);
    model.weights[cfg.param_count() / 2] *= 2.0;
    const RawGrid after = forward(model, img);
    double diff = 0;
    for (std::size_t i = 0; i < before.v.size(); ++i)
        diff += std::abs(after.v[i] - before.v[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("decode maps cells to boxes and applies NMS") {
    RawGrid raw = make_grid(4, 3);
    SUBCASE("all low objectness yields nothing") {
        CHECK(decode(raw, 0.25, 0.45).empty());
    }
    SUBCASE("one confident cell decodes to its span") {
        raw.at(2, 1, 0) = logit(0.9);
        raw.at(2, 1, 1) = 0.0;          // tx -> 0.5
        raw.at(2, 1, 2) = 0.0;          // ty -> 0.5
        raw.at(2, 1, 3) = logit(0.25);  // w
        raw.at(2, 1, 4) = logit(0.125); // h
        raw.at(2, 1, 5 + 2) = 3.0;      // class 2
        const auto boxes = decode(raw, 0.25, 0.45);
        REQUIRE(boxes.size() == 1);
        CHECK(boxes[0].cx == doctest::Approx((1 + 0.5) / 4.0));
        CHECK(boxes[0].cy == doctest::Approx((2 + 0.5) / 4.0));
        CHECK(boxes[0].w == doctest::Approx(0.25));
        CHECK(boxes[0].h == doctest::Approx(0.125));
        CHECK(boxes[0].class_id == 2);
        CHECK(boxes[0].confidence == doctest::Approx(0.9));
    }
    SUBCASE("near-identical boxes collapse to the stronger one") {
        for (int j : {1, 2}) {
            raw.at(0, j, 0) = logit(j == 1 ? 0.9 : 0.8);
            raw.at(0, j, 1) = logit(j == 1 ? 0.9 : 0.1);  // both point at x ~ 0.475
            raw.at(0, j, 3) = logit(0.5);
            raw.at(0, j, 4) = logit(0.5);
        }
        const auto boxes = decode(raw, 0.25, 0.45);
        REQUIRE(boxes.size() == 1);
        CHECK(boxes[0].confidence == doctest::Approx(0.9));
    }
    SUBCASE("decoded boxes always live inside the unit square") {
        Rng rng(17);
        RawGrid wild = make_grid(4, 3);
        for (auto& v : wild.v) v = 10.0 * rng.normal();
        for (const auto& b : decode(wild, 0.0 + 0.01, 1.0)) {
            CHECK(b.cx >= 0.0);
            CHECK(b.cx <= 1.0);
            CHECK(b.cy >= 0.0);
            CHECK(b.cy <= 1.0);
            CHECK(b.w > 0.0);
            CHECK(b.w < 1.0);
            CHECK(b.h > 0.0);
            CHECK(b.h < 1.0);
        }
    }
}

TEST_CASE("training loss vanishes in the two degenerate directions") {
    SUBCASE("no labels and suppressed objectness") {
        const RawGrid raw = make_grid(4, 3, -20.0);
        const LossResult res = training_loss(raw, {});
        CHECK(res.loss < 1e-6);
    }
    SUBCASE("perfect predictions zero the box and class terms") {
        RawGrid raw = make_grid(4, 3, -40.0);
        GroundTruthLabel label{1, 0.375, 0.625, 0.25, 0.125};
        const int j = static_cast<int>(label.cx * 4);  // 1
        const int i = static_cast<int>(label.cy * 4);  // 2
        raw.at(i, j, 0) = 40.0;
        raw.at(i, j, 1) = logit(label.cx * 4 - j);
        raw.at(i, j, 2) = logit(label.cy * 4 - i);
        raw.at(i, j, 3) = logit(label.w);
        raw.at(i, j, 4) = logit(label.h);
        raw.at(i, j, 5 + 1) = 40.0;
        raw.at(i, j, 5 + 0) = -40.0;
        raw.at(i, j, 5 + 2) = -40.0;
        const LossResult res = training_loss(raw, {label});
        CHECK(res.loss < 1e-6);
    }
}

TEST_CASE("training loss rejects labels outside the unit square") {
    const RawGrid raw = make_grid(4, 3);
    CHECK_THROWS_AS(training_loss(raw, {{0, 1.2, 0.5, 0.1, 0.1}}), std::invalid_argument);
    CHECK_THROWS_AS(training_loss(raw, {{0, 0.95, 0.5, 0.2, 0.1}}), std::invalid_argument);
}

TEST_CASE("training loss gradient matches central differences") {
    Rng rng(23);
    RawGrid raw = make_grid(4, 3);
    for (auto& v : raw.v) v = rng.normal();
    const std::vector<GroundTruthLabel> labels = {{0, 0.3, 0.3, 0.2, 0.2},
                                                  {2, 0.8, 0.7, 0.15, 0.25}};
    const LossResult res = training_loss(raw, labels);
    int ok = 0, total = 0;
    for (std::size_t idx = 0; idx < raw.v.size(); ++idx) {
        const double h = 1e-5;
        RawGrid plus = raw, minus = raw;
        plus.v[idx] += h;
        minus.v[idx] -= h;
        const double fd =
            (training_loss(plus, labels).loss - training_loss(minus, labels).loss) / (2 * h);
        ++total;
        if (std::abs(fd - res.grad.v[idx]) <=
            1e-4 * std::max({std::abs(fd), std::abs(res.grad.v[idx]), 1e-8}))
            ++ok;
    }
    CHECK(ok >= total * 99 / 100);
}

TEST_CASE("vanishing loss evaluates the documented closed forms") {
    SUBCASE("uniform 0.5 scores with an empty target set") {
        const RawGrid raw = make_grid(2, 3, 0.0);  // sigmoid(0) = 0.5 over 4 cells
        const LossResult res = attack_loss(raw, {}, 1.0);
        CHECK(res.loss == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("suppressed scores reach the fixed point") {
        const RawGrid raw = make_grid(2, 3, -40.0);
        CHECK(attack_loss(raw, {}, 1.0).loss < 1e-6);
    }
    SUBCASE("a certain occupied box contributes nothing") {
        RawGrid raw = make_grid(2, 3, -40.0);
        raw.at(0, 1, 0) = 40.0;  // cell index 1
        const LossResult with_obj = attack_loss(raw, {1}, 1.0);
        CHECK(with_obj.loss < 1e-6);
    }
    SUBCASE("gradient is strictly positive for the empty target set") {
        Rng rng(31);
        RawGrid raw = make_grid(2, 3);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) raw.at(i, j, 0) = rng.uniform(-6.0, 6.0);
        const LossResult res = attack_loss(raw, {}, 1.5);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(res.grad.at(i, j, 0) > 0.0);
    }
    SUBCASE("lambda scales the empty-set loss linearly") {
        const RawGrid raw = make_grid(2, 3, 0.3);
        CHECK(attack_loss(raw, {}, 2.0).loss ==
              doctest::Approx(2.0 * attack_loss(raw, {}, 1.0).loss).epsilon(1e-12));
    }
}

TEST_CASE("input gradient matches central differences") {
    const DetectorConfig cfg = small_config();
    const DetectorModel model = init_model(cfg, 11);
    const SpectrogramImage img = random_image(16, 16, 12);

    // scalar functional: weighted sum of raw outputs
    Rng rng(13);
    RawGrid upstream = make_grid(4, 3);
    for (auto& v : upstream.v) v = rng.normal();

    const Matrix grad = backward_to_input(model, img, upstream);

    auto eval = [&](const SpectrogramImage& im) {
        const RawGrid raw = forward(model, im);
        double j = 0;
        for (std::size_t i = 0; i < raw.v.size(); ++i) j += upstream.v[i] * raw.v[i];
        return j;
    };
    Rng pick(14);
    int ok = 0, total = 0;
    for (int t = 0; t < 120; ++t) {
        const int r = static_cast<int>(pick.uniform_int(0, 15));
        const int c = static_cast<int>(pick.uniform_int(0, 15));
        const double h = 1e-5;
        SpectrogramImage plus = img, minus = img;
        plus.at(r, c) += h;
        minus.at(r, c) -= h;
        const double fd = (eval(plus) - eval(minus)) / (2 * h);
        ++total;
        if (std::abs(fd - grad.at(r, c)) <=
            1e-4 * std::max({std::abs(fd), std::abs(grad.at(r, c)), 1e-8}))
            ++ok;
    }
    CHECK(ok >= total * 99 / 100);

    SUBCASE("zero upstream gives a zero gradient") {
        const RawGrid zero = make_grid(4, 3, 0.0);
        RawGrid z = zero;
        std::fill(z.v.begin(), z.v.end(), 0.0);
        const Matrix g0 = backward_to_input(model, img, z);
        for (double v : g0.v) CHECK(v == 0.0);
    }
}

TEST_CASE("vanishing-loss input gradient is tiny at saturated objectness") {
    // suppressed logits saturate the sigmoid, so the image barely matters
    const DetectorConfig cfg = small_config();
    DetectorModel model = init_model(cfg, 21);
    const std::size_t head_bias = cfg.param_count() - cfg.raw_channels();
    model.weights[head_bias] = -25.0;
    SpectrogramImage black = random_image(16, 16, 22);
    std::fill(black.pixels.begin(), black.pixels.end(), 0.0);
    const RawGrid raw = forward(model, black);
    const LossResult lr = attack_loss(raw, {}, 1.0);
    const Matrix g = backward_to_input(model, black, lr.grad);
    for (double v : g.v) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("end-to-end magnitude gradient matches finite differences") {
    // chain: magnitude -> grayscale -> detector -> vanishing loss
    const DetectorConfig cfg = small_config();
    const DetectorModel model = init_model(cfg, 41);
    Rng rng(42);
    Matrix mag(32, 16);  // 16 positive bins -> 16x16 image
    for (auto& v : mag.v) v = std::pow(10.0, rng.uniform(-1.5, 0.5));
    DbMapping mapping;
    mapping.db_min = -45;
    mapping.db_max = 15;

    auto loss_of = [&](const Matrix& m) {
        const SpectrogramImage img = to_grayscale(m, mapping);
        return attack_loss(forward(model, img), {}, 1.0).loss;
    };

    const SpectrogramImage img = to_grayscale(mag, mapping);
    const LossResult lr = attack_loss(forward(model, img), {}, 1.0);
    const Matrix d_img = backward_to_input(model, img, lr.grad);
    const Matrix d_mag = grayscale_grad(mag, mapping, d_img);

    Rng pick(43);
    int ok = 0, total = 0;
    for (int t = 0; t < 100; ++t) {
        const int k = static_cast<int>(pick.uniform_int(0, 15));  // positive half
        const int m = static_cast<int>(pick.uniform_int(0, 15));
        const double v = mag.at(k, m);
        const double db = 20.0 * std::log10(v + mapping.epsilon);
        const double p = (db - mapping.db_min) / (mapping.db_max - mapping.db_min);
        if (p < 0.03 || p > 0.97) continue;
        const double h = 1e-4 * std::max(v, 1e-3);
        Matrix plus = mag, minus = mag;
        plus.at(k, m) += h;
        minus.at(k, m) -= h;
        const double fd = (loss_of(plus) - loss_of(minus)) / (2 * h);
        ++total;
        if (std::abs(fd - d_mag.at(k, m)) <=
            1e-4 * std::max({std::abs(fd), std::abs(d_mag.at(k, m)), 1e-7}))
            ++ok;
    }
    REQUIRE(total > 50);
    CHECK(ok >= total * 99 / 100);
}

TEST_CASE("weight gradients let a model overfit one sample") {
    const DetectorConfig cfg = small_config();
    const DetectorModel model0 = init_model(cfg, 51);

    TrainSample sample;
    sample.mag = Matrix(32, 16);
    Rng rng(52);
    for (auto& v : sample.mag.v) v = 0.01 * std::abs(rng.normal());
    // paint one strong burst so there is something to detect
    for (int m = 4; m < 10; ++m)
        for (int k = 5; k < 8; ++k) sample.mag.at(k, m) = 3.0;
    sample.mapping = DbMapping::from_magnitude(sample.mag);
    sample.labels_img = {{1, 0.42, 1.0 - 0.20, 0.4, 0.2}};

    TrainOptions opt;
    opt.epochs = 500;  // one sample per epoch = 500 steps
    opt.batch_size = 1;
    opt.lr = 0.02;
    opt.jitter_alpha_max = 0.0;
    opt.seed = 53;
    opt.threads = 1;
    opt.val_interval = 1000;
    TrainHistory history;
    const DetectorModel trained = train(model0, {sample}, opt, nullptr, &history);
    CHECK(history.epoch_loss.back() < 0.05);

    SUBCASE("training is deterministic") {
        TrainHistory h2;
        const DetectorModel again = train(model0, {sample}, opt, nullptr, &h2);
        CHECK(again.weights == trained.weights);
        CHECK(h2.epoch_loss == history.epoch_loss);
    }
}

TEST_CASE("train rejects an empty dataset") {
    const DetectorModel model = init_model(small_config(), 1);
    TrainOptions opt;
    CHECK_THROWS_AS(train(model, {}, opt, nullptr, nullptr), std::invalid_argument);
}

TEST_CASE("detect_signal equals the composed pipeline bitwise") {
    StftConfig stft_cfg;
    stft_cfg.n_fft = 32;
    stft_cfg.overlap = 16;
    DetectorConfig cfg = small_config();  // 16x16 input
    const DetectorModel model = init_model(cfg, 61);

    Rng rng(62);
    SignalBuffer sig;
    sig.sample_rate = 8000;
    sig.samples.resize(32 + 15 * 16);  // 16 frames
    for (auto& s : sig.samples) s = 0.3 * rng.normal();

    const TimeFreqMatrix y = stft(sig, stft_cfg);
    auto [mag, phase] = split(y);
    const DbMapping mapping = DbMapping::from_magnitude(mag);
    const auto direct = detect_signal(model, sig, stft_cfg, mapping);
    const auto composed =
        decode(forward(model, to_grayscale(mag, mapping)), cfg.conf_thresh, cfg.nms_iou);
    REQUIRE(direct.size() == composed.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(direct[i].cx == composed[i].cx);
        CHECK(direct[i].cy == composed[i].cy);
        CHECK(direct[i].confidence == composed[i].confidence);
        CHECK(direct[i].class_id == composed[i].class_id);
    }
}

TEST_CASE("model files round trip through the binary format") {
    const DetectorConfig cfg = small_config();
    const DetectorModel model = init_model(cfg, 71);
    const auto path = std::filesystem::temp_directory_path() / "sigadv_model_test.bin";
    save_model(model, path);
    const DetectorModel back = load_model(path);
    CHECK(back.config.input_h == cfg.input_h);
    CHECK(back.config.grid_s == cfg.grid_s);
    CHECK(back.config.channels == cfg.channels);
    CHECK(back.config.conf_thresh == cfg.conf_thresh);
    REQUIRE(back.weights.size() == model.weights.size());
    for (std::size_t i = 0; i < model.weights.size(); ++i)
        CHECK(back.weights[i] ==
              doctest::Approx(model.weights[i]).epsilon(1e-6));  // f32 storage
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_model(std::filesystem::temp_directory_path() / "nope.bin"),
                    std::runtime_error);
}

#include "sigadv/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace sigadv {

namespace {

constexpr double kLeakySlope = 0.1;
constexpr double kLambdaNoObj = 0.5;
constexpr double kLambdaBox = 8.0;
constexpr double kLambdaCls = 2.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// log(1 + e^z), overflow-safe; equals BCE(0, sigmoid(z)).
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct LayerSpec {
    int in_c, out_c, k, stride, pad;
    int in_h, in_w, out_h, out_w;
    std::size_t w_off, b_off;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_c) * in_c * k * k + static_cast<std::size_t>(out_c);
    }
};

std::vector<LayerSpec> make_layers(const DetectorConfig& cfg) {
    std::vector<LayerSpec> layers;
    int in_c = 1, h = cfg.input_h, w = cfg.input_w;
    std::size_t off = 0;
    for (int oc : cfg.channels) {
        LayerSpec l;
        l.in_c = in_c;
        l.out_c = oc;
        l.k = 3;
        l.stride = 2;
        l.pad = 1;
        l.in_h = h;
        l.in_w = w;
        l.out_h = (h + 2 * l.pad - l.k) / l.stride + 1;
        l.out_w = (w + 2 * l.pad - l.k) / l.stride + 1;
        l.w_off = off;
        l.b_off = off + static_cast<std::size_t>(oc) * in_c * 9;
        off = l.b_off + static_cast<std::size_t>(oc);
        layers.push_back(l);
        in_c = oc;
        h = l.out_h;
        w = l.out_w;
    }
    LayerSpec head;
    head.in_c = in_c;
    head.out_c = cfg.raw_channels();
    head.k = 1;
    head.stride = 1;
    head.pad = 0;
    head.in_h = h;
    head.in_w = w;
    head.out_h = h;
    head.out_w = w;
    head.w_off = off;
    head.b_off = off + static_cast<std::size_t>(head.out_c) * in_c;
    layers.push_back(head);
    return layers;
}

void conv_forward(const double* in, const LayerSpec& l, const double* w, const double* b,
                  double* out) {
    for (int oc = 0; oc < l.out_c; ++oc) {
        const double bias = b[oc];
        for (int oy = 0; oy < l.out_h; ++oy) {
            for (int ox = 0; ox < l.out_w; ++ox) {
                double acc = bias;
                const int iy0 = oy * l.stride - l.pad;
                const int ix0 = ox * l.stride - l.pad;
                for (int ic = 0; ic < l.in_c; ++ic) {
                    const double* in_plane = in + static_cast<std::size_t>(ic) * l.in_h * l.in_w;
                    const double* wk =
                        w + (static_cast<std::size_t>(oc) * l.in_c + ic) * l.k * l.k;
                    for (int ky = 0; ky < l.k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= l.in_h) continue;
                        for (int kx = 0; kx < l.k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= l.in_w) continue;
                            acc += wk[ky * l.k + kx] * in_plane[iy * l.in_w + ix];
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * l.out_h + oy) * l.out_w + ox] = acc;
            }
        }
    }
}

/// Accumulates into d_w/d_b when provided; d_in (if non-null) is overwritten.
void conv_backward(const double* in, const LayerSpec& l, const double* w, const double* d_out,
                   double* d_w, double* d_b, double* d_in) {
    if (d_in)
        std::fill(d_in, d_in + static_cast<std::size_t>(l.in_c) * l.in_h * l.in_w, 0.0);
    for (int oc = 0; oc < l.out_c; ++oc) {
        for (int oy = 0; oy < l.out_h; ++oy) {
            for (int ox = 0; ox < l.out_w; ++ox) {
                const double g =
                    d_out[(static_cast<std::size_t>(oc) * l.out_h + oy) * l.out_w + ox];
                if (g == 0.0) continue;
                if (d_b) d_b[oc] += g;
                const int iy0 = oy * l.stride - l.pad;
                const int ix0 = ox * l.stride - l.pad;
                for (int ic = 0; ic < l.in_c; ++ic) {
                    const double* in_plane = in + static_cast<std::size_t>(ic) * l.in_h * l.in_w;
                    const std::size_t wk_off =
                        (static_cast<std::size_t>(oc) * l.in_c + ic) * l.k * l.k;
                    for (int ky = 0; ky < l.k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= l.in_h) continue;
                        for (int kx = 0; kx < l.k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= l.in_w) continue;
                            if (d_w) d_w[wk_off + ky * l.k + kx] += g * in_plane[iy * l.in_w + ix];
                            if (d_in)
                                d_in[(static_cast<std::size_t>(ic) * l.in_h + iy) * l.in_w + ix] +=
                                    g * w[wk_off + ky * l.k + kx];
                        }
                    }
                }
            }
        }
    }
}

struct ForwardCache {
    // acts[0] is the input plane; acts[i] the post-activation output of block i;
    // acts.back() the raw head output. preacts[i] stores block i's conv output.
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> preacts;
};

void forward_cached(const DetectorModel& model, const std::vector<double>& input,
                    ForwardCache& cache) {
    const auto layers = make_layers(model.config);
    const std::size_t n_blocks = layers.size() - 1;
    cache.acts.assign(layers.size() + 1, {});
    cache.preacts.assign(n_blocks, {});
    cache.acts[0] = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        std::vector<double> out(static_cast<std::size_t>(l.out_c) * l.out_h * l.out_w);
        conv_forward(cache.acts[i].data(), l, model.weights.data() + l.w_off,
                     model.weights.data() + l.b_off, out.data());
        if (i < n_blocks) {
            cache.preacts[i] = out;
            for (auto& x : out)
                if (x < 0) x *= kLeakySlope;
        }
        cache.acts[i + 1] = std::move(out);
    }
}

/// Backprop from a raw-grid cotangent; fills weight grads and/or input grad.
void backward_cached(const DetectorModel& model, const ForwardCache& cache,
                     const std::vector<double>& d_raw, std::vector<double>* d_weights,
                     std::vector<double>* d_input) {
    const auto layers = make_layers(model.config);
    const std::size_t n_blocks = layers.size() - 1;
    std::vector<double> d_out = d_raw;
    for (std::size_t idx = layers.size(); idx-- > 0;) {
        const LayerSpec& l = layers[idx];
        const bool need_d_in = idx > 0 || d_input != nullptr;
        std::vector<double> d_in;
        if (need_d_in) d_in.resize(static_cast<std::size_t>(l.in_c) * l.in_h * l.in_w);
        conv_backward(cache.acts[idx].data(), l, model.weights.data() + l.w_off,
                      d_out.data(), d_weights ? d_weights->data() + l.w_off : nullptr,
                      d_weights ? d_weights->data() + l.b_off : nullptr,
                      need_d_in ? d_in.data() : nullptr);
        if (idx == 0) {
            if (d_input) *d_input = std::move(d_in);
            break;
        }
        // through the leaky ReLU of block idx-1
        const auto& pre = cache.preacts[idx - 1];
        for (std::size_t i = 0; i < d_in.size(); ++i)
            if (pre[i] < 0) d_in[i] *= kLeakySlope;
        d_out = std::move(d_in);
    }
}

std::vector<double> image_to_tensor(const SpectrogramImage& image) {
    return image.pixels;  // single plane, row-major
}

RawGrid tensor_to_grid(const std::vector<double>& t, const DetectorConfig& cfg) {
    RawGrid raw;
    raw.grid_s = cfg.grid_s;
    raw.n_classes = cfg.n_classes;
    raw.v.resize(static_cast<std::size_t>(cfg.grid_s) * cfg.grid_s * cfg.raw_channels());
    const int s = cfg.grid_s;
    for (int c = 0; c < cfg.raw_channels(); ++c)
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j)
                raw.at(i, j, c) = t[(static_cast<std::size_t>(c) * s + i) * s + j];
    return raw;
}

std::vector<double> grid_to_tensor(const RawGrid& raw) {
    const int s = raw.grid_s;
    std::vector<double> t(raw.v.size());
    for (int c = 0; c < raw.channels(); ++c)
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j)
                t[(static_cast<std::size_t>(c) * s + i) * s + j] = raw.at(i, j, c);
    return t;
}

}  // namespace

std::size_t DetectorConfig::param_count() const {
    std::size_t n = 0;
    int in_c = 1;
    for (int oc : channels) {
        n += static_cast<std::size_t>(oc) * in_c * 9 + static_cast<std::size_t>(oc);
        in_c = oc;
    }
    n += static_cast<std::size_t>(raw_channels()) * in_c + static_cast<std::size_t>(raw_channels());
    return n;
}

void DetectorConfig::validate() const {
    if (n_classes < 1) throw std::invalid_argument("DetectorConfig: n_classes must be >= 1");
    if (channels.empty()) throw std::invalid_argument("DetectorConfig: empty channel list");
    if (input_h % grid_s != 0 || input_w % grid_s != 0)
        throw std::invalid_argument("DetectorConfig: input dims must be divisible by grid_s");
    int h = input_h, w = input_w;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] < 1) throw std::invalid_argument("DetectorConfig: bad channel width");
        h = (h + 2 - 3) / 2 + 1;
        w = (w + 2 - 3) / 2 + 1;
    }
    if (h != grid_s || w != grid_s)
        throw std::invalid_argument(
            "DetectorConfig: conv stack output does not match grid_s (need input = grid_s * 2^blocks)");
    if (conf_thresh < 0 || conf_thresh > 1 || nms_iou < 0 || nms_iou > 1)
        throw std::invalid_argument("DetectorConfig: thresholds must be in [0,1]");
}

double box_iou(double acx, double acy, double aw, double ah, double bcx, double bcy, double bw,
               double bh) {
    if (aw <= 0 || ah <= 0 || bw <= 0 || bh <= 0) return 0.0;
    const double ix = std::min(acx + aw / 2, bcx + bw / 2) - std::max(acx - aw / 2, bcx - bw / 2);
    const double iy = std::min(acy + ah / 2, bcy + bh / 2) - std::max(acy - ah / 2, bcy - bh / 2);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    return inter / (aw * ah + bw * bh - inter);
}

DetectorModel init_model(const DetectorConfig& config, std::uint64_t seed) {
    config.validate();
    DetectorModel model;
    model.config = config;
    model.weights.assign(config.param_count(), 0.0);
    Rng rng(seed);
    const auto layers = make_layers(config);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(l.in_c) * l.k * l.k));
        const std::size_t n_w = static_cast<std::size_t>(l.out_c) * l.in_c * l.k * l.k;
        for (std::size_t j = 0; j < n_w; ++j)
            model.weights[l.w_off + j] = std_dev * rng.normal();
        // biases stay zero except the head priors: objectness starts at 0.01,
        // box width/height near a typical burst footprint
        if (i == layers.size() - 1) {
            model.weights[l.b_off] = std::log(0.01 / 0.99);
            model.weights[l.b_off + 3] = std::log(0.12 / 0.88);
            model.weights[l.b_off + 4] = std::log(0.12 / 0.88);
        }
    }
    return model;
}

RawGrid forward(const DetectorModel& model, const SpectrogramImage& image) {
    model.config.validate();
    if (image.h != model.config.input_h || image.w != model.config.input_w)
        throw std::invalid_argument("forward: image dimensions do not match detector config");
    ForwardCache cache;
    forward_cached(model, image_to_tensor(image), cache);
    return tensor_to_grid(cache.acts.back(), model.config);
}

std::vector<DetectionBox> decode(const RawGrid& raw, double conf_thresh, double nms_iou) {
    if (conf_thresh < 0 || conf_thresh > 1 || nms_iou < 0 || nms_iou > 1)
        throw std::invalid_argument("decode: thresholds must be in [0,1]");
    const int s = raw.grid_s;
    std::vector<DetectionBox> cand;
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const double conf = sigmoid(raw.at(i, j, 0));
            if (conf < conf_thresh) continue;
            DetectionBox b;
            b.confidence = conf;
            b.cx = (j + sigmoid(raw.at(i, j, 1))) / s;
            b.cy = (i + sigmoid(raw.at(i, j, 2))) / s;
            b.w = sigmoid(raw.at(i, j, 3));
            b.h = sigmoid(raw.at(i, j, 4));
            int best = 0;
            for (int c = 1; c < raw.n_classes; ++c)
                if (raw.at(i, j, 5 + c) > raw.at(i, j, 5 + best)) best = c;
            b.class_id = best;
            cand.push_back(b);
        }
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const DetectionBox& a, const DetectionBox& b) {
                         return a.confidence > b.confidence;
                     });
    std::vector<DetectionBox> kept;
    for (const auto& b : cand) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.class_id != b.class_id) continue;
            if (box_iou(k.cx, k.cy, k.w, k.h, b.cx, b.cy, b.w, b.h) > nms_iou) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(b);
    }
    return kept;
}

LossResult training_loss(const RawGrid& raw, const std::vector<GroundTruthLabel>& labels) {
    const int s = raw.grid_s;
    LossResult res;
    res.grad.grid_s = s;
    res.grad.n_classes = raw.n_classes;
    res.grad.v.assign(raw.v.size(), 0.0);

    struct Target {
        double tx, ty, tw, th;
        int cls;
    };
    std::vector<int> assigned(static_cast<std::size_t>(s) * s, -1);
    std::vector<Target> targets;
    for (const auto& l : labels) {
        if (l.cx < 0 || l.cx > 1 || l.cy < 0 || l.cy > 1 || l.w <= 0 || l.w > 1 || l.h <= 0 ||
            l.h > 1 || l.cx - l.w / 2 < -1e-9 || l.cx + l.w / 2 > 1 + 1e-9 ||
            l.cy - l.h / 2 < -1e-9 || l.cy + l.h / 2 > 1 + 1e-9)
            throw std::invalid_argument("training_loss: label outside unit square");
        const int j = std::min(s - 1, static_cast<int>(l.cx * s));
        const int i = std::min(s - 1, static_cast<int>(l.cy * s));
        auto& slot = assigned[static_cast<std::size_t>(i) * s + j];
        if (slot >= 0) continue;  // first label wins the cell
        slot = static_cast<int>(targets.size());
        targets.push_back(Target{l.cx * s - j, l.cy * s - i, l.w, l.h, l.class_id});
    }

    double loss = 0.0;
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const int t_idx = assigned[static_cast<std::size_t>(i) * s + j];
            const double z_obj = raw.at(i, j, 0);
            if (t_idx < 0) {
                loss += kLambdaNoObj * softplus(z_obj);
                res.grad.at(i, j, 0) = kLambdaNoObj * sigmoid(z_obj);
                continue;
            }
            const Target& t = targets[static_cast<std::size_t>(t_idx)];
            loss += softplus(-z_obj);
            res.grad.at(i, j, 0) = sigmoid(z_obj) - 1.0;
            const double box_t[4] = {t.tx, t.ty, t.tw, t.th};
            for (int c = 0; c < 4; ++c) {
                const double z = raw.at(i, j, 1 + c);
                const double p = sigmoid(z);
                const double d = p - box_t[c];
                loss += kLambdaBox * d * d;
                res.grad.at(i, j, 1 + c) = kLambdaBox * 2.0 * d * p * (1.0 - p);
            }
            for (int c = 0; c < raw.n_classes; ++c) {
                const double z = raw.at(i, j, 5 + c);
                const double target = (c == t.cls) ? 1.0 : 0.0;
                loss += kLambdaCls * (target > 0.5 ? softplus(-z) : softplus(z));
                res.grad.at(i, j, 5 + c) = kLambdaCls * (sigmoid(z) - target);
            }
        }
    }
    res.loss = loss;
    return res;
}

LossResult attack_loss(const RawGrid& raw, const std::vector<int>& object_cells, double lambda) {
    const int s = raw.grid_s;
    std::vector<char> is_obj(static_cast<std::size_t>(s) * s, 0);
    for (int cell : object_cells) {
        if (cell < 0 || cell >= s * s)
            throw std::invalid_argument("attack_loss: object cell out of range");
        is_obj[static_cast<std::size_t>(cell)] = 1;
    }
    LossResult res;
    res.grad.grid_s = s;
    res.grad.n_classes = raw.n_classes;
    res.grad.v.assign(raw.v.size(), 0.0);
    double loss = 0.0;
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const double z = raw.at(i, j, 0);
            if (is_obj[static_cast<std::size_t>(i) * s + j]) {
                loss += softplus(-z);
                res.grad.at(i, j, 0) = sigmoid(z) - 1.0;
            } else {
                loss += lambda * softplus(z);
                res.grad.at(i, j, 0) = lambda * sigmoid(z);
            }
        }
    }
    res.loss = loss;
    return res;
}

Matrix backward_to_input(const DetectorModel& model, const SpectrogramImage& image,
                         const RawGrid& upstream) {
    if (image.h != model.config.input_h || image.w != model.config.input_w)
        throw std::invalid_argument("backward_to_input: image dimensions mismatch");
    if (upstream.grid_s != model.config.grid_s || upstream.n_classes != model.config.n_classes)
        throw std::invalid_argument("backward_to_input: upstream grid mismatch");
    ForwardCache cache;
    forward_cached(model, image_to_tensor(image), cache);
    std::vector<double> d_input;
    backward_cached(model, cache, grid_to_tensor(upstream), nullptr, &d_input);
    Matrix grad(image.h, image.w);
    for (int r = 0; r < image.h; ++r)
        for (int c = 0; c < image.w; ++c)
            grad.at(r, c) = d_input[static_cast<std::size_t>(r) * image.w + c];
    return grad;
}

Matrix hermitian_noise(int n_fft, int frames, Rng& rng) {
    Matrix t(n_fft, frames);
    const int half = n_fft / 2;
    for (int m = 0; m < frames; ++m) {
        for (int k = 0; k <= half; ++k) {
            const double g = rng.normal();
            t.at(k, m) = g;
            if (k > 0 && k < half) t.at(n_fft - k, m) = g;
        }
    }
    return t;
}

namespace {

SpectrogramImage jittered_image(const TrainSample& sample, double alpha_max, Rng& rng) {
    if (alpha_max <= 0.0) return to_grayscale(sample.mag, sample.mapping);
    const double alpha = rng.uniform(0.0, alpha_max);
    Matrix noise = hermitian_noise(sample.mag.rows, sample.mag.cols, rng);
    const double n_norm = matrix_norm(noise);
    const double target = alpha * matrix_norm(sample.mag);
    Matrix mag = sample.mag;
    if (n_norm > 0) {
        const double scale = target / n_norm;
        for (std::size_t i = 0; i < mag.v.size(); ++i)
            mag.v[i] = std::max(0.0, mag.v[i] + scale * noise.v[i]);
    }
    return to_grayscale(mag, sample.mapping);
}

}  // namespace

DetectorModel train(const DetectorModel& init, const std::vector<TrainSample>& train_set,
                    const TrainOptions& options,
                    const std::function<double(const DetectorModel&)>& val_metric,
                    TrainHistory* history) {
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
    DetectorModel model = init;
    const std::size_t n = train_set.size();
    const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(options.batch_size));
    std::vector<double> velocity(model.weights.size(), 0.0);
    Rng rng(options.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const int drop_epoch =
        static_cast<int>(options.lr_drop_epoch_frac * static_cast<double>(options.epochs));
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        const double lr = options.lr * (epoch >= drop_epoch ? options.lr_drop_factor : 1.0);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            std::vector<std::vector<double>> grads(count);
            std::vector<double> losses(count, 0.0);
            parallel_for(count, options.threads, [&](std::size_t b) {
                const TrainSample& sample = train_set[order[start + b]];
                Rng jitter_rng(derive_seed(options.seed,
                                           (static_cast<std::uint64_t>(epoch) << 32) ^
                                               (start + b)));
                const SpectrogramImage img =
                    jittered_image(sample, options.jitter_alpha_max, jitter_rng);
                ForwardCache cache;
                forward_cached(model, img.pixels, cache);
                const RawGrid raw = tensor_to_grid(cache.acts.back(), model.config);
                LossResult lr_res = training_loss(raw, sample.labels_img);
                losses[b] = lr_res.loss;
                grads[b].assign(model.weights.size(), 0.0);
                backward_cached(model, cache, grid_to_tensor(lr_res.grad), &grads[b], nullptr);
            });
            const double inv = 1.0 / static_cast<double>(count);
            for (std::size_t b = 0; b < count; ++b) epoch_loss += losses[b];
            for (std::size_t w = 0; w < model.weights.size(); ++w) {
                double g = 0.0;
                for (std::size_t b = 0; b < count; ++b) g += grads[b][w];
                velocity[w] = options.momentum * velocity[w] - lr * g * inv;
                model.weights[w] += velocity[w];
            }
        }
        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train: diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
        if (history) history->epoch_loss.push_back(epoch_loss);
        const bool last = epoch + 1 == options.epochs;
        if (val_metric && (last || (epoch + 1) % std::max(1, options.val_interval) == 0)) {
            const double v = val_metric(model);
            if (history) history->val_map.emplace_back(epoch + 1, v);
        }
    }
    return model;
}

std::vector<DetectionBox> detect_signal(const DetectorModel& model, const SignalBuffer& signal,
                                        const StftConfig& stft_config, const DbMapping& mapping) {
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag, phase] = split(y);
    const SpectrogramImage img = to_grayscale(mag, mapping);
    const RawGrid raw = forward(model, img);
    return decode(raw, model.config.conf_thresh, model.config.nms_iou);
}

std::vector<DetectionBox> detect_signal(const DetectorModel& model, const SignalBuffer& signal,
                                        const StftConfig& stft_config) {
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag, phase] = split(y);
    const DbMapping mapping = DbMapping::from_magnitude(mag);
    const SpectrogramImage img = to_grayscale(mag, mapping);
    const RawGrid raw = forward(model, img);
    return decode(raw, model.config.conf_thresh, model.config.nms_iou);
}

namespace {

constexpr char kModelMagic[8] = {'S', 'G', 'A', 'D', 'V', 'D', 'E', 'T'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("load_model: truncated file");
    return v;
}

}  // namespace

void save_model(const DetectorModel& model, const std::filesystem::path& path) {
    model.config.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path.string());
    out.write(kModelMagic, sizeof(kModelMagic));
    write_raw(out, kModelVersion);
    const auto& c = model.config;
    write_raw(out, static_cast<std::int32_t>(c.input_h));
    write_raw(out, static_cast<std::int32_t>(c.input_w));
    write_raw(out, static_cast<std::int32_t>(c.grid_s));
    write_raw(out, static_cast<std::int32_t>(c.n_classes));
    write_raw(out, static_cast<std::int32_t>(c.channels.size()));
    for (int ch : c.channels) write_raw(out, static_cast<std::int32_t>(ch));
    write_raw(out, c.conf_thresh);
    write_raw(out, c.nms_iou);
    write_raw(out, static_cast<std::uint64_t>(model.weights.size()));
    for (double w : model.weights) write_raw(out, static_cast<float>(w));
    if (!out) throw std::runtime_error("save_model: short write to " + path.string());
}

DetectorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw std::runtime_error("load_model: bad magic in " + path.string());
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kModelVersion)
        throw std::runtime_error("load_model: unsupported version " + std::to_string(version));
    DetectorModel model;
    model.config.input_h = read_raw<std::int32_t>(in);
    model.config.input_w = read_raw<std::int32_t>(in);
    model.config.grid_s = read_raw<std::int32_t>(in);
    model.config.n_classes = read_raw<std::int32_t>(in);
    const auto n_layers = read_raw<std::int32_t>(in);
    model.config.channels.clear();
    for (std::int32_t i = 0; i < n_layers; ++i)
        model.config.channels.push_back(read_raw<std::int32_t>(in));
    model.config.conf_thresh = read_raw<double>(in);
    model.config.nms_iou = read_raw<double>(in);
    model.config.validate();
    const auto n_params = read_raw<std::uint64_t>(in);
    if (n_params != model.config.param_count())
        throw std::runtime_error("load_model: parameter count mismatch");
    model.weights.resize(n_params);
    for (auto& w : model.weights) w = static_cast<double>(read_raw<float>(in));
    return model;
}

}  // namespace sigadv

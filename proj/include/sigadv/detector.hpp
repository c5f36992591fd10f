#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "sigadv/common.hpp"
#include "sigadv/signal_data.hpp"
#include "sigadv/stft.hpp"

namespace sigadv {

struct DetectorConfig {
    int input_h = 128;
    int input_w = 128;
    int grid_s = 8;
    int n_classes = 3;
    std::vector<int> channels = {16, 32, 64, 64};  // one stride-2 conv block each
    double conf_thresh = 0.25;
    double nms_iou = 0.45;

    int raw_channels() const { return 5 + n_classes; }
    std::size_t param_count() const;
    void validate() const;
};

struct DetectorModel {
    DetectorConfig config;
    std::vector<double> weights;
};

/// Per-cell predictions, channel order [objectness, tx, ty, tw, th, class...].
struct RawGrid {
    int grid_s = 0;
    int n_classes = 0;
    std::vector<double> v;

    int channels() const { return 5 + n_classes; }
    double& at(int i, int j, int c) {
        return v[(static_cast<std::size_t>(i) * grid_s + j) * channels() + c];
    }
    const double& at(int i, int j, int c) const {
        return v[(static_cast<std::size_t>(i) * grid_s + j) * channels() + c];
    }
};

/// Decoded box in image coordinates (cy measured from the top row).
struct DetectionBox {
    int class_id = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
    double confidence = 0;
};

/// Labels store cy as a frequency fraction (DC = 0); the image has the highest
/// frequency on row 0, so training/eval flip cy once, here.
inline GroundTruthLabel to_image_space(GroundTruthLabel l) {
    l.cy = 1.0 - l.cy;
    return l;
}

double box_iou(double acx, double acy, double aw, double ah,
               double bcx, double bcy, double bw, double bh);

DetectorModel init_model(const DetectorConfig& config, std::uint64_t seed);

RawGrid forward(const DetectorModel& model, const SpectrogramImage& image);

std::vector<DetectionBox> decode(const RawGrid& raw, double conf_thresh, double nms_iou);

struct LossResult {
    double loss = 0;
    RawGrid grad;
};

/// BCE objectness + squared box error + BCE class terms; labels in image space.
LossResult training_loss(const RawGrid& raw, const std::vector<GroundTruthLabel>& labels);

/// Eq.-style vanishing loss: cells listed in object_cells (flattened i*S+j)
/// carry the object indicator; an empty set penalizes every objectness score.
LossResult attack_loss(const RawGrid& raw, const std::vector<int>& object_cells, double lambda);

/// Full reverse-mode gradient of a raw-grid cotangent back to the input pixels.
Matrix backward_to_input(const DetectorModel& model, const SpectrogramImage& image,
                         const RawGrid& upstream);

struct TrainSample {
    MagnitudeMatrix mag;      // clean magnitudes; jitter is applied per presentation
    DbMapping mapping;
    std::vector<GroundTruthLabel> labels_img;
};

struct TrainOptions {
    int epochs = 320;
    int batch_size = 8;
    double lr = 0.003;
    double momentum = 0.9;
    double lr_drop_epoch_frac = 0.8;
    double lr_drop_factor = 0.1;
    double jitter_alpha_max = 0.1;  // magnitude-noise augmentation budget
    std::uint64_t seed = 1;
    int threads = 0;
    int val_interval = 10;
};

struct TrainHistory {
    std::vector<double> epoch_loss;
    std::vector<std::pair<int, double>> val_map;  // (epoch, mAP)
};

/// SGD with momentum; deterministic for a given seed and thread count.
/// val_metric (optional) is polled every val_interval epochs.
DetectorModel train(const DetectorModel& init, const std::vector<TrainSample>& train_set,
                    const TrainOptions& options,
                    const std::function<double(const DetectorModel&)>& val_metric,
                    TrainHistory* history);

std::vector<DetectionBox> detect_signal(const DetectorModel& model, const SignalBuffer& signal,
                                        const StftConfig& stft_config, const DbMapping& mapping);
/// Same pipeline with the dB mapping frozen from the signal's own magnitudes.
std::vector<DetectionBox> detect_signal(const DetectorModel& model, const SignalBuffer& signal,
                                        const StftConfig& stft_config);

void save_model(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_model(const std::filesystem::path& path);

/// Gaussian half-spectrum noise mirrored onto negative-frequency bins
/// (unscaled); shared by the random-noise baseline and train-time jitter.
Matrix hermitian_noise(int n_fft, int frames, Rng& rng);

}  // namespace sigadv

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sigadv/attack.hpp"
#include "sigadv/detector.hpp"
#include "sigadv/signal_data.hpp"

namespace sigadv {

struct MetricsReport {
    double map = 0;
    double recall = 0;
    double precision = 0;
    std::vector<double> per_class_ap;
    int tp = 0, fp = 0, fn = 0;  // at the reporting confidence threshold
};

/// Intersection-over-union of two decoded boxes.
double iou(const DetectionBox& a, const DetectionBox& b);

struct MatchCounts {
    int tp = 0, fp = 0, fn = 0;
    std::vector<char> det_is_tp;  // aligned with the input detections
};

/// Greedy confidence-descending matching; each ground truth matched at most
/// once, class must agree, IoU >= iou_thresh. Labels in image space.
MatchCounts match_detections(const std::vector<DetectionBox>& dets,
                             const std::vector<GroundTruthLabel>& gts, double iou_thresh);

/// All-point interpolated area under the precision-recall curve.
/// scored holds (confidence, is_true_positive) pairs; n_gt counts positives.
double average_precision(std::vector<std::pair<double, bool>> scored, int n_gt);

/// Dataset-level metrics from per-image (detections, ground truth) pairs.
/// AP uses the whole ranking; precision/recall only detections >= report_conf.
MetricsReport evaluate_pairs(
    const std::vector<std::pair<std::vector<DetectionBox>, std::vector<GroundTruthLabel>>>& images,
    int n_classes, double iou_thresh, double report_conf);

using Perturber = std::function<SignalBuffer(const SignalBuffer&, std::size_t)>;

struct EvalOptions {
    double iou_thresh = 0.5;
    double ap_conf_floor = 0.05;  // decode floor used to build the PR curve
    int threads = 0;
    std::uint64_t seed = 99;      // seeds per-file noise perturbers
};

/// Runs the detector over every (optionally perturbed) manifest entry.
MetricsReport evaluate_dataset(const DetectorModel& model, const DatasetManifest& manifest,
                               const std::filesystem::path& root, const StftConfig& stft_config,
                               const Perturber* perturber, const EvalOptions& options);

/// In-memory variant used for validation during training.
MetricsReport evaluate_samples(const DetectorModel& model, const std::vector<TrainSample>& samples,
                               const EvalOptions& options);

/// Loads spectrograms + image-space labels for the whole manifest.
std::vector<TrainSample> load_samples(const DatasetManifest& manifest,
                                      const std::filesystem::path& root,
                                      const StftConfig& stft_config, int threads);

struct RatioRow {
    std::string method;  // "None", "FGM", "PGD"
    double alpha = 0;
    double mean_ratio = 0, max_ratio = 0, min_ratio = 0;
};

/// Time-domain perturbation ratio statistics per (method, alpha), plus the
/// round-trip-only "None" baseline row.
std::vector<RatioRow> ratio_experiment(const DatasetManifest& manifest,
                                       const std::filesystem::path& root,
                                       const DetectorModel* model, const StftConfig& stft_config,
                                       const std::vector<AttackMethod>& methods,
                                       const std::vector<double>& alphas,
                                       const AttackConfig& base_config,
                                       const EvalOptions& options);

struct ExperimentRow {
    std::string sample_type;
    MetricsReport metrics;
};

struct AttackExperimentResult {
    std::vector<ExperimentRow> rows;
    // per-row attack reports for the gradient/noise rows (constraint audits)
    std::vector<std::pair<std::string, std::vector<AttackReport>>> reports;
};

/// Clean row, then RN_a, FGM_a, PGD_a rows.
AttackExperimentResult attack_experiment(const DatasetManifest& manifest,
                                         const std::filesystem::path& root,
                                         const DetectorModel& model,
                                         const StftConfig& stft_config,
                                         const std::vector<double>& attack_alphas,
                                         const std::vector<double>& rn_alphas,
                                         const AttackConfig& base_config,
                                         const EvalOptions& options);

void write_table1_csv(const std::vector<RatioRow>& rows, const std::filesystem::path& path);
void write_table2_csv(const std::vector<ExperimentRow>& rows, const std::filesystem::path& path);
void write_attack_report_csv(const std::vector<std::pair<std::string, AttackReport>>& rows,
                             const std::filesystem::path& path);

}  // namespace sigadv

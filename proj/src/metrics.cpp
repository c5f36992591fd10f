#include "sigadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sigadv/common.hpp"

namespace sigadv {

namespace fs = std::filesystem;

double iou(const DetectionBox& a, const DetectionBox& b) {
    return box_iou(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h);
}

MatchCounts match_detections(const std::vector<DetectionBox>& dets,
                             const std::vector<GroundTruthLabel>& gts, double iou_thresh) {
    MatchCounts out;
    out.det_is_tp.assign(dets.size(), 0);
    std::vector<char> gt_used(gts.size(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        const auto& det = dets[d];
        double best = 0.0;
        std::ptrdiff_t best_g = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || gts[g].class_id != det.class_id) continue;
            const double ov = box_iou(det.cx, det.cy, det.w, det.h, gts[g].cx, gts[g].cy,
                                      gts[g].w, gts[g].h);
            if (ov > best) {
                best = ov;
                best_g = static_cast<std::ptrdiff_t>(g);
            }
        }
        if (best_g >= 0 && best >= iou_thresh) {
            gt_used[static_cast<std::size_t>(best_g)] = 1;
            out.det_is_tp[d] = 1;
            ++out.tp;
        } else {
            ++out.fp;
        }
    }
    out.fn = static_cast<int>(gts.size()) - out.tp;
    return out;
}

double average_precision(std::vector<std::pair<double, bool>> scored, int n_gt) {
    if (n_gt <= 0) return 0.0;
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> recall, precision;
    recall.reserve(scored.size());
    precision.reserve(scored.size());
    int tp = 0, fp = 0;
    for (const auto& [conf, is_tp] : scored) {
        (void)conf;
        is_tp ? ++tp : ++fp;
        recall.push_back(static_cast<double>(tp) / n_gt);
        precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    // precision envelope from the right, then sum rectangle areas
    double ap = 0.0;
    double env = 0.0;
    for (std::size_t i = scored.size(); i-- > 0;) {
        env = std::max(env, precision[i]);
        const double r_lo = i == 0 ? 0.0 : recall[i - 1];
        if (recall[i] > r_lo) ap += (recall[i] - r_lo) * env;
    }
    return ap;
}

MetricsReport evaluate_pairs(
    const std::vector<std::pair<std::vector<DetectionBox>, std::vector<GroundTruthLabel>>>& images,
    int n_classes, double iou_thresh, double report_conf) {
    std::vector<std::vector<std::pair<double, bool>>> scored(static_cast<std::size_t>(n_classes));
    std::vector<int> n_gt(static_cast<std::size_t>(n_classes), 0);
    MetricsReport rep;

    for (const auto& [dets_all, gts] : images) {
        for (const auto& g : gts)
            if (g.class_id >= 0 && g.class_id < n_classes) ++n_gt[static_cast<std::size_t>(g.class_id)];

        // full-ranking matching per class for AP
        for (int c = 0; c < n_classes; ++c) {
            std::vector<DetectionBox> dets;
            for (const auto& d : dets_all)
                if (d.class_id == c) dets.push_back(d);
            std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
                return a.confidence > b.confidence;
            });
            std::vector<GroundTruthLabel> cls_gts;
            for (const auto& g : gts)
                if (g.class_id == c) cls_gts.push_back(g);
            const MatchCounts mc = match_detections(dets, cls_gts, iou_thresh);
            for (std::size_t d = 0; d < dets.size(); ++d)
                scored[static_cast<std::size_t>(c)].emplace_back(dets[d].confidence,
                                                                 mc.det_is_tp[d] != 0);
        }

        // fixed-threshold counts for precision/recall
        std::vector<DetectionBox> strong;
        for (const auto& d : dets_all)
            if (d.confidence >= report_conf) strong.push_back(d);
        std::stable_sort(strong.begin(), strong.end(), [](const auto& a, const auto& b) {
            return a.confidence > b.confidence;
        });
        const MatchCounts mc = match_detections(strong, gts, iou_thresh);
        rep.tp += mc.tp;
        rep.fp += mc.fp;
        rep.fn += mc.fn;
    }

    double ap_sum = 0.0;
    int ap_classes = 0;
    rep.per_class_ap.assign(static_cast<std::size_t>(n_classes), 0.0);
    for (int c = 0; c < n_classes; ++c) {
        if (n_gt[static_cast<std::size_t>(c)] == 0) continue;  // class absent from ground truth
        const double ap = average_precision(scored[static_cast<std::size_t>(c)],
                                            n_gt[static_cast<std::size_t>(c)]);
        rep.per_class_ap[static_cast<std::size_t>(c)] = ap;
        ap_sum += ap;
        ++ap_classes;
    }
    rep.map = ap_classes > 0 ? ap_sum / ap_classes : 0.0;
    rep.precision = (rep.tp + rep.fp) > 0 ? static_cast<double>(rep.tp) / (rep.tp + rep.fp) : 0.0;
    rep.recall = (rep.tp + rep.fn) > 0 ? static_cast<double>(rep.tp) / (rep.tp + rep.fn) : 0.0;
    return rep;
}

namespace {

std::vector<DetectionBox> detect_for_eval(const DetectorModel& model, const SignalBuffer& signal,
                                          const StftConfig& stft_config, double conf_floor) {
    const TimeFreqMatrix y = stft(signal, stft_config);
    auto [mag, phase] = split(y);
    const DbMapping mapping = DbMapping::from_magnitude(mag);
    const SpectrogramImage img = to_grayscale(mag, mapping);
    const RawGrid raw = forward(model, img);
    return decode(raw, conf_floor, model.config.nms_iou);
}

std::vector<GroundTruthLabel> labels_in_image_space(const std::vector<GroundTruthLabel>& labels) {
    std::vector<GroundTruthLabel> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(to_image_space(l));
    return out;
}

}  // namespace

MetricsReport evaluate_dataset(const DetectorModel& model, const DatasetManifest& manifest,
                               const fs::path& root, const StftConfig& stft_config,
                               const Perturber* perturber, const EvalOptions& options) {
    const std::size_t n = manifest.entries.size();
    std::vector<std::pair<std::vector<DetectionBox>, std::vector<GroundTruthLabel>>> images(n);
    parallel_for(n, options.threads, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        SignalBuffer sig = read_signal_file(root / entry.signal_path, manifest.sample_rate);
        if (perturber) sig = (*perturber)(sig, i);
        images[i].first = detect_for_eval(model, sig, stft_config, options.ap_conf_floor);
        images[i].second = labels_in_image_space(read_label_file(root / entry.label_path));
    });
    return evaluate_pairs(images, model.config.n_classes, options.iou_thresh,
                          model.config.conf_thresh);
}

MetricsReport evaluate_samples(const DetectorModel& model, const std::vector<TrainSample>& samples,
                               const EvalOptions& options) {
    std::vector<std::pair<std::vector<DetectionBox>, std::vector<GroundTruthLabel>>> images(
        samples.size());
    parallel_for(samples.size(), options.threads, [&](std::size_t i) {
        const SpectrogramImage img = to_grayscale(samples[i].mag, samples[i].mapping);
        const RawGrid raw = forward(model, img);
        images[i].first = decode(raw, options.ap_conf_floor, model.config.nms_iou);
        images[i].second = samples[i].labels_img;
    });
    return evaluate_pairs(images, model.config.n_classes, options.iou_thresh,
                          model.config.conf_thresh);
}

std::vector<TrainSample> load_samples(const DatasetManifest& manifest, const fs::path& root,
                                      const StftConfig& stft_config, int threads) {
    std::vector<TrainSample> samples(manifest.entries.size());
    parallel_for(manifest.entries.size(), threads, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        const SignalBuffer sig = read_signal_file(root / entry.signal_path, manifest.sample_rate);
        const TimeFreqMatrix y = stft(sig, stft_config);
        auto [mag, phase] = split(y);
        samples[i].mag = std::move(mag);
        samples[i].mapping = DbMapping::from_magnitude(samples[i].mag);
        samples[i].labels_img = labels_in_image_space(read_label_file(root / entry.label_path));
    });
    return samples;
}

namespace {

std::string row_label(const std::string& method, double alpha) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s_%g", method.c_str(), alpha);
    return buf;
}

AdversarialExample run_attack_on(const DetectorModel& model, const SignalBuffer& sig,
                                 const StftConfig& stft_config, AttackMethod method,
                                 double alpha, const AttackConfig& base,
                                 std::uint64_t seed) {
    if (method == AttackMethod::RandomNoise)
        return random_noise_baseline(sig, stft_config, alpha, seed);
    const TimeFreqMatrix y = stft(sig, stft_config);
    auto [mag, phase] = split(y);
    const DbMapping mapping = DbMapping::from_magnitude(mag);
    AttackConfig cfg = base;
    cfg.method = method;
    cfg.alpha = alpha;
    cfg.seed = seed;
    return method == AttackMethod::Fgm ? fgm_attack(model, sig, stft_config, mapping, cfg)
                                       : pgd_attack(model, sig, stft_config, mapping, cfg);
}

}  // namespace

std::vector<RatioRow> ratio_experiment(const DatasetManifest& manifest, const fs::path& root,
                                       const DetectorModel* model, const StftConfig& stft_config,
                                       const std::vector<AttackMethod>& methods,
                                       const std::vector<double>& alphas,
                                       const AttackConfig& base_config,
                                       const EvalOptions& options) {
    const std::size_t n = manifest.entries.size();
    if (n == 0) throw std::invalid_argument("ratio_experiment: empty manifest");

    std::vector<RatioRow> rows;
    {
        // round-trip baseline (no perturbation)
        std::vector<double> ratios(n);
        parallel_for(n, options.threads, [&](std::size_t i) {
            const SignalBuffer sig =
                read_signal_file(root / manifest.entries[i].signal_path, manifest.sample_rate);
            const TimeFreqMatrix y = stft(sig, stft_config);
            const SignalBuffer back = istft(y, stft_config, sig.size()).signal;
            ratios[i] = l2_distance(back.samples, sig.samples) /
                        std::max(l2_norm(sig.samples), 1e-300);
        });
        RatioRow row{"None", 0.0, 0.0, ratios[0], ratios[0]};
        double sum = 0.0;
        for (double r : ratios) {
            sum += r;
            row.max_ratio = std::max(row.max_ratio, r);
            row.min_ratio = std::min(row.min_ratio, r);
        }
        row.mean_ratio = sum / static_cast<double>(n);
        rows.push_back(row);
    }

    for (const AttackMethod method : methods) {
        if (method != AttackMethod::RandomNoise && model == nullptr)
            throw std::invalid_argument("ratio_experiment: gradient methods need a trained model");
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            const double alpha = alphas[a];
            std::vector<double> ratios(n);
            parallel_for(n, options.threads, [&](std::size_t i) {
                const SignalBuffer sig = read_signal_file(
                    root / manifest.entries[i].signal_path, manifest.sample_rate);
                const AdversarialExample adv =
                    run_attack_on(*model, sig, stft_config, method, alpha, base_config,
                                  derive_seed(options.seed, a * 100003 + i));
                ratios[i] = adv.report.time_ratio;
            });
            RatioRow row;
            row.method = method == AttackMethod::Fgm
                             ? "FGM"
                             : (method == AttackMethod::Pgd ? "PGD" : "RN");
            row.alpha = alpha;
            row.max_ratio = ratios[0];
            row.min_ratio = ratios[0];
            double sum = 0.0;
            for (double r : ratios) {
                sum += r;
                row.max_ratio = std::max(row.max_ratio, r);
                row.min_ratio = std::min(row.min_ratio, r);
            }
            row.mean_ratio = sum / static_cast<double>(n);
            rows.push_back(row);
        }
    }
    return rows;
}

AttackExperimentResult attack_experiment(const DatasetManifest& manifest, const fs::path& root,
                                         const DetectorModel& model, const StftConfig& stft_config,
                                         const std::vector<double>& attack_alphas,
                                         const std::vector<double>& rn_alphas,
                                         const AttackConfig& base_config,
                                         const EvalOptions& options) {
    const std::size_t n = manifest.entries.size();
    if (n == 0) throw std::invalid_argument("attack_experiment: empty manifest");

    AttackExperimentResult out;
    out.rows.push_back(
        {"Sample", evaluate_dataset(model, manifest, root, stft_config, nullptr, options)});

    struct RowPlan {
        AttackMethod method;
        double alpha;
        std::string label;
    };
    std::vector<RowPlan> plan;
    for (double a : rn_alphas) plan.push_back({AttackMethod::RandomNoise, a, row_label("RN", a)});
    for (double a : attack_alphas) plan.push_back({AttackMethod::Fgm, a, row_label("FGM", a)});
    for (double a : attack_alphas) plan.push_back({AttackMethod::Pgd, a, row_label("PGD", a)});

    for (std::size_t p = 0; p < plan.size(); ++p) {
        const RowPlan& rp = plan[p];
        std::vector<std::pair<std::vector<DetectionBox>, std::vector<GroundTruthLabel>>> images(n);
        std::vector<AttackReport> reports(n);
        parallel_for(n, options.threads, [&](std::size_t i) {
            const auto& entry = manifest.entries[i];
            const SignalBuffer sig =
                read_signal_file(root / entry.signal_path, manifest.sample_rate);
            AdversarialExample adv =
                run_attack_on(model, sig, stft_config, rp.method, rp.alpha, base_config,
                              derive_seed(options.seed, p * 100003 + i));
            images[i].first =
                detect_for_eval(model, adv.signal, stft_config, options.ap_conf_floor);
            images[i].second = labels_in_image_space(read_label_file(root / entry.label_path));
            reports[i] = std::move(adv.report);
        });
        out.rows.push_back({rp.label, evaluate_pairs(images, model.config.n_classes,
                                                     options.iou_thresh,
                                                     model.config.conf_thresh)});
        out.reports.emplace_back(rp.label, std::move(reports));
    }
    return out;
}

void write_table1_csv(const std::vector<RatioRow>& rows, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_table1_csv: cannot open " + path.string());
    out << "method,tf_perturbation_ratio,time_ratio_mean,time_ratio_max,time_ratio_min\n";
    for (const auto& r : rows) {
        out << r.method << ',' << fmt_double(r.alpha) << ',' << fmt_double(r.mean_ratio) << ','
            << fmt_double(r.max_ratio) << ',' << fmt_double(r.min_ratio) << '\n';
    }
}

void write_table2_csv(const std::vector<ExperimentRow>& rows, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_table2_csv: cannot open " + path.string());
    out << "sample_type,map,recall,precision\n";
    for (const auto& r : rows) {
        out << r.sample_type << ',' << fmt_double(r.metrics.map) << ','
            << fmt_double(r.metrics.recall) << ',' << fmt_double(r.metrics.precision) << '\n';
    }
}

void write_attack_report_csv(const std::vector<std::pair<std::string, AttackReport>>& rows,
                             const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_attack_report_csv: cannot open " + path.string());
    out << "file,method,alpha,iterations_used,tf_ratio,time_ratio,bound_rhs,"
           "detections_before,detections_after,terminated_by\n";
    for (const auto& [file, r] : rows) {
        out << file << ',' << r.method << ',' << fmt_double(r.alpha) << ',' << r.iterations_used
            << ',' << fmt_double(r.tf_ratio) << ',' << fmt_double(r.time_ratio) << ','
            << fmt_double(r.bound_rhs) << ',' << r.detections_before << ','
            << r.detections_after << ',' << to_string(r.terminated_by) << '\n';
    }
}

}  // namespace sigadv

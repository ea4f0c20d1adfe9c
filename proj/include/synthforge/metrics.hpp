#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/log.hpp"
#include "synthforge/sampler.hpp"

namespace synthforge::metrics {

struct Detection {
    std::string image;  // matches LabeledImage::ref
    std::string class_label;
    BoxF box;
    double confidence = 0;
};

inline void validate_box(const BoxF& b) {
    if (b.x1 < b.x0 || b.y1 < b.y0) {
        raise(ErrorKind::InvalidInput, "degenerate box (max < min)");
    }
}

inline double box_iou(const BoxF& a, const BoxF& b) {
    validate_box(a);
    validate_box(b);
    return iou(a, b);
}

struct MatchResult {
    std::vector<bool> is_tp;  // aligned with the input prediction order
    long long unmatched_gt = 0;
};

// PASCAL-style greedy matching, per class and image: predictions in
// descending confidence (ties keep input order), each taking the
// highest-IoU still-unmatched ground truth at or above the threshold.
// IoU ties resolve to the lowest ground-truth index.
inline MatchResult match_detections(const std::vector<Detection>& preds,
                                    const sampler::LabeledSet& gts, double iou_thresh = 0.5) {
    MatchResult result;
    result.is_tp.assign(preds.size(), false);

    std::map<std::string, std::size_t> image_index;
    for (std::size_t i = 0; i < gts.images.size(); ++i) image_index[gts.images[i].ref] = i;

    // group prediction indices by (image, class)
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        validate_box(preds[i].box);
        groups[{preds[i].image, preds[i].class_label}].push_back(i);
    }

    long long gt_total = 0;
    for (const auto& img : gts.images) gt_total += static_cast<long long>(img.instances.size());

    long long matched = 0;
    for (auto& [key, indices] : groups) {
        std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
            return preds[a].confidence > preds[b].confidence;
        });
        auto img_it = image_index.find(key.first);
        if (img_it == image_index.end()) continue;  // all FP against an unknown image
        const auto& image = gts.images[img_it->second];

        std::vector<std::size_t> gt_indices;
        for (std::size_t g = 0; g < image.instances.size(); ++g) {
            if (image.instances[g].class_label == key.second) gt_indices.push_back(g);
        }
        std::vector<bool> used(gt_indices.size(), false);
        for (std::size_t pi : indices) {
            double best_iou = 0;
            std::size_t best_g = gt_indices.size();
            for (std::size_t g = 0; g < gt_indices.size(); ++g) {
                if (used[g]) continue;
                double v = iou(preds[pi].box, image.instances[gt_indices[g]].box);
                if (v > best_iou) {
                    best_iou = v;
                    best_g = g;
                }
            }
            if (best_g < gt_indices.size() && best_iou >= iou_thresh) {
                used[best_g] = true;
                result.is_tp[pi] = true;
                ++matched;
            }
        }
    }
    result.unmatched_gt = gt_total - matched;
    return result;
}

// All-point interpolated AP (precision envelope integrated exactly over the
// recall steps). Input is the ranked list: (confidence, is_tp) sorted by
// descending confidence.
inline double average_precision(const std::vector<std::pair<double, bool>>& ranked,
                                long long n_gt) {
    if (n_gt < 1) raise(ErrorKind::UndefinedMetric, "AP undefined with zero ground truth");
    std::vector<double> precision(ranked.size()), recall(ranked.size());
    long long tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (ranked[k].second) ++tp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    // envelope: precision at recall r becomes max precision at recall >= r
    for (std::size_t k = precision.size(); k-- > 1;) {
        precision[k - 1] = std::max(precision[k - 1], precision[k]);
    }
    double ap = 0, prev_recall = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (recall[k] > prev_recall) {
            ap += (recall[k] - prev_recall) * precision[k];
            prev_recall = recall[k];
        }
    }
    return ap;
}

struct ClassMetrics {
    double ap = 0;
    bool ap_defined = false;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    long long tp = 0, fp = 0, fn = 0;
    long long n_gt = 0;
};

struct EvalReport {
    std::map<std::string, ClassMetrics> per_class;
    double map = 0;  // mean over classes with defined AP
    int classes_in_map = 0;
};

// AP per class over the full ranked list; precision/recall/F1 at the
// operating confidence threshold (predictions below it are discarded and
// the survivors re-matched). mAP is the unweighted mean of defined APs.
inline EvalReport evaluate_detection(const std::vector<Detection>& preds,
                                     const sampler::LabeledSet& gts, double iou_thresh = 0.5,
                                     double confidence_thresh = 0.5) {
    EvalReport report;
    std::map<std::string, long long> n_gt;
    for (const auto& cls : gts.vocabulary) n_gt[cls] = 0;
    for (const auto& img : gts.images) {
        for (const auto& inst : img.instances) ++n_gt[inst.class_label];
    }

    MatchResult full = match_detections(preds, gts, iou_thresh);

    std::vector<Detection> thresholded;
    std::vector<std::size_t> thresholded_src;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].confidence >= confidence_thresh) {
            thresholded.push_back(preds[i]);
            thresholded_src.push_back(i);
        }
    }
    MatchResult at_thresh = match_detections(thresholded, gts, iou_thresh);

    for (const auto& cls : gts.vocabulary) {
        ClassMetrics m;
        m.n_gt = n_gt[cls];

        std::vector<std::pair<double, bool>> ranked;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i].class_label == cls) ranked.push_back({preds[i].confidence, full.is_tp[i]});
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        if (m.n_gt > 0) {
            m.ap = average_precision(ranked, m.n_gt);
            m.ap_defined = true;
        } else {
            log_warn("class " + cls + " absent from ground truth: AP undefined, excluded from mAP");
        }

        for (std::size_t t = 0; t < thresholded.size(); ++t) {
            if (thresholded[t].class_label != cls) continue;
            if (at_thresh.is_tp[t]) {
                ++m.tp;
            } else {
                ++m.fp;
            }
        }
        m.fn = m.n_gt - m.tp;
        m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
        m.recall = m.n_gt > 0 ? static_cast<double>(m.tp) / m.n_gt : 0.0;
        m.f1 = (m.precision + m.recall) > 0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        report.per_class[cls] = m;
    }

    double ap_sum = 0;
    for (const auto& [_, m] : report.per_class) {
        if (m.ap_defined) {
            ap_sum += m.ap;
            ++report.classes_in_map;
        }
    }
    report.map = report.classes_in_map > 0 ? ap_sum / report.classes_in_map : 0.0;
    return report;
}

struct SegReport {
    double iou_pct = 0;      // 100 * TP / (TP+FP+FN)
    double fn_rate_pct = 0;  // 100 * FN / (TP+FN)
    double fp_rate_pct = 0;  // 100 * FP / (FP+TN)
    bool zero_denominator = false;
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline SegReport segmentation_report_from_counts(long long tp, long long fp, long long fn,
                                                 long long tn) {
    SegReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    if (tp + fp + fn > 0) {
        r.iou_pct = 100.0 * tp / static_cast<double>(tp + fp + fn);
    } else {
        r.zero_denominator = true;
    }
    if (tp + fn > 0) {
        r.fn_rate_pct = 100.0 * fn / static_cast<double>(tp + fn);
    } else {
        r.zero_denominator = true;
    }
    if (fp + tn > 0) {
        r.fp_rate_pct = 100.0 * fp / static_cast<double>(fp + tn);
    } else {
        r.zero_denominator = true;
    }
    return r;
}

// Pixelwise binary comparison (nonzero = foreground).
inline SegReport evaluate_segmentation(const ImageU8& pred_mask, const ImageU8& gt_mask) {
    if (pred_mask.width() != gt_mask.width() || pred_mask.height() != gt_mask.height()) {
        raise(ErrorKind::InvalidInput, "mask dimensions differ");
    }
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int y = 0; y < pred_mask.height(); ++y) {
        for (int x = 0; x < pred_mask.width(); ++x) {
            bool p = pred_mask(x, y, 0) != 0;
            bool g = gt_mask(x, y, 0) != 0;
            if (p && g) {
                ++tp;
            } else if (p && !g) {
                ++fp;
            } else if (!p && g) {
                ++fn;
            } else {
                ++tn;
            }
        }
    }
    return segmentation_report_from_counts(tp, fp, fn, tn);
}

// --- prediction ingestion ------------------------------------------------

// JSON lines: {"image": ..., "class": ..., "box": [x1,y1,x2,y2], "confidence": ...}
inline std::vector<Detection> load_predictions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open predictions " + path);
    std::vector<Detection> preds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            Detection d;
            d.image = j.at("image").get<std::string>();
            d.class_label = j.at("class").get<std::string>();
            d.box = BoxF{j.at("box").at(0).get<double>(), j.at("box").at(1).get<double>(),
                         j.at("box").at(2).get<double>(), j.at("box").at(3).get<double>()};
            d.confidence = j.at("confidence").get<double>();
            if (d.confidence < 0.0 || d.confidence > 1.0) {
                raise(ErrorKind::InvalidInput, "confidence outside [0,1]");
            }
            validate_box(d.box);
            preds.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::Format,
                  "bad prediction at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return preds;
}

// Directory of YOLO-format label files with a trailing confidence column:
// "class_idx cx cy w h conf", one file per image, paired with ground-truth
// images by file stem. Class indices resolve through classes.txt in the
// directory when present, otherwise through the ground-truth vocabulary
// order. Boxes are denormalized with the ground-truth image dimensions.
inline std::vector<Detection> load_predictions_yolo(const std::string& dir,
                                                    const sampler::LabeledSet& gts) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        raise(ErrorKind::Io, "YOLO predictions expect a directory: " + dir);
    }
    std::vector<std::string> classes = gts.vocabulary;
    if (fs::exists(fs::path(dir) / "classes.txt")) {
        classes.clear();
        std::ifstream in(fs::path(dir) / "classes.txt");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) classes.push_back(line);
        }
    }
    std::map<std::string, const sampler::LabeledImage*> by_stem;
    for (const auto& img : gts.images) {
        by_stem[fs::path(img.ref).stem().string()] = &img;
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".txt" && entry.path().filename() != "classes.txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<Detection> preds;
    for (const auto& file : files) {
        auto it = by_stem.find(file.stem().string());
        if (it == by_stem.end()) {
            log_warn("no ground-truth image for predictions " + file.string());
            continue;
        }
        const sampler::LabeledImage& img = *it->second;
        if (img.width <= 0 || img.height <= 0) {
            raise(ErrorKind::Format, "ground truth lacks dimensions for " + img.ref);
        }
        std::ifstream in(file);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::istringstream ss(line);
            long long cls_idx;
            double cx, cy, w, h, conf;
            if (!(ss >> cls_idx >> cx >> cy >> w >> h >> conf)) {
                raise(ErrorKind::Format, "bad YOLO prediction at " + file.string() + ":" +
                                             std::to_string(line_no));
            }
            if (cls_idx < 0 || cls_idx >= static_cast<long long>(classes.size())) {
                raise(ErrorKind::Format, "class index out of range at " + file.string() + ":" +
                                             std::to_string(line_no));
            }
            Detection d;
            d.image = img.ref;
            d.class_label = classes[static_cast<std::size_t>(cls_idx)];
            d.box = BoxF{(cx - w / 2) * img.width, (cy - h / 2) * img.height,
                         (cx + w / 2) * img.width, (cy + h / 2) * img.height};
            d.confidence = conf;
            preds.push_back(std::move(d));
        }
    }
    return preds;
}

// --- reporting ------------------------------------------------------------

inline nlohmann::json report_json(const EvalReport& report) {
    nlohmann::json per_class;
    for (const auto& [cls, m] : report.per_class) {
        per_class[cls] = {{"ap", m.ap_defined ? nlohmann::json(m.ap) : nlohmann::json(nullptr)},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"f1", m.f1},
                          {"tp", m.tp},
                          {"fp", m.fp},
                          {"fn", m.fn},
                          {"n_gt", m.n_gt}};
    }
    return nlohmann::json{{"per_class", per_class},
                          {"mAP", report.map},
                          {"classes_in_map", report.classes_in_map}};
}

inline std::string format_table(const EvalReport& report) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-20s %8s %10s %8s %8s %6s %6s %6s\n", "class", "AP",
                  "Precision", "Recall", "F1", "TP", "FP", "FN");
    out << buf;
    for (const auto& [cls, m] : report.per_class) {
        if (m.ap_defined) {
            std::snprintf(buf, sizeof(buf), "%-20s %8.4f %10.4f %8.4f %8.4f %6lld %6lld %6lld\n",
                          cls.c_str(), m.ap, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn);
        } else {
            std::snprintf(buf, sizeof(buf), "%-20s %8s %10.4f %8.4f %8.4f %6lld %6lld %6lld\n",
                          cls.c_str(), "n/a", m.precision, m.recall, m.f1, m.tp, m.fp, m.fn);
        }
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-20s %8.4f  (over %d classes)\n", "mAP", report.map,
                  report.classes_in_map);
    out << buf;
    return out.str();
}

inline std::string format_table(const SegReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "IoU      %8.2f %%\nFN Rate  %8.2f %%\nFP Rate  %8.2f %%\n",
                  report.iou_pct, report.fn_rate_pct, report.fp_rate_pct);
    return buf;
}

inline nlohmann::json report_json(const SegReport& r) {
    return nlohmann::json{{"iou_pct", r.iou_pct},
                          {"fn_rate_pct", r.fn_rate_pct},
                          {"fp_rate_pct", r.fp_rate_pct},
                          {"zero_denominator", r.zero_denominator},
                          {"tp", r.tp},
                          {"fp", r.fp},
                          {"fn", r.fn},
                          {"tn", r.tn}};
}

}  // namespace synthforge::metrics

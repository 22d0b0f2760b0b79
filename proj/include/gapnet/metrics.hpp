#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapnet {

struct Metrics {
    double overall_accuracy = 0.0;
    double mean_class_accuracy = 0.0;
    std::vector<double> per_class_iou;
    double miou = 0.0;
};

// Overall accuracy plus the unweighted mean of per-class recalls; classes
// without instances are left out of the mean.
inline Metrics evaluate_classification(const std::vector<int>& predictions,
                                       const std::vector<int>& truth, std::size_t num_classes) {
    if (predictions.size() != truth.size()) {
        throw std::invalid_argument("evaluate_classification: size mismatch");
    }
    if (predictions.empty()) throw std::domain_error("evaluate_classification: empty dataset");
    std::vector<std::size_t> correct(num_classes, 0), total(num_classes, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        if (t >= num_classes) {
            throw std::domain_error("evaluate_classification: label " + std::to_string(truth[i]) +
                                    " outside vocabulary");
        }
        ++total[t];
        if (predictions[i] == truth[i]) {
            ++correct[t];
            ++hits;
        }
    }
    Metrics m;
    m.overall_accuracy = static_cast<double>(hits) / static_cast<double>(truth.size());
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (total[c] == 0) continue;
        recall_sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
        ++present;
    }
    m.mean_class_accuracy = present ? recall_sum / static_cast<double>(present) : 0.0;
    return m;
}

// Shape IoU: average over the parts of the shape's category, counting a part
// absent from both prediction and truth as IoU 1.
inline double shape_iou(const std::vector<int>& predictions, const std::vector<int>& truth,
                        const std::vector<int>& category_parts) {
    if (predictions.size() != truth.size()) {
        throw std::invalid_argument("shape_iou: prediction/truth length mismatch");
    }
    if (category_parts.empty()) throw std::domain_error("shape_iou: category has no parts");
    for (int t : truth) {
        bool found = false;
        for (int p : category_parts) {
            if (p == t) {
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::domain_error("shape_iou: truth label " + std::to_string(t) +
                                    " outside category part set");
        }
    }
    double acc = 0.0;
    for (int part : category_parts) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool pp = predictions[i] == part;
            const bool tp = truth[i] == part;
            if (pp && tp) ++inter;
            if (pp || tp) ++uni;
        }
        acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return acc / static_cast<double>(category_parts.size());
}

// Accumulates per-shape IoUs; mIoU is their mean over all shapes.
struct MiouAccumulator {
    std::vector<double> shape_ious;
    std::vector<double> per_category_sum;
    std::vector<std::size_t> per_category_count;

    explicit MiouAccumulator(std::size_t n_categories = 1)
        : per_category_sum(n_categories, 0.0), per_category_count(n_categories, 0) {}

    void add(const std::vector<int>& predictions, const std::vector<int>& truth,
             std::size_t category, const std::vector<std::vector<int>>& parts_of_category) {
        if (category >= parts_of_category.size()) {
            throw std::domain_error("miou: unknown category " + std::to_string(category));
        }
        const double iou = shape_iou(predictions, truth, parts_of_category[category]);
        shape_ious.push_back(iou);
        per_category_sum[category] += iou;
        ++per_category_count[category];
    }

    double miou() const {
        if (shape_ious.empty()) throw std::domain_error("miou: no shapes evaluated");
        double s = 0.0;
        for (double v : shape_ious) s += v;
        return s / static_cast<double>(shape_ious.size());
    }

    std::vector<double> per_category_miou() const {
        std::vector<double> out(per_category_sum.size(), 0.0);
        for (std::size_t c = 0; c < out.size(); ++c) {
            if (per_category_count[c]) {
                out[c] = per_category_sum[c] / static_cast<double>(per_category_count[c]);
            }
        }
        return out;
    }
};

}  // namespace gapnet

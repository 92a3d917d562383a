// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrvda/mlp.hpp"
#include "hrvda/patching.hpp"
#include "hrvda/synthdoc.hpp"

namespace hrvda {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-stage content thresholds and the instruction keep threshold.
struct ThresholdSchedule {
    std::vector<double> eps_c{0.25, 0.25, 0.5, 0.5};
    double eps_i = 0.5;

    static ThresholdSchedule zero(std::size_t stages = 4) { return {std::vector<double>(stages, 0.0), 0.0}; }

    void validate() const {
        if (eps_c.empty()) {
            throw std::invalid_argument("eps_c needs one threshold per stage");
        }
        auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!std::all_of(eps_c.begin(), eps_c.end(), in_unit) || !in_unit(eps_i)) {
            throw std::invalid_argument("thresholds must lie in [0, 1]");
        }
        if (!std::is_sorted(eps_c.begin(), eps_c.end())) {
            throw std::invalid_argument("eps_c must be non-decreasing from shallow to deep stages");
        }
    }

    bool operator==(const ThresholdSchedule&) const = default;
};

/// p_i <- 1 if p_i >= eps else 0. Boundary values are kept.
inline ProbabilityMap binarize(const ProbabilityMap& p, double eps) {
    ProbabilityMap out;
    out.values.reserve(p.size());
    for (double v : p.values) {
        out.values.push_back(v >= eps ? 1.0 : 0.0);
    }
    out.binarized = true;
    return out;
}

inline std::size_t count_active(const ProbabilityMap& p) {
    return static_cast<std::size_t>(std::count_if(p.values.begin(), p.values.end(), [](double v) { return v != 0.0; }));
}

enum class DetectorVariant { oracle, mlp };

inline const char* to_string(DetectorVariant v) { return v == DetectorVariant::oracle ? "oracle" : "mlp"; }

/// Content detector. The MLP variant classifies each patch from its own
/// detector-private embedding, which never shares weights with the encoder.
struct DetectorModel {
    DetectorVariant variant = DetectorVariant::oracle;
    PatchEmbed embed;
    Mlp2 mlp;

    int patch() const { return embed.patch; }

    static DetectorModel oracle(int patch = 4) {
        DetectorModel m;
        m.variant = DetectorVariant::oracle;
        m.embed.patch = patch;
        return m;
    }

    static DetectorModel init_mlp(int patch, int channels, std::uint64_t seed, std::size_t embed_dim = 16,
                                  std::size_t hidden = 16) {
        Rng rng(seed);
        DetectorModel m;
        m.variant = DetectorVariant::mlp;
        m.embed = PatchEmbed::init(patch, channels, embed_dim, rng);
        m.mlp = Mlp2::init(embed_dim, hidden, 1, rng);
        return m;
    }
};

/// Detector input features: the detector-private patch embedding.
inline Matrix detector_features(const DetectorModel& model, const ImageTensor& img, FlopCounter* flops = nullptr) {
    return model.embed.proj.forward(flatten_patches(img, model.embed.patch), flops);
}

inline ProbabilityMap detect(const DetectorModel& model, const ImageTensor& img, FlopCounter* flops = nullptr) {
    if (model.variant == DetectorVariant::oracle) {
        throw std::invalid_argument("oracle detector requires a labeled image");
    }
    ProbabilityMap p;
    p.values = mlp2_scores(detector_features(model, img, flops), model.mlp, flops);
    return p;
}

inline ProbabilityMap detect(const DetectorModel& model, const LabeledImage& img, FlopCounter* flops = nullptr) {
    if (model.variant == DetectorVariant::oracle) {
        return labels_to_probs(img, model.patch());
    }
    return detect(model, img.image, flops);
}

struct TrainOptions {
    int epochs = 20;
    double lr = 1e-2;
    std::size_t batch_size = 256;
    std::uint64_t seed = 1;
    bool balance_classes = true;
};

struct TrainResult {
    Mlp2 model;
    double initial_loss = 0.0;
    std::vector<double> loss_curve;  // training-set loss after each epoch
};

/// Positive-class weight negatives/positives; 1 when either class is absent.
inline std::vector<double> balanced_weights(std::span<const double> labels) {
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1.0));
    const auto neg = static_cast<double>(labels.size()) - pos;
    const double w_pos = pos > 0.0 && neg > 0.0 ? neg / pos : 1.0;
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        w[i] = labels[i] == 1.0 ? w_pos : 1.0;
    }
    return w;
}

/// Full-set weighted BCE of a single-output classifier.
inline double classifier_loss(const Mlp2& model, const Matrix& features, std::span<const double> labels,
                              std::span<const double> weights) {
    const Matrix z = mlp2_forward(features, model);
    double loss = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const double zi = z(i, 0);
        const double softplus = zi > 0.0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
        loss += w * (softplus - labels[i] * zi);
        total += w;
    }
    return loss / total;
}

/// Mini-batch Adam on weighted BCE. Shared by the detector and the
/// instruction classifier.
inline TrainResult train_classifier(Mlp2 model, const Matrix& features, std::span<const double> labels,
                                    const TrainOptions& opt) {
    if (features.rows() != labels.size() || features.rows() == 0) {
        throw std::invalid_argument("train_classifier: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(features.rows()) + " samples");
    }
    if (opt.epochs < 0 || opt.lr <= 0.0 || opt.batch_size == 0) {
        throw std::invalid_argument("train_classifier: invalid options");
    }
    const std::vector<double> weights =
        opt.balance_classes ? balanced_weights(labels) : std::vector<double>(labels.size(), 1.0);
    Mlp2Adam adam(model, opt.lr);
    Rng rng(opt.seed);
    std::vector<std::size_t> order(features.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.initial_loss = classifier_loss(model, features, labels, weights);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix xb = gather_rows(features, idx);
            std::vector<double> yb(idx.size());
            std::vector<double> wb(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                yb[k] = labels[idx[k]];
                wb[k] = weights[idx[k]];
            }
            const Mlp2Gradients g = mlp2_backward(xb, model, yb, wb);
            if (!std::isfinite(g.loss)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                    std::to_string(start));
            }
            adam.step(model, g);
        }
        const double loss = classifier_loss(model, features, labels, weights);
        if (!std::isfinite(loss)) {
            throw TrainingError("non-finite training loss after epoch " + std::to_string(epoch));
        }
        result.loss_curve.push_back(loss);
    }
    result.model = std::move(model);
    return result;
}

struct DetectorTrainResult {
    DetectorModel model;
    double initial_loss = 0.0;
    std::vector<double> loss_curve;
};

/// Fits the MLP detector to patch labels of a synthetic corpus.
/// The detector-private embedding stays at its seeded init.
inline DetectorTrainResult train_detector(const DetectorModel& model, const std::vector<LabeledImage>& corpus,
                                          const TrainOptions& opt) {
    if (model.variant != DetectorVariant::mlp) {
        throw std::invalid_argument("train_detector: only the mlp variant is trainable");
    }
    if (corpus.empty()) {
        throw std::invalid_argument("train_detector: empty corpus");
    }
    std::vector<Matrix> parts;
    std::vector<double> labels;
    for (const auto& doc : corpus) {
        parts.push_back(detector_features(model, doc.image));
        for (auto l : doc.patch_labels(model.patch())) {
            labels.push_back(l != 0 ? 1.0 : 0.0);
        }
    }
    TrainResult r = train_classifier(model.mlp, vconcat_all(parts), labels, opt);
    DetectorTrainResult out{model, r.initial_loss, std::move(r.loss_curve)};
    out.model.mlp = std::move(r.model);
    return out;
}

/// Fraction of positive labels whose probability reaches eps.
inline double recall_at(std::span<const double> probs, std::span<const std::uint8_t> labels, double eps) {
    std::size_t pos = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0) {
            ++pos;
            hit += probs[i] >= eps ? 1 : 0;
        }
    }
    return pos == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(pos);
}

}  // namespace hrvda

// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Seeded training protocols for the detector and the instruction classifier,
// each scored on a disjoint held-out split.

#include <cstdint>
#include <vector>

#include "hrvda/pipeline.hpp"

namespace hrvda {

// Seed streams for the training and held-out splits.
inline constexpr std::uint64_t kDetectorTrainStream = 0x6474726e;
inline constexpr std::uint64_t kDetectorHeldStream = 0x6468656c;
inline constexpr std::uint64_t kIfmTrainStream = 0x6974726e;
inline constexpr std::uint64_t kIfmHeldStream = 0x6968656c;

struct TrainProtocol {
    int train_docs = 32;
    int held_out_docs = 16;
    int epochs = 20;
    double lr = 1e-2;
};

inline TrainProtocol detector_protocol() { return {32, 16, 20, 1e-2}; }
inline TrainProtocol ifm_protocol() { return {48, 16, 30, 3e-3}; }

struct DetectorFit {
    DetectorModel model;
    double initial_loss = 0.0;
    std::vector<double> loss_curve;
    double held_out_recall = 0.0;  // at the first-stage threshold
};

inline DetectorFit fit_detector(const PipelineConfig& c, const TrainProtocol& p = detector_protocol()) {
    c.validate();
    const auto train = make_corpus(p.train_docs, c.content_fraction, c.image_size, derive_seed(c.seed, kDetectorTrainStream));
    const auto held = make_corpus(p.held_out_docs, c.content_fraction, c.image_size, derive_seed(c.seed, kDetectorHeldStream));
    TrainOptions opt;
    opt.epochs = p.epochs;
    opt.lr = p.lr;
    opt.seed = derive_seed(c.seed, 0x6f7074);
    const auto init = DetectorModel::init_mlp(c.patch(), c.encoder.channels, derive_seed(c.model_seed, 0x646574));
    DetectorTrainResult r = train_detector(init, train, opt);

    std::vector<double> probs;
    std::vector<std::uint8_t> labels;
    for (const auto& d : held) {
        const auto pm = detect(r.model, d);
        const auto l = d.patch_labels(c.patch());
        probs.insert(probs.end(), pm.values.begin(), pm.values.end());
        labels.insert(labels.end(), l.begin(), l.end());
    }
    const double recall = recall_at(probs, labels, c.thresholds.eps_c.front());
    return {std::move(r.model), r.initial_loss, std::move(r.loss_curve), recall};
}

struct IfmFit {
    IfmModel model;
    double initial_loss = 0.0;
    std::vector<double> loss_curve;
    double held_out_recall = 0.0;  // at eps_i
};

/// Fits the classifier on IFM inputs produced by `models` (their detector and
/// frozen encoder, projector and fusion layer).
inline IfmFit fit_ifm(const PipelineConfig& c, const PipelineModels& models, const TrainProtocol& p = ifm_protocol()) {
    c.validate();
    const auto train = build_ifm_samples(
        c, models, make_corpus(p.train_docs, c.content_fraction, c.image_size, derive_seed(c.seed, kIfmTrainStream)));
    const auto held = build_ifm_samples(
        c, models, make_corpus(p.held_out_docs, c.content_fraction, c.image_size, derive_seed(c.seed, kIfmHeldStream)));
    TrainOptions opt;
    opt.epochs = p.epochs;
    opt.lr = p.lr;
    opt.seed = derive_seed(c.seed, 0x696f7074);
    IfmTrainResult r = train_ifm(models.ifm, train, opt);
    const double recall = ifm_recall(r.model, held, c.thresholds.eps_i);
    return {std::move(r.model), r.initial_loss, std::move(r.loss_curve), recall};
}

}  // namespace hrvda

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "segnoise/grid.hpp"

namespace segnoise::metrics {

// Optional per-pixel region restriction: same H*W as the masks, nonzero
// means "count this pixel". An empty vector means the whole image.
using Region = std::vector<std::uint8_t>;

// Per-class intersection/union pixel counts plus the derived ratios. A
// class with an empty union has no defined IoU and is excluded from miou.
struct IoUReport {
    std::vector<std::uint64_t> intersection;   // per class
    std::vector<std::uint64_t> union_;         // per class
    std::vector<std::optional<double>> per_class_iou;
    double miou = 0.0;                         // mean over defined classes
    int defined_classes = 0;
};

// Per-class training-IoU history (one value per epoch, vs the ORIGINAL
// noisy annotations). Undefined entries (class absent from both prediction
// and annotation) are recorded and later excluded from curve fitting.
struct ClassIoUSeries {
    int class_id = 0;
    std::vector<int> epochs;                       // strictly increasing, >= 1
    std::vector<std::optional<double>> values;     // parallel to epochs
};

// IoU of class c between pred and ref, optionally restricted to a region;
// nullopt when the restricted union is empty.
std::optional<double> iou(const LabelMask& pred, const LabelMask& ref, int c,
                          const Region& region = {});

// Per-class IoU over classes [0, num_classes) plus their mean. Throws when
// every class is undefined.
IoUReport miou(const LabelMask& pred, const LabelMask& ref, int num_classes);

// Dataset-pooled variant: pixel counts pooled over all examples, then one
// ratio per class (not a mean of per-example ratios).
IoUReport pooled_miou(const std::vector<LabelMask>& preds,
                      const std::vector<LabelMask>& refs, int num_classes,
                      const std::vector<Region>* regions = nullptr);

// IoU between prediction and ground truth on the wrongly annotated pixels
// (region = {noisy != gt}). Rises then falls as the model first generalizes
// and then memorizes the annotation errors.
std::optional<double> iou_el(const LabelMask& pred, const LabelMask& gt,
                             const LabelMask& noisy, int c);

// IoU between prediction and the incorrect annotations on that same region;
// rises monotonically under memorization.
std::optional<double> iou_m(const LabelMask& pred, const LabelMask& gt,
                            const LabelMask& noisy, int c);

// Dataset-pooled iou_el / iou_m for every class at once.
struct DiagnosticReport {
    std::vector<std::optional<double>> iou_el;  // per class
    std::vector<std::optional<double>> iou_m;   // per class
};
DiagnosticReport pooled_diagnostics(const std::vector<LabelMask>& preds,
                                    const std::vector<LabelMask>& gts,
                                    const std::vector<LabelMask>& noisies,
                                    int num_classes);

// Append epoch t's dataset-pooled class IoU (pred vs original noisy) to the
// series. The epoch must exceed the last recorded one.
void append_training_iou(ClassIoUSeries& series, int epoch,
                         const std::vector<LabelMask>& preds,
                         const std::vector<LabelMask>& original_noisy);

}  // namespace segnoise::metrics

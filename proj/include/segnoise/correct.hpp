#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "segnoise/earlycurve.hpp"
#include "segnoise/grid.hpp"

namespace segnoise::correction {

// Per-class trigger bookkeeping. Once a class triggers it stays triggered
// for the rest of the run; corrected_pixels accumulates across epochs.
struct ClassState {
    bool triggered = false;
    std::optional<int> trigger_epoch;
    std::uint64_t corrected_pixels = 0;
};

struct CorrectionState {
    std::vector<ClassState> classes;  // indexed by class id, 0..K-1

    explicit CorrectionState(int num_classes = 0) : classes(num_classes) {}
    bool any_triggered() const {
        for (const ClassState& c : classes)
            if (c.triggered) return true;
        return false;
    }
};

// The training annotations: the original noisy masks stay frozen for the
// training-IoU series and diagnostics; the working masks are what the loss
// sees and what correction mutates.
struct AnnotationStore {
    std::vector<LabelMask> original;
    std::vector<LabelMask> working;

    explicit AnnotationStore(std::vector<LabelMask> noisy = {});
    std::size_t size() const { return working.size(); }
};

// Evaluate the trigger rule for every not-yet-triggered class that has a
// fit this epoch (nullopt = class lacked enough history). Newly triggered
// classes record trigger_epoch = epoch. The global (non-class-adaptive)
// mode is realized by passing the same mean-curve fit for every class.
void update_state(CorrectionState& state,
                  const std::vector<std::optional<earlycurve::FitResult>>& fits,
                  int epoch, double r);

// One correction pass: for each triggered class c, for each example whose
// CURRENT working mask contains c, relabel every pixel with q_c >= tau to
// the argmax of q at that pixel. Classes apply in ascending id order;
// counts tally pixels whose label actually changed. Returns the total
// number of changed pixels.
std::uint64_t correct_labels(AnnotationStore& store, CorrectionState& state,
                             const std::vector<ProbMap>& q, double tau);

// Same pass restricted to a minibatch: q[j] is the prediction for example
// indices[j]. Used by iteration-granularity correction.
std::uint64_t correct_labels(AnnotationStore& store, CorrectionState& state,
                             const std::vector<ProbMap>& q, double tau,
                             const std::vector<int>& indices);

// Pooled mIoU of the current working annotations against ground truth.
double label_quality(const AnnotationStore& store,
                     const std::vector<LabelMask>& clean, int num_classes);

}  // namespace segnoise::correction

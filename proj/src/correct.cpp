#include "segnoise/correct.hpp"

#include <string>

#include "segnoise/errors.hpp"
#include "segnoise/metrics.hpp"

namespace segnoise::correction {

AnnotationStore::AnnotationStore(std::vector<LabelMask> noisy)
    : original(noisy), working(std::move(noisy)) {}

void update_state(CorrectionState& state,
                  const std::vector<std::optional<earlycurve::FitResult>>& fits,
                  int epoch, double r) {
    if (fits.size() != state.classes.size())
        throw InvalidArgument("update_state: one fit slot per class required");
    for (std::size_t c = 0; c < fits.size(); ++c) {
        ClassState& cs = state.classes[c];
        if (cs.triggered || !fits[c]) continue;
        const auto decision = earlycurve::check_trigger(*fits[c], epoch, r,
                                                        static_cast<int>(c));
        if (decision.triggered) {
            cs.triggered = true;
            cs.trigger_epoch = epoch;
        }
    }
}

std::uint64_t correct_labels(AnnotationStore& store, CorrectionState& state,
                             const std::vector<ProbMap>& q, double tau) {
    std::vector<int> all(store.working.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return correct_labels(store, state, q, tau, all);
}

std::uint64_t correct_labels(AnnotationStore& store, CorrectionState& state,
                             const std::vector<ProbMap>& q, double tau,
                             const std::vector<int>& indices) {
    if (q.size() != indices.size())
        throw InvalidArgument("correct_labels: prediction count " +
                              std::to_string(q.size()) + " != index count " +
                              std::to_string(indices.size()));
    const int num_classes = static_cast<int>(state.classes.size());
    std::uint64_t total = 0;
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const std::size_t b = static_cast<std::size_t>(indices[j]);
        if (b >= store.working.size())
            throw InvalidArgument("correct_labels: example index " +
                                  std::to_string(indices[j]) + " out of range");
        LabelMask& mask = store.working[b];
        const ProbMap& qb = q[j];
        if (qb.height() != mask.height || qb.width() != mask.width ||
            qb.classes() != num_classes)
            throw InvalidArgument("correct_labels: prediction/mask shape mismatch "
                                  "at example " + std::to_string(b));
        const int n = mask.height * mask.width;
        for (int c = 0; c < num_classes; ++c) {
            if (!state.classes[c].triggered) continue;
            // Containment is re-evaluated against the mask as already
            // mutated by lower class ids this pass.
            bool contains = false;
            for (int i = 0; i < n && !contains; ++i) contains = mask.ids[i] == c;
            if (!contains) continue;
            for (int i = 0; i < n; ++i) {
                if (qb.grid.data[static_cast<std::size_t>(i) * num_classes + c] < tau)
                    continue;
                const double* qp = &qb.grid.data[static_cast<std::size_t>(i) * num_classes];
                int best = 0;
                for (int k = 1; k < num_classes; ++k)
                    if (qp[k] > qp[best]) best = k;
                if (mask.ids[i] != best) {
                    mask.ids[i] = static_cast<std::uint8_t>(best);
                    ++state.classes[c].corrected_pixels;
                    ++total;
                }
            }
        }
    }
    return total;
}

double label_quality(const AnnotationStore& store,
                     const std::vector<LabelMask>& clean, int num_classes) {
    return metrics::pooled_miou(store.working, clean, num_classes).miou;
}

}  // namespace segnoise::correction

#include "segnoise/metrics.hpp"

#include <string>

#include "segnoise/errors.hpp"

namespace segnoise::metrics {

namespace {

void check_shapes(const LabelMask& a, const LabelMask& b, const char* op) {
    if (!a.same_shape(b)) throw InvalidArgument(std::string(op) + ": mask shape mismatch");
}

void check_region(const Region& region, const LabelMask& m, const char* op) {
    if (!region.empty() && region.size() != m.size())
        throw InvalidArgument(std::string(op) + ": region size mismatch");
}

// Accumulate per-class intersection/union counts for one mask pair.
void accumulate(const LabelMask& pred, const LabelMask& ref, int num_classes,
                const Region* region, std::vector<std::uint64_t>& inter,
                std::vector<std::uint64_t>& uni) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (region && !region->empty() && !(*region)[i]) continue;
        const int p = pred.ids[i], r = ref.ids[i];
        if (p >= num_classes || r >= num_classes)
            throw InvalidArgument("metrics: label id exceeds num_classes");
        if (p == r) {
            ++inter[p];
            ++uni[p];
        } else {
            ++uni[p];
            ++uni[r];
        }
    }
}

IoUReport report_from_counts(std::vector<std::uint64_t> inter,
                             std::vector<std::uint64_t> uni) {
    IoUReport rep;
    rep.intersection = std::move(inter);
    rep.union_ = std::move(uni);
    rep.per_class_iou.resize(rep.union_.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < rep.union_.size(); ++c) {
        if (rep.union_[c] > 0) {
            rep.per_class_iou[c] =
                static_cast<double>(rep.intersection[c]) / static_cast<double>(rep.union_[c]);
            sum += *rep.per_class_iou[c];
            ++rep.defined_classes;
        }
    }
    if (rep.defined_classes == 0)
        throw InvalidArgument("miou: IoU undefined for every class (empty unions)");
    rep.miou = sum / rep.defined_classes;
    return rep;
}

Region wrong_pixels(const LabelMask& gt, const LabelMask& noisy) {
    Region region(gt.size(), 0);
    for (std::size_t i = 0; i < gt.size(); ++i) region[i] = gt.ids[i] != noisy.ids[i];
    return region;
}

}  // namespace

std::optional<double> iou(const LabelMask& pred, const LabelMask& ref, int c,
                          const Region& region) {
    check_shapes(pred, ref, "iou");
    check_region(region, pred, "iou");
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!region.empty() && !region[i]) continue;
        const bool p = pred.ids[i] == c, r = ref.ids[i] == c;
        inter += p && r;
        uni += p || r;
    }
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

IoUReport miou(const LabelMask& pred, const LabelMask& ref, int num_classes) {
    check_shapes(pred, ref, "miou");
    if (num_classes < 1) throw InvalidArgument("miou: num_classes must be positive");
    std::vector<std::uint64_t> inter(num_classes, 0), uni(num_classes, 0);
    accumulate(pred, ref, num_classes, nullptr, inter, uni);
    return report_from_counts(std::move(inter), std::move(uni));
}

IoUReport pooled_miou(const std::vector<LabelMask>& preds,
                      const std::vector<LabelMask>& refs, int num_classes,
                      const std::vector<Region>* regions) {
    if (preds.size() != refs.size())
        throw InvalidArgument("pooled_miou: example count mismatch");
    if (preds.empty()) throw InvalidArgument("pooled_miou: empty dataset");
    if (regions && regions->size() != preds.size())
        throw InvalidArgument("pooled_miou: region count mismatch");
    std::vector<std::uint64_t> inter(num_classes, 0), uni(num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        check_shapes(preds[i], refs[i], "pooled_miou");
        const Region* region = regions ? &(*regions)[i] : nullptr;
        if (region) check_region(*region, preds[i], "pooled_miou");
        accumulate(preds[i], refs[i], num_classes, region, inter, uni);
    }
    return report_from_counts(std::move(inter), std::move(uni));
}

std::optional<double> iou_el(const LabelMask& pred, const LabelMask& gt,
                             const LabelMask& noisy, int c) {
    check_shapes(pred, gt, "iou_el");
    check_shapes(pred, noisy, "iou_el");
    return iou(pred, gt, c, wrong_pixels(gt, noisy));
}

std::optional<double> iou_m(const LabelMask& pred, const LabelMask& gt,
                            const LabelMask& noisy, int c) {
    check_shapes(pred, gt, "iou_m");
    check_shapes(pred, noisy, "iou_m");
    return iou(pred, noisy, c, wrong_pixels(gt, noisy));
}

DiagnosticReport pooled_diagnostics(const std::vector<LabelMask>& preds,
                                    const std::vector<LabelMask>& gts,
                                    const std::vector<LabelMask>& noisies,
                                    int num_classes) {
    if (preds.size() != gts.size() || preds.size() != noisies.size())
        throw InvalidArgument("pooled_diagnostics: example count mismatch");
    std::vector<std::uint64_t> el_i(num_classes, 0), el_u(num_classes, 0);
    std::vector<std::uint64_t> m_i(num_classes, 0), m_u(num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        check_shapes(preds[i], gts[i], "pooled_diagnostics");
        check_shapes(preds[i], noisies[i], "pooled_diagnostics");
        const Region region = wrong_pixels(gts[i], noisies[i]);
        accumulate(preds[i], gts[i], num_classes, &region, el_i, el_u);
        accumulate(preds[i], noisies[i], num_classes, &region, m_i, m_u);
    }
    DiagnosticReport rep;
    rep.iou_el.resize(num_classes);
    rep.iou_m.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        if (el_u[c] > 0)
            rep.iou_el[c] = static_cast<double>(el_i[c]) / static_cast<double>(el_u[c]);
        if (m_u[c] > 0)
            rep.iou_m[c] = static_cast<double>(m_i[c]) / static_cast<double>(m_u[c]);
    }
    return rep;
}

void append_training_iou(ClassIoUSeries& series, int epoch,
                         const std::vector<LabelMask>& preds,
                         const std::vector<LabelMask>& original_noisy) {
    if (!series.epochs.empty() && epoch <= series.epochs.back())
        throw InvalidArgument("append_training_iou: epoch " + std::to_string(epoch) +
                              " not after " + std::to_string(series.epochs.back()));
    if (epoch < 1) throw InvalidArgument("append_training_iou: epochs start at 1");
    if (preds.size() != original_noisy.size())
        throw InvalidArgument("append_training_iou: example count mismatch");
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        check_shapes(preds[i], original_noisy[i], "append_training_iou");
        for (std::size_t px = 0; px < preds[i].size(); ++px) {
            const bool p = preds[i].ids[px] == series.class_id;
            const bool r = original_noisy[i].ids[px] == series.class_id;
            inter += p && r;
            uni += p || r;
        }
    }
    series.epochs.push_back(epoch);
    if (uni == 0)
        series.values.push_back(std::nullopt);
    else
        series.values.push_back(static_cast<double>(inter) / static_cast<double>(uni));
}

}  // namespace segnoise::metrics

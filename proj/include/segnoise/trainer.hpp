#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "segnoise/consistency.hpp"
#include "segnoise/correct.hpp"
#include "segnoise/earlycurve.hpp"
#include "segnoise/metrics.hpp"
#include "segnoise/netcore.hpp"
#include "segnoise/synthgen.hpp"

namespace segnoise::trainer {

// The four experiment arms. Correction and consistency switch on
// independently; adele is both.
enum class Mode { Baseline, CorrectionOnly, ConsistencyOnly, Adele };

bool uses_correction(Mode m);
bool uses_consistency(Mode m);

// When labels are rewritten: once per epoch from the epoch-end prediction
// pass, or after every minibatch from that batch's q.
enum class Granularity { Epoch, Iteration };

// Per-class curve fits, or one fit of the class-mean training-IoU curve
// shared by every class (the non-adaptive ablation).
enum class TriggerMode { PerClass, Global };

struct TrainConfig {
    Mode mode = Mode::Baseline;
    double lambda = 1.0;  // consistency weight
    double rho = 0.8;     // confidence gate
    double r = 0.9;       // trigger threshold on the relative slope change
    double tau = 0.8;     // correction confidence threshold
    consistency::ScaleSet scales;
    consistency::GateMode gate = consistency::GateMode::Pixel;
    bool stop_grad_q = false;
    Granularity granularity = Granularity::Epoch;
    TriggerMode trigger = TriggerMode::PerClass;
    int min_points = earlycurve::kDefaultMinPoints;
    net::ModelSpec model;  // model.seed is superseded by the run seed below
    net::OptimConfig optim;
    std::uint64_t seed = 1;
};

void validate(const TrainConfig& cfg);

// One CSV line. class_id is empty on the per-epoch aggregate row, which
// carries the split-level fields; per-class rows carry the class-level
// ones. Absent values stay empty in the CSV.
struct MetricsRow {
    int epoch = 0;
    std::optional<int> class_id;
    std::optional<double> train_iou;  // vs the original noisy annotations
    std::optional<double> iou_el;
    std::optional<double> iou_m;
    std::optional<double> val_miou;
    std::optional<double> test_miou;
    std::optional<double> label_quality;  // working vs clean, train split
    std::optional<bool> triggered;
    std::optional<int> trigger_epoch;
    std::optional<std::uint64_t> corrected_pixels;  // cumulative
    std::optional<double> fit_a;
    std::optional<double> fit_b;
    std::optional<double> fit_c;
    std::optional<double> fit_sse;
    std::optional<double> consistency_loss;  // epoch mean over examples
};

struct RunSummary {
    double best_val_test_miou = 0.0;   // test mIoU at the best-val epoch
    double last_epoch_test_miou = 0.0;
    double max_test_miou = 0.0;
    double last_epoch_val_miou = 0.0;
    int best_val_epoch = 0;            // earliest epoch on val ties
};

struct RunRecord {
    std::vector<MetricsRow> rows;
    RunSummary summary;
    net::Model model;     // final parameters
    TrainConfig config;   // echo
    double wall_seconds = 0.0;  // excluded from the determinism contract
};

// Mutable state threaded through the epoch loop.
struct TrainState {
    net::Model model;
    net::OptimState optim;
    correction::AnnotationStore store;            // train-split annotations
    correction::CorrectionState corr;
    std::vector<metrics::ClassIoUSeries> series;  // per class, epochs >= 1
    int epoch = 0;                                // last completed epoch
};

TrainState init_run(const TrainConfig& cfg, const synth::DatasetBundle& data);

// Pooled mIoU of single-scale predictions against a split's clean masks —
// the evaluation used for every val/test figure in the rows and summary.
double evaluate_split(const net::Model& model, const synth::Dataset& ds, int num_classes);

// Rows describing the freshly initialized model (epoch 0): per-class rows
// plus the aggregate row, with no fit/trigger content. These rows are not
// part of the curve-fit series.
std::vector<MetricsRow> init_rows(const TrainConfig& cfg,
                                  const synth::DatasetBundle& data,
                                  const TrainState& state);

// One training epoch (state.epoch + 1): shuffled minibatches with the
// composite loss (cross-entropy vs the current working masks, plus
// lambda * consistency when active), SGD steps, per-batch correction under
// iteration granularity; then the epoch-end pass: predict the training
// set, extend the IoU series, fit curves, update triggers, correct labels
// (epoch granularity), evaluate val/test, and emit this epoch's rows.
std::vector<MetricsRow> run_epoch(const TrainConfig& cfg,
                                  const synth::DatasetBundle& data,
                                  TrainState& state);

using RowCallback = std::function<void(const MetricsRow&)>;

// Initialization rows, optim.epochs training epochs, summary. on_row (when
// set) fires for each row as soon as it exists, so callers can stream the
// metrics CSV and keep a partial record if the run aborts.
RunRecord run_experiment(const TrainConfig& cfg, const synth::DatasetBundle& data,
                         const RowCallback& on_row = {});

struct SweepPoint {
    int max_iterations = 0;
    double annotation_miou = 0.0;  // noisy vs clean, train split
    RunRecord baseline;
    RunRecord adele;
};

// For each corruption level: regenerate the bundle (same synth seed, only
// max_iterations varies) and train a baseline arm and an adele arm.
std::vector<SweepPoint> noise_sweep(const synth::SynthConfig& synth_base,
                                    const synth::NoiseConfig& noise_base,
                                    int num_train, int num_val, int num_test,
                                    const TrainConfig& train_base,
                                    const std::vector<int>& levels,
                                    const std::function<void(const SweepPoint&)>& on_point = {});

}  // namespace segnoise::trainer

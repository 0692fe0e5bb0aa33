#include "segnoise/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "segnoise/errors.hpp"
#include "segnoise/rng.hpp"

namespace segnoise::trainer {

bool uses_correction(Mode m) {
    return m == Mode::CorrectionOnly || m == Mode::Adele;
}

bool uses_consistency(Mode m) {
    return m == Mode::ConsistencyOnly || m == Mode::Adele;
}

double evaluate_split(const net::Model& model, const synth::Dataset& ds, int num_classes) {
    std::vector<LabelMask> preds;
    preds.reserve(ds.size());
    for (const Grid& x : ds.images)
        preds.push_back(argmax_labels(net::forward(model, x).second));
    return metrics::pooled_miou(preds, ds.clean_masks, num_classes).miou;
}

namespace {

constexpr std::uint64_t kTagShuffle = 0x300;

consistency::ScaleSet train_scales(const TrainConfig& cfg) {
    if (uses_consistency(cfg.mode)) return cfg.scales;
    return consistency::ScaleSet{{1.0}};
}

// Scales for the epoch-end prediction pass: correction consumes the
// multiscale-averaged q; other modes match their training-time forward.
consistency::ScaleSet q_scales(const TrainConfig& cfg) {
    if (uses_correction(cfg.mode)) return cfg.scales;
    return train_scales(cfg);
}

int scale_one_index(const consistency::ScaleSet& s) {
    for (std::size_t k = 0; k < s.scales.size(); ++k)
        if (s.scales[k] == 1.0) return static_cast<int>(k);
    throw InvalidArgument("scale set lacks the identity scale 1.0");
}

int defined_points(const metrics::ClassIoUSeries& s) {
    int n = 0;
    for (const auto& v : s.values) n += v.has_value() ? 1 : 0;
    return n;
}

// Class-mean training-IoU curve for the global trigger: per epoch, the mean
// over classes with a defined value.
metrics::ClassIoUSeries mean_series(const std::vector<metrics::ClassIoUSeries>& all) {
    metrics::ClassIoUSeries mean;
    mean.class_id = -1;
    if (all.empty()) return mean;
    for (std::size_t i = 0; i < all[0].epochs.size(); ++i) {
        double sum = 0.0;
        int n = 0;
        for (const auto& s : all) {
            if (s.values[i]) {
                sum += *s.values[i];
                ++n;
            }
        }
        mean.epochs.push_back(all[0].epochs[i]);
        mean.values.push_back(n > 0 ? std::optional<double>(sum / n) : std::nullopt);
    }
    return mean;
}

std::vector<std::optional<earlycurve::FitResult>> compute_fits(const TrainConfig& cfg,
                                                               const TrainState& state) {
    std::vector<std::optional<earlycurve::FitResult>> fits(state.series.size());
    if (!uses_correction(cfg.mode)) return fits;
    if (cfg.trigger == TriggerMode::PerClass) {
        for (std::size_t c = 0; c < state.series.size(); ++c)
            if (defined_points(state.series[c]) >= cfg.min_points)
                fits[c] = earlycurve::fit_curve(state.series[c], cfg.min_points);
    } else if (defined_points(mean_series(state.series)) >= cfg.min_points) {
        const auto fit = earlycurve::fit_curve(mean_series(state.series), cfg.min_points);
        for (auto& f : fits) f = fit;
    }
    return fits;
}

std::vector<MetricsRow> assemble_rows(
    const TrainConfig& cfg, int epoch,
    const std::vector<std::optional<double>>& train_iou,
    const metrics::DiagnosticReport& diag,
    const std::vector<std::optional<earlycurve::FitResult>>& fits,
    const correction::CorrectionState& corr, double val, double test,
    double label_quality, std::optional<double> cons_loss) {
    const int K = cfg.model.num_classes;
    std::vector<MetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(K) + 1);
    for (int c = 0; c < K; ++c) {
        MetricsRow row;
        row.epoch = epoch;
        row.class_id = c;
        row.train_iou = train_iou[c];
        row.iou_el = diag.iou_el[c];
        row.iou_m = diag.iou_m[c];
        row.triggered = corr.classes[c].triggered;
        row.trigger_epoch = corr.classes[c].trigger_epoch;
        row.corrected_pixels = corr.classes[c].corrected_pixels;
        if (fits[c]) {
            row.fit_a = fits[c]->a;
            row.fit_b = fits[c]->b;
            row.fit_c = fits[c]->c;
            row.fit_sse = fits[c]->sse;
        }
        rows.push_back(row);
    }
    MetricsRow agg;
    agg.epoch = epoch;
    agg.val_miou = val;
    agg.test_miou = test;
    agg.label_quality = label_quality;
    agg.consistency_loss = cons_loss;
    rows.push_back(agg);
    return rows;
}

}  // namespace

void validate(const TrainConfig& cfg) {
    std::vector<std::string> problems;
    if (!(std::isfinite(cfg.lambda) && cfg.lambda >= 0.0))
        problems.push_back("lambda must be finite and >= 0");
    if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) problems.push_back("rho must be in [0, 1]");
    if (!(cfg.r >= 0.0 && cfg.r <= 1.0)) problems.push_back("r must be in [0, 1]");
    if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) problems.push_back("tau must be in [0, 1]");
    if (cfg.min_points < 3) problems.push_back("min_points must be >= 3");
    if (!(cfg.optim.lr > 0.0)) problems.push_back("lr must be positive");
    if (!(cfg.optim.momentum >= 0.0 && cfg.optim.momentum < 1.0))
        problems.push_back("momentum must be in [0, 1)");
    if (cfg.optim.weight_decay < 0.0) problems.push_back("weight_decay must be >= 0");
    if (!(cfg.optim.lr_final_factor > 0.0 && cfg.optim.lr_final_factor <= 1.0))
        problems.push_back("lr_final_factor must be in (0, 1]");
    if (cfg.optim.batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (cfg.optim.epochs < 0) problems.push_back("epochs must be >= 0");
    try {
        consistency::validate(cfg.scales);
    } catch (const Error& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) throw ConfigError("invalid training configuration", problems);
}

TrainState init_run(const TrainConfig& cfg, const synth::DatasetBundle& data) {
    validate(cfg);
    if (data.train.size() == 0) throw InvalidArgument("init_run: empty train split");
    if (data.train.images[0].channels != cfg.model.in_channels)
        throw InvalidArgument("init_run: model expects " +
                              std::to_string(cfg.model.in_channels) +
                              " input channels, images have " +
                              std::to_string(data.train.images[0].channels));
    net::ModelSpec spec = cfg.model;
    spec.seed = cfg.seed;  // one seed governs init and shuffling
    TrainState st;
    st.model = net::init_model(spec);
    st.optim = net::make_optim_state(st.model);
    st.store = correction::AnnotationStore(data.train.noisy_masks);
    st.corr = correction::CorrectionState(cfg.model.num_classes);
    st.series.resize(cfg.model.num_classes);
    for (int c = 0; c < cfg.model.num_classes; ++c) st.series[c].class_id = c;
    return st;
}

std::vector<MetricsRow> init_rows(const TrainConfig& cfg,
                                  const synth::DatasetBundle& data,
                                  const TrainState& state) {
    const int K = cfg.model.num_classes;
    const auto q = consistency::predict_dataset(state.model, data.train.images,
                                                q_scales(cfg));
    std::vector<LabelMask> preds;
    preds.reserve(q.size());
    for (const auto& p : q) preds.push_back(argmax_labels(p));
    const auto report = metrics::pooled_miou(preds, state.store.original, K);
    const auto diag =
        metrics::pooled_diagnostics(preds, data.train.clean_masks, state.store.original, K);
    const double val = evaluate_split(state.model, data.val, K);
    const double test = evaluate_split(state.model, data.test, K);
    const double lq = correction::label_quality(state.store, data.train.clean_masks, K);
    const std::vector<std::optional<earlycurve::FitResult>> no_fits(K);
    return assemble_rows(cfg, 0, report.per_class_iou, diag, no_fits, state.corr, val,
                         test, lq, std::nullopt);
}

std::vector<MetricsRow> run_epoch(const TrainConfig& cfg,
                                  const synth::DatasetBundle& data, TrainState& state) {
    const int epoch = state.epoch + 1;
    const int K = cfg.model.num_classes;
    const int n = static_cast<int>(data.train.size());
    const bool cons = uses_consistency(cfg.mode);
    const bool corr = uses_correction(cfg.mode);
    const auto tscales = train_scales(cfg);
    const int i_one = cons ? scale_one_index(tscales) : 0;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, kTagShuffle, static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(
            shuffle_rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    auto grads = net::make_gradients(state.model);
    double cons_loss_sum = 0.0;
    const int batch = cfg.optim.batch_size;
    for (int start = 0; start < n; start += batch) {
        const int bsz = std::min(batch, n - start);
        const double inv_b = 1.0 / bsz;
        grads.zero();
        // Within an epoch the triggered set is fixed (triggers move only at
        // epoch end), so whether this batch corrects is known up front.
        const bool collect_q = corr && cfg.granularity == Granularity::Iteration &&
                               state.corr.any_triggered();
        std::vector<ProbMap> batch_q;
        std::vector<int> batch_idx;
        for (int bi = 0; bi < bsz; ++bi) {
            const int idx = order[start + bi];
            const Grid& x = data.train.images[idx];
            const LabelMask& y = state.store.working[idx];
            if (cons) {
                auto ms = consistency::multiscale_forward(state.model, x, tscales, true);
                const auto gate = consistency::confidence_gate(ms.q, cfg.rho, cfg.gate);
                cons_loss_sum += consistency::consistency_loss(ms.p, ms.q, gate);
                auto dp = consistency::consistency_grad(ms.p, ms.q, gate, cfg.stop_grad_q);
                const double w = cfg.lambda * inv_b;
                for (Grid& g : dp)
                    for (double& v : g.data) v *= w;
                auto dlogits = consistency::backward_to_logits(ms, x.height, x.width, dp);
                Grid dce;
                net::ce_loss_and_grad(ms.logits[i_one], y, dce);
                for (std::size_t t = 0; t < dce.data.size(); ++t)
                    dlogits[i_one].data[t] += dce.data[t] * inv_b;
                for (std::size_t k = 0; k < dlogits.size(); ++k)
                    net::backward_accumulate(state.model, ms.caches[k], dlogits[k], grads);
                if (collect_q) {
                    batch_q.push_back(std::move(ms.q));
                    batch_idx.push_back(idx);
                }
            } else {
                net::ForwardCache cache;
                const Grid logits = net::forward_logits(state.model, x, &cache);
                Grid dce;
                net::ce_loss_and_grad(logits, y, dce);
                for (double& v : dce.data) v *= inv_b;
                net::backward_accumulate(state.model, cache, dce, grads);
                if (collect_q) {
                    batch_q.push_back(softmax(logits));
                    batch_idx.push_back(idx);
                }
            }
        }
        net::OptimConfig step_cfg = cfg.optim;
        step_cfg.lr = net::scheduled_lr(cfg.optim, epoch);
        net::sgd_step(state.model, grads, step_cfg, state.optim);
        if (!batch_idx.empty())
            correction::correct_labels(state.store, state.corr, batch_q, cfg.tau,
                                       batch_idx);
    }

    // Epoch-end pass: predict, extend the series, fit, move triggers,
    // correct, evaluate. Correction reuses the same q as the series.
    const auto q = consistency::predict_dataset(state.model, data.train.images,
                                                q_scales(cfg));
    std::vector<LabelMask> preds;
    preds.reserve(q.size());
    for (const auto& p : q) preds.push_back(argmax_labels(p));
    std::vector<std::optional<double>> train_iou(K);
    for (int c = 0; c < K; ++c) {
        metrics::append_training_iou(state.series[c], epoch, preds, state.store.original);
        train_iou[c] = state.series[c].values.back();
    }
    const auto fits = compute_fits(cfg, state);
    if (corr) {
        correction::update_state(state.corr, fits, epoch, cfg.r);
        if (cfg.granularity == Granularity::Epoch && state.corr.any_triggered())
            correction::correct_labels(state.store, state.corr, q, cfg.tau);
    }
    const auto diag =
        metrics::pooled_diagnostics(preds, data.train.clean_masks, state.store.original, K);
    const double val = evaluate_split(state.model, data.val, K);
    const double test = evaluate_split(state.model, data.test, K);
    const double lq = correction::label_quality(state.store, data.train.clean_masks, K);
    state.epoch = epoch;
    return assemble_rows(cfg, epoch, train_iou, diag, fits, state.corr, val, test, lq,
                         cons ? std::optional<double>(cons_loss_sum / n) : std::nullopt);
}

RunRecord run_experiment(const TrainConfig& cfg, const synth::DatasetBundle& data,
                         const RowCallback& on_row) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainState state = init_run(cfg, data);
    RunRecord rec;
    rec.config = cfg;
    auto push = [&](std::vector<MetricsRow>&& rows) {
        for (MetricsRow& row : rows) {
            rec.rows.push_back(std::move(row));
            if (on_row) on_row(rec.rows.back());
        }
    };
    push(init_rows(cfg, data, state));
    for (int e = 1; e <= cfg.optim.epochs; ++e) push(run_epoch(cfg, data, state));

    double best_val = -1.0;
    for (const MetricsRow& row : rec.rows) {
        if (row.class_id) continue;
        const double val = row.val_miou.value_or(0.0);
        const double test = row.test_miou.value_or(0.0);
        if (val > best_val) {  // strict: earliest epoch wins ties
            best_val = val;
            rec.summary.best_val_epoch = row.epoch;
            rec.summary.best_val_test_miou = test;
        }
        rec.summary.max_test_miou = std::max(rec.summary.max_test_miou, test);
        rec.summary.last_epoch_test_miou = test;
        rec.summary.last_epoch_val_miou = val;
    }
    rec.model = std::move(state.model);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<SweepPoint> noise_sweep(const synth::SynthConfig& synth_base,
                                    const synth::NoiseConfig& noise_base,
                                    int num_train, int num_val, int num_test,
                                    const TrainConfig& train_base,
                                    const std::vector<int>& levels,
                                    const std::function<void(const SweepPoint&)>& on_point) {
    if (levels.empty()) throw InvalidArgument("noise_sweep: no corruption levels");
    std::vector<int> sorted = levels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InvalidArgument("noise_sweep: duplicate corruption level");
    if (sorted.front() < 0) throw InvalidArgument("noise_sweep: negative corruption level");

    std::vector<SweepPoint> out;
    out.reserve(levels.size());
    for (int level : levels) {
        synth::NoiseConfig noise = noise_base;
        noise.max_iterations = level;
        const auto bundle =
            synth::generate_bundle(synth_base, noise, num_train, num_val, num_test);
        SweepPoint pt;
        pt.max_iterations = level;
        pt.annotation_miou = metrics::pooled_miou(bundle.train.noisy_masks,
                                                  bundle.train.clean_masks,
                                                  synth_base.num_classes)
                                 .miou;
        TrainConfig base_cfg = train_base;
        base_cfg.mode = Mode::Baseline;
        TrainConfig adele_cfg = train_base;
        adele_cfg.mode = Mode::Adele;
        pt.baseline = run_experiment(base_cfg, bundle);
        pt.adele = run_experiment(adele_cfg, bundle);
        if (on_point) on_point(pt);
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace segnoise::trainer

// segnoise: deterministic segmentation experiments under noisy annotations.
//
// Subcommands: synth, train, fit-curve, eval, sweep, report.
// Exit codes: 0 success, 1 runtime error, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segnoise/earlycurve.hpp"
#include "segnoise/errors.hpp"
#include "segnoise/io.hpp"
#include "segnoise/metrics.hpp"
#include "segnoise/synthgen.hpp"
#include "segnoise/trainer.hpp"

namespace {

using namespace segnoise;

io::RunConfig load_config(const std::string& path) {
    return path.empty() ? io::RunConfig{} : io::read_run_config(path);
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& args) {
    io::RunConfig cfg = load_config(args.config);
    if (args.seed) cfg.synth.seed = *args.seed;

    const synth::DatasetBundle bundle = synth::generate_bundle(
        cfg.synth, cfg.noise, cfg.num_train, cfg.num_val, cfg.num_test);
    io::save_bundle(bundle, cfg.synth.num_classes, args.out, io::run_config_json(cfg));

    const double quality =
        metrics::pooled_miou(bundle.train.noisy_masks, bundle.train.clean_masks,
                             cfg.synth.num_classes)
            .miou;
    std::printf("wrote %s: %dx%d, %d classes, %zu/%zu/%zu train/val/test\n",
                args.out.c_str(), cfg.synth.height, cfg.synth.width,
                cfg.synth.num_classes, bundle.train.size(), bundle.val.size(),
                bundle.test.size());
    std::printf("annotation mIoU: %.6g\n", quality);
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<std::string> mode, gate, granularity, trigger;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda, rho, r, tau, lr, momentum, weight_decay;
    std::optional<int> min_points, batch_size, epochs;
    std::vector<double> scales;
    std::optional<bool> stop_grad_q;
};

void apply_overrides(const TrainArgs& args, trainer::TrainConfig& cfg) {
    if (args.mode) cfg.mode = io::mode_from_string(*args.mode);
    if (args.gate) cfg.gate = io::gate_from_string(*args.gate);
    if (args.granularity) cfg.granularity = io::granularity_from_string(*args.granularity);
    if (args.trigger) cfg.trigger = io::trigger_from_string(*args.trigger);
    if (args.seed) cfg.seed = *args.seed;
    if (args.lambda) cfg.lambda = *args.lambda;
    if (args.rho) cfg.rho = *args.rho;
    if (args.r) cfg.r = *args.r;
    if (args.tau) cfg.tau = *args.tau;
    if (args.lr) cfg.optim.lr = *args.lr;
    if (args.momentum) cfg.optim.momentum = *args.momentum;
    if (args.weight_decay) cfg.optim.weight_decay = *args.weight_decay;
    if (args.min_points) cfg.min_points = *args.min_points;
    if (args.batch_size) cfg.optim.batch_size = *args.batch_size;
    if (args.epochs) cfg.optim.epochs = *args.epochs;
    if (!args.scales.empty()) cfg.scales.scales = args.scales;
    if (args.stop_grad_q) cfg.stop_grad_q = *args.stop_grad_q;
}

int cmd_train(const TrainArgs& args) {
    io::RunConfig cfg = load_config(args.config);
    apply_overrides(args, cfg.train);
    trainer::validate(cfg.train);

    const io::LoadedBundle data = io::load_bundle(args.data);
    std::filesystem::create_directories(args.out);
    io::write_file(args.out + "/config.json", io::run_config_json(cfg));

    io::MetricsWriter writer(args.out + "/metrics.csv");
    const trainer::RunRecord rec =
        trainer::run_experiment(cfg.train, data.bundle, [&](const trainer::MetricsRow& row) {
            writer.write_row(row);
            if (!row.class_id && row.val_miou && row.test_miou)
                std::printf("epoch %3d  val %.4f  test %.4f  quality %.4f\n", row.epoch,
                            *row.val_miou, *row.test_miou,
                            row.label_quality.value_or(0.0));
        });

    io::save_checkpoint(rec.model, args.out + "/checkpoint.segc");
    io::write_summary(rec, args.out + "/summary.json");
    std::printf("%s", io::summary_json(rec).c_str());
    return 0;
}

// --------------------------------------------------------------- fit-curve

struct FitArgs {
    std::string series;
    std::optional<int> class_id;
    double r = 0.9;
    int min_points = earlycurve::kDefaultMinPoints;
};

int cmd_fit_curve(const FitArgs& args) {
    const metrics::ClassIoUSeries series = io::read_series_csv(args.series, args.class_id);
    const earlycurve::FitResult fit = earlycurve::fit_curve(series, args.min_points);
    std::printf("fit: a=%.6g b=%.6g c=%.6g sse=%.6g points=%d converged=%d\n", fit.a,
                fit.b, fit.c, fit.sse, fit.points_used, fit.converged ? 1 : 0);
    for (int epoch : series.epochs) {
        const earlycurve::TriggerDecision d =
            earlycurve::check_trigger(fit, epoch, args.r, series.class_id);
        if (d.triggered) {
            std::printf("trigger at epoch %d (relative slope change %.6g > %.6g)\n",
                        epoch, d.relative_slope_change, args.r);
            return 0;
        }
    }
    std::printf("no trigger (r=%.6g not exceeded by epoch %d)\n", args.r,
                series.epochs.back());
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;
    std::string data;
};

int cmd_eval(const EvalArgs& args) {
    const net::Model model = io::load_checkpoint(args.checkpoint);
    const io::LoadedBundle data = io::load_bundle(args.data);
    if (model.spec.num_classes != data.num_classes)
        throw InvalidArgument("eval: checkpoint has " +
                              std::to_string(model.spec.num_classes) +
                              " classes, dataset has " +
                              std::to_string(data.num_classes));
    // %.17g keeps the full double, so these compare exactly against the
    // summary JSON written by train.
    std::printf("val_miou=%.17g\n",
                trainer::evaluate_split(model, data.bundle.val, data.num_classes));
    std::printf("test_miou=%.17g\n",
                trainer::evaluate_split(model, data.bundle.test, data.num_classes));
    return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
    std::string config;
    std::string out;
    std::vector<int> levels;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

int cmd_sweep(const SweepArgs& args) {
    io::RunConfig cfg = load_config(args.config);
    if (args.seed) cfg.train.seed = *args.seed;
    if (args.epochs) cfg.train.optim.epochs = *args.epochs;

    std::filesystem::create_directories(args.out);
    io::write_file(args.out + "/config.json", io::run_config_json(cfg));

    const std::vector<trainer::SweepPoint> points = trainer::noise_sweep(
        cfg.synth, cfg.noise, cfg.num_train, cfg.num_val, cfg.num_test, cfg.train,
        args.levels, [](const trainer::SweepPoint& pt) {
            std::printf("level %d  annotation %.4f  baseline %.4f  adele %.4f\n",
                        pt.max_iterations, pt.annotation_miou,
                        pt.baseline.summary.last_epoch_test_miou,
                        pt.adele.summary.last_epoch_test_miou);
        });
    io::write_sweep(points, args.out);
    std::printf("wrote %s/sweep.csv and %s/sweep.svg\n", args.out.c_str(),
                args.out.c_str());
    return 0;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::string run;
    std::string out;
};

int cmd_report(const ReportArgs& args) {
    const std::vector<trainer::MetricsRow> rows =
        io::read_metrics_csv(args.run + "/metrics.csv");
    io::write_report(rows, args.out);
    std::printf("wrote %s/{diagnostics,fits,quality}.svg\n", args.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic segmentation experiments under noisy annotations"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate and save a dataset");
    synth->add_option("--config", synth_args.config, "run config JSON");
    synth->add_option("--out", synth_args.out, "output .segd path")->required();
    synth->add_option("--seed", synth_args.seed, "override synth.seed");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train one model on a dataset");
    train->add_option("--config", train_args.config, "run config JSON");
    train->add_option("--data", train_args.data, "input .segd path")->required();
    train->add_option("--out", train_args.out, "output directory")->required();
    train->add_option("--mode", train_args.mode, "baseline|correction_only|consistency_only|adele")
        ->check(CLI::IsMember({"baseline", "correction_only", "consistency_only", "adele"}));
    train->add_option("--seed", train_args.seed, "override train.seed");
    train->add_option("--lambda", train_args.lambda, "consistency weight");
    train->add_option("--rho", train_args.rho, "consistency confidence gate");
    train->add_option("--r", train_args.r, "trigger threshold");
    train->add_option("--tau", train_args.tau, "correction confidence threshold");
    train->add_option("--scales", train_args.scales, "consistency scales")
        ->delimiter(',');
    train->add_option("--gate", train_args.gate, "pixel|image")
        ->check(CLI::IsMember({"pixel", "image"}));
    train->add_flag("--stop-grad-q,!--no-stop-grad-q", train_args.stop_grad_q,
                    "detach the consistency target");
    train->add_option("--granularity", train_args.granularity, "epoch|iteration")
        ->check(CLI::IsMember({"epoch", "iteration"}));
    train->add_option("--trigger", train_args.trigger, "per_class|global")
        ->check(CLI::IsMember({"per_class", "global"}));
    train->add_option("--min-points", train_args.min_points, "min epochs before fitting");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--momentum", train_args.momentum, "SGD momentum");
    train->add_option("--weight-decay", train_args.weight_decay, "L2 penalty");
    train->add_option("--batch-size", train_args.batch_size, "minibatch size");
    train->add_option("--epochs", train_args.epochs, "training epochs");

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit-curve", "fit the learning curve of a series");
    fit->add_option("--series", fit_args.series, "CSV series path")->required();
    fit->add_option("--class", fit_args.class_id, "class id when reading a metrics CSV");
    fit->add_option("--r", fit_args.r, "trigger threshold (default 0.9)");
    fit->add_option("--min-points", fit_args.min_points, "minimum points for the fit");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", eval_args.checkpoint, "input .segc path")->required();
    eval->add_option("--data", eval_args.data, "input .segd path")->required();

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "baseline-vs-adele noise sweep");
    sweep->add_option("--config", sweep_args.config, "run config JSON");
    sweep->add_option("--levels", sweep_args.levels, "corruption levels, e.g. 0,1,2,4")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", sweep_args.out, "output directory")->required();
    sweep->add_option("--seed", sweep_args.seed, "override train.seed");
    sweep->add_option("--epochs", sweep_args.epochs, "override optim.epochs");

    ReportArgs report_args;
    CLI::App* report = app.add_subcommand("report", "render SVG reports for a run");
    report->add_option("--run", report_args.run, "directory containing metrics.csv")
        ->required();
    report->add_option("--out", report_args.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (train->parsed()) return cmd_train(train_args);
        if (fit->parsed()) return cmd_fit_curve(fit_args);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (report->parsed()) return cmd_report(report_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        for (const std::string& p : e.problems())
            std::fprintf(stderr, "  - %s\n", p.c_str());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 0;
}

#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "segnoise/metrics.hpp"
#include "segnoise/netcore.hpp"
#include "segnoise/synthgen.hpp"
#include "segnoise/trainer.hpp"

namespace segnoise::io {

// ---------------------------------------------------------------------------
// SEGD dataset container: magic "SEGD", version u16, then u32 counts
// (H, W, C, K, n_train, n_val, n_test), then the three splits back to back
// (per example: row-major f32 image, clean mask bytes, noisy mask bytes),
// then a u32-length-prefixed UTF-8 JSON metadata block. All integers and
// floats little-endian. Declared counts must match the payload exactly.

inline constexpr std::uint16_t kSegdVersion = 1;

struct LoadedBundle {
    synth::DatasetBundle bundle;
    int num_classes = 0;
    std::string meta_json;
};

// num_classes is recorded in the header; the bundle itself does not carry it.
void save_bundle(const synth::DatasetBundle& bundle, int num_classes,
                 const std::string& path, const std::string& meta_json);
LoadedBundle load_bundle(const std::string& path);

// ---------------------------------------------------------------------------
// SEGC checkpoint: magic "SEGC", version u16, u32-length-prefixed JSON model
// spec, u32 parameter count, then f64 parameters in param_ptrs order.

inline constexpr std::uint16_t kSegcVersion = 1;

void save_checkpoint(const net::Model& model, const std::string& path);
net::Model load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration: one JSON document with "synth", "noise", "splits" and
// "train" sections whose keys mirror the config structs by name. Unknown
// keys are rejected; every problem is collected before throwing ConfigError.

struct RunConfig {
    // 64x64 two-class reference geometry, so "{}" is already a runnable config.
    synth::SynthConfig synth{
        .height = 64, .width = 64, .classes = {synth::ClassSpec{}}};
    synth::NoiseConfig noise;
    trainer::TrainConfig train;
    int num_train = 120;
    int num_val = 30;
    int num_test = 30;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig read_run_config(const std::string& path);
// Canonical JSON echo of an effective configuration (after flag overrides).
std::string run_config_json(const RunConfig& cfg);

// Enum spellings shared by config files and CLI flags.
std::string to_string(trainer::Mode m);
std::string to_string(trainer::Granularity g);
std::string to_string(trainer::TriggerMode t);
std::string to_string(consistency::GateMode g);
std::string to_string(synth::ShapeKind s);
trainer::Mode mode_from_string(const std::string& s);
trainer::Granularity granularity_from_string(const std::string& s);
trainer::TriggerMode trigger_from_string(const std::string& s);
consistency::GateMode gate_from_string(const std::string& s);
synth::ShapeKind shape_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Metrics CSV: header-first, one MetricsRow per line, "\n" endings, floats
// with 6 significant digits, absent values as empty cells, the aggregate
// row marked with class = "all".

extern const char* const kMetricsHeader;

std::string metrics_row_line(const trainer::MetricsRow& row);

class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    // Appends one line and flushes, so an aborted run leaves a readable
    // partial file.
    void write_row(const trainer::MetricsRow& row);

private:
    std::ofstream out_;
    std::string path_;
};

std::string metrics_csv_string(const std::vector<trainer::MetricsRow>& rows);
std::vector<trainer::MetricsRow> read_metrics_csv(const std::string& path);
std::vector<trainer::MetricsRow> parse_metrics_csv(const std::string& text);

// A training-IoU series for curve fitting, from either a two-column
// "epoch,value" CSV (class_id must be empty) or a metrics CSV (class_id
// selects the class whose train_iou column is read).
metrics::ClassIoUSeries read_series_csv(const std::string& path,
                                        std::optional<int> class_id = std::nullopt);

// ---------------------------------------------------------------------------
// Summary JSON for a finished run.

std::string summary_json(const trainer::RunRecord& rec);
void write_summary(const trainer::RunRecord& rec, const std::string& path);

// ---------------------------------------------------------------------------
// SVG reports. write_report renders three charts into dir:
//   diagnostics.svg  per-class IoU_el (solid) and IoU_m (dashed)
//   fits.svg         per-class training IoU, final fitted curve, and a
//                    vertical marker at each recorded trigger epoch
//   quality.svg      label quality and val/test mIoU
// Byte-deterministic for identical inputs; empty input is an error.

void write_report(const std::vector<trainer::MetricsRow>& rows, const std::string& dir);
void write_report(const trainer::RunRecord& rec, const std::string& dir);

// Noise-sweep outputs: sweep.csv (level, annotation mIoU, last-epoch test
// mIoU of both arms) and sweep.svg.
std::string sweep_csv_string(const std::vector<trainer::SweepPoint>& points);
void write_sweep(const std::vector<trainer::SweepPoint>& points, const std::string& dir);

// ---------------------------------------------------------------------------
// Whole-file helpers (binary mode; FileError on failure).

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace segnoise::io

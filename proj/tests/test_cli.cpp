#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "segnoise/io.hpp"

using namespace segnoise;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SEGNOISE_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult result;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) result.out.append(buf, n);
    const int status = pclose(pipe);
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// One scratch directory per process holding the config, the dataset and the
// training runs most cases share; regenerating them per case would make the
// suite needlessly slow.
struct Workspace {
    fs::path dir;

    Workspace() : dir(fs::temp_directory_path() / "segnoise_cli_test") {
        fs::remove_all(dir);
        fs::create_directories(dir);
        io::write_file(file("tiny.json"), R"({
          "synth": {
            "height": 28, "width": 28, "num_classes": 3, "num_channels": 2,
            "seed": 11,
            "classes": [
              {"shape": "ellipse", "min_radius": 3, "max_radius": 5, "frequency": 1.0},
              {"shape": "rectangle", "min_radius": 3, "max_radius": 5, "frequency": 1.0}
            ]
          },
          "noise": {"max_iterations": 2, "p_dilate": 0.5, "per_class": true},
          "splits": {"train": 16, "val": 6, "test": 6},
          "train": {
            "mode": "adele",
            "model": {"in_channels": 2, "num_classes": 3,
                      "hidden": [{"kernel": 3, "out_channels": 8, "relu": true}]},
            "optim": {"lr": 0.01, "momentum": 0.9, "batch_size": 4, "epochs": 6},
            "seed": 5
          }
        })");
    }

    std::string file(const std::string& name) const { return (dir / name).string(); }
    std::string config() const { return file("tiny.json"); }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

const std::string& shared_dataset() {
    static const std::string path = [] {
        const std::string p = ws().file("data.segd");
        const CmdResult r =
            run_cli("synth --config " + ws().config() + " --out " + p);
        REQUIRE(r.code == 0);
        return p;
    }();
    return path;
}

const std::string& shared_run() {
    static const std::string path = [] {
        const std::string p = ws().file("run_adele");
        const CmdResult r = run_cli("train --config " + ws().config() + " --data " +
                                    shared_dataset() + " --out " + p);
        REQUIRE(r.code == 0);
        return p;
    }();
    return path;
}

}  // namespace

TEST_CASE("synth writes a loadable bundle and reports its annotation quality") {
    const CmdResult r = run_cli("synth --config " + ws().config() + " --out " +
                                ws().file("synth_probe.segd"));
    CHECK(r.code == 0);
    CHECK(r.out.find("annotation mIoU:") != std::string::npos);

    const io::LoadedBundle loaded = io::load_bundle(ws().file("synth_probe.segd"));
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.bundle.train.size() == 16);
    CHECK(loaded.bundle.val.size() == 6);
    CHECK(loaded.bundle.test.size() == 6);
    // The metadata trailer is the effective config echo.
    CHECK(loaded.meta_json.find("\"num_classes\": 3") != std::string::npos);
}

TEST_CASE("synth is deterministic for a seed and changes with it") {
    run_cli("synth --config " + ws().config() + " --out " + ws().file("s1.segd"));
    run_cli("synth --config " + ws().config() + " --out " + ws().file("s2.segd"));
    run_cli("synth --config " + ws().config() + " --out " + ws().file("s3.segd") +
            " --seed 99");
    const std::string a = io::read_file(ws().file("s1.segd"));
    CHECK(a == io::read_file(ws().file("s2.segd")));
    CHECK(a != io::read_file(ws().file("s3.segd")));
}

TEST_CASE("usage and config mistakes exit with code 2") {
    CHECK(run_cli("synth --config " + ws().config()).code == 2);  // missing --out
    CHECK(run_cli("train --data x --out y --mode turbo").code == 2);
    CHECK(run_cli("bogus").code == 2);
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("synth --help").code == 0);

    io::write_file(ws().file("bad.json"),
                   R"({"train": {"mode": "turbo", "lambda": -3}, "junk": 1})");
    const CmdResult r = run_cli("synth --config " + ws().file("bad.json") +
                                " --out " + ws().file("never.segd"));
    CHECK(r.code == 2);
    // Every problem is listed, not just the first.
    CHECK(r.out.find("train.mode") != std::string::npos);
    CHECK(r.out.find("lambda") != std::string::npos);
    CHECK(r.out.find("config.junk") != std::string::npos);
}

TEST_CASE("train writes the four run artifacts and a parseable metrics CSV") {
    const std::string& run = shared_run();
    for (const char* name : {"metrics.csv", "config.json", "checkpoint.segc",
                             "summary.json"})
        CHECK(fs::exists(fs::path(run) / name));

    const auto rows = io::read_metrics_csv(run + "/metrics.csv");
    // (epochs + 1) blocks of one row per class plus one aggregate row.
    CHECK(rows.size() == 7 * 4);

    const io::RunConfig echoed = io::read_run_config(run + "/config.json");
    CHECK(echoed.train.optim.epochs == 6);

    const auto summary = nlohmann::json::parse(io::read_file(run + "/summary.json"));
    CHECK(summary.at("mode") == "adele");
    CHECK(summary.at("epochs") == 6);
    CHECK(summary.at("best_val_epoch").is_number_integer());
    CHECK(summary.at("best_val_test_miou").is_number());
    CHECK(summary.at("max_test_miou").is_number());
}

TEST_CASE("train is deterministic: identical flags reproduce identical artifacts") {
    const std::string again = ws().file("run_adele_again");
    REQUIRE(run_cli("train --config " + ws().config() + " --data " + shared_dataset() +
                    " --out " + again)
                .code == 0);
    CHECK(io::read_file(again + "/metrics.csv") ==
          io::read_file(shared_run() + "/metrics.csv"));
    CHECK(io::read_file(again + "/checkpoint.segc") ==
          io::read_file(shared_run() + "/checkpoint.segc"));
    // Summaries agree except for the wall clock.
    auto a = nlohmann::json::parse(io::read_file(again + "/summary.json"));
    auto b = nlohmann::json::parse(io::read_file(shared_run() + "/summary.json"));
    a.erase("wall_seconds");
    b.erase("wall_seconds");
    CHECK(a == b);
}

TEST_CASE("eval reproduces the summary numbers from the saved checkpoint") {
    const CmdResult r = run_cli("eval --checkpoint " + shared_run() +
                                "/checkpoint.segc --data " + shared_dataset());
    REQUIRE(r.code == 0);
    double val = -1, test = -1;
    REQUIRE(std::sscanf(r.out.c_str(), "val_miou=%lf test_miou=%lf", &val, &test) == 2);
    const auto summary =
        nlohmann::json::parse(io::read_file(shared_run() + "/summary.json"));
    CHECK(val == summary.at("last_epoch_val_miou").get<double>());
    CHECK(test == summary.at("last_epoch_test_miou").get<double>());
}

TEST_CASE("train with zero epochs leaves only the initialization rows") {
    const std::string run = ws().file("run_zero");
    REQUIRE(run_cli("train --config " + ws().config() + " --data " + shared_dataset() +
                    " --out " + run + " --epochs 0")
                .code == 0);
    const auto rows = io::read_metrics_csv(run + "/metrics.csv");
    CHECK(rows.size() == 4);
    for (const auto& row : rows) CHECK(row.epoch == 0);
}

TEST_CASE("flag overrides reach the run and its echoed config") {
    const std::string run = ws().file("run_override");
    REQUIRE(run_cli("train --config " + ws().config() + " --data " + shared_dataset() +
                    " --out " + run +
                    " --mode baseline --epochs 2 --lr 0.02 --batch-size 8 --seed 3")
                .code == 0);
    const io::RunConfig echoed = io::read_run_config(run + "/config.json");
    CHECK(io::to_string(echoed.train.mode) == "baseline");
    CHECK(echoed.train.optim.epochs == 2);
    CHECK(echoed.train.optim.lr == 0.02);
    CHECK(echoed.train.optim.batch_size == 8);
    CHECK(echoed.train.seed == 3);
    const auto summary = nlohmann::json::parse(io::read_file(run + "/summary.json"));
    CHECK(summary.at("mode") == "baseline");
    CHECK(summary.at("seed") == 3);
}

TEST_CASE("fit-curve recovers closed-form parameters and scans for the trigger") {
    std::string csv = "epoch,value\n";
    for (int t = 1; t <= 12; ++t) {
        char line[64];
        std::snprintf(line, sizeof line, "%d,%.10f\n", t,
                      0.8 * (1.0 - std::exp(-0.3 * t)));
        csv += line;
    }
    io::write_file(ws().file("series.csv"), csv);

    const CmdResult r = run_cli("fit-curve --series " + ws().file("series.csv"));
    REQUIRE(r.code == 0);
    double a = 0, b = 0, c = 0;
    REQUIRE(std::sscanf(r.out.c_str(), "fit: a=%lf b=%lf c=%lf", &a, &b, &c) == 3);
    CHECK(a == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(b == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(c == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.out.find("trigger at epoch 9") != std::string::npos);

    const CmdResult strict =
        run_cli("fit-curve --series " + ws().file("series.csv") + " --r 0.99");
    CHECK(strict.code == 0);
    CHECK(strict.out.find("no trigger") != std::string::npos);

    io::write_file(ws().file("short.csv"), "1,0.1\n2,0.2\n3,0.3\n");
    const CmdResult few = run_cli("fit-curve --series " + ws().file("short.csv"));
    CHECK(few.code == 1);
    CHECK(few.out.find("error") != std::string::npos);
}

TEST_CASE("fit-curve reads a per-class series out of a training metrics CSV") {
    const CmdResult r =
        run_cli("fit-curve --series " + shared_run() + "/metrics.csv --class 1");
    CHECK(r.code == 0);
    CHECK(r.out.find("fit: a=") != std::string::npos);
}

TEST_CASE("report renders the SVG trio and flags runtime errors") {
    const std::string out = ws().file("report_adele");
    REQUIRE(run_cli("report --run " + shared_run() + " --out " + out).code == 0);
    for (const char* name : {"diagnostics.svg", "fits.svg", "quality.svg"})
        CHECK(fs::exists(fs::path(out) / name));

    // A baseline run never fits or triggers, so its chart has no markers.
    const std::string base_run = ws().file("run_base_report");
    REQUIRE(run_cli("train --config " + ws().config() + " --data " + shared_dataset() +
                    " --out " + base_run + " --mode baseline --epochs 3")
                .code == 0);
    const std::string base_out = ws().file("report_base");
    REQUIRE(run_cli("report --run " + base_run + " --out " + base_out).code == 0);
    const std::string fits = io::read_file(base_out + "/fits.svg");
    CHECK(fits.find("fit class") == std::string::npos);
    CHECK(fits.find("t0=") == std::string::npos);
    CHECK(fits.find("t1=") == std::string::npos);
    CHECK(fits.find("t2=") == std::string::npos);

    CHECK(run_cli("report --run /no/such/run --out " + ws().file("nowhere")).code == 1);
}

TEST_CASE("sweep writes one CSV line per level and rejects duplicates") {
    const std::string out = ws().file("sweep_one");
    const CmdResult r = run_cli("sweep --config " + ws().config() +
                                " --levels 2 --out " + out + " --epochs 2");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("level 2") != std::string::npos);
    const std::string csv = io::read_file(out + "/sweep.csv");
    CHECK(csv.find("max_iterations,annotation_miou,baseline_test_miou,adele_test_miou\n") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(fs::exists(fs::path(out) / "sweep.svg"));
    CHECK(fs::exists(fs::path(out) / "config.json"));

    CHECK(run_cli("sweep --config " + ws().config() + " --levels 2,2 --out " +
                  ws().file("sweep_dup"))
              .code != 0);
}

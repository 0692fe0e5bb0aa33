#include "segnoise/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "segnoise/earlycurve.hpp"
#include "segnoise/errors.hpp"

namespace segnoise::io {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------- bytes

void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(s, bits);
}

void put_f64(std::string& s, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (buf.size() - pos < n)
            throw TruncationError(std::string(what) + " truncated: expected " +
                                  std::to_string(pos + n) + " bytes, got " +
                                  std::to_string(buf.size()));
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    const char* raw(std::size_t n, const char* what) {
        need(n, what);
        const char* p = buf.data() + pos;
        pos += n;
        return p;
    }
};

// ------------------------------------------------------------------- formats

constexpr char kSegdMagic[4] = {'S', 'E', 'G', 'D'};
constexpr char kSegcMagic[4] = {'S', 'E', 'G', 'C'};

void check_magic(Reader& r, const char (&magic)[4], const char* what) {
    const char* m = r.raw(4, what);
    if (std::memcmp(m, magic, 4) != 0)
        throw BadMagicError(std::string(what) + ": bad magic '" + std::string(m, 4) +
                            "', expected '" + std::string(magic, 4) + "'");
}

void append_dataset(std::string& out, const synth::Dataset& ds, int h, int w, int c,
                    int k, const char* split_name) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Grid& img = ds.images[i];
        const LabelMask& clean = ds.clean_masks[i];
        const LabelMask& noisy = ds.noisy_masks[i];
        if (img.height != h || img.width != w || img.channels != c ||
            clean.height != h || clean.width != w || noisy.height != h ||
            noisy.width != w)
            throw InvalidArgument(std::string("save_bundle: ") + split_name +
                                  " example " + std::to_string(i) +
                                  " does not match the bundle dimensions");
        for (double v : img.data) put_f32(out, static_cast<float>(v));
        for (std::uint8_t id : clean.ids) {
            if (id >= k)
                throw InvalidArgument("save_bundle: label outside [0, K)");
            out.push_back(static_cast<char>(id));
        }
        for (std::uint8_t id : noisy.ids) {
            if (id >= k)
                throw InvalidArgument("save_bundle: label outside [0, K)");
            out.push_back(static_cast<char>(id));
        }
    }
}

synth::Dataset read_dataset(Reader& r, synth::Split split, std::uint32_t n, int h,
                            int w, int c, int k) {
    synth::Dataset ds;
    ds.split = split;
    ds.images.reserve(n);
    ds.clean_masks.reserve(n);
    ds.noisy_masks.reserve(n);
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    for (std::uint32_t i = 0; i < n; ++i) {
        Grid img(h, w, c);
        for (double& v : img.data) v = r.f32("dataset payload");
        ds.images.push_back(std::move(img));
        for (int m = 0; m < 2; ++m) {
            LabelMask mask(h, w);
            const char* bytes = r.raw(pixels, "dataset payload");
            for (std::size_t p = 0; p < pixels; ++p) {
                const auto id = static_cast<std::uint8_t>(bytes[p]);
                if (id >= k)
                    throw FormatError("dataset: label " + std::to_string(id) +
                                      " outside [0, " + std::to_string(k) + ")");
                mask.ids[p] = id;
            }
            (m == 0 ? ds.clean_masks : ds.noisy_masks).push_back(std::move(mask));
        }
    }
    return ds;
}

// ----------------------------------------------------------------- numbers

std::string fmt_g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void append_cell(std::string& s, const std::optional<double>& v) {
    s.push_back(',');
    if (v) s += fmt_g6(*v);
}

// -------------------------------------------------------------- config JSON

struct ParseCtx {
    std::vector<std::string> problems;

    void add(const std::string& path, const std::string& msg) {
        problems.push_back(path + ": " + msg);
    }
};

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed, ParseCtx& ctx) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) ctx.add(path + "." + item.key(), "unknown key");
}

const json* get_object(const json& root, const std::string& path, const char* key,
                       ParseCtx& ctx) {
    if (!root.contains(key)) return nullptr;
    const json& v = root.at(key);
    if (!v.is_object()) {
        ctx.add(path + "." + key, "expected an object");
        return nullptr;
    }
    return &v;
}

void take_num(const json& obj, const std::string& path, const char* key, double& target,
              ParseCtx& ctx) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) {
        ctx.add(path + "." + key, "expected a number");
        return;
    }
    target = v.get<double>();
}

void take_int(const json& obj, const std::string& path, const char* key, int& target,
              ParseCtx& ctx) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
        ctx.add(path + "." + key, "expected an integer");
        return;
    }
    target = v.get<int>();
}

void take_u64(const json& obj, const std::string& path, const char* key,
              std::uint64_t& target, ParseCtx& ctx) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!(v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0))) {
        ctx.add(path + "." + key, "expected a non-negative integer");
        return;
    }
    target = v.get<std::uint64_t>();
}

void take_bool(const json& obj, const std::string& path, const char* key, bool& target,
               ParseCtx& ctx) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) {
        ctx.add(path + "." + key, "expected a boolean");
        return;
    }
    target = v.get<bool>();
}

template <typename Enum>
void take_enum(const json& obj, const std::string& path, const char* key, Enum& target,
               Enum (*parse)(const std::string&), ParseCtx& ctx) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) {
        ctx.add(path + "." + key, "expected a string");
        return;
    }
    try {
        target = parse(v.get<std::string>());
    } catch (const Error& e) {
        ctx.add(path + "." + key, e.what());
    }
}

void parse_synth(const json& obj, synth::SynthConfig& cfg, ParseCtx& ctx) {
    const std::string path = "synth";
    check_keys(obj, path,
               {"height", "width", "num_classes", "num_channels", "classes",
                "feature_noise_sigma", "seed"},
               ctx);
    take_int(obj, path, "height", cfg.height, ctx);
    take_int(obj, path, "width", cfg.width, ctx);
    take_int(obj, path, "num_classes", cfg.num_classes, ctx);
    take_int(obj, path, "num_channels", cfg.num_channels, ctx);
    take_num(obj, path, "feature_noise_sigma", cfg.feature_noise_sigma, ctx);
    take_u64(obj, path, "seed", cfg.seed, ctx);
    if (obj.contains("classes")) {
        const json& arr = obj.at("classes");
        if (!arr.is_array()) {
            ctx.add(path + ".classes", "expected an array");
            return;
        }
        cfg.classes.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string cpath = path + ".classes[" + std::to_string(i) + "]";
            const json& e = arr.at(i);
            if (!e.is_object()) {
                ctx.add(cpath, "expected an object");
                continue;
            }
            check_keys(e, cpath, {"shape", "min_radius", "max_radius", "frequency"}, ctx);
            synth::ClassSpec cs;
            take_enum(e, cpath, "shape", cs.shape, &shape_from_string, ctx);
            take_num(e, cpath, "min_radius", cs.min_radius, ctx);
            take_num(e, cpath, "max_radius", cs.max_radius, ctx);
            take_num(e, cpath, "frequency", cs.frequency, ctx);
            cfg.classes.push_back(cs);
        }
    }
}

void parse_noise(const json& obj, synth::NoiseConfig& cfg, ParseCtx& ctx) {
    const std::string path = "noise";
    check_keys(obj, path,
               {"max_iterations", "p_dilate", "per_class", "max_erode_iterations"}, ctx);
    take_int(obj, path, "max_iterations", cfg.max_iterations, ctx);
    take_num(obj, path, "p_dilate", cfg.p_dilate, ctx);
    take_bool(obj, path, "per_class", cfg.per_class, ctx);
    take_int(obj, path, "max_erode_iterations", cfg.max_erode_iterations, ctx);
}

// Key checking is the caller's job: the same section appears in run configs
// (no "seed") and in checkpoint headers (with "seed").
void parse_model(const json& obj, net::ModelSpec& spec, const std::string& path,
                 ParseCtx& ctx) {
    take_int(obj, path, "in_channels", spec.in_channels, ctx);
    take_int(obj, path, "num_classes", spec.num_classes, ctx);
    if (obj.contains("hidden")) {
        const json& arr = obj.at("hidden");
        if (!arr.is_array()) {
            ctx.add(path + ".hidden", "expected an array");
            return;
        }
        spec.hidden.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string lpath = path + ".hidden[" + std::to_string(i) + "]";
            const json& e = arr.at(i);
            if (!e.is_object()) {
                ctx.add(lpath, "expected an object");
                continue;
            }
            check_keys(e, lpath, {"kernel", "out_channels", "relu"}, ctx);
            net::LayerSpec ls;
            take_int(e, lpath, "kernel", ls.kernel, ctx);
            take_int(e, lpath, "out_channels", ls.out_channels, ctx);
            take_bool(e, lpath, "relu", ls.relu, ctx);
            spec.hidden.push_back(ls);
        }
    }
}

void parse_train(const json& obj, trainer::TrainConfig& cfg, ParseCtx& ctx) {
    const std::string path = "train";
    check_keys(obj, path,
               {"mode", "lambda", "rho", "r", "tau", "scales", "gate", "stop_grad_q",
                "granularity", "trigger", "min_points", "model", "optim", "seed"},
               ctx);
    take_enum(obj, path, "mode", cfg.mode, &mode_from_string, ctx);
    take_num(obj, path, "lambda", cfg.lambda, ctx);
    take_num(obj, path, "rho", cfg.rho, ctx);
    take_num(obj, path, "r", cfg.r, ctx);
    take_num(obj, path, "tau", cfg.tau, ctx);
    take_enum(obj, path, "gate", cfg.gate, &gate_from_string, ctx);
    take_bool(obj, path, "stop_grad_q", cfg.stop_grad_q, ctx);
    take_enum(obj, path, "granularity", cfg.granularity, &granularity_from_string, ctx);
    take_enum(obj, path, "trigger", cfg.trigger, &trigger_from_string, ctx);
    take_int(obj, path, "min_points", cfg.min_points, ctx);
    take_u64(obj, path, "seed", cfg.seed, ctx);
    if (obj.contains("scales")) {
        const json& arr = obj.at("scales");
        if (!arr.is_array()) {
            ctx.add(path + ".scales", "expected an array of numbers");
        } else {
            cfg.scales.scales.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr.at(i).is_number()) {
                    ctx.add(path + ".scales[" + std::to_string(i) + "]",
                            "expected a number");
                    continue;
                }
                cfg.scales.scales.push_back(arr.at(i).get<double>());
            }
        }
    }
    if (const json* model = get_object(obj, path, "model", ctx)) {
        check_keys(*model, path + ".model", {"in_channels", "num_classes", "hidden"}, ctx);
        parse_model(*model, cfg.model, path + ".model", ctx);
    }
    if (const json* optim = get_object(obj, path, "optim", ctx)) {
        const std::string opath = path + ".optim";
        check_keys(*optim, opath,
                   {"lr", "momentum", "weight_decay", "batch_size", "epochs",
                    "lr_final_factor"},
                   ctx);
        take_num(*optim, opath, "lr", cfg.optim.lr, ctx);
        take_num(*optim, opath, "momentum", cfg.optim.momentum, ctx);
        take_num(*optim, opath, "weight_decay", cfg.optim.weight_decay, ctx);
        take_int(*optim, opath, "batch_size", cfg.optim.batch_size, ctx);
        take_int(*optim, opath, "epochs", cfg.optim.epochs, ctx);
        take_num(*optim, opath, "lr_final_factor", cfg.optim.lr_final_factor, ctx);
    }
}

void validate_synth(const RunConfig& cfg, ParseCtx& ctx) {
    const synth::SynthConfig& s = cfg.synth;
    if (s.height < 1 || s.width < 1) ctx.add("synth", "height and width must be >= 1");
    if (s.num_classes < 2 || s.num_classes > 255)
        ctx.add("synth.num_classes", "must be in [2, 255]");
    if (s.num_channels < 1 || s.num_channels > 4)
        ctx.add("synth.num_channels", "must be in [1, 4]");
    if (!(s.feature_noise_sigma >= 0.0))
        ctx.add("synth.feature_noise_sigma", "must be >= 0");
    if (static_cast<int>(s.classes.size()) != s.num_classes - 1)
        ctx.add("synth.classes", "expected one entry per foreground class (" +
                                     std::to_string(s.num_classes - 1) + ")");
    for (std::size_t i = 0; i < s.classes.size(); ++i) {
        const synth::ClassSpec& c = s.classes[i];
        const std::string path = "synth.classes[" + std::to_string(i) + "]";
        if (!(c.min_radius > 0.0) || !(c.max_radius >= c.min_radius))
            ctx.add(path, "radii must satisfy 0 < min_radius <= max_radius");
        if (!(c.frequency >= 0.0 && c.frequency <= 1.0))
            ctx.add(path + ".frequency", "must be in [0, 1]");
    }
    if (cfg.noise.max_iterations < 0) ctx.add("noise.max_iterations", "must be >= 0");
    if (!(cfg.noise.p_dilate >= 0.0 && cfg.noise.p_dilate <= 1.0))
        ctx.add("noise.p_dilate", "must be in [0, 1]");
    if (cfg.noise.max_erode_iterations < -1)
        ctx.add("noise.max_erode_iterations", "must be >= -1 (-1 disables the clamp)");
    if (cfg.num_train < 1) ctx.add("splits.train", "must be >= 1");
    if (cfg.num_val < 1) ctx.add("splits.val", "must be >= 1");
    if (cfg.num_test < 1) ctx.add("splits.test", "must be >= 1");
}

}  // namespace

// ------------------------------------------------------------------- files

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw FileError("read failed: " + path);
    return std::move(ss).str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out.good()) throw FileError("write failed: " + path);
}

// -------------------------------------------------------------------- SEGD

void save_bundle(const synth::DatasetBundle& bundle, int num_classes,
                 const std::string& path, const std::string& meta_json) {
    if (bundle.train.size() == 0) throw InvalidArgument("save_bundle: empty train split");
    const Grid& first = bundle.train.images[0];
    const int h = first.height, w = first.width, c = first.channels;
    std::string out;
    out.reserve(64 + meta_json.size() +
                (bundle.train.size() + bundle.val.size() + bundle.test.size()) *
                    (static_cast<std::size_t>(h) * w * (4 * c + 2)));
    out.append(kSegdMagic, 4);
    put_u16(out, kSegdVersion);
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    put_u32(out, static_cast<std::uint32_t>(c));
    put_u32(out, static_cast<std::uint32_t>(num_classes));
    put_u32(out, static_cast<std::uint32_t>(bundle.train.size()));
    put_u32(out, static_cast<std::uint32_t>(bundle.val.size()));
    put_u32(out, static_cast<std::uint32_t>(bundle.test.size()));
    append_dataset(out, bundle.train, h, w, c, num_classes, "train");
    append_dataset(out, bundle.val, h, w, c, num_classes, "val");
    append_dataset(out, bundle.test, h, w, c, num_classes, "test");
    put_u32(out, static_cast<std::uint32_t>(meta_json.size()));
    out += meta_json;
    write_file(path, out);
}

LoadedBundle load_bundle(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    check_magic(r, kSegdMagic, "dataset");
    const std::uint16_t version = r.u16("dataset header");
    if (version != kSegdVersion)
        throw VersionError("dataset: version " + std::to_string(version) +
                           " not understood (expected " + std::to_string(kSegdVersion) +
                           ")");
    const std::uint32_t h = r.u32("dataset header");
    const std::uint32_t w = r.u32("dataset header");
    const std::uint32_t c = r.u32("dataset header");
    const std::uint32_t k = r.u32("dataset header");
    const std::uint32_t n_train = r.u32("dataset header");
    const std::uint32_t n_val = r.u32("dataset header");
    const std::uint32_t n_test = r.u32("dataset header");
    if (h == 0 || w == 0 || c == 0 || k < 2 || k > 255 || c > 256)
        throw FormatError("dataset: implausible header counts");

    const std::uint64_t per_example =
        static_cast<std::uint64_t>(h) * w * (4ull * c + 2ull);
    const std::uint64_t payload =
        per_example * (static_cast<std::uint64_t>(n_train) + n_val + n_test);
    const std::uint64_t header = r.pos;
    if (buf.size() < header + payload + 4)
        throw TruncationError("dataset truncated: expected at least " +
                              std::to_string(header + payload + 4) + " bytes, got " +
                              std::to_string(buf.size()));
    Reader len_reader{buf, static_cast<std::size_t>(header + payload)};
    const std::uint32_t json_len = len_reader.u32("dataset metadata");
    const std::uint64_t expected = header + payload + 4 + json_len;
    if (buf.size() < expected)
        throw TruncationError("dataset truncated: expected " + std::to_string(expected) +
                              " bytes, got " + std::to_string(buf.size()));
    if (buf.size() > expected)
        throw CountMismatchError("dataset: expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(buf.size()) +
                                 " (trailing data)");

    LoadedBundle out;
    out.num_classes = static_cast<int>(k);
    out.bundle.train = read_dataset(r, synth::Split::Train, n_train, h, w, c, k);
    out.bundle.val = read_dataset(r, synth::Split::Val, n_val, h, w, c, k);
    out.bundle.test = read_dataset(r, synth::Split::Test, n_test, h, w, c, k);
    r.u32("dataset metadata");  // length, already validated
    out.meta_json.assign(r.raw(json_len, "dataset metadata"), json_len);
    return out;
}

// -------------------------------------------------------------------- SEGC

void save_checkpoint(const net::Model& model, const std::string& path) {
    ordered_json spec;
    spec["in_channels"] = model.spec.in_channels;
    spec["num_classes"] = model.spec.num_classes;
    spec["hidden"] = ordered_json::array();
    for (const net::LayerSpec& ls : model.spec.hidden)
        spec["hidden"].push_back(ordered_json{
            {"kernel", ls.kernel}, {"out_channels", ls.out_channels}, {"relu", ls.relu}});
    spec["seed"] = model.spec.seed;
    const std::string header = spec.dump();

    std::string out;
    out.reserve(64 + header.size() + model.param_count() * 8);
    out.append(kSegcMagic, 4);
    put_u16(out, kSegcVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_u32(out, static_cast<std::uint32_t>(model.param_count()));
    for (const net::Layer& layer : model.layers) {
        for (double v : layer.w) put_f64(out, v);
        for (double v : layer.b) put_f64(out, v);
    }
    write_file(path, out);
}

net::Model load_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    check_magic(r, kSegcMagic, "checkpoint");
    const std::uint16_t version = r.u16("checkpoint header");
    if (version != kSegcVersion)
        throw VersionError("checkpoint: version " + std::to_string(version) +
                           " not understood (expected " + std::to_string(kSegcVersion) +
                           ")");
    const std::uint32_t header_len = r.u32("checkpoint header");
    const std::string header(r.raw(header_len, "checkpoint header"), header_len);

    net::ModelSpec spec;
    ParseCtx ctx;
    json parsed;
    try {
        parsed = json::parse(header);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint: invalid spec JSON: ") + e.what());
    }
    if (!parsed.is_object()) throw FormatError("checkpoint: spec must be an object");
    check_keys(parsed, "spec", {"in_channels", "num_classes", "hidden", "seed"}, ctx);
    parse_model(parsed, spec, "spec", ctx);
    take_u64(parsed, "spec", "seed", spec.seed, ctx);
    if (!ctx.problems.empty()) {
        std::string msg = "checkpoint: invalid model spec";
        for (const std::string& p : ctx.problems) msg += "; " + p;
        throw FormatError(msg);
    }

    net::Model model = net::init_model(spec);
    const std::uint32_t declared = r.u32("checkpoint parameters");
    if (declared != model.param_count())
        throw CountMismatchError("checkpoint: declares " + std::to_string(declared) +
                                 " parameters, spec implies " +
                                 std::to_string(model.param_count()));
    const std::uint64_t expected = r.pos + 8ull * declared;
    if (buf.size() < expected)
        throw TruncationError("checkpoint truncated: expected " +
                              std::to_string(expected) + " bytes, got " +
                              std::to_string(buf.size()));
    if (buf.size() > expected)
        throw CountMismatchError("checkpoint: expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(buf.size()) +
                                 " (trailing data)");
    for (net::Layer& layer : model.layers) {
        for (double& v : layer.w) v = r.f64("checkpoint parameters");
        for (double& v : layer.b) v = r.f64("checkpoint parameters");
    }
    return model;
}

// ------------------------------------------------------------------- enums

std::string to_string(trainer::Mode m) {
    switch (m) {
        case trainer::Mode::Baseline: return "baseline";
        case trainer::Mode::CorrectionOnly: return "correction_only";
        case trainer::Mode::ConsistencyOnly: return "consistency_only";
        case trainer::Mode::Adele: return "adele";
    }
    throw InvalidArgument("unknown mode value");
}

std::string to_string(trainer::Granularity g) {
    return g == trainer::Granularity::Epoch ? "epoch" : "iteration";
}

std::string to_string(trainer::TriggerMode t) {
    return t == trainer::TriggerMode::PerClass ? "per_class" : "global";
}

std::string to_string(consistency::GateMode g) {
    return g == consistency::GateMode::Pixel ? "pixel" : "image";
}

std::string to_string(synth::ShapeKind s) {
    switch (s) {
        case synth::ShapeKind::Ellipse: return "ellipse";
        case synth::ShapeKind::Rectangle: return "rectangle";
        case synth::ShapeKind::Ring: return "ring";
    }
    throw InvalidArgument("unknown shape value");
}

trainer::Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return trainer::Mode::Baseline;
    if (s == "correction_only") return trainer::Mode::CorrectionOnly;
    if (s == "consistency_only") return trainer::Mode::ConsistencyOnly;
    if (s == "adele") return trainer::Mode::Adele;
    throw InvalidArgument("unknown mode '" + s +
                          "' (expected baseline|correction_only|consistency_only|adele)");
}

trainer::Granularity granularity_from_string(const std::string& s) {
    if (s == "epoch") return trainer::Granularity::Epoch;
    if (s == "iteration") return trainer::Granularity::Iteration;
    throw InvalidArgument("unknown granularity '" + s + "' (expected epoch|iteration)");
}

trainer::TriggerMode trigger_from_string(const std::string& s) {
    if (s == "per_class") return trainer::TriggerMode::PerClass;
    if (s == "global") return trainer::TriggerMode::Global;
    throw InvalidArgument("unknown trigger mode '" + s + "' (expected per_class|global)");
}

consistency::GateMode gate_from_string(const std::string& s) {
    if (s == "pixel") return consistency::GateMode::Pixel;
    if (s == "image") return consistency::GateMode::Image;
    throw InvalidArgument("unknown gate mode '" + s + "' (expected pixel|image)");
}

synth::ShapeKind shape_from_string(const std::string& s) {
    if (s == "ellipse") return synth::ShapeKind::Ellipse;
    if (s == "rectangle") return synth::ShapeKind::Rectangle;
    if (s == "ring") return synth::ShapeKind::Ring;
    throw InvalidArgument("unknown shape '" + s + "' (expected ellipse|rectangle|ring)");
}

// ------------------------------------------------------------- run config

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");

    RunConfig cfg;
    ParseCtx ctx;
    check_keys(root, "config", {"synth", "noise", "splits", "train"}, ctx);
    if (const json* synth = get_object(root, "config", "synth", ctx))
        parse_synth(*synth, cfg.synth, ctx);
    if (const json* noise = get_object(root, "config", "noise", ctx))
        parse_noise(*noise, cfg.noise, ctx);
    if (const json* splits = get_object(root, "config", "splits", ctx)) {
        check_keys(*splits, "splits", {"train", "val", "test"}, ctx);
        take_int(*splits, "splits", "train", cfg.num_train, ctx);
        take_int(*splits, "splits", "val", cfg.num_val, ctx);
        take_int(*splits, "splits", "test", cfg.num_test, ctx);
    }
    if (const json* train = get_object(root, "config", "train", ctx))
        parse_train(*train, cfg.train, ctx);

    validate_synth(cfg, ctx);
    try {
        trainer::validate(cfg.train);
    } catch (const ConfigError& e) {
        for (const std::string& p : e.problems()) ctx.problems.push_back("train: " + p);
    }
    if (!ctx.problems.empty())
        throw ConfigError("invalid configuration (" + std::to_string(ctx.problems.size()) +
                              " problems)",
                          ctx.problems);
    return cfg;
}

RunConfig read_run_config(const std::string& path) {
    return parse_run_config(read_file(path));
}

std::string run_config_json(const RunConfig& cfg) {
    ordered_json j;
    ordered_json& s = j["synth"] = ordered_json::object();
    s["height"] = cfg.synth.height;
    s["width"] = cfg.synth.width;
    s["num_classes"] = cfg.synth.num_classes;
    s["num_channels"] = cfg.synth.num_channels;
    s["feature_noise_sigma"] = cfg.synth.feature_noise_sigma;
    s["seed"] = cfg.synth.seed;
    s["classes"] = ordered_json::array();
    for (const synth::ClassSpec& c : cfg.synth.classes)
        s["classes"].push_back(ordered_json{{"shape", to_string(c.shape)},
                                            {"min_radius", c.min_radius},
                                            {"max_radius", c.max_radius},
                                            {"frequency", c.frequency}});
    ordered_json& n = j["noise"] = ordered_json::object();
    n["max_iterations"] = cfg.noise.max_iterations;
    n["p_dilate"] = cfg.noise.p_dilate;
    n["per_class"] = cfg.noise.per_class;
    n["max_erode_iterations"] = cfg.noise.max_erode_iterations;
    ordered_json& sp = j["splits"] = ordered_json::object();
    sp["train"] = cfg.num_train;
    sp["val"] = cfg.num_val;
    sp["test"] = cfg.num_test;
    ordered_json& t = j["train"] = ordered_json::object();
    t["mode"] = to_string(cfg.train.mode);
    t["lambda"] = cfg.train.lambda;
    t["rho"] = cfg.train.rho;
    t["r"] = cfg.train.r;
    t["tau"] = cfg.train.tau;
    t["scales"] = cfg.train.scales.scales;
    t["gate"] = to_string(cfg.train.gate);
    t["stop_grad_q"] = cfg.train.stop_grad_q;
    t["granularity"] = to_string(cfg.train.granularity);
    t["trigger"] = to_string(cfg.train.trigger);
    t["min_points"] = cfg.train.min_points;
    ordered_json& m = t["model"] = ordered_json::object();
    m["in_channels"] = cfg.train.model.in_channels;
    m["num_classes"] = cfg.train.model.num_classes;
    m["hidden"] = ordered_json::array();
    for (const net::LayerSpec& ls : cfg.train.model.hidden)
        m["hidden"].push_back(ordered_json{{"kernel", ls.kernel},
                                           {"out_channels", ls.out_channels},
                                           {"relu", ls.relu}});
    ordered_json& o = t["optim"] = ordered_json::object();
    o["lr"] = cfg.train.optim.lr;
    o["momentum"] = cfg.train.optim.momentum;
    o["weight_decay"] = cfg.train.optim.weight_decay;
    o["batch_size"] = cfg.train.optim.batch_size;
    o["epochs"] = cfg.train.optim.epochs;
    o["lr_final_factor"] = cfg.train.optim.lr_final_factor;
    t["seed"] = cfg.train.seed;
    return j.dump(2) + "\n";
}

// -------------------------------------------------------------- metrics CSV

const char* const kMetricsHeader =
    "epoch,class,train_iou,iou_el,iou_m,val_miou,test_miou,label_quality,"
    "triggered,trigger_epoch,corrected_pixels,fit_a,fit_b,fit_c,fit_sse,"
    "consistency_loss";

std::string metrics_row_line(const trainer::MetricsRow& row) {
    std::string s = std::to_string(row.epoch);
    s.push_back(',');
    s += row.class_id ? std::to_string(*row.class_id) : std::string("all");
    append_cell(s, row.train_iou);
    append_cell(s, row.iou_el);
    append_cell(s, row.iou_m);
    append_cell(s, row.val_miou);
    append_cell(s, row.test_miou);
    append_cell(s, row.label_quality);
    s.push_back(',');
    if (row.triggered) s += *row.triggered ? "1" : "0";
    s.push_back(',');
    if (row.trigger_epoch) s += std::to_string(*row.trigger_epoch);
    s.push_back(',');
    if (row.corrected_pixels) s += std::to_string(*row.corrected_pixels);
    append_cell(s, row.fit_a);
    append_cell(s, row.fit_b);
    append_cell(s, row.fit_c);
    append_cell(s, row.fit_sse);
    append_cell(s, row.consistency_loss);
    s.push_back('\n');
    return s;
}

MetricsWriter::MetricsWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw FileError("cannot open " + path + " for writing");
    out_ << kMetricsHeader << '\n';
    out_.flush();
    if (!out_.good()) throw FileError("write failed: " + path);
}

void MetricsWriter::write_row(const trainer::MetricsRow& row) {
    out_ << metrics_row_line(row);
    out_.flush();
    if (!out_.good()) throw FileError("write failed: " + path_);
}

std::string metrics_csv_string(const std::vector<trainer::MetricsRow>& rows) {
    std::string s = kMetricsHeader;
    s.push_back('\n');
    for (const auto& row : rows) s += metrics_row_line(row);
    return s;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(const std::string& s, int lineno) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("metrics CSV line " + std::to_string(lineno) +
                          ": bad number '" + s + "'");
    }
}

long long parse_ll(const std::string& s, int lineno) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("metrics CSV line " + std::to_string(lineno) +
                          ": bad integer '" + s + "'");
    }
}

}  // namespace

std::vector<trainer::MetricsRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw FormatError("metrics CSV: missing or unexpected header");
    std::vector<trainer::MetricsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 16)
            throw FormatError("metrics CSV line " + std::to_string(lineno) + ": expected 16 fields, got " +
                              std::to_string(f.size()));
        trainer::MetricsRow row;
        row.epoch = static_cast<int>(parse_ll(f[0], lineno));
        if (f[1] != "all") row.class_id = static_cast<int>(parse_ll(f[1], lineno));
        auto opt_d = [&](const std::string& s) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            return parse_double(s, lineno);
        };
        row.train_iou = opt_d(f[2]);
        row.iou_el = opt_d(f[3]);
        row.iou_m = opt_d(f[4]);
        row.val_miou = opt_d(f[5]);
        row.test_miou = opt_d(f[6]);
        row.label_quality = opt_d(f[7]);
        if (!f[8].empty()) {
            if (f[8] != "0" && f[8] != "1")
                throw FormatError("metrics CSV line " + std::to_string(lineno) +
                                  ": bad flag '" + f[8] + "'");
            row.triggered = f[8] == "1";
        }
        if (!f[9].empty()) row.trigger_epoch = static_cast<int>(parse_ll(f[9], lineno));
        if (!f[10].empty())
            row.corrected_pixels = static_cast<std::uint64_t>(parse_ll(f[10], lineno));
        row.fit_a = opt_d(f[11]);
        row.fit_b = opt_d(f[12]);
        row.fit_c = opt_d(f[13]);
        row.fit_sse = opt_d(f[14]);
        row.consistency_loss = opt_d(f[15]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<trainer::MetricsRow> read_metrics_csv(const std::string& path) {
    return parse_metrics_csv(read_file(path));
}

metrics::ClassIoUSeries read_series_csv(const std::string& path,
                                        std::optional<int> class_id) {
    const std::string text = read_file(path);
    metrics::ClassIoUSeries series;

    std::istringstream probe(text);
    std::string first;
    std::getline(probe, first);
    if (first == kMetricsHeader) {
        if (!class_id)
            throw InvalidArgument(
                "series: a metrics CSV needs an explicit class id to pick a series");
        series.class_id = *class_id;
        for (const trainer::MetricsRow& row : parse_metrics_csv(text)) {
            if (!row.class_id || *row.class_id != *class_id || row.epoch < 1) continue;
            series.epochs.push_back(row.epoch);
            series.values.push_back(row.train_iou);
        }
    } else {
        series.class_id = class_id.value_or(0);
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_fields(line);
            if (f.size() != 2)
                throw FormatError("series CSV line " + std::to_string(lineno) +
                                  ": expected 'epoch,value'");
            if (lineno == 1 && !f[0].empty() &&
                f[0].find_first_not_of("0123456789-") != std::string::npos)
                continue;  // header line
            const int epoch = static_cast<int>(parse_ll(f[0], lineno));
            series.epochs.push_back(epoch);
            series.values.push_back(f[1].empty()
                                        ? std::optional<double>()
                                        : std::optional<double>(parse_double(f[1], lineno)));
        }
    }
    if (series.epochs.empty()) throw FormatError("series CSV: no data points");
    for (std::size_t i = 0; i < series.epochs.size(); ++i) {
        if (series.epochs[i] < 1 || (i > 0 && series.epochs[i] <= series.epochs[i - 1]))
            throw FormatError("series CSV: epochs must be strictly increasing and >= 1");
    }
    return series;
}

// ----------------------------------------------------------------- summary

std::string summary_json(const trainer::RunRecord& rec) {
    ordered_json j;
    j["mode"] = to_string(rec.config.mode);
    j["seed"] = rec.config.seed;
    j["epochs"] = rec.config.optim.epochs;
    j["best_val_epoch"] = rec.summary.best_val_epoch;
    j["best_val_test_miou"] = rec.summary.best_val_test_miou;
    j["last_epoch_val_miou"] = rec.summary.last_epoch_val_miou;
    j["last_epoch_test_miou"] = rec.summary.last_epoch_test_miou;
    j["max_test_miou"] = rec.summary.max_test_miou;
    j["wall_seconds"] = rec.wall_seconds;
    return j.dump(2) + "\n";
}

void write_summary(const trainer::RunRecord& rec, const std::string& path) {
    write_file(path, summary_json(rec));
}

// -------------------------------------------------------------------- SVG

namespace {

constexpr int kWidth = 720, kHeight = 440;
constexpr double kPlotX0 = 64, kPlotY0 = 40, kPlotX1 = 700, kPlotY1 = 396;

const char* const kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> pts;
    std::string color;
    const char* dash = nullptr;  // stroke-dasharray, nullptr = solid
};

struct SvgMarker {
    double x = 0.0;
    std::string color;
    std::string label;
};

std::string fmt2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<SvgSeries>& series,
                       const std::vector<SvgMarker>& markers, double ymin, double ymax) {
    double xmin = 0.0, xmax = 1.0;
    bool have_x = false;
    for (const SvgSeries& s : series)
        for (const auto& [x, y] : s.pts) {
            if (!std::isfinite(y)) continue;
            if (!have_x) {
                xmin = xmax = x;
                have_x = true;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
            }
        }
    for (const SvgMarker& m : markers) {
        if (!have_x) {
            xmin = xmax = m.x;
            have_x = true;
        } else {
            xmin = std::min(xmin, m.x);
            xmax = std::max(xmax, m.x);
        }
    }
    if (!have_x || xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }

    const auto px = [&](double x) {
        return kPlotX0 + (x - xmin) / (xmax - xmin) * (kPlotX1 - kPlotX0);
    };
    const auto py = [&](double y) {
        return kPlotY1 - (y - ymin) / (ymax - ymin) * (kPlotY1 - kPlotY0);
    };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
           "\" height=\"" + std::to_string(kHeight) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt2((kPlotX0 + kPlotX1) / 2) +
           "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";

    // axes, ticks and grid lines
    for (int i = 0; i <= 4; ++i) {
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        const double y = py(fy);
        svg += "<line x1=\"" + fmt2(kPlotX0) + "\" y1=\"" + fmt2(y) + "\" x2=\"" +
               fmt2(kPlotX1) + "\" y2=\"" + fmt2(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt2(kPlotX0 - 8) + "\" y=\"" + fmt2(y + 4) +
               "\" text-anchor=\"end\">" + fmt_g6(fy) + "</text>\n";
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double x = px(fx);
        svg += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(kPlotY0) + "\" x2=\"" +
               fmt2(x) + "\" y2=\"" + fmt2(kPlotY1) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(kPlotY1 + 18) +
               "\" text-anchor=\"middle\">" + fmt_g6(fx) + "</text>\n";
    }
    svg += "<rect x=\"" + fmt2(kPlotX0) + "\" y=\"" + fmt2(kPlotY0) + "\" width=\"" +
           fmt2(kPlotX1 - kPlotX0) + "\" height=\"" + fmt2(kPlotY1 - kPlotY0) +
           "\" fill=\"none\" stroke=\"#444444\"/>\n";
    svg += "<text x=\"" + fmt2((kPlotX0 + kPlotX1) / 2) + "\" y=\"" +
           fmt2(kHeight - 8.0) + "\" text-anchor=\"middle\">" + xlabel + "</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt2((kPlotY0 + kPlotY1) / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fmt2((kPlotY0 + kPlotY1) / 2) + ")\">" + ylabel + "</text>\n";

    for (const SvgMarker& m : markers) {
        const double x = px(m.x);
        svg += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(kPlotY0) + "\" x2=\"" +
               fmt2(x) + "\" y2=\"" + fmt2(kPlotY1) + "\" stroke=\"" + m.color +
               "\" stroke-width=\"1.5\" stroke-dasharray=\"3 3\"/>\n";
        svg += "<text x=\"" + fmt2(x + 3) + "\" y=\"" + fmt2(kPlotY0 + 12) +
               "\" fill=\"" + m.color + "\">" + m.label + "</text>\n";
    }

    for (const SvgSeries& s : series) {
        // split at undefined points so gaps stay gaps
        std::vector<std::vector<std::pair<double, double>>> segments(1);
        for (const auto& pt : s.pts) {
            if (std::isfinite(pt.second))
                segments.back().push_back(pt);
            else if (!segments.back().empty())
                segments.emplace_back();
        }
        for (const auto& seg : segments) {
            if (seg.empty()) continue;
            if (seg.size() == 1) {
                svg += "<circle cx=\"" + fmt2(px(seg[0].first)) + "\" cy=\"" +
                       fmt2(py(seg[0].second)) + "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
                continue;
            }
            svg += "<polyline fill=\"none\" stroke=\"" + s.color +
                   "\" stroke-width=\"1.5\"";
            if (s.dash) svg += " stroke-dasharray=\"" + std::string(s.dash) + "\"";
            svg += " points=\"";
            for (std::size_t i = 0; i < seg.size(); ++i) {
                if (i) svg.push_back(' ');
                svg += fmt2(px(seg[i].first)) + "," + fmt2(py(seg[i].second));
            }
            svg += "\"/>\n";
        }
    }

    double ly = kPlotY0 + 14;
    for (const SvgSeries& s : series) {
        const double lx = kPlotX1 - 150;
        svg += "<line x1=\"" + fmt2(lx) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" +
               fmt2(lx + 24) + "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"2\"";
        if (s.dash) svg += " stroke-dasharray=\"" + std::string(s.dash) + "\"";
        svg += "/>\n";
        svg += "<text x=\"" + fmt2(lx + 30) + "\" y=\"" + fmt2(ly) + "\">" + s.label +
               "</text>\n";
        ly += 16;
    }

    svg += "</svg>\n";
    return svg;
}

struct RowView {
    std::vector<int> classes;
    int max_epoch = 0;
};

RowView scan_rows(const std::vector<trainer::MetricsRow>& rows) {
    RowView v;
    for (const auto& row : rows) {
        v.max_epoch = std::max(v.max_epoch, row.epoch);
        if (row.class_id &&
            std::find(v.classes.begin(), v.classes.end(), *row.class_id) == v.classes.end())
            v.classes.push_back(*row.class_id);
    }
    std::sort(v.classes.begin(), v.classes.end());
    return v;
}

std::vector<std::pair<double, double>> class_points(
    const std::vector<trainer::MetricsRow>& rows, int class_id,
    std::optional<double> trainer::MetricsRow::* field) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : rows) {
        if (!row.class_id || *row.class_id != class_id) continue;
        const auto& v = row.*field;
        pts.emplace_back(row.epoch,
                         v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    return pts;
}

std::vector<std::pair<double, double>> aggregate_points(
    const std::vector<trainer::MetricsRow>& rows,
    std::optional<double> trainer::MetricsRow::* field) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : rows) {
        if (row.class_id) continue;
        const auto& v = row.*field;
        pts.emplace_back(row.epoch,
                         v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    return pts;
}

}  // namespace

void write_report(const std::vector<trainer::MetricsRow>& rows, const std::string& dir) {
    if (rows.empty()) throw InvalidArgument("write_report: no metrics rows");
    std::filesystem::create_directories(dir);
    const RowView view = scan_rows(rows);

    std::vector<SvgSeries> diag;
    for (int c : view.classes) {
        const std::string color = kPalette[c % 8];
        diag.push_back({"IoU_el class " + std::to_string(c),
                        class_points(rows, c, &trainer::MetricsRow::iou_el), color,
                        nullptr});
        diag.push_back({"IoU_m class " + std::to_string(c),
                        class_points(rows, c, &trainer::MetricsRow::iou_m), color, "6 3"});
    }
    write_file(dir + "/diagnostics.svg",
               line_chart("Early learning and memorization", "epoch", "IoU", diag, {},
                          0.0, 1.0));

    std::vector<SvgSeries> fits;
    std::vector<SvgMarker> markers;
    for (int c : view.classes) {
        const std::string color = kPalette[c % 8];
        fits.push_back({"train IoU class " + std::to_string(c),
                        class_points(rows, c, &trainer::MetricsRow::train_iou), color,
                        nullptr});
        // final fitted curve and trigger epoch, from the last row carrying them
        std::optional<earlycurve::FitResult> fit;
        std::optional<int> trigger_epoch;
        for (const auto& row : rows) {
            if (!row.class_id || *row.class_id != c) continue;
            if (row.fit_a && row.fit_b && row.fit_c) {
                earlycurve::FitResult f;
                f.a = *row.fit_a;
                f.b = *row.fit_b;
                f.c = *row.fit_c;
                fit = f;
            }
            if (row.trigger_epoch) trigger_epoch = row.trigger_epoch;
        }
        if (fit) {
            std::vector<std::pair<double, double>> curve;
            for (int t = 1; t <= view.max_epoch; ++t)
                curve.emplace_back(t, earlycurve::curve_value(*fit, t));
            fits.push_back(
                {"fit class " + std::to_string(c), std::move(curve), color, "6 3"});
        }
        if (trigger_epoch)
            markers.push_back({static_cast<double>(*trigger_epoch), color,
                               "t" + std::to_string(c) + "=" +
                                   std::to_string(*trigger_epoch)});
    }
    write_file(dir + "/fits.svg",
               line_chart("Training IoU and fitted curves", "epoch", "IoU", fits, markers,
                          0.0, 1.0));

    std::vector<SvgSeries> quality;
    quality.push_back({"label quality",
                       aggregate_points(rows, &trainer::MetricsRow::label_quality),
                       kPalette[0], nullptr});
    quality.push_back({"val mIoU", aggregate_points(rows, &trainer::MetricsRow::val_miou),
                       kPalette[2], "6 3"});
    quality.push_back({"test mIoU",
                       aggregate_points(rows, &trainer::MetricsRow::test_miou),
                       kPalette[1], "2 3"});
    write_file(dir + "/quality.svg",
               line_chart("Annotation quality and mIoU", "epoch", "mIoU", quality, {},
                          0.0, 1.0));
}

void write_report(const trainer::RunRecord& rec, const std::string& dir) {
    write_report(rec.rows, dir);
}

// -------------------------------------------------------------------- sweep

std::string sweep_csv_string(const std::vector<trainer::SweepPoint>& points) {
    std::string s = "max_iterations,annotation_miou,baseline_test_miou,adele_test_miou\n";
    for (const auto& pt : points) {
        s += std::to_string(pt.max_iterations);
        s.push_back(',');
        s += fmt_g6(pt.annotation_miou);
        s.push_back(',');
        s += fmt_g6(pt.baseline.summary.last_epoch_test_miou);
        s.push_back(',');
        s += fmt_g6(pt.adele.summary.last_epoch_test_miou);
        s.push_back('\n');
    }
    return s;
}

void write_sweep(const std::vector<trainer::SweepPoint>& points, const std::string& dir) {
    if (points.empty()) throw InvalidArgument("write_sweep: no sweep points");
    std::filesystem::create_directories(dir);
    write_file(dir + "/sweep.csv", sweep_csv_string(points));

    std::vector<SvgSeries> series(3);
    series[0] = {"annotation quality", {}, kPalette[7], "6 3"};
    series[1] = {"baseline test mIoU", {}, kPalette[0], nullptr};
    series[2] = {"adele test mIoU", {}, kPalette[1], nullptr};
    for (const auto& pt : points) {
        series[0].pts.emplace_back(pt.max_iterations, pt.annotation_miou);
        series[1].pts.emplace_back(pt.max_iterations,
                                   pt.baseline.summary.last_epoch_test_miou);
        series[2].pts.emplace_back(pt.max_iterations,
                                   pt.adele.summary.last_epoch_test_miou);
    }
    write_file(dir + "/sweep.svg",
               line_chart("Noise sweep", "corruption level (max iterations)", "mIoU",
                          series, {}, 0.0, 1.0));
}

}  // namespace segnoise::io

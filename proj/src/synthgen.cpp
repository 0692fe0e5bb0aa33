#include "segnoise/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segnoise/errors.hpp"

namespace segnoise::synth {

namespace {

// Purpose tags for seed derivation; the split id is folded in so train/val/
// test examples never share streams.
constexpr std::uint64_t kTagShapes = 0x100;
constexpr std::uint64_t kTagNoise = 0x200;

constexpr int kPlacementTries = 64;

void check_binary(const LabelMask& m, const char* op) {
    for (std::uint8_t v : m.ids)
        if (v > 1) throw InvalidArgument(std::string(op) + ": mask is not binary");
}

LabelMask morph_once(const LabelMask& in, bool is_dilate) {
    LabelMask out(in.height, in.width);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            // Zero-padded 3x3 window scan; dilation asks "any 1", erosion
            // asks "all 1" (padding counts as 0, so border pixels erode).
            bool any = false, all = true;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    const bool v = yy >= 0 && yy < in.height && xx >= 0 &&
                                   xx < in.width && in.at(yy, xx) != 0;
                    any = any || v;
                    all = all && v;
                }
            }
            out.at(y, x) = (is_dilate ? any : all) ? 1 : 0;
        }
    }
    return out;
}

LabelMask morph(const LabelMask& mask, int iterations, bool is_dilate, const char* op) {
    if (iterations < 0) throw InvalidArgument(std::string(op) + ": negative iterations");
    check_binary(mask, op);
    LabelMask cur = mask;
    for (int i = 0; i < iterations; ++i) cur = morph_once(cur, is_dilate);
    return cur;
}

LabelMask class_mask(const LabelMask& m, int c) {
    LabelMask out(m.height, m.width);
    for (std::size_t i = 0; i < m.size(); ++i) out.ids[i] = m.ids[i] == c ? 1 : 0;
    return out;
}

struct Placement {
    double cy, cx, ry, rx;
};

bool rasterize(LabelMask& mask, const Placement& p, ShapeKind kind, std::uint8_t id) {
    bool painted = false;
    const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.ry)));
    const int y1 = std::min(mask.height - 1, static_cast<int>(std::ceil(p.cy + p.ry)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.rx)));
    const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(p.cx + p.rx)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double ny = (y - p.cy) / p.ry;
            const double nx = (x - p.cx) / p.rx;
            bool inside = false;
            switch (kind) {
                case ShapeKind::Ellipse:
                    inside = ny * ny + nx * nx <= 1.0;
                    break;
                case ShapeKind::Rectangle:
                    inside = std::abs(ny) <= 1.0 && std::abs(nx) <= 1.0;
                    break;
                case ShapeKind::Ring: {
                    // Annulus with inner radius at 55% of the outer one.
                    const double d = ny * ny + nx * nx;
                    inside = d <= 1.0 && d >= 0.55 * 0.55;
                    break;
                }
            }
            if (inside) {
                mask.at(y, x) = id;
                painted = true;
            }
        }
    }
    return painted;
}

// Foreground base intensity for class c in [1, K-1]: spread over [0.3, 1.0]
// so classes are separable from the 0-level background and from each other
// well above the feature-noise sigma.
double base_intensity(int c, int num_classes) {
    if (num_classes == 2) return 1.0;
    return 0.3 + 0.7 * (c - 1) / static_cast<double>(num_classes - 2);
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void validate(const SynthConfig& cfg) {
    if (cfg.num_examples < 0) throw InvalidArgument("synth: num_examples must be >= 0");
    if (cfg.height <= 0 || cfg.width <= 0) throw InvalidArgument("synth: empty image size");
    if (cfg.num_classes < 2) throw InvalidArgument("synth: num_classes must be >= 2");
    if (cfg.num_classes > 255) throw InvalidArgument("synth: num_classes exceeds mask range");
    if (cfg.num_channels < 1 || cfg.num_channels > 4)
        throw InvalidArgument("synth: num_channels must be in [1, 4]");
    if (static_cast<int>(cfg.classes.size()) != cfg.num_classes - 1)
        throw InvalidArgument("synth: classes list must have num_classes-1 entries, got " +
                              std::to_string(cfg.classes.size()));
    if (!(cfg.feature_noise_sigma >= 0.0))
        throw InvalidArgument("synth: feature_noise_sigma must be >= 0");
    const double bound = 0.5 * std::min(cfg.height, cfg.width);
    for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
        const ClassSpec& cs = cfg.classes[i];
        if (!(cs.min_radius >= 1.0) || !(cs.max_radius >= cs.min_radius))
            throw InvalidArgument("synth: class " + std::to_string(i + 1) +
                                  " has an invalid radius range");
        // Strictly inside the image with a 1px margin and a nonempty
        // placement interval for the shape centre.
        if (cs.max_radius > bound - 2.0)
            throw InvalidArgument("synth: class " + std::to_string(i + 1) +
                                  " radius range exceeds image bounds");
        if (!(cs.frequency >= 0.0 && cs.frequency <= 1.0))
            throw InvalidArgument("synth: class " + std::to_string(i + 1) +
                                  " frequency outside [0,1]");
    }
}

}  // namespace

LabelMask dilate(const LabelMask& mask, int iterations) {
    return morph(mask, iterations, true, "dilate");
}

LabelMask erode(const LabelMask& mask, int iterations) {
    return morph(mask, iterations, false, "erode");
}

LabelMask corrupt_mask(const LabelMask& clean, int num_classes,
                       const NoiseConfig& cfg, Rng& rng) {
    if (num_classes < 2) throw InvalidArgument("corrupt_mask: num_classes must be >= 2");
    if (!(cfg.p_dilate >= 0.0 && cfg.p_dilate <= 1.0))
        throw InvalidArgument("corrupt_mask: p_dilate outside [0,1]");
    if (cfg.max_iterations < 0)
        throw InvalidArgument("corrupt_mask: negative max_iterations");

    // Shared draw when per_class is false.
    bool shared_dilate = false;
    int shared_iters = 0;
    if (!cfg.per_class) {
        shared_dilate = rng.bernoulli(cfg.p_dilate);
        shared_iters = static_cast<int>(rng.uniform_int(0, cfg.max_iterations));
    }

    // Rebuild from background up, compositing corrupted class masks in
    // ascending class id order (later ids overwrite at overlaps).
    LabelMask out(clean.height, clean.width, 0);
    for (int c = 1; c < num_classes; ++c) {
        bool do_dilate = shared_dilate;
        int iters = shared_iters;
        if (cfg.per_class) {
            // Draw for every class, present or not, so the stream layout is
            // independent of mask content.
            do_dilate = rng.bernoulli(cfg.p_dilate);
            iters = static_cast<int>(rng.uniform_int(0, cfg.max_iterations));
        }
        LabelMask cm = class_mask(clean, c);
        // The clamp acts on the applied depth only; the draw itself is
        // untouched so the random stream layout does not depend on the clamp.
        int erode_iters = iters;
        if (cfg.max_erode_iterations >= 0)
            erode_iters = std::min(iters, cfg.max_erode_iterations);
        cm = do_dilate ? dilate(cm, iters) : erode(cm, erode_iters);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (cm.ids[i]) out.ids[i] = static_cast<std::uint8_t>(c);
    }
    return out;
}

Dataset generate_dataset(const SynthConfig& cfg, const NoiseConfig& noise, Split split) {
    validate(cfg);
    const auto split_id = static_cast<std::uint64_t>(split);
    Dataset ds;
    ds.split = split;
    ds.images.reserve(cfg.num_examples);
    ds.clean_masks.reserve(cfg.num_examples);
    ds.noisy_masks.reserve(cfg.num_examples);

    for (int i = 0; i < cfg.num_examples; ++i) {
        Rng rng(derive_seed(cfg.seed, kTagShapes + split_id, static_cast<std::uint64_t>(i)));

        // 1) presence draws, one per foreground class (fixed draw layout)
        std::vector<bool> present(cfg.num_classes, false);
        for (int c = 1; c < cfg.num_classes; ++c)
            present[c] = rng.bernoulli(cfg.classes[c - 1].frequency);

        // 2) shape placement: non-overlapping via bounding-radius checks
        LabelMask clean(cfg.height, cfg.width, 0);
        std::vector<Placement> placed;
        for (int c = 1; c < cfg.num_classes; ++c) {
            if (!present[c]) continue;
            const ClassSpec& cs = cfg.classes[c - 1];
            const double ry = rng.uniform(cs.min_radius, cs.max_radius + 1e-12);
            const double rx = rng.uniform(cs.min_radius, cs.max_radius + 1e-12);
            const double bound = std::max(ry, rx);
            bool ok = false;
            for (int attempt = 0; attempt < kPlacementTries && !ok; ++attempt) {
                // Named draws: a fixed draw order is part of the determinism
                // contract, and function-argument evaluation order is not.
                const double cy = rng.uniform(bound + 1.0, cfg.height - bound - 1.0);
                const double cx = rng.uniform(bound + 1.0, cfg.width - bound - 1.0);
                Placement p{cy, cx, ry, rx};
                ok = true;
                for (const Placement& other : placed) {
                    const double dy = p.cy - other.cy, dx = p.cx - other.cx;
                    const double min_d = bound + std::max(other.ry, other.rx) + 1.0;
                    if (dy * dy + dx * dx < min_d * min_d) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    rasterize(clean, p, cs.shape, static_cast<std::uint8_t>(c));
                    placed.push_back(p);
                }
            }
            if (!ok)
                throw Error("synth: could not place a class-" + std::to_string(c) +
                            " shape after " + std::to_string(kPlacementTries) +
                            " attempts (example " + std::to_string(i) + ")");
        }

        // 3) per-example tag values for the identity channels, one
        //    independent draw per extra channel
        std::vector<double> tags;
        for (int ch = 1; ch < cfg.num_channels; ++ch)
            tags.push_back(quantize_f32(rng.uniform(-1.0, 1.0)));

        // 4) image: intensity channel with Gaussian feature noise, optional
        //    constant tag channels carrying example identity
        Grid img(cfg.height, cfg.width, cfg.num_channels);
        for (int y = 0; y < cfg.height; ++y) {
            for (int x = 0; x < cfg.width; ++x) {
                const int c = clean.at(y, x);
                const double base = c == 0 ? 0.0 : base_intensity(c, cfg.num_classes);
                img.at(y, x, 0) =
                    quantize_f32(base + cfg.feature_noise_sigma * rng.normal());
                for (int ch = 1; ch < cfg.num_channels; ++ch)
                    img.at(y, x, ch) = static_cast<float>(tags[ch - 1]);
            }
        }

        // 5) corruption (train split only), with its own per-example stream
        LabelMask noisy = clean;
        if (split == Split::Train && noise.max_iterations > 0) {
            Rng nrng(derive_seed(cfg.seed, kTagNoise + split_id, static_cast<std::uint64_t>(i)));
            noisy = corrupt_mask(clean, cfg.num_classes, noise, nrng);
        }

        ds.images.push_back(std::move(img));
        ds.clean_masks.push_back(std::move(clean));
        ds.noisy_masks.push_back(std::move(noisy));
    }
    return ds;
}

DatasetBundle generate_bundle(const SynthConfig& base, const NoiseConfig& noise,
                              int num_train, int num_val, int num_test) {
    SynthConfig cfg = base;
    DatasetBundle b;
    cfg.num_examples = num_train;
    b.train = generate_dataset(cfg, noise, Split::Train);
    cfg.num_examples = num_val;
    b.val = generate_dataset(cfg, noise, Split::Val);
    cfg.num_examples = num_test;
    b.test = generate_dataset(cfg, noise, Split::Test);
    return b;
}

}  // namespace segnoise::synth

#pragma once

#include <cstdint>
#include <vector>

#include "segnoise/grid.hpp"
#include "segnoise/rng.hpp"

namespace segnoise::synth {

// Dilation/erosion corruption of clean annotations. The structuring element
// is fixed: the full 3x3 square, iterated `iterations` times, with the
// image border treated as zero-padded.
struct NoiseConfig {
    int max_iterations = 0;        // per-example degree drawn uniformly in [0, max]
    double p_dilate = 0.5;         // probability of dilation (vs erosion)
    bool per_class = true;         // independent draw per foreground class
    int max_erode_iterations = -1; // clamp applied erosion depth; -1: no clamp
};

enum class ShapeKind { Ellipse, Rectangle, Ring };

// One foreground class: its shape family, characteristic half-size range in
// pixels, and the probability that an example contains it. Deliberately
// unequal frequencies/sizes across classes make the per-class learning
// speeds differ, which is the point of the per-class trigger.
struct ClassSpec {
    ShapeKind shape = ShapeKind::Ellipse;
    double min_radius = 4.0;
    double max_radius = 8.0;
    double frequency = 1.0;
};

struct SynthConfig {
    int num_examples = 0;
    int height = 0;
    int width = 0;
    int num_classes = 2;      // K, including background class 0
    int num_channels = 2;     // channel 0: intensity; channels 1..3 (optional): example tags
    std::vector<ClassSpec> classes;  // size K-1, for classes 1..K-1
    double feature_noise_sigma = 0.08;
    std::uint64_t seed = 1;
};

enum class Split { Train, Val, Test };

struct Dataset {
    Split split = Split::Train;
    std::vector<Grid> images;
    std::vector<LabelMask> clean_masks;
    std::vector<LabelMask> noisy_masks;  // == clean for val/test splits

    std::size_t size() const { return images.size(); }
};

// Iterated Minkowski dilation with the 3x3 square: a pixel is 1 iff any
// pixel of its 8-neighbourhood-or-self was 1 in the previous iteration.
// Mask values must be in {0,1}.
LabelMask dilate(const LabelMask& mask, int iterations);

// Iterated erosion: a pixel survives iff its whole 3x3 neighbourhood
// (zero-padded at the border) was 1.
LabelMask erode(const LabelMask& mask, int iterations);

// Apply dilation/erosion noise to a clean multi-class mask. per_class=true
// draws (type, iterations) independently for each foreground class;
// per_class=false draws once and applies the same degree to every class.
// Corrupted class masks are composited over background in ascending class
// id order, so later classes overwrite earlier dilations at overlaps.
LabelMask corrupt_mask(const LabelMask& clean, int num_classes,
                       const NoiseConfig& cfg, Rng& rng);

// Generate one split. Only the train split's annotations are corrupted;
// val/test noisy masks equal the clean masks. Deterministic given
// (cfg.seed, split). Image values are quantized through float32 so the
// on-disk format round-trips bit-exactly.
Dataset generate_dataset(const SynthConfig& cfg, const NoiseConfig& noise, Split split);

// All three splits of a run, generated with split-separated substreams of
// the same master seed.
struct DatasetBundle {
    Dataset train;
    Dataset val;
    Dataset test;
};

DatasetBundle generate_bundle(const SynthConfig& base, const NoiseConfig& noise,
                              int num_train, int num_val, int num_test);

}  // namespace segnoise::synth

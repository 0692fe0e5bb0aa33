#pragma once

#include <cstdint>
#include <vector>

namespace segnoise {

// Dense H x W x C tensor of doubles, row-major with the channel index
// innermost. Used for images, logits, and probability maps.
struct Grid {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;

    Grid() = default;
    Grid(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t index(int y, int x, int ch) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + ch;
    }
    double& at(int y, int x, int ch) { return data[index(y, x, ch)]; }
    double at(int y, int x, int ch) const { return data[index(y, x, ch)]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Grid& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    bool operator==(const Grid& o) const = default;
};

// A Grid whose channel axis indexes the K semantic classes; every value is
// in [0,1] and each pixel's channel sum is 1 (within 1e-5). Constructed
// through make_probmap/renormalize so the simplex property is checked at
// the boundary instead of on every access.
struct ProbMap {
    Grid grid;

    int height() const { return grid.height; }
    int width() const { return grid.width; }
    int classes() const { return grid.channels; }
    double at(int y, int x, int k) const { return grid.at(y, x, k); }

    bool operator==(const ProbMap& o) const = default;
};

// H x W map of class ids in [0, K-1].
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> ids;

    LabelMask() = default;
    LabelMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), ids(static_cast<std::size_t>(h) * w, fill) {}

    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * width + x;
    }
    std::uint8_t& at(int y, int x) { return ids[index(y, x)]; }
    std::uint8_t at(int y, int x) const { return ids[index(y, x)]; }

    std::size_t size() const { return ids.size(); }
    bool same_shape(const LabelMask& o) const {
        return height == o.height && width == o.width;
    }

    bool operator==(const LabelMask& o) const = default;
};

enum class ResampleMode { Bilinear, Nearest };

// Validates the ProbMap invariants (values in [0,1], channel sums within
// 1e-5 of 1) and wraps the grid. Throws InvalidArgument on violation.
ProbMap make_probmap(Grid g);

// Element-wise arithmetic mean of >= 1 same-shaped probability maps.
ProbMap average_probmaps(const std::vector<ProbMap>& maps);

// Per-pixel argmax; ties break toward the smaller class index.
LabelMask argmax_labels(const ProbMap& p);

// Rescale by a positive factor. Output dims are round-half-up(scale*dim),
// floored at 1. Source coordinates follow the pixel-center convention
//   src = (dst + 0.5) / scale - 0.5
// with edge-clamped sampling. scale == 1.0 returns the input unchanged.
Grid resample(const Grid& g, double scale, ResampleMode mode);

// Rescale to an exact target size; per-axis ratio replaces the nominal
// scale in the source-coordinate formula. Used to bring scaled model
// outputs back to a common size.
Grid resample_to(const Grid& g, int out_height, int out_width, ResampleMode mode);

// Adjoint of bilinear resample_to: scatters a gradient at the output size
// back to the input size using the same taps and weights as the forward
// pass. Needed to backpropagate through the rescale-to-common-size step.
Grid resample_to_adjoint(const Grid& grad_out, int in_height, int in_width);

// Divide each pixel by its channel sum, restoring the exact simplex
// property after lossy operations like bilinear resampling. Requires all
// values >= 0 and a positive sum at every pixel.
ProbMap renormalize(const Grid& g);

// Per-pixel softmax over channels.
ProbMap softmax(const Grid& logits);

}  // namespace segnoise

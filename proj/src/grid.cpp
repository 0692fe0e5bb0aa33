#include "segnoise/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segnoise/errors.hpp"

namespace segnoise {

namespace {

constexpr double kSimplexTol = 1e-5;

// round-half-up(scale * dim), floored at 1.
int scaled_dim(int dim, double scale) {
    int out = static_cast<int>(std::floor(scale * dim + 0.5));
    return std::max(out, 1);
}

// Edge-clamped bilinear read of one channel: neighbour indices clamp into
// range, blend weights stay as computed. Out-of-range taps therefore
// collapse onto the edge texel, giving constant extrapolation.
double sample_bilinear(const Grid& g, double sy, double sx, int ch) {
    const double fy = std::floor(sy);
    const double fx = std::floor(sx);
    const double wy = sy - fy;
    const double wx = sx - fx;
    const int y0 = std::clamp(static_cast<int>(fy), 0, g.height - 1);
    const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, g.height - 1);
    const int x0 = std::clamp(static_cast<int>(fx), 0, g.width - 1);
    const int x1 = std::clamp(static_cast<int>(fx) + 1, 0, g.width - 1);
    const double top = g.at(y0, x0, ch) * (1.0 - wx) + g.at(y0, x1, ch) * wx;
    const double bot = g.at(y1, x0, ch) * (1.0 - wx) + g.at(y1, x1, ch) * wx;
    return top * (1.0 - wy) + bot * wy;
}

double sample_nearest(const Grid& g, double sy, double sx, int ch) {
    const int y = std::clamp(static_cast<int>(std::floor(sy + 0.5)), 0, g.height - 1);
    const int x = std::clamp(static_cast<int>(std::floor(sx + 0.5)), 0, g.width - 1);
    return g.at(y, x, ch);
}

// Shared resampling core: sy = (dy + 0.5) * ratio_y - 0.5 and likewise for
// x. resample() passes the nominal ratio 1/scale on both axes; resample_to()
// passes the per-axis in/out ratios.
Grid resample_core(const Grid& g, int out_h, int out_w, double ratio_y,
                   double ratio_x, ResampleMode mode) {
    Grid out(out_h, out_w, g.channels);
    for (int dy = 0; dy < out_h; ++dy) {
        const double sy = (dy + 0.5) * ratio_y - 0.5;
        for (int dx = 0; dx < out_w; ++dx) {
            const double sx = (dx + 0.5) * ratio_x - 0.5;
            for (int ch = 0; ch < g.channels; ++ch) {
                out.at(dy, dx, ch) = mode == ResampleMode::Bilinear
                                         ? sample_bilinear(g, sy, sx, ch)
                                         : sample_nearest(g, sy, sx, ch);
            }
        }
    }
    return out;
}

}  // namespace

ProbMap make_probmap(Grid g) {
    if (g.height <= 0 || g.width <= 0 || g.channels <= 0)
        throw InvalidArgument("probmap: empty grid");
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            double sum = 0.0;
            for (int k = 0; k < g.channels; ++k) {
                const double v = g.at(y, x, k);
                if (!(v >= 0.0 && v <= 1.0))
                    throw InvalidArgument("probmap: value " + std::to_string(v) +
                                          " outside [0,1] at pixel (" + std::to_string(y) +
                                          "," + std::to_string(x) + ") class " +
                                          std::to_string(k));
                sum += v;
            }
            if (std::abs(sum - 1.0) > kSimplexTol)
                throw InvalidArgument("probmap: channel sum " + std::to_string(sum) +
                                      " at pixel (" + std::to_string(y) + "," +
                                      std::to_string(x) + ") not within 1e-5 of 1");
        }
    }
    return ProbMap{std::move(g)};
}

ProbMap average_probmaps(const std::vector<ProbMap>& maps) {
    if (maps.empty()) throw InvalidArgument("average_probmaps: empty input");
    const Grid& first = maps[0].grid;
    for (std::size_t i = 1; i < maps.size(); ++i) {
        if (!maps[i].grid.same_shape(first))
            throw InvalidArgument("average_probmaps: map " + std::to_string(i) +
                                  " shape mismatch");
    }
    Grid acc(first.height, first.width, first.channels);
    for (const ProbMap& m : maps)
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += m.grid.data[i];
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (double& v : acc.data) v *= inv;
    // Exact mean of simplex points stays on the simplex up to rounding; pass
    // through the checked constructor so downstream code can rely on it.
    return make_probmap(std::move(acc));
}

LabelMask argmax_labels(const ProbMap& p) {
    LabelMask out(p.height(), p.width());
    for (int y = 0; y < p.height(); ++y) {
        for (int x = 0; x < p.width(); ++x) {
            int best = 0;
            double best_v = p.at(y, x, 0);
            for (int k = 1; k < p.classes(); ++k) {
                const double v = p.at(y, x, k);
                if (v > best_v) {  // strict: ties keep the smaller index
                    best_v = v;
                    best = k;
                }
            }
            out.at(y, x) = static_cast<std::uint8_t>(best);
        }
    }
    return out;
}

Grid resample(const Grid& g, double scale, ResampleMode mode) {
    if (!(scale > 0.0)) throw InvalidArgument("resample: scale must be positive");
    if (g.height <= 0 || g.width <= 0) throw InvalidArgument("resample: empty grid");
    if (scale == 1.0) return g;  // bit-identical pass-through
    const double ratio = 1.0 / scale;
    return resample_core(g, scaled_dim(g.height, scale), scaled_dim(g.width, scale),
                         ratio, ratio, mode);
}

Grid resample_to(const Grid& g, int out_height, int out_width, ResampleMode mode) {
    if (out_height <= 0 || out_width <= 0)
        throw InvalidArgument("resample_to: target size must be positive");
    if (g.height <= 0 || g.width <= 0) throw InvalidArgument("resample_to: empty grid");
    if (out_height == g.height && out_width == g.width) return g;
    return resample_core(g, out_height, out_width,
                         static_cast<double>(g.height) / out_height,
                         static_cast<double>(g.width) / out_width, mode);
}

Grid resample_to_adjoint(const Grid& grad_out, int in_height, int in_width) {
    if (in_height <= 0 || in_width <= 0)
        throw InvalidArgument("resample_to_adjoint: source size must be positive");
    if (in_height == grad_out.height && in_width == grad_out.width) return grad_out;
    Grid grad_in(in_height, in_width, grad_out.channels);
    const double ry = static_cast<double>(in_height) / grad_out.height;
    const double rx = static_cast<double>(in_width) / grad_out.width;
    for (int dy = 0; dy < grad_out.height; ++dy) {
        const double sy = (dy + 0.5) * ry - 0.5;
        const double fy = std::floor(sy);
        const double wy = sy - fy;
        const int y0 = std::clamp(static_cast<int>(fy), 0, in_height - 1);
        const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, in_height - 1);
        for (int dx = 0; dx < grad_out.width; ++dx) {
            const double sx = (dx + 0.5) * rx - 0.5;
            const double fx = std::floor(sx);
            const double wx = sx - fx;
            const int x0 = std::clamp(static_cast<int>(fx), 0, in_width - 1);
            const int x1 = std::clamp(static_cast<int>(fx) + 1, 0, in_width - 1);
            for (int ch = 0; ch < grad_out.channels; ++ch) {
                const double go = grad_out.at(dy, dx, ch);
                grad_in.at(y0, x0, ch) += go * (1.0 - wy) * (1.0 - wx);
                grad_in.at(y0, x1, ch) += go * (1.0 - wy) * wx;
                grad_in.at(y1, x0, ch) += go * wy * (1.0 - wx);
                grad_in.at(y1, x1, ch) += go * wy * wx;
            }
        }
    }
    return grad_in;
}

ProbMap renormalize(const Grid& g) {
    Grid out = g;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            double sum = 0.0;
            for (int k = 0; k < g.channels; ++k) {
                const double v = g.at(y, x, k);
                if (v < 0.0)
                    throw InvalidArgument("renormalize: negative value at pixel (" +
                                          std::to_string(y) + "," + std::to_string(x) + ")");
                sum += v;
            }
            if (sum <= 0.0)
                throw InvalidArgument("renormalize: zero channel sum at pixel (" +
                                      std::to_string(y) + "," + std::to_string(x) + ")");
            for (int k = 0; k < g.channels; ++k) out.at(y, x, k) /= sum;
        }
    }
    return ProbMap{std::move(out)};
}

ProbMap softmax(const Grid& logits) {
    Grid out(logits.height, logits.width, logits.channels);
    for (int y = 0; y < logits.height; ++y) {
        for (int x = 0; x < logits.width; ++x) {
            double mx = logits.at(y, x, 0);
            for (int k = 1; k < logits.channels; ++k)
                mx = std::max(mx, logits.at(y, x, k));
            double sum = 0.0;
            for (int k = 0; k < logits.channels; ++k) {
                const double e = std::exp(logits.at(y, x, k) - mx);
                out.at(y, x, k) = e;
                sum += e;
            }
            for (int k = 0; k < logits.channels; ++k) out.at(y, x, k) /= sum;
        }
    }
    return ProbMap{std::move(out)};
}

}  // namespace segnoise

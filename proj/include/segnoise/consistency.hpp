#pragma once

#include <cstdint>
#include <vector>

#include "segnoise/grid.hpp"
#include "segnoise/netcore.hpp"

namespace segnoise::consistency {

// Scale factors for the multiscale forward pass. Must contain 1.0; all
// factors positive.
struct ScaleSet {
    std::vector<double> scales{0.7, 1.0, 1.5};
};

void validate(const ScaleSet& s);

enum class GateMode { Pixel, Image };

struct ConsistencyConfig {
    double lambda = 1.0;
    double rho = 0.8;
    GateMode gate = GateMode::Pixel;
    bool stop_grad_q = false;  // ablation switch: treat q as a constant
};

// Everything the trainer needs from one multiscale pass: per-scale
// predictions brought back to the input size (renormalized), their average
// q, and the per-scale caches/logits for backprop.
struct MultiscaleResult {
    std::vector<ProbMap> p;        // common (input) size, one per scale
    ProbMap q;                     // average of p
    std::vector<Grid> logits;      // at each scale's own size
    std::vector<ProbMap> p_scaled; // softmax at each scale's own size
    std::vector<net::ForwardCache> caches;
};

// For each scale k: resample the input (bilinear), run the model, resample
// the prediction back to the input size (bilinear) and renormalize; then
// average. keep_caches retains per-scale activations for training.
MultiscaleResult multiscale_forward(const net::Model& model, const Grid& x,
                                    const ScaleSet& scales, bool keep_caches = false);

// Per-pixel gate: max_c q >= rho (Image mode gates the whole example on the
// mean over pixels of max_c q). Returns one byte per pixel.
std::vector<std::uint8_t> confidence_gate(const ProbMap& q, double rho, GateMode mode);

// Mean over scales and gated pixels of KL(p_k || q), with a 1e-8 floor
// inside the logarithms and the 0*ln(0) = 0 convention. Zero when nothing
// is gated.
double consistency_loss(const std::vector<ProbMap>& p, const ProbMap& q,
                        const std::vector<std::uint8_t>& gate);

// Exact gradient of consistency_loss with respect to each p_k, including
// the dependence of q on the p_k (unless stop_grad_q). The gate itself is
// treated as a constant.
std::vector<Grid> consistency_grad(const std::vector<ProbMap>& p, const ProbMap& q,
                                   const std::vector<std::uint8_t>& gate,
                                   bool stop_grad_q = false);

// Convenience wrapper used by tests: loss and logit-gradients for
// same-size predictions p_k = softmax(logits_k) (no resampling), gate from
// rho. Returns the loss; fills dlogits.
double loss_and_logit_grad(const std::vector<Grid>& logits, double rho, GateMode mode,
                           bool stop_grad_q, std::vector<Grid>& dlogits);

// Chain rule from dL/dp_k at the common size back to each scale's logits,
// mirroring multiscale_forward's resample-back/renormalize steps. dp must
// hold one gradient grid per scale; the result is sized per scale.
std::vector<Grid> backward_to_logits(const MultiscaleResult& r, int in_height,
                                     int in_width, const std::vector<Grid>& dp);

// Gradient of a renormalization y = v / sum(v) given upstream dL/dy.
Grid renormalize_backward(const Grid& pre_renorm, const Grid& dpost);

// Gradient of a per-pixel softmax given upstream dL/dp.
Grid softmax_backward(const ProbMap& p, const Grid& dp);

// End-of-epoch prediction pass: multiscale q per example, no augmentation.
std::vector<ProbMap> predict_dataset(const net::Model& model,
                                     const std::vector<Grid>& images,
                                     const ScaleSet& scales);

}  // namespace segnoise::consistency

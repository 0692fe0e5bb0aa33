#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "segnoise/grid.hpp"

namespace segnoise::net {

// One conv layer in the stack. Same padding (zero-padded), odd kernel,
// optional ReLU. The final 1x1 logits layer carries relu = false.
struct LayerSpec {
    int kernel = 3;
    int out_channels = 16;
    bool relu = true;
};

struct ModelSpec {
    int in_channels = 2;
    int num_classes = 4;
    std::vector<LayerSpec> hidden;  // the final 1x1 conv to num_classes is implicit
    std::uint64_t seed = 1;
};

// Weights live in [ky][kx][in][out] order so the innermost loops run over
// the contiguous out-channel axis (HWC activations, FMA-friendly).
struct Layer {
    int kernel = 1;
    int in_ch = 1;
    int out_ch = 1;
    bool relu = false;
    std::vector<double> w;  // ((ky*kernel + kx)*in_ch + i)*out_ch + o
    std::vector<double> b;  // out_ch

    std::size_t weight_index(int ky, int kx, int i, int o) const {
        return ((static_cast<std::size_t>(ky) * kernel + kx) * in_ch + i) * out_ch + o;
    }
};

struct Model {
    ModelSpec spec;
    std::vector<Layer> layers;  // hidden convs + final 1x1 logits conv

    std::size_t param_count() const;
};

// He fan-in initialization, deterministic in spec.seed.
Model init_model(const ModelSpec& spec);

// Per-layer activations retained for backward: act[0] is the input, act[l+1]
// the post-nonlinearity output of layer l.
struct ForwardCache {
    std::vector<Grid> act;
};

// Plain forward to logits; spatial dims preserved (same padding).
Grid forward_logits(const Model& m, const Grid& x, ForwardCache* cache = nullptr);

// Forward to (logits, per-pixel softmax probabilities).
std::pair<Grid, ProbMap> forward(const Model& m, const Grid& x);

// Parameter gradients, mirroring the layer layout.
struct Gradients {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    void zero();
    bool finite() const;
};

Gradients make_gradients(const Model& m);

// Reverse-mode pass: accumulates parameter gradients for one example given
// the loss gradient at the logits; returns nothing extra. The input
// gradient is exposed separately for the multiscale chain.
void backward_accumulate(const Model& m, const ForwardCache& cache,
                         const Grid& dlogits, Gradients& grads,
                         Grid* dinput = nullptr);

struct OptimConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int batch_size = 8;
    int epochs = 60;
    double lr_final_factor = 1.0;  // lr anneals linearly to lr*factor at the last epoch
};

// Per-epoch learning rate under the linear anneal from lr (first epoch) to
// lr * lr_final_factor (last epoch). Epochs are 1-based; a single-epoch run
// uses the full lr.
double scheduled_lr(const OptimConfig& cfg, int epoch);

struct OptimState {
    Gradients velocity;
};

OptimState make_optim_state(const Model& m);

// Momentum SGD: v <- mu*v + (g + wd*theta); theta <- theta - lr*v.
// Throws on non-finite gradients (an explosion at this scale is a bug, not
// a tuning problem).
void sgd_step(Model& m, const Gradients& grads, const OptimConfig& cfg, OptimState& state);

// Pixel-mean softmax cross-entropy against a label mask, computed from the
// log-sum-exp form (no probability floor needed). Fills dlogits with the
// gradient of the mean, (softmax - onehot) / num_pixels.
double ce_loss_and_grad(const Grid& logits, const LabelMask& labels, Grid& dlogits);

// Flat parameter access for finite-difference tests and checkpointing;
// order: per layer, weights then biases.
std::vector<double*> param_ptrs(Model& m);

}  // namespace segnoise::net

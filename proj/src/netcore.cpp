#include "segnoise/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "segnoise/errors.hpp"
#include "segnoise/rng.hpp"

namespace segnoise::net {

namespace {

constexpr std::uint64_t kTagInit = 0x11717;

void validate_spec(const ModelSpec& spec) {
    if (spec.in_channels < 1 || spec.in_channels > 256)
        throw InvalidArgument("model: in_channels must be in [1,256]");
    if (spec.num_classes < 2 || spec.num_classes > 255)
        throw InvalidArgument("model: num_classes must be in [2,255]");
    for (const LayerSpec& l : spec.hidden) {
        if (l.kernel < 1 || l.kernel % 2 == 0)
            throw InvalidArgument("model: kernels must be odd, got " +
                                  std::to_string(l.kernel));
        if (l.out_channels < 1 || l.out_channels > 256)
            throw InvalidArgument("model: out_channels must be in [1,256]");
    }
}

// Stack accumulator bound; layer widths are validated against it so the
// per-pixel accumulation never spills to the heap mid-loop.
constexpr int kMaxChannels = 256;

void conv_forward(const Layer& L, const Grid& in, Grid& out) {
    const int H = in.height, W = in.width, K = L.kernel, P = K / 2;
    const int IC = L.in_ch, OC = L.out_ch;
    double acc[kMaxChannels];
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int o = 0; o < OC; ++o) acc[o] = L.b[o];
            const int ky0 = std::max(0, P - y), ky1 = std::min(K, H + P - y);
            const int kx0 = std::max(0, P - x), kx1 = std::min(K, W + P - x);
            for (int ky = ky0; ky < ky1; ++ky) {
                const int yy = y + ky - P;
                const double* iprow =
                    &in.data[(static_cast<std::size_t>(yy) * W + (x + kx0 - P)) * IC];
                for (int kx = kx0; kx < kx1; ++kx) {
                    const double* wp = &L.w[L.weight_index(ky, kx, 0, 0)];
                    for (int i = 0; i < IC; ++i) {
                        const double v = iprow[i];
                        const double* wrow = wp + static_cast<std::size_t>(i) * OC;
                        for (int o = 0; o < OC; ++o) acc[o] += v * wrow[o];
                    }
                    iprow += IC;
                }
            }
            double* op = &out.data[(static_cast<std::size_t>(y) * W + x) * OC];
            if (L.relu) {
                for (int o = 0; o < OC; ++o) op[o] = acc[o] > 0.0 ? acc[o] : 0.0;
            } else {
                for (int o = 0; o < OC; ++o) op[o] = acc[o];
            }
        }
    }
}

// dout is the gradient at this layer's conv output (ReLU already unwound by
// the caller). Accumulates weight/bias gradients and, when din != nullptr,
// the gradient at the layer input. Pixel-major order keeps the streamed
// gradient row hot in L1 across all taps (tap-major loses that locality on
// upscaled inputs).
void conv_backward(const Layer& L, const Grid& in, const Grid& dout,
                   std::vector<double>& dw, std::vector<double>& db, Grid* din) {
    const int H = in.height, W = in.width, K = L.kernel, P = K / 2;
    const int IC = L.in_ch, OC = L.out_ch;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double* gp = &dout.data[(static_cast<std::size_t>(y) * W + x) * OC];
            for (int o = 0; o < OC; ++o) db[o] += gp[o];
            const int ky0 = std::max(0, P - y), ky1 = std::min(K, H + P - y);
            const int kx0 = std::max(0, P - x), kx1 = std::min(K, W + P - x);
            for (int ky = ky0; ky < ky1; ++ky) {
                const int yy = y + ky - P;
                for (int kx = kx0; kx < kx1; ++kx) {
                    const int xx = x + kx - P;
                    const std::size_t base = (static_cast<std::size_t>(yy) * W + xx) * IC;
                    const double* ip = &in.data[base];
                    double* dip = din ? &din->data[base] : nullptr;
                    double* dwp = &dw[L.weight_index(ky, kx, 0, 0)];
                    const double* wp = &L.w[L.weight_index(ky, kx, 0, 0)];
                    for (int i = 0; i < IC; ++i) {
                        const double v = ip[i];
                        double* dwrow = dwp + static_cast<std::size_t>(i) * OC;
                        const double* wrow = wp + static_cast<std::size_t>(i) * OC;
                        double acc = 0.0;
                        for (int o = 0; o < OC; ++o) {
                            const double g = gp[o];
                            dwrow[o] += v * g;
                            acc += wrow[o] * g;
                        }
                        if (dip) dip[i] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.size() + l.b.size();
    return n;
}

Model init_model(const ModelSpec& spec) {
    validate_spec(spec);
    Model m;
    m.spec = spec;
    int in_ch = spec.in_channels;
    std::vector<LayerSpec> all = spec.hidden;
    all.push_back(LayerSpec{1, spec.num_classes, false});  // logits head
    for (std::size_t li = 0; li < all.size(); ++li) {
        const LayerSpec& ls = all[li];
        Layer layer;
        layer.kernel = ls.kernel;
        layer.in_ch = in_ch;
        layer.out_ch = ls.out_channels;
        layer.relu = ls.relu && li + 1 < all.size();
        layer.w.resize(static_cast<std::size_t>(ls.kernel) * ls.kernel * in_ch *
                       ls.out_channels);
        layer.b.assign(ls.out_channels, 0.0);
        Rng rng(derive_seed(spec.seed, kTagInit, li));
        const double sigma =
            std::sqrt(2.0 / (static_cast<double>(ls.kernel) * ls.kernel * in_ch));
        for (double& v : layer.w) v = sigma * rng.normal();
        m.layers.push_back(std::move(layer));
        in_ch = ls.out_channels;
    }
    return m;
}

Grid forward_logits(const Model& m, const Grid& x, ForwardCache* cache) {
    if (x.channels != m.spec.in_channels)
        throw InvalidArgument("forward: input has " + std::to_string(x.channels) +
                              " channels, model expects " +
                              std::to_string(m.spec.in_channels));
    if (cache) {
        cache->act.clear();
        cache->act.push_back(x);
    }
    Grid cur = x;
    for (const Layer& l : m.layers) {
        Grid out(cur.height, cur.width, l.out_ch);
        conv_forward(l, cur, out);
        cur = std::move(out);
        if (cache) cache->act.push_back(cur);
    }
    return cur;
}

std::pair<Grid, ProbMap> forward(const Model& m, const Grid& x) {
    Grid logits = forward_logits(m, x);
    ProbMap p = softmax(logits);
    return {std::move(logits), std::move(p)};
}

void Gradients::zero() {
    for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

bool Gradients::finite() const {
    for (const auto& v : w)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    for (const auto& v : b)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    return true;
}

Gradients make_gradients(const Model& m) {
    Gradients g;
    for (const Layer& l : m.layers) {
        g.w.emplace_back(l.w.size(), 0.0);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

void backward_accumulate(const Model& m, const ForwardCache& cache,
                         const Grid& dlogits, Gradients& grads, Grid* dinput) {
    if (cache.act.size() != m.layers.size() + 1)
        throw InvalidArgument("backward: forward cache does not match the model");
    Grid dcur = dlogits;
    for (int li = static_cast<int>(m.layers.size()) - 1; li >= 0; --li) {
        const Layer& l = m.layers[li];
        const Grid& in = cache.act[li];
        const Grid& out = cache.act[li + 1];
        if (l.relu) {
            // Unwind the ReLU using the cached post-activation sign.
            for (std::size_t i = 0; i < dcur.data.size(); ++i)
                if (out.data[i] <= 0.0) dcur.data[i] = 0.0;
        }
        const bool need_din = li > 0 || dinput != nullptr;
        Grid din;
        if (need_din) din = Grid(in.height, in.width, in.channels);
        conv_backward(l, in, dcur, grads.w[li], grads.b[li], need_din ? &din : nullptr);
        if (li == 0 && dinput) *dinput = std::move(din);
        if (li > 0) dcur = std::move(din);
    }
}

OptimState make_optim_state(const Model& m) { return {make_gradients(m)}; }

double scheduled_lr(const OptimConfig& cfg, int epoch) {
    if (cfg.epochs <= 1) return cfg.lr;
    const double t = static_cast<double>(epoch - 1) / (cfg.epochs - 1);
    return cfg.lr * (1.0 + (cfg.lr_final_factor - 1.0) * t);
}

void sgd_step(Model& m, const Gradients& grads, const OptimConfig& cfg, OptimState& state) {
    if (!(cfg.lr > 0.0)) throw InvalidArgument("sgd_step: lr must be positive");
    if (!grads.finite()) throw Error("sgd_step: non-finite gradient, aborting run");
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        Layer& l = m.layers[li];
        auto& vw = state.velocity.w[li];
        auto& vb = state.velocity.b[li];
        for (std::size_t i = 0; i < l.w.size(); ++i) {
            vw[i] = cfg.momentum * vw[i] + grads.w[li][i] + cfg.weight_decay * l.w[i];
            l.w[i] -= cfg.lr * vw[i];
        }
        for (std::size_t i = 0; i < l.b.size(); ++i) {
            vb[i] = cfg.momentum * vb[i] + grads.b[li][i];  // no decay on biases
            l.b[i] -= cfg.lr * vb[i];
        }
    }
}

double ce_loss_and_grad(const Grid& logits, const LabelMask& labels, Grid& dlogits) {
    if (logits.height != labels.height || logits.width != labels.width)
        throw InvalidArgument("cross_entropy: logits/labels shape mismatch");
    const int K = logits.channels;
    const int n = logits.height * logits.width;
    dlogits = Grid(logits.height, logits.width, K);
    const double inv_n = 1.0 / n;
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::uint8_t y = labels.ids[i];
        if (y >= K)
            throw InvalidArgument("cross_entropy: label " + std::to_string(y) +
                                  " outside [0," + std::to_string(K - 1) + "]");
        const double* lp = &logits.data[static_cast<std::size_t>(i) * K];
        double mx = lp[0];
        for (int c = 1; c < K; ++c) mx = std::max(mx, lp[c]);
        double sum = 0.0;
        for (int c = 0; c < K; ++c) sum += std::exp(lp[c] - mx);
        loss += (mx + std::log(sum)) - lp[y];
        double* dp = &dlogits.data[static_cast<std::size_t>(i) * K];
        for (int c = 0; c < K; ++c) dp[c] = std::exp(lp[c] - mx) / sum * inv_n;
        dp[y] -= inv_n;
    }
    return loss * inv_n;
}

std::vector<double*> param_ptrs(Model& m) {
    std::vector<double*> out;
    out.reserve(m.param_count());
    for (Layer& l : m.layers) {
        for (double& v : l.w) out.push_back(&v);
        for (double& v : l.b) out.push_back(&v);
    }
    return out;
}

}  // namespace segnoise::net

#include "segnoise/consistency.hpp"

#include <algorithm>
#include <cmath>

#include "segnoise/errors.hpp"

namespace segnoise::consistency {

namespace {

constexpr double kLogFloor = 1e-8;

double floored_log(double v) { return std::log(std::max(v, kLogFloor)); }

}  // namespace

void validate(const ScaleSet& s) {
    if (s.scales.empty()) throw InvalidArgument("scales: empty scale set");
    bool has_one = false;
    for (double v : s.scales) {
        if (!(v > 0.0)) throw InvalidArgument("scales: factors must be positive");
        has_one = has_one || v == 1.0;
    }
    if (!has_one) throw InvalidArgument("scales: the set must contain 1.0");
}

MultiscaleResult multiscale_forward(const net::Model& model, const Grid& x,
                                    const ScaleSet& scales, bool keep_caches) {
    validate(scales);
    MultiscaleResult r;
    const std::size_t s = scales.scales.size();
    r.p.reserve(s);
    r.logits.reserve(s);
    r.p_scaled.reserve(s);
    if (keep_caches) r.caches.resize(s);

    for (std::size_t k = 0; k < s; ++k) {
        const double scale = scales.scales[k];
        Grid xs = resample(x, scale, ResampleMode::Bilinear);
        if (xs.height < 1 || xs.width < 1)
            throw InvalidArgument("multiscale_forward: scaled input collapsed");
        Grid logits = net::forward_logits(model, xs, keep_caches ? &r.caches[k] : nullptr);
        ProbMap ps = softmax(logits);
        if (ps.height() == x.height && ps.width() == x.width) {
            // Identity-size path: already a valid ProbMap, no renorm needed;
            // keeps the single-scale case bit-identical to a plain forward.
            r.p.push_back(ps);
        } else {
            Grid back = resample_to(ps.grid, x.height, x.width, ResampleMode::Bilinear);
            r.p.push_back(renormalize(back));
        }
        r.logits.push_back(std::move(logits));
        r.p_scaled.push_back(std::move(ps));
    }
    r.q = average_probmaps(r.p);
    return r;
}

std::vector<std::uint8_t> confidence_gate(const ProbMap& q, double rho, GateMode mode) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("gate: rho outside [0,1]");
    const int n = q.height() * q.width();
    std::vector<std::uint8_t> gate(n, 0);
    if (mode == GateMode::Pixel) {
        for (int i = 0; i < n; ++i) {
            double mx = 0.0;
            for (int c = 0; c < q.classes(); ++c)
                mx = std::max(mx, q.grid.data[static_cast<std::size_t>(i) * q.classes() + c]);
            gate[i] = mx >= rho;
        }
    } else {
        double mean_max = 0.0;
        for (int i = 0; i < n; ++i) {
            double mx = 0.0;
            for (int c = 0; c < q.classes(); ++c)
                mx = std::max(mx, q.grid.data[static_cast<std::size_t>(i) * q.classes() + c]);
            mean_max += mx;
        }
        mean_max /= n;
        if (mean_max >= rho) std::fill(gate.begin(), gate.end(), 1);
    }
    return gate;
}

double consistency_loss(const std::vector<ProbMap>& p, const ProbMap& q,
                        const std::vector<std::uint8_t>& gate) {
    if (p.empty()) throw InvalidArgument("consistency_loss: no scales");
    const int n = q.height() * q.width();
    const int K = q.classes();
    for (const ProbMap& pk : p)
        if (!pk.grid.same_shape(q.grid))
            throw InvalidArgument("consistency_loss: scale map shape mismatch");
    if (static_cast<int>(gate.size()) != n)
        throw InvalidArgument("consistency_loss: gate size mismatch");

    std::size_t gated = 0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!gate[i]) continue;
        ++gated;
        for (const ProbMap& pk : p) {
            const double* pv = &pk.grid.data[static_cast<std::size_t>(i) * K];
            const double* qv = &q.grid.data[static_cast<std::size_t>(i) * K];
            for (int c = 0; c < K; ++c) {
                if (pv[c] == 0.0) continue;  // 0 * ln(0/q) = 0 by convention
                total += pv[c] * (floored_log(pv[c]) - floored_log(qv[c]));
            }
        }
    }
    if (gated == 0) return 0.0;
    return total / (static_cast<double>(p.size()) * static_cast<double>(gated));
}

std::vector<Grid> consistency_grad(const std::vector<ProbMap>& p, const ProbMap& q,
                                   const std::vector<std::uint8_t>& gate,
                                   bool stop_grad_q) {
    const int n = q.height() * q.width();
    const int K = q.classes();
    const std::size_t s = p.size();
    std::size_t gated = 0;
    for (int i = 0; i < n; ++i) gated += gate[i] ? 1 : 0;

    std::vector<Grid> grads;
    grads.reserve(s);
    for (std::size_t k = 0; k < s; ++k)
        grads.emplace_back(q.height(), q.width(), K);
    if (gated == 0) return grads;

    const double norm = 1.0 / (static_cast<double>(s) * static_cast<double>(gated));
    for (int i = 0; i < n; ++i) {
        if (!gate[i]) continue;
        const std::size_t base = static_cast<std::size_t>(i) * K;
        for (int c = 0; c < K; ++c) {
            const double qc = q.grid.data[base + c];
            const double log_q = floored_log(qc);
            // dL/dq_c: every scale's term -p_kc / max(q_c, eps), gated on
            // q_c > eps (below the floor the log is constant in q).
            double dq = 0.0;
            if (!stop_grad_q && qc > kLogFloor) {
                double psum = 0.0;
                for (std::size_t k = 0; k < s; ++k)
                    psum += p[k].grid.data[base + c];
                dq = -norm * psum / qc;
            }
            const double dq_share = dq / static_cast<double>(s);  // via q = mean(p)
            for (std::size_t k = 0; k < s; ++k) {
                const double pv = p[k].grid.data[base + c];
                double direct = 0.0;
                if (pv == 0.0) {
                    // d/dp [p * (ln eps - ln q)] at p = 0
                    direct = norm * (floored_log(0.0) - log_q);
                } else {
                    direct = norm * (floored_log(pv) - log_q + (pv > kLogFloor ? 1.0 : 0.0));
                }
                grads[k].data[base + c] = direct + dq_share;
            }
        }
    }
    return grads;
}

std::vector<Grid> backward_to_logits(const MultiscaleResult& r, int in_height,
                                     int in_width, const std::vector<Grid>& dp) {
    if (dp.size() != r.p_scaled.size())
        throw InvalidArgument("backward_to_logits: gradient count mismatch");
    std::vector<Grid> dlogits;
    dlogits.reserve(dp.size());
    for (std::size_t k = 0; k < dp.size(); ++k) {
        const ProbMap& ps = r.p_scaled[k];
        Grid dsm;
        if (ps.height() == in_height && ps.width() == in_width) {
            dsm = dp[k];  // identity-size path skipped resample/renorm
        } else {
            // Recompute the pre-renorm back-resampled map; cheaper than
            // carrying it in MultiscaleResult and bit-identical.
            Grid back = resample_to(ps.grid, in_height, in_width, ResampleMode::Bilinear);
            Grid dback = renormalize_backward(back, dp[k]);
            dsm = resample_to_adjoint(dback, ps.height(), ps.width());
        }
        dlogits.push_back(softmax_backward(ps, dsm));
    }
    return dlogits;
}

Grid renormalize_backward(const Grid& pre_renorm, const Grid& dpost) {
    if (!pre_renorm.same_shape(dpost))
        throw InvalidArgument("renormalize_backward: shape mismatch");
    Grid dpre(pre_renorm.height, pre_renorm.width, pre_renorm.channels);
    const int K = pre_renorm.channels;
    const int n = pre_renorm.height * pre_renorm.width;
    for (int i = 0; i < n; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * K;
        double sum = 0.0;
        for (int c = 0; c < K; ++c) sum += pre_renorm.data[base + c];
        double dot = 0.0;  // sum_c dpost_c * post_c, with post = pre / sum
        for (int c = 0; c < K; ++c)
            dot += dpost.data[base + c] * (pre_renorm.data[base + c] / sum);
        for (int c = 0; c < K; ++c)
            dpre.data[base + c] = (dpost.data[base + c] - dot) / sum;
    }
    return dpre;
}

Grid softmax_backward(const ProbMap& p, const Grid& dp) {
    if (!p.grid.same_shape(dp)) throw InvalidArgument("softmax_backward: shape mismatch");
    Grid dlogits(dp.height, dp.width, dp.channels);
    const int K = dp.channels;
    const int n = dp.height * dp.width;
    for (int i = 0; i < n; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * K;
        double dot = 0.0;
        for (int c = 0; c < K; ++c) dot += dp.data[base + c] * p.grid.data[base + c];
        for (int c = 0; c < K; ++c)
            dlogits.data[base + c] = p.grid.data[base + c] * (dp.data[base + c] - dot);
    }
    return dlogits;
}

double loss_and_logit_grad(const std::vector<Grid>& logits, double rho, GateMode mode,
                           bool stop_grad_q, std::vector<Grid>& dlogits) {
    if (logits.empty()) throw InvalidArgument("loss_and_logit_grad: no scales");
    std::vector<ProbMap> p;
    p.reserve(logits.size());
    for (const Grid& lg : logits) p.push_back(softmax(lg));
    ProbMap q = average_probmaps(p);
    const std::vector<std::uint8_t> gate = confidence_gate(q, rho, mode);
    const double loss = consistency_loss(p, q, gate);
    const std::vector<Grid> dp = consistency_grad(p, q, gate, stop_grad_q);
    dlogits.clear();
    for (std::size_t k = 0; k < p.size(); ++k)
        dlogits.push_back(softmax_backward(p[k], dp[k]));
    return loss;
}

std::vector<ProbMap> predict_dataset(const net::Model& model,
                                     const std::vector<Grid>& images,
                                     const ScaleSet& scales) {
    std::vector<ProbMap> out;
    out.reserve(images.size());
    for (const Grid& img : images)
        out.push_back(multiscale_forward(model, img, scales, false).q);
    return out;
}

}  // namespace segnoise::consistency

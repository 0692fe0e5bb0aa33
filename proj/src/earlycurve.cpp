#include "segnoise/earlycurve.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "segnoise/errors.hpp"
#include "segnoise/rng.hpp"

namespace segnoise::earlycurve {

namespace {

// Bounds are enforced through the parameterization
//   a = eps + (1 - eps) * sigmoid(alpha)   in (eps, 1)
//   b = exp(beta),  beta clamped to ln(100)
//   c = exp(gamma), gamma clamped to ln(10)
constexpr double kEpsA = 1e-6;
constexpr double kMaxB = 100.0;
constexpr double kMaxC = 10.0;
constexpr int kMaxIterations = 200;
constexpr double kGradStop = 1e-10;
constexpr int kNumStarts = 12;  // 3x3 grid plus 3 jittered repeats

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Theta {
    double alpha, beta, gamma;
};

struct Abc {
    double a, b, c;
};

Abc to_abc(const Theta& th) {
    return {kEpsA + (1.0 - kEpsA) * sigmoid(th.alpha), std::exp(th.beta),
            std::exp(th.gamma)};
}

Theta from_abc(double a, double b, double c) {
    const double u = std::clamp((a - kEpsA) / (1.0 - kEpsA), 1e-9, 1.0 - 1e-9);
    return {std::log(u / (1.0 - u)), std::log(b), std::log(c)};
}

void clamp_theta(Theta& th) {
    th.beta = std::min(th.beta, std::log(kMaxB));
    th.gamma = std::min(th.gamma, std::log(kMaxC));
}

double model(const Abc& p, double t) {
    return p.a * (1.0 - std::exp(-p.b * std::pow(t, p.c)));
}

double sse_at(const Abc& p, const std::vector<double>& ts, const std::vector<double>& ys) {
    double s = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double r = model(p, ts[i]) - ys[i];
        s += r * r;
    }
    return s;
}

// Solve the 3x3 system M x = rhs in place; returns false when singular.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> rhs,
            std::array<double, 3>& x) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
        if (std::abs(m[pivot][col]) < 1e-300) return false;
        std::swap(m[col], m[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (int row = col + 1; row < 3; ++row) {
            const double f = m[row][col] / m[col][col];
            for (int k = col; k < 3; ++k) m[row][k] -= f * m[col][k];
            rhs[row] -= f * rhs[col];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double v = rhs[col];
        for (int k = col + 1; k < 3; ++k) v -= m[col][k] * x[k];
        x[col] = v / m[col][col];
    }
    return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}

struct LmOutcome {
    Theta theta;
    double sse;
    bool converged;
};

// Damped least squares from one starting point.
LmOutcome lm_from(Theta th, const std::vector<double>& ts, const std::vector<double>& ys) {
    clamp_theta(th);
    double lambda = 1e-3;
    double sse = sse_at(to_abc(th), ts, ys);
    bool converged = false;

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const Abc p = to_abc(th);
        // J^T J and J^T r accumulated directly (J row per sample).
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const double t = ts[i];
            const double tc = std::pow(t, p.c);
            const double e = std::exp(-p.b * tc);
            const double r = p.a * (1.0 - e) - ys[i];
            const double s = sigmoid(th.alpha);
            const std::array<double, 3> row = {
                (1.0 - e) * (1.0 - kEpsA) * s * (1.0 - s),   // d f / d alpha
                p.a * tc * e * p.b,                          // d f / d beta
                p.a * p.b * tc * std::log(t) * e * p.c,      // d f / d gamma
            };
            for (int u = 0; u < 3; ++u) {
                jtr[u] += row[u] * r;
                for (int v = 0; v < 3; ++v) jtj[u][v] += row[u] * row[v];
            }
        }

        const double gnorm =
            std::max({std::abs(jtr[0]), std::abs(jtr[1]), std::abs(jtr[2])});
        if (gnorm <= kGradStop) {
            converged = true;
            break;
        }

        // Try damped steps, inflating lambda until one reduces the SSE.
        bool stepped = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            auto m = jtj;
            for (int u = 0; u < 3; ++u)
                m[u][u] += lambda * std::max(jtj[u][u], 1e-12);
            std::array<double, 3> delta{};
            if (solve3(m, jtr, delta)) {
                Theta cand{th.alpha - delta[0], th.beta - delta[1], th.gamma - delta[2]};
                clamp_theta(cand);
                const double cand_sse = sse_at(to_abc(cand), ts, ys);
                if (cand_sse < sse) {
                    th = cand;
                    sse = cand_sse;
                    lambda = std::max(lambda * 0.5, 1e-12);
                    stepped = true;
                    break;
                }
            }
            lambda = std::min(lambda * 4.0, 1e12);
        }
        if (!stepped) {
            // No damping level reduced the SSE: local minimum to working
            // precision.
            converged = true;
            break;
        }
    }
    return {th, sse, converged};
}

}  // namespace

double curve_value(const FitResult& fit, double t) {
    return fit.a * (1.0 - std::exp(-fit.b * std::pow(t, fit.c)));
}

double curve_derivative(const FitResult& fit, double t) {
    if (!(t >= 1.0)) throw InvalidArgument("curve_derivative: requires t >= 1");
    const double tc = std::pow(t, fit.c);
    return fit.a * fit.b * fit.c * std::exp(-fit.b * tc) * std::pow(t, fit.c - 1.0);
}

FitResult fit_curve(const metrics::ClassIoUSeries& series, int min_points) {
    if (min_points < 3)
        throw InvalidArgument("fit_curve: min_points must be at least 3");
    std::vector<double> ts, ys;
    for (std::size_t i = 0; i < series.epochs.size(); ++i) {
        if (!series.values[i].has_value()) continue;
        ts.push_back(static_cast<double>(series.epochs[i]));
        ys.push_back(*series.values[i]);
    }
    if (static_cast<int>(ts.size()) < min_points)
        throw NotEnoughDataError("fit_curve: " + std::to_string(ts.size()) +
                                 " defined points, need " + std::to_string(min_points));

    const double max_y = *std::max_element(ys.begin(), ys.end());
    const double a0 = std::clamp(max_y, 0.05, 0.99);

    // Fixed start grid plus three deterministically jittered repeats around
    // its centre; best SSE wins, first-found on ties.
    std::vector<std::pair<double, double>> starts;  // (b0, c0)
    for (double b0 : {0.01, 0.1, 1.0})
        for (double c0 : {0.5, 1.0, 2.0}) starts.emplace_back(b0, c0);
    Rng jitter(0x5eedf17ULL);
    while (static_cast<int>(starts.size()) < kNumStarts)
        starts.emplace_back(0.1 * std::exp(jitter.uniform(-1.5, 1.5)),
                            std::exp(jitter.uniform(-0.7, 0.7)));

    LmOutcome best{Theta{}, std::numeric_limits<double>::infinity(), false};
    bool any_converged = false;
    for (const auto& [b0, c0] : starts) {
        LmOutcome out = lm_from(from_abc(a0, b0, c0), ts, ys);
        any_converged = any_converged || out.converged;
        if (out.sse < best.sse) best = out;
    }

    FitResult fit;
    const Abc p = to_abc(best.theta);
    fit.a = p.a;
    fit.b = p.b;
    fit.c = p.c;
    fit.sse = best.sse;
    fit.converged = any_converged;
    fit.points_used = static_cast<int>(ts.size());

    // b = 0 (f identically zero) is outside the exp() parameterization but
    // is the exact optimum for an all-zero series; snap to it whenever it is
    // at least as good as the best interior fit.
    double sse_zero = 0.0;
    for (double y : ys) sse_zero += y * y;
    if (sse_zero <= fit.sse) {
        fit.a = 1.0;
        fit.b = 0.0;
        fit.c = 1.0;
        fit.sse = sse_zero;
        fit.converged = true;
    }
    return fit;
}

TriggerDecision check_trigger(const FitResult& fit, int t, double r, int class_id) {
    if (t < 1) throw InvalidArgument("check_trigger: t must be >= 1");
    if (!(r >= 0.0)) throw InvalidArgument("check_trigger: r must be >= 0");
    TriggerDecision d;
    d.class_id = class_id;
    d.epoch_evaluated = t;
    const double d1 = curve_derivative(fit, 1.0);
    if (d1 > 0.0) {
        const double dt = curve_derivative(fit, static_cast<double>(t));
        d.relative_slope_change = std::abs(d1 - dt) / std::abs(d1);
        d.triggered = d.relative_slope_change > r;
    }
    return d;
}

}  // namespace segnoise::earlycurve

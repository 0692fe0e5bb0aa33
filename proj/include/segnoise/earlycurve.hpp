#pragma once

#include "segnoise/metrics.hpp"

namespace segnoise::earlycurve {

// Least-squares fit of f(t) = a * (1 - exp(-b * t^c)) to a training-IoU
// series, with 0 < a <= 1, b >= 0, c >= 0 enforced by the optimizer's
// parameterization.
struct FitResult {
    double a = 1.0;
    double b = 0.0;
    double c = 1.0;
    double sse = 0.0;
    bool converged = false;
    int points_used = 0;
};

struct TriggerDecision {
    int class_id = 0;
    bool triggered = false;
    double relative_slope_change = 0.0;  // |f'(1) - f'(t)| / |f'(1)|, 0 when f'(1)=0
    int epoch_evaluated = 0;
};

inline constexpr int kDefaultMinPoints = 5;

// Evaluate the model curve at t.
double curve_value(const FitResult& fit, double t);

// Closed-form derivative f'(t) = a*b*c * exp(-b*t^c) * t^(c-1); requires
// t >= 1 (the expression is singular at t = 0 for c < 1).
double curve_derivative(const FitResult& fit, double t);

// Bounded multi-start Levenberg-Marquardt fit over the series' defined
// points. Deterministic given the series. Throws NotEnoughDataError when
// fewer than min_points entries are defined; if no start converges, the
// best parameters so far are returned with converged = false.
FitResult fit_curve(const metrics::ClassIoUSeries& series,
                    int min_points = kDefaultMinPoints);

// The correction trigger: fires when the relative slowdown of the fitted
// curve's derivative exceeds r. A flat-from-the-start fit (f'(1) = 0) never
// triggers.
TriggerDecision check_trigger(const FitResult& fit, int t, double r, int class_id = 0);

}  // namespace segnoise::earlycurve

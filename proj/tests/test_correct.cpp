#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "segnoise/correct.hpp"
#include "segnoise/earlycurve.hpp"
#include "segnoise/errors.hpp"
#include "segnoise/grid.hpp"
#include "segnoise/metrics.hpp"
#include "segnoise/rng.hpp"

using namespace segnoise;
using namespace segnoise::correction;

namespace {

// A probability map where every pixel carries the same distribution.
ProbMap uniform_pred(int h, int w, const std::vector<double>& dist) {
    Grid g(h, w, static_cast<int>(dist.size()));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (std::size_t k = 0; k < dist.size(); ++k)
                g.at(y, x, static_cast<int>(k)) = dist[k];
    return make_probmap(std::move(g));
}

// Parameters for f(t) = a*(1 - exp(-b*t^c)) whose slowdown passes the
// trigger ratio r at epoch t; the fit is taken as given (exact).
earlycurve::FitResult exact_fit(double a, double b, double c) {
    earlycurve::FitResult f;
    f.a = a;
    f.b = b;
    f.c = c;
    f.converged = true;
    return f;
}

metrics::ClassIoUSeries series_from(double a, double b, double c, int t_max) {
    metrics::ClassIoUSeries s;
    for (int t = 1; t <= t_max; ++t) {
        s.epochs.push_back(t);
        s.values.push_back(a * (1.0 - std::exp(-b * std::pow(t, c))));
    }
    return s;
}

metrics::ClassIoUSeries prefix(const metrics::ClassIoUSeries& s, int t_max) {
    metrics::ClassIoUSeries p;
    p.class_id = s.class_id;
    for (std::size_t i = 0; i < s.epochs.size(); ++i) {
        if (s.epochs[i] > t_max) break;
        p.epochs.push_back(s.epochs[i]);
        p.values.push_back(s.values[i]);
    }
    return p;
}

}  // namespace

TEST_CASE("store keeps the original annotations frozen") {
    std::vector<LabelMask> noisy{LabelMask(2, 2, 1)};
    AnnotationStore store(noisy);
    REQUIRE(store.size() == 1);
    store.working[0].at(0, 0) = 0;
    CHECK(store.original[0].at(0, 0) == 1);
    CHECK(store.working[0].at(0, 0) == 0);
}

TEST_CASE("threshold arithmetic on a two-pixel example") {
    // Pixel 0 is confidently class 1 (0.9 >= tau), pixel 1 is not (0.7 < tau).
    AnnotationStore store({LabelMask(1, 2, 0)});
    CorrectionState state(2);
    state.classes[1].triggered = true;

    Grid g(1, 2, 2);
    g.at(0, 0, 0) = 0.1; g.at(0, 0, 1) = 0.9;
    g.at(0, 1, 0) = 0.3; g.at(0, 1, 1) = 0.7;
    // The working mask must contain class 1 for it to act; flip pixel 1.
    store.working[0].at(0, 1) = 1;

    const auto changed = correct_labels(store, state, {make_probmap(std::move(g))}, 0.8);
    CHECK(changed == 1);
    CHECK(store.working[0].at(0, 0) == 1);   // relabeled
    CHECK(store.working[0].at(0, 1) == 1);   // below tau: untouched
    CHECK(state.classes[1].corrected_pixels == 1);
    CHECK(state.classes[0].corrected_pixels == 0);
    CHECK(store.original[0].at(0, 0) == 0);  // original unchanged
}

TEST_CASE("boundary: q exactly equal to tau is corrected") {
    // Pixel 1 keeps class 1 in the mask so containment holds; pixel 0 sits
    // exactly at tau and the >= comparison must fire.
    LabelMask mask(1, 2, 0);
    mask.at(0, 1) = 1;
    AnnotationStore store({mask});
    CorrectionState state(2);
    state.classes[1].triggered = true;

    Grid g(1, 2, 2);
    g.at(0, 0, 0) = 0.2; g.at(0, 0, 1) = 0.8;
    g.at(0, 1, 0) = 0.9; g.at(0, 1, 1) = 0.1;
    const auto changed = correct_labels(store, state, {make_probmap(std::move(g))}, 0.8);
    CHECK(changed == 1);
    CHECK(store.working[0].at(0, 0) == 1);
    CHECK(store.working[0].at(0, 1) == 1);  // below tau: untouched
}

TEST_CASE("non-triggered classes never touch the masks") {
    AnnotationStore store({LabelMask(3, 3, 0)});
    store.working[0].at(1, 1) = 1;
    const auto before = store.working[0];
    CorrectionState state(2);

    const auto q = uniform_pred(3, 3, {0.05, 0.95});
    const auto changed = correct_labels(store, state, {q}, 0.8);
    CHECK(changed == 0);
    CHECK(store.working[0].ids == before.ids);
    CHECK(state.classes[1].corrected_pixels == 0);
}

TEST_CASE("with two classes and tau > 0.5 every gated pixel becomes the gating class") {
    // q_c >= tau > 0.5 makes c the argmax, so the corrected label is c itself.
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(2, 4));
        const int w = static_cast<int>(rng.uniform_int(2, 4));
        Grid g(h, w, 2);
        LabelMask mask(h, w, 0);
        bool has_one = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double p1 = rng.uniform(0.0, 1.0);
                g.at(y, x, 0) = 1.0 - p1;
                g.at(y, x, 1) = p1;
                const bool one = rng.uniform(0.0, 1.0) < 0.5;
                if (one) mask.at(y, x) = 1;
                has_one = has_one || one;
            }
        if (!has_one) mask.at(0, 0) = 1;

        const double tau = 0.5 + rng.uniform(0.01, 0.49);
        AnnotationStore store({mask});
        CorrectionState state(2);
        state.classes[1].triggered = true;
        const ProbMap q = make_probmap(std::move(g));
        correct_labels(store, state, {q}, tau);

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (q.at(y, x, 1) >= tau)
                    CHECK(store.working[0].at(y, x) == 1);
                else
                    CHECK(store.working[0].at(y, x) == mask.at(y, x));
            }
    }
}

TEST_CASE("tau = 1.0 with strictly interior predictions changes nothing") {
    Rng rng(505);
    Grid g(4, 4, 3);
    LabelMask mask(4, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double s = 0.0;
            double v[3];
            for (int k = 0; k < 3; ++k) s += v[k] = rng.uniform(0.1, 1.0);
            for (int k = 0; k < 3; ++k) g.at(y, x, k) = v[k] / s;
            mask.at(y, x) = static_cast<std::uint8_t>(rng.uniform_index(3));
        }
    AnnotationStore store({mask});
    CorrectionState state(3);
    for (auto& cs : state.classes) cs.triggered = true;

    const auto changed = correct_labels(store, state, {make_probmap(std::move(g))}, 1.0);
    CHECK(changed == 0);
    CHECK(store.working[0].ids == mask.ids);
}

TEST_CASE("a triggered class only acts on examples whose mask contains it") {
    // Two examples; class 1 appears only in the second working mask.
    LabelMask without(2, 2, 0);
    LabelMask with(2, 2, 0);
    with.at(0, 0) = 1;
    AnnotationStore store({without, with});
    CorrectionState state(2);
    state.classes[1].triggered = true;

    const auto q = uniform_pred(2, 2, {0.05, 0.95});
    const auto changed = correct_labels(store, state, {q, q}, 0.9);
    CHECK(store.working[0].ids == without.ids);     // class absent: untouched
    CHECK(changed == 3);                            // 4 pixels, 1 already class 1
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) CHECK(store.working[1].at(y, x) == 1);
}

TEST_CASE("containment sees mutations made by lower class ids in the same pass") {
    // Class 1 rewrites every pixel to class 2, so by the time class 2 is
    // considered the mask contains it even though it did not at entry.
    LabelMask mask(1, 2, 1);
    AnnotationStore store({mask});
    CorrectionState state(3);
    state.classes[1].triggered = true;
    state.classes[2].triggered = true;

    Grid g(1, 2, 3);
    // Pixel 0: gates class 1 (q1 >= tau) but argmax is class 2.
    g.at(0, 0, 0) = 0.0; g.at(0, 0, 1) = 0.45; g.at(0, 0, 2) = 0.55;
    // Pixel 1: gates class 2 only.
    g.at(0, 1, 0) = 0.1; g.at(0, 1, 1) = 0.3; g.at(0, 1, 2) = 0.6;

    const auto changed = correct_labels(store, state, {make_probmap(std::move(g))}, 0.45);
    // Class 1 relabels pixel 0 to the argmax (class 2); class 2 then finds
    // itself in the mask and relabels pixel 1 as well.
    CHECK(changed == 2);
    CHECK(store.working[0].at(0, 0) == 2);
    CHECK(store.working[0].at(0, 1) == 2);
    CHECK(state.classes[1].corrected_pixels == 1);
    CHECK(state.classes[2].corrected_pixels == 1);
}

TEST_CASE("corrected-pixel counts accumulate across calls and skip no-ops") {
    AnnotationStore store({LabelMask(2, 2, 0)});
    store.working[0].at(0, 0) = 1;
    CorrectionState state(2);
    state.classes[1].triggered = true;

    const auto q = uniform_pred(2, 2, {0.1, 0.9});
    const auto first = correct_labels(store, state, {q}, 0.8);
    CHECK(first == 3);  // pixel (0,0) already carried class 1
    CHECK(state.classes[1].corrected_pixels == 3);

    // Same predictions again: every gated pixel already has the argmax label.
    const auto second = correct_labels(store, state, {q}, 0.8);
    CHECK(second == 0);
    CHECK(state.classes[1].corrected_pixels == 3);
}

TEST_CASE("shape and count mismatches are rejected") {
    AnnotationStore store({LabelMask(2, 2, 0)});
    CorrectionState state(2);
    state.classes[1].triggered = true;
    const auto q = uniform_pred(2, 2, {0.5, 0.5});

    CHECK_THROWS_AS(correct_labels(store, state, {q, q}, 0.8), InvalidArgument);
    CHECK_THROWS_AS(correct_labels(store, state, {uniform_pred(3, 2, {0.5, 0.5})}, 0.8),
                    InvalidArgument);
    CHECK_THROWS_AS(
        correct_labels(store, state, {uniform_pred(2, 2, {0.4, 0.3, 0.3})}, 0.8),
        InvalidArgument);

    CorrectionState s3(3);
    CHECK_THROWS_AS(update_state(s3, {std::nullopt, std::nullopt}, 5, 0.9),
                    InvalidArgument);
}

TEST_CASE("update_state leaves classes alone without fits") {
    CorrectionState state(3);
    update_state(state, {std::nullopt, std::nullopt, std::nullopt}, 7, 0.9);
    CHECK_FALSE(state.any_triggered());
    for (const auto& cs : state.classes) CHECK_FALSE(cs.trigger_epoch.has_value());
}

TEST_CASE("update_state fires on a decelerating fit and records the epoch") {
    // f'(t)/f'(1) = exp(-b(t-1)) for c = 1; ratio 1 - exp(-0.5(t-1)) crosses
    // 0.9 between t = 5 and t = 6.
    CorrectionState state(2);
    const auto fit = exact_fit(0.9, 0.5, 1.0);

    update_state(state, {std::nullopt, fit}, 5, 0.9);
    CHECK_FALSE(state.classes[1].triggered);

    update_state(state, {std::nullopt, fit}, 6, 0.9);
    REQUIRE(state.classes[1].triggered);
    CHECK(state.classes[1].trigger_epoch == 6);
    CHECK_FALSE(state.classes[0].triggered);
    CHECK(state.any_triggered());
}

TEST_CASE("a trigger persists even when later fits are absent or flat") {
    CorrectionState state(2);
    update_state(state, {std::nullopt, exact_fit(0.9, 0.5, 1.0)}, 10, 0.9);
    REQUIRE(state.classes[1].triggered);

    update_state(state, {std::nullopt, std::nullopt}, 11, 0.9);
    update_state(state, {std::nullopt, exact_fit(0.9, 0.0, 1.0)}, 12, 0.9);
    CHECK(state.classes[1].triggered);
    CHECK(state.classes[1].trigger_epoch == 10);
}

TEST_CASE("a flat-from-the-start fit never triggers") {
    CorrectionState state(1);
    for (int t = 1; t <= 50; ++t)
        update_state(state, {exact_fit(0.5, 0.0, 1.0)}, t, 0.9);
    CHECK_FALSE(state.classes[0].triggered);
}

TEST_CASE("per-class fits on refitted prefixes give distinct trigger epochs") {
    // Class 0 saturates fast (b = 0.8), class 1 slowly (b = 0.12); refit the
    // growing series each epoch exactly as the training loop does.
    const auto s0 = series_from(0.85, 0.8, 1.0, 40);
    const auto s1 = series_from(0.85, 0.12, 1.0, 40);
    CorrectionState state(2);

    for (int epoch = 1; epoch <= 40; ++epoch) {
        std::vector<std::optional<earlycurve::FitResult>> fits(2);
        if (epoch >= earlycurve::kDefaultMinPoints) {
            fits[0] = earlycurve::fit_curve(prefix(s0, epoch));
            fits[1] = earlycurve::fit_curve(prefix(s1, epoch));
        }
        update_state(state, fits, epoch, 0.9);
    }

    REQUIRE(state.classes[0].triggered);
    REQUIRE(state.classes[1].triggered);
    REQUIRE(state.classes[0].trigger_epoch.has_value());
    REQUIRE(state.classes[1].trigger_epoch.has_value());
    // 1 - exp(-0.8(t-1)) > 0.9 from t = 4 (clamped to the first fit at 5);
    // 1 - exp(-0.12(t-1)) > 0.9 from t = 21.
    CHECK(*state.classes[0].trigger_epoch == 5);
    CHECK(*state.classes[1].trigger_epoch == 21);
    CHECK(*state.classes[0].trigger_epoch < *state.classes[1].trigger_epoch);
}

TEST_CASE("sharing one mean-curve fit makes every class trigger together") {
    const auto s0 = series_from(0.85, 0.8, 1.0, 40);
    const auto s1 = series_from(0.85, 0.12, 1.0, 40);
    metrics::ClassIoUSeries mean;
    for (std::size_t i = 0; i < s0.epochs.size(); ++i) {
        mean.epochs.push_back(s0.epochs[i]);
        mean.values.push_back((*s0.values[i] + *s1.values[i]) / 2.0);
    }

    CorrectionState state(2);
    for (int epoch = 1; epoch <= 40 && !state.any_triggered(); ++epoch) {
        std::vector<std::optional<earlycurve::FitResult>> fits(2);
        if (epoch >= earlycurve::kDefaultMinPoints) {
            const auto fit = earlycurve::fit_curve(prefix(mean, epoch));
            fits[0] = fit;
            fits[1] = fit;
        }
        update_state(state, fits, epoch, 0.9);
    }

    REQUIRE(state.classes[0].triggered);
    REQUIRE(state.classes[1].triggered);
    CHECK(*state.classes[0].trigger_epoch == *state.classes[1].trigger_epoch);
}

TEST_CASE("label quality endpoints") {
    LabelMask clean(2, 2, 0);
    clean.at(0, 0) = 1;
    AnnotationStore store({clean});
    CHECK(label_quality(store, {clean}, 2) == doctest::Approx(1.0).epsilon(1e-12));

    // Flip one background pixel to class 1: class 0 IoU 2/3, class 1 IoU 1/2.
    store.working[0].at(1, 1) = 1;
    CHECK(label_quality(store, {clean}, 2) ==
          doctest::Approx((2.0 / 3.0 + 0.5) / 2.0).epsilon(1e-12));
}

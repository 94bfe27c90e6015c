#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ssvf/caloric.hpp"
#include "ssvf/datum.hpp"
#include "ssvf/fourier.hpp"
#include "ssvf/solver.hpp"

using namespace ssvf;
using Catch::Approx;

namespace {

struct Background {
    VectorProfile U0;
    TensorProfile G0;
};

/// Caloric background fields generated from the solenoidal pole datum,
/// normalized so the joint trace sup equals `amplitude`.
Background background(const GridSpec& g, double amplitude, int workers = 1) {
    DatumConfig dc;
    dc.family = "curl_poles";
    dc.amplitude = amplitude;
    DatumTraces d = build_datum(dc);
    auto [U0, G0] = caloric_pair(d.u, d.F, g, 1.0, workers);
    return {std::move(U0), std::move(G0)};
}

void fill_random(ProfileState& s, unsigned seed, double scale) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (double& x : s.v.data) x = scale * unif(gen);
    for (double& x : s.H.data) x = scale * unif(gen);
}

/// Smooth deterministic state: localized bumps with distinct per-component
/// anisotropy so no accidental symmetry cancels the quadratic source.
void fill_smooth(ProfileState& s, double scale) {
    const GridSpec& g = s.v.grid;
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Vec3 x = g.node(idx);
        const double bump = std::exp(-norm2(x) / 8.0);
        s.v.set(idx, {scale * bump * (1.0 + 0.3 * x[1]),
                      scale * bump * (0.5 - 0.2 * x[2]),
                      scale * bump * 0.25 * x[0]});
        Mat3 m {};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                m[static_cast<std::size_t>(a + 3 * b)] =
                    scale * bump * (0.1 * (a + 1) - 0.07 * (b + 1) * x[a]);
        s.H.set(idx, m);
    }
}

double max_abs_entry(const ProfileState& s) {
    double m = 0.0;
    for (double x : s.v.data) m = std::max(m, std::abs(x));
    for (double x : s.H.data) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("solve configuration rejects out-of-range settings", "[solver]") {
    REQUIRE_NOTHROW(SolveConfig {}.validate());

    auto rejects = [](void (*mutate)(SolveConfig&)) {
        SolveConfig c;
        mutate(c);
        REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
    };
    rejects([](SolveConfig& c) { c.damping = 0.0; });
    rejects([](SolveConfig& c) { c.damping = 1.5; });
    rejects([](SolveConfig& c) { c.sigma_schedule.clear(); });
    rejects([](SolveConfig& c) { c.sigma_schedule = {0.0, 0.5, 0.5, 1.0}; });
    rejects([](SolveConfig& c) { c.sigma_schedule = {0.5, 0.25}; });
    rejects([](SolveConfig& c) { c.sigma_schedule = {0.0, 1.2}; });
    rejects([](SolveConfig& c) { c.sigma_schedule = {-0.1, 1.0}; });
    rejects([](SolveConfig& c) { c.tol_fixed_point = 0.0; });
    rejects([](SolveConfig& c) { c.max_iters = 0; });
    rejects([](SolveConfig& c) { c.anderson_depth = -1; });
    rejects([](SolveConfig& c) { c.anderson_depth = 6; });
    rejects([](SolveConfig& c) { c.duhamel_nodes = 3; });
}

TEST_CASE("state norm sums the four weighted component sups", "[solver]") {
    GridSpec g {8, 4.0, -1.0};
    ProfileState s = ProfileState::zeros(g, 0.3, 0.5);
    REQUIRE(s.sigma == 0.3);
    REQUIRE(s.v.gamma == 1.0);
    REQUIRE(s.H.gamma == 1.0);
    REQUIRE(state_norm(s) == 0.0);

    // one entry in v component 1, one in the H column-2 / row-0 slot
    const std::size_t iv = g.index(6, 2, 3);
    const std::size_t ih = g.index(1, 5, 4);
    Vec3 vv = s.v.at(iv);
    vv[1] = 2.0;
    s.v.set(iv, vv);
    Mat3 hh = s.H.at(ih);
    hh[0 + 3 * 2] = -3.0;
    s.H.set(ih, hh);

    auto weight = [&](std::size_t idx) {
        const Vec3 x = g.node(idx);
        return std::pow(1.0 + dot(x, x), 0.75);  // (1+|x|^2)^((1+gamma)/2)
    };
    const double expected = 2.0 * weight(iv) + 3.0 * weight(ih);
    REQUIRE(state_norm(s) == Approx(expected).epsilon(1e-14));
    REQUIRE(state_norm(s, 4) == state_norm(s));

    ProfileState d = state_diff(s, s);
    REQUIRE(max_abs_entry(d) == 0.0);

    REQUIRE_THROWS_AS(ProfileState::zeros(g, 0.0, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(ProfileState::zeros(g, 0.0, 1.5), std::invalid_argument);
}

TEST_CASE("the map vanishes identically at sigma zero", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.3);
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;

    ProfileState w = ProfileState::zeros(g, 0.0, 0.5);
    fill_random(w, 1234, 0.05);
    ApplyTReport rep;
    rep.rel_div_v = 7.0;  // must be overwritten by the zero report
    ProfileState out = apply_T(w, bg.U0, bg.G0, ws, cfg, &rep);
    REQUIRE(max_abs_entry(out) == 0.0);
    REQUIRE(rep.pre_projection_div_v == 0.0);
    REQUIRE(rep.pre_projection_div_H == 0.0);
    REQUIRE(rep.rel_div_v == 0.0);
    REQUIRE(rep.rel_div_H == 0.0);

    // from a random start with full mixing the iteration lands exactly on
    // zero after one update and certifies it with the next application
    FixedPointResult r = picard_solve(w, bg.U0, bg.G0, ws, cfg);
    REQUIRE(r.converged);
    REQUIRE(r.status == SolveStatus::Converged);
    REQUIRE(r.iterations == 2);
    REQUIRE(max_abs_entry(r.state) == 0.0);

    ProfileState z = ProfileState::zeros(g, 0.0, 0.5);
    FixedPointResult r0 = picard_solve(z, bg.U0, bg.G0, ws, cfg);
    REQUIRE(r0.converged);
    REQUIRE(r0.iterations == 1);
    REQUIRE(r0.final_norm == 0.0);
    REQUIRE(r0.residual_history.size() == 1);
    REQUIRE(r0.residual_history[0] == 0.0);
}

TEST_CASE("the map is exactly linear in the homotopy parameter", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.05);
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;

    ProfileState w = ProfileState::zeros(g, 1.0, 0.5);
    fill_smooth(w, 0.1);
    ProfileState at_one = apply_T(w, bg.U0, bg.G0, ws, cfg);
    REQUIRE(max_abs_entry(at_one) > 0.0);

    w.sigma = 0.37;
    ProfileState scaled = apply_T(w, bg.U0, bg.G0, ws, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < scaled.v.data.size(); ++i)
        worst = std::max(worst, std::abs(scaled.v.data[i] - 0.37 * at_one.v.data[i]));
    for (std::size_t i = 0; i < scaled.H.data.size(); ++i)
        worst = std::max(worst, std::abs(scaled.H.data[i] - 0.37 * at_one.H.data[i]));
    REQUIRE(worst == 0.0);
}

TEST_CASE("halving the datum amplitude quarters the first correction", "[solver]") {
    GridSpec g {24, 12.0, -1.0};
    FourierWorkspace ws(g);
    SolveConfig cfg;
    cfg.duhamel_nodes = 16;
    cfg.workers = 2;
    Background big = background(g, 0.01, 2);
    Background half = background(g, 0.005, 2);

    ProfileState zero = ProfileState::zeros(g, 1.0, 0.5);
    ProfileState t_big = apply_T(zero, big.U0, big.G0, ws, cfg);
    ProfileState t_half = apply_T(zero, half.U0, half.G0, ws, cfg);

    const double nb = state_norm(t_big, 2);
    const double nh = state_norm(t_half, 2);
    REQUIRE(nb > 1e-10);
    // the sources are exactly quadratic in the datum and the correction map
    // is linear, so halving the amplitude rescales by a power of two that
    // commutes with every rounding
    REQUIRE(nb / nh == Approx(4.0).epsilon(1e-12));
}

TEST_CASE("small-datum picard iteration contracts to the fixed point", "[solver]") {
    GridSpec g {32, 16.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.01, 2);
    SolveConfig cfg;
    cfg.duhamel_nodes = 24;
    cfg.workers = 2;

    ProfileState init = ProfileState::zeros(g, 1.0, 0.5);
    FixedPointResult r = picard_solve(init, bg.U0, bg.G0, ws, cfg);
    REQUIRE(r.converged);
    REQUIRE(r.status == SolveStatus::Converged);
    REQUIRE(r.iterations >= 2);
    REQUIRE(r.iterations <= 30);
    REQUIRE_FALSE(r.contraction_ratios.empty());
    for (double q : r.contraction_ratios) REQUIRE(q < 0.5);
    REQUIRE(r.residual_history.back() <
            cfg.tol_fixed_point * std::max(1.0, r.final_norm));
    REQUIRE(r.final_norm > 0.0);
    REQUIRE(r.final_norm < 1.0);

    // both corrections stay solenoidal relative to their gradient scale
    REQUIRE(r.max_rel_div_v < 1e-10);
    REQUIRE(r.max_rel_div_H < 1e-10);
    REQUIRE(std::isfinite(r.pre_projection_div_H));

    // a converged state re-enters and is certified immediately
    FixedPointResult again = picard_solve(r.state, bg.U0, bg.G0, ws, cfg);
    REQUIRE(again.converged);
    REQUIRE(again.iterations <= 2);
    REQUIRE(state_norm(state_diff(again.state, r.state), 2) <
            10.0 * cfg.tol_fixed_point);
}

TEST_CASE("the norm ceiling aborts a runaway iterate", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.01);
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;
    cfg.norm_ceiling = 0.01;

    ProfileState w = ProfileState::zeros(g, 1.0, 0.5);
    fill_smooth(w, 0.2);
    FixedPointResult r = picard_solve(w, bg.U0, bg.G0, ws, cfg);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.status == SolveStatus::CeilingExceeded);
    REQUIRE(r.iterations == 1);
    REQUIRE(r.final_norm > cfg.norm_ceiling);
    REQUIRE(std::string(to_string(r.status)) == "CeilingExceeded");
}

TEST_CASE("residual growth is reported as divergence", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.01);
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;
    cfg.max_iters = 6;
    cfg.norm_ceiling = 1e60;  // large enough that growth detection fires first

    // an iterate far beyond the quadratic map's basin blows up immediately
    ProfileState w = ProfileState::zeros(g, 1.0, 0.5);
    const GridSpec& gg = w.v.grid;
    for (std::size_t idx = 0; idx < gg.size(); ++idx) {
        const Vec3 x = gg.node(idx);
        w.v.set(idx, {1e8 * std::exp(-norm2(x) / 8.0), 0.0, 0.0});
    }
    FixedPointResult r = picard_solve(w, bg.U0, bg.G0, ws, cfg);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.status == SolveStatus::DivergenceDetected);
    REQUIRE(r.residual_history.size() >= 2);
    const double floor = *std::min_element(r.residual_history.begin(),
                                           r.residual_history.end() - 1);
    REQUIRE(r.residual_history.back() > cfg.divergence_factor * floor);
}

TEST_CASE("the iteration cap is reported when tolerance is unreachable", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.01);
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;
    cfg.tol_fixed_point = 1e-14;
    cfg.max_iters = 2;
    cfg.damping = 0.3;

    ProfileState z = ProfileState::zeros(g, 1.0, 0.5);
    FixedPointResult r = picard_solve(z, bg.U0, bg.G0, ws, cfg);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.status == SolveStatus::MaxItersExceeded);
    REQUIRE(r.iterations == 2);
    REQUIRE(r.residual_history.size() == 2);
    REQUIRE(r.contraction_ratios.size() == 1);
}

TEST_CASE("anderson acceleration reaches the same fixed point", "[solver]") {
    GridSpec g {24, 12.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.05, 2);
    SolveConfig plain;
    plain.duhamel_nodes = 16;
    plain.workers = 2;
    plain.tol_fixed_point = 1e-11;
    SolveConfig accel = plain;
    accel.anderson_depth = 2;

    ProfileState z = ProfileState::zeros(g, 1.0, 0.5);
    FixedPointResult a = picard_solve(z, bg.U0, bg.G0, ws, plain);
    FixedPointResult b = picard_solve(z, bg.U0, bg.G0, ws, accel);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    REQUIRE(state_norm(state_diff(a.state, b.state), 2) < 1e-9);
}

TEST_CASE("continuation walks the schedule with warm starts", "[solver]") {
    GridSpec g {24, 12.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 0.01, 2);
    SolveConfig cfg;
    cfg.duhamel_nodes = 16;
    cfg.workers = 2;
    cfg.sigma_schedule = {0.0, 0.5, 1.0};

    ContinuationResult sweep = sigma_continuation(bg.U0, bg.G0, ws, cfg, 0.5);
    REQUIRE(sweep.records.size() == 3);
    REQUIRE(sweep.results.size() == 3);
    CHECK(sweep.records[0].sigma == 0.0);
    CHECK(sweep.records[0].iterations == 1);
    CHECK(sweep.records[0].norm == 0.0);
    for (const ContinuationRecord& rec : sweep.records) CHECK(rec.converged);
    // the correction scale grows with the homotopy parameter
    CHECK(sweep.records[1].norm < sweep.records[2].norm);
    CHECK(sweep.results.back().state.sigma == 1.0);

    // endpoint agrees with a cold solve at sigma = 1
    ProfileState cold = ProfileState::zeros(g, 1.0, 0.5);
    FixedPointResult direct = picard_solve(cold, bg.U0, bg.G0, ws, cfg);
    REQUIRE(direct.converged);
    REQUIRE(state_norm(state_diff(sweep.results.back().state, direct.state), 2) < 1e-7);

    // refining the schedule does not move the endpoint
    SolveConfig dense = cfg;
    dense.sigma_schedule = {0.0, 0.25, 0.5, 0.75, 1.0};
    ContinuationResult fine = sigma_continuation(bg.U0, bg.G0, ws, dense, 0.5);
    REQUIRE(fine.records.size() == 5);
    REQUIRE(state_norm(
                state_diff(fine.results.back().state, sweep.results.back().state), 2) <
            1e-7);
}

TEST_CASE("continuation reports the last convergent homotopy value", "[solver]") {
    GridSpec g {16, 8.0, -1.0};
    FourierWorkspace ws(g);
    Background bg = background(g, 1e4);  // far beyond the smallness regime
    SolveConfig cfg;
    cfg.duhamel_nodes = 8;
    cfg.sigma_schedule = {0.0, 0.5, 1.0};
    cfg.max_iters = 12;

    bool threw = false;
    try {
        sigma_continuation(bg.U0, bg.G0, ws, cfg, 0.5);
    } catch (const ContinuationStalled& e) {
        threw = true;
        CHECK(e.last_good_sigma == 0.0);
        REQUIRE(e.records.size() == 2);
        CHECK(e.records[0].converged);
        CHECK_FALSE(e.records[1].converged);
        const std::string msg = e.what();
        CHECK(msg.find("stalled") != std::string::npos);
        CHECK(msg.find("last converged sigma") != std::string::npos);
    }
    REQUIRE(threw);
}

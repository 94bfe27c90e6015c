#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

#include "ssvf/evolve.hpp"
#include "ssvf/fourier.hpp"
#include "ssvf/profile.hpp"

using namespace ssvf;
using Catch::Approx;

namespace {

/// Trig box: half width pi makes the fundamental wavenumber exactly one.
GridSpec trig_grid(int n) { return GridSpec {n, M_PI, -1.0}; }

/// Solenoidal velocity plus structurally solenoidal deformation columns,
/// all band-limited trig modes, amplitude-scaled.
EvolveState trig_state(const GridSpec& g, double a, double b) {
    EvolveState st;
    st.u = VectorProfile::zeros(g, 1.0);
    st.F = TensorProfile::zeros(g, 1.0);
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Vec3 x = g.node(idx);
        st.u.set(idx, {a * (std::sin(x[1]) + 0.5 * std::cos(x[2])),
                       a * std::sin(x[0]),
                       a * 0.3 * std::sin(x[0])});
        Mat3 m {};
        // column 0: (sin z, 0, cos x), column 1: 0.4 (cos z, 0, sin y)
        m[0 + 3 * 0] = b * std::sin(x[2]);
        m[2 + 3 * 0] = b * std::cos(x[0]);
        m[0 + 3 * 1] = 0.4 * b * std::cos(x[2]);
        m[2 + 3 * 1] = 0.4 * b * std::sin(x[1]);
        st.F.set(idx, m);
    }
    st.t = 1.0;
    st.sigma = 1.0;
    return st;
}

double l2_diff(const EvolveState& a, const EvolveState& b) {
    const double cell = std::pow(a.u.grid.h(), 3);
    double s = 0.0;
    for (std::size_t i = 0; i < a.u.data.size(); ++i) {
        const double d = a.u.data[i] - b.u.data[i];
        s += d * d;
    }
    for (std::size_t i = 0; i < a.F.data.size(); ++i) {
        const double d = a.F.data[i] - b.F.data[i];
        s += d * d;
    }
    return std::sqrt(s * cell);
}

double max_abs_diff(const EvolveState& a, const EvolveState& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.u.data.size(); ++i)
        m = std::max(m, std::abs(a.u.data[i] - b.u.data[i]));
    for (std::size_t i = 0; i < a.F.data.size(); ++i)
        m = std::max(m, std::abs(a.F.data[i] - b.F.data[i]));
    return m;
}

}  // namespace

TEST_CASE("exponential trapezoid coefficients match the integral values", "[evolver]") {
    // rows: z, A/dt, B/dt with A = (1 - e^-z (1+z))/z^2, B = (z - 1 + e^-z)/z^2,
    // evaluated in 50-digit arithmetic; the set straddles the series switch
    struct Row {
        double z, a, b;
    };
    const Row table[] = {
        {1e-8, 0.49999999666666667917, 0.4999999983333333375},
        {0.01, 0.49667913340265890355, 0.49833749168053573906},
        {0.04999, 0.48364492051110638672, 0.49177142590776446755},
        {0.05001, 0.48363849891314651543, 0.49176817467153025645},
        {0.2, 0.4380774076605442399, 0.46826882694954646675},
        {1.0, 0.26424111765711535681, 0.3678794411714423216},
        {5.0, 0.038382892720219487897, 0.16026951787996341868},
        {20.0, 0.002499999891789434822, 0.047500000005152884056},
    };
    for (const Row& r : table) {
        double f0, A, B;
        detail::etd_coeffs(r.z, 1.0, f0, A, B);
        REQUIRE(f0 == std::exp(-r.z));
        REQUIRE(A == Approx(r.a).epsilon(2e-9));
        REQUIRE(B == Approx(r.b).epsilon(2e-9));

        // both weights are proportional to the step size
        double f0s, As, Bs;
        detail::etd_coeffs(r.z, 0.37, f0s, As, Bs);
        REQUIRE(As == Approx(0.37 * A).epsilon(1e-14));
        REQUIRE(Bs == Approx(0.37 * B).epsilon(1e-14));
    }

    // zero mode: plain trapezoid weights
    double f0, A, B;
    detail::etd_coeffs(0.0, 0.8, f0, A, B);
    REQUIRE(f0 == 1.0);
    REQUIRE(A == 0.8 * 0.5);
    REQUIRE(B == 0.8 * 0.5);
}

TEST_CASE("evolution arguments are validated", "[evolver]") {
    GridSpec g = trig_grid(16);
    FourierWorkspace ws(g);
    EvolveState st = trig_state(g, 0.1, 0.1);
    EvolveConfig cfg;
    cfg.monitor = false;

    REQUIRE_THROWS_AS(evolve(st, 1.0, 1.0, ws, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(evolve(st, 1.0, 0.5, ws, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(evolve(st, 0.0, 1.0, ws, cfg), std::invalid_argument);
    EvolveConfig bad = cfg;
    bad.dt = 0.0;
    REQUIRE_THROWS_AS(evolve(st, 1.0, 2.0, ws, bad), std::invalid_argument);
    REQUIRE_THROWS_AS(evolve_step(st, 0.0, ws, cfg), std::invalid_argument);

    FourierWorkspace other(trig_grid(24));
    REQUIRE_THROWS_AS(evolve(st, 1.0, 2.0, other, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(evolve_step(st, 0.1, other, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(recover_flow_pressure(other, st.u, st.F, 1.0),
                      std::invalid_argument);
}

TEST_CASE("zero coupling reduces the stepper to the exact heat flow", "[evolver]") {
    GridSpec g = trig_grid(32);
    FourierWorkspace ws(g);

    // stream-function mode: both velocity components carry |k|^2 = 5
    EvolveState init;
    init.u = VectorProfile::zeros(g, 1.0);
    init.F = TensorProfile::zeros(g, 1.0);
    const double a = 0.8;
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Vec3 x = g.node(idx);
        const Vec3 u {-2.0 * a * std::sin(x[0]) * std::sin(2.0 * x[1]),
                      -a * std::cos(x[0]) * std::cos(2.0 * x[1]), 0.0};
        init.u.set(idx, u);
        Mat3 m {};
        for (int i = 0; i < 3; ++i) m[i + 3 * 0] = 0.3 * u[i];
        init.F.set(idx, m);
    }
    init.t = 1.0;
    init.sigma = 0.0;

    const double tau = 0.23;  // two full steps plus a clamped partial one
    EvolveConfig cfg;
    cfg.dt = 0.1;
    EvolveResult res = evolve(init, 1.0, 1.0 + tau, ws, cfg);
    REQUIRE(res.steps == 3);
    REQUIRE(res.rejected == 0);
    REQUIRE(res.rows.size() == 4);
    REQUIRE(res.final_state.t == Approx(1.0 + tau).margin(1e-12));

    const double decay = std::exp(-5.0 * tau);
    double worst = 0.0;
    for (std::size_t i = 0; i < init.u.data.size(); ++i)
        worst = std::max(worst,
                         std::abs(res.final_state.u.data[i] - decay * init.u.data[i]));
    for (std::size_t i = 0; i < init.F.data.size(); ++i)
        worst = std::max(worst,
                         std::abs(res.final_state.F.data[i] - decay * init.F.data[i]));
    REQUIRE(worst < 1e-12);

    REQUIRE(res.rows.back().energy < res.rows.front().energy);
    // no sources: the bilinear constant degenerates and never warns
    REQUIRE(res.monitor.kappa > 0.0);
    REQUIRE(res.monitor.c0_estimate == 0.0);
    REQUIRE(std::isinf(res.monitor.threshold));
    REQUIRE_FALSE(res.monitor.warned);
}

TEST_CASE("trajectory rows are internally consistent", "[evolver]") {
    GridSpec g = trig_grid(24);
    FourierWorkspace ws(g);
    EvolveState init = trig_state(g, 0.25, 0.15);
    EvolveConfig cfg;
    cfg.dt = 0.02;
    cfg.m_exp = 2.0;  // the L^m track must then coincide with L^2
    EvolveResult res = evolve(init, 1.0, 1.2, ws, cfg);

    REQUIRE(res.steps == 10);
    REQUIRE(res.rows.size() == 11);
    for (const TrajectoryRow& row : res.rows) {
        REQUIRE(row.energy ==
                Approx(0.5 * (row.l2_u * row.l2_u + row.l2_F * row.l2_F)).epsilon(1e-12));
        REQUIRE(row.lm_u == Approx(row.l2_u).epsilon(1e-12));
        REQUIRE(row.lm_F == Approx(row.l2_F).epsilon(1e-12));
        REQUIRE(row.dissipation > 0.0);
        // solenoidality of u and of every deformation column survives stepping
        REQUIRE(row.div_u < 1e-11);
        REQUIRE(row.div_F < 1e-11);
    }
    // running space-time norms accumulate strictly
    for (std::size_t i = 1; i < res.rows.size(); ++i) {
        REQUIRE(res.rows[i].st_norm > res.rows[i - 1].st_norm);
        REQUIRE(res.rows[i].kappa > res.rows[i - 1].kappa);
    }
    REQUIRE(res.rows[0].st_norm == 0.0);

    // energy is dissipated along the flow
    REQUIRE(res.rows.back().energy < res.rows.front().energy);

    // monitor algebra: threshold is the quarter-reciprocal of the constant
    REQUIRE(res.monitor.window == Approx(0.2));
    REQUIRE(res.monitor.kappa > 0.0);
    REQUIRE(res.monitor.c0_estimate > 0.0);
    REQUIRE(res.monitor.threshold ==
            Approx(1.0 / (4.0 * res.monitor.c0_estimate)).epsilon(1e-12));
    REQUIRE(res.monitor.warned == (res.monitor.kappa >= res.monitor.threshold));
}

TEST_CASE("record stride thins rows but always keeps the endpoint", "[evolver]") {
    GridSpec g = trig_grid(16);
    FourierWorkspace ws(g);
    EvolveState init = trig_state(g, 0.2, 0.1);
    EvolveConfig cfg;
    cfg.dt = 0.02;
    cfg.record_every = 3;
    cfg.monitor = false;
    std::size_t hook_calls = 0;
    double mean_abs = 0.0;
    cfg.on_record = [&](const EvolveState& st, const ScalarProfile& p) {
        ++hook_calls;
        double s = 0.0;
        for (double v : p.data) s += v;
        mean_abs = std::max(mean_abs, std::abs(s) / static_cast<double>(p.data.size()));
        REQUIRE(st.u.grid.n == 16);
    };
    EvolveResult res = evolve(init, 1.0, 1.2, ws, cfg);
    REQUIRE(res.steps == 10);
    REQUIRE(res.rows.size() == 5);  // t0 plus steps 3, 6, 9 and the endpoint
    REQUIRE(hook_calls == res.rows.size());
    // recovered pressure is the zero-mean periodic solution
    REQUIRE(mean_abs < 1e-12);
}

TEST_CASE("a single accepted step matches the driver loop bitwise", "[evolver]") {
    GridSpec g = trig_grid(16);
    FourierWorkspace ws(g);
    EvolveState init = trig_state(g, 0.3, 0.2);
    EvolveConfig cfg;
    cfg.dt = 0.05;
    cfg.monitor = false;

    EvolveState one = evolve_step(init, 0.05, ws, cfg);
    EvolveResult loop = evolve(init, 1.0, 1.05, ws, cfg);
    REQUIRE(loop.steps == 1);
    REQUIRE(max_abs_diff(one, loop.final_state) == 0.0);
    REQUIRE(one.t == Approx(1.05).margin(1e-14));
}

TEST_CASE("step halving converges at second order", "[evolver]") {
    GridSpec g = trig_grid(24);
    FourierWorkspace ws(g);
    EvolveState init = trig_state(g, 0.6, 0.4);
    const double t1 = 1.24;

    auto run = [&](double dt) {
        EvolveConfig cfg;
        cfg.dt = dt;
        cfg.monitor = false;
        cfg.record_every = 1000000;  // endpoint only
        return evolve(init, 1.0, t1, ws, cfg).final_state;
    };
    EvolveState s1 = run(0.02);
    EvolveState s2 = run(0.01);
    EvolveState s3 = run(0.005);

    const double e1 = l2_diff(s1, s2);
    const double e2 = l2_diff(s2, s3);
    REQUIRE(e1 > 1e-12);  // the nonlinear error is actually visible
    REQUIRE(e2 > 0.0);
    const double ratio = e1 / e2;
    REQUIRE(ratio > 3.2);
    REQUIRE(ratio < 4.8);
}

TEST_CASE("an unsettleable sub-iteration rejects and eventually fails", "[evolver]") {
    GridSpec g = trig_grid(16);
    FourierWorkspace ws(g);
    EvolveState init = trig_state(g, 0.5, 0.3);

    EvolveConfig strict;
    strict.max_subiters = 1;
    strict.subiter_tol = 1e-15;
    strict.monitor = false;
    REQUIRE_THROWS_AS(evolve_step(init, 0.2, ws, strict), EvolverError);

    strict.dt = 0.1;
    strict.max_halvings = 3;
    bool threw = false;
    try {
        evolve(init, 1.0, 1.5, ws, strict);
    } catch (const EvolverError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("minimum step size") != std::string::npos);
    }
    REQUIRE(threw);
}

TEST_CASE("pressure recovery solves the manufactured balance", "[evolver]") {
    GridSpec g = trig_grid(32);
    FourierWorkspace ws(g);
    const double A = 0.8, B = 0.5, sigma = 0.7;

    VectorProfile u = VectorProfile::zeros(g, 1.0);
    TensorProfile F = TensorProfile::zeros(g, 1.0);
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Vec3 x = g.node(idx);
        u.set(idx, {A * std::sin(x[1]), A * std::sin(x[0]), 0.0});
        Mat3 m {};
        m[0 + 3 * 0] = B * std::sin(x[1]);
        m[1 + 3 * 0] = B * std::sin(x[0]);
        F.set(idx, m);
    }
    ScalarProfile p = recover_flow_pressure(ws, u, F, sigma);

    // lap p = div div sigma (F F^t - u (x) u) = 2 sigma (B^2 - A^2) cos x cos y
    double worst = 0.0;
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Vec3 x = g.node(idx);
        const double expected = sigma * (A * A - B * B) * std::cos(x[0]) * std::cos(x[1]);
        worst = std::max(worst, std::abs(p.data[idx] - expected));
    }
    REQUIRE(worst < 1e-12);
}

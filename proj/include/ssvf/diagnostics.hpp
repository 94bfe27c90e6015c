#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssvf/caloric.hpp"
#include "ssvf/evolve.hpp"
#include "ssvf/fourier.hpp"
#include "ssvf/interp.hpp"
#include "ssvf/profile.hpp"
#include "ssvf/stencil.hpp"
#include "ssvf/trace.hpp"

namespace ssvf {

/// Backward parabolic cylinder Q_r(z0) = B_r(x0) x (t0 - r^2, t0).
struct ParabolicCylinder {
    Vec3 x0 {0.0, 0.0, 0.0};
    double t0 = 0.0;
    double r = 1.0;

    double t_start() const { return t0 - r * r; }
};

/// Gridded space-time samples: slice it, component c, node idx lives at
/// data[(it*comps + c)*nsize + idx]. Components are ordered the same way as
/// the corresponding profile type.
struct TimeSeriesField {
    GridSpec grid;
    int comps = 1;
    std::vector<double> times;
    std::vector<double> data;

    static TimeSeriesField make(const GridSpec& g, int comps) {
        TimeSeriesField f;
        f.grid = g;
        f.comps = comps;
        return f;
    }

    std::size_t slices() const { return times.size(); }

    const double* slice_component(std::size_t it, int c) const {
        return data.data() + (it * comps + c) * grid.size();
    }

    void add_raw(double t, const double* comp_major) {
        if (!times.empty() && t <= times.back())
            throw std::invalid_argument("time slices must be strictly increasing");
        times.push_back(t);
        data.insert(data.end(), comp_major, comp_major + comps * grid.size());
    }

    void add_slice(double t, const ScalarProfile& f) {
        require_comps(1, f.grid);
        add_raw(t, f.data.data());
    }
    void add_slice(double t, const VectorProfile& f) {
        require_comps(3, f.grid);
        add_raw(t, f.data.data());
    }
    void add_slice(double t, const TensorProfile& f) {
        require_comps(9, f.grid);
        add_raw(t, f.data.data());
    }

  private:
    void require_comps(int c, const GridSpec& g) const {
        if (comps != c) throw std::invalid_argument("slice component count mismatch");
        if (!grid.compatible(g)) throw std::invalid_argument("slice grid mismatch");
    }
};

/// Records evolver snapshots into space-time series. Keep the recorder alive
/// (and unmoved) while the returned hook is in use.
struct TrajectoryRecorder {
    TimeSeriesField u, F, p;

    explicit TrajectoryRecorder(const GridSpec& g)
        : u(TimeSeriesField::make(g, 3)),
          F(TimeSeriesField::make(g, 9)),
          p(TimeSeriesField::make(g, 1)) {}

    std::function<void(const EvolveState&, const ScalarProfile&)> hook() {
        return [this](const EvolveState& st, const ScalarProfile& pr) {
            u.add_slice(st.t, st.u);
            F.add_slice(st.t, st.F);
            p.add_slice(st.t, pr);
        };
    }
};

// ---------------------------------------------------------------------------
// Stationary profile system residual
// ---------------------------------------------------------------------------

struct FieldSummary {
    double max_abs = 0.0;
    double l2 = 0.0;
};

struct ProfileResidualReport {
    FieldSummary momentum;     // velocity-profile block, 3 components
    FieldSummary deformation;  // deformation-profile block, 9 components
    FieldSummary divergence;   // div U and div G_j, 4 scalars
    std::size_t interior_nodes = 0;
};

struct ProfileResidualOptions {
    int band_cells = 4;  // boundary band excluded from the summaries
    int workers = 1;
    VectorProfile* residual_u = nullptr;   // optional full residual fields
    TensorProfile* residual_G = nullptr;
};

/// Pointwise residual of the stationary profile system satisfied by
/// U = U0 + v and G = G0 + H:
///   -lap U - U/2 - (x.grad)U/2 + sigma (U.grad)U - sigma (G_l.grad)G_l + grad P
///   -lap G_j - G_j/2 - (x.grad)G_j/2 + sigma (U.grad)G_j - sigma (G_j.grad)U
/// with P the periodic solution of lap P = div div sigma(G G^t - U (x) U).
/// Sixth-order finite differences; summaries over the interior only.
inline ProfileResidualReport profile_residual(const VectorProfile& v, const TensorProfile& H,
                                              const VectorProfile& U0, const TensorProfile& G0,
                                              double sigma, FourierWorkspace& ws,
                                              const ProfileResidualOptions& opts = {}) {
    const GridSpec& g = v.grid;
    if (!g.compatible(H.grid) || !g.compatible(U0.grid) || !g.compatible(G0.grid) ||
        !g.compatible(ws.grid()))
        throw std::invalid_argument("profile_residual: fields do not share one grid");
    const std::size_t nsize = g.size();
    const int workers = opts.workers;

    std::array<std::vector<double>, 3> U;
    std::array<std::vector<double>, 9> G;
    for (int c = 0; c < 3; ++c) {
        U[c].resize(nsize);
        const double* a = U0.component(c);
        const double* b = v.component(c);
        for (std::size_t i = 0; i < nsize; ++i) U[c][i] = a[i] + b[i];
    }
    for (int c = 0; c < 9; ++c) {
        G[c].resize(nsize);
        const double* a = G0.component(c);
        const double* b = H.component(c);
        for (std::size_t i = 0; i < nsize; ++i) G[c][i] = a[i] + b[i];
    }

    // Pressure from the spectral solve of its Poisson equation.
    std::vector<double> P(nsize);
    {
        std::array<Spectrum, 9> qs;
        std::vector<double> prod(nsize);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                for (std::size_t i = 0; i < nsize; ++i) {
                    double ff = 0.0;
                    for (int l = 0; l < 3; ++l) ff += G[a + 3 * l][i] * G[b + 3 * l][i];
                    prod[i] = sigma * (ff - U[a][i] * U[b][i]);
                }
                qs[a + 3 * b] = ws.forward(prod.data());
            }
        Spectrum ps = ws.pressure_from_tensor(qs);
        ws.backward(ps, P.data());
    }

    // Node coordinates per axis, flattened once.
    std::array<std::vector<double>, 3> xc;
    for (int a = 0; a < 3; ++a) xc[a].resize(nsize);
    for (std::size_t i = 0; i < nsize; ++i) {
        const Vec3 x = g.node(i);
        xc[0][i] = x[0];
        xc[1][i] = x[1];
        xc[2][i] = x[2];
    }

    std::array<std::vector<double>, 3> ru;
    std::array<std::vector<double>, 9> rG;
    for (int c = 0; c < 3; ++c) {
        ru[c].resize(nsize);
        for (std::size_t i = 0; i < nsize; ++i) ru[c][i] = -0.5 * U[c][i];
    }
    for (int c = 0; c < 9; ++c) {
        rG[c].resize(nsize);
        for (std::size_t i = 0; i < nsize; ++i) rG[c][i] = -0.5 * G[c][i];
    }
    std::vector<double> divU(nsize, 0.0);
    std::array<std::vector<double>, 3> divG;
    for (auto& d : divG) d.assign(nsize, 0.0);

    std::vector<double> der(nsize);

    // Velocity components: scatter first and second derivatives.
    for (int i = 0; i < 3; ++i) {
        for (int a = 0; a < 3; ++a) {
            fd6_partial(U[i].data(), g, a, 1, der.data(), workers);
            for (std::size_t x = 0; x < nsize; ++x) {
                const double d = der[x];
                ru[i][x] += (-0.5 * xc[a][x] + sigma * U[a][x]) * d;
                for (int j = 0; j < 3; ++j) rG[i + 3 * j][x] -= sigma * G[a + 3 * j][x] * d;
            }
            if (a == i)
                for (std::size_t x = 0; x < nsize; ++x) divU[x] += der[x];
        }
        for (int a = 0; a < 3; ++a) {
            fd6_partial(U[i].data(), g, a, 2, der.data(), workers);
            for (std::size_t x = 0; x < nsize; ++x) ru[i][x] -= der[x];
        }
    }
    // Deformation components.
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            const int c = i + 3 * j;
            for (int a = 0; a < 3; ++a) {
                fd6_partial(G[c].data(), g, a, 1, der.data(), workers);
                for (std::size_t x = 0; x < nsize; ++x) {
                    const double d = der[x];
                    rG[c][x] += (-0.5 * xc[a][x] + sigma * U[a][x]) * d;
                    ru[i][x] -= sigma * G[a + 3 * j][x] * d;
                }
                if (a == i)
                    for (std::size_t x = 0; x < nsize; ++x) divG[j][x] += der[x];
            }
            for (int a = 0; a < 3; ++a) {
                fd6_partial(G[c].data(), g, a, 2, der.data(), workers);
                for (std::size_t x = 0; x < nsize; ++x) rG[c][x] -= der[x];
            }
        }
    // Pressure gradient enters the velocity block only.
    for (int i = 0; i < 3; ++i) {
        fd6_partial(P.data(), g, i, 1, der.data(), workers);
        for (std::size_t x = 0; x < nsize; ++x) ru[i][x] += der[x];
    }

    ProfileResidualReport rep;
    const double cell = std::pow(g.h(), 3);
    double l2u = 0.0, l2G = 0.0, l2d = 0.0;
    for (std::size_t x = 0; x < nsize; ++x) {
        if (!g.interior(g.node(x), opts.band_cells)) continue;
        ++rep.interior_nodes;
        for (int c = 0; c < 3; ++c) {
            rep.momentum.max_abs = std::max(rep.momentum.max_abs, std::abs(ru[c][x]));
            l2u += ru[c][x] * ru[c][x];
        }
        for (int c = 0; c < 9; ++c) {
            rep.deformation.max_abs = std::max(rep.deformation.max_abs, std::abs(rG[c][x]));
            l2G += rG[c][x] * rG[c][x];
        }
        rep.divergence.max_abs = std::max(rep.divergence.max_abs, std::abs(divU[x]));
        l2d += divU[x] * divU[x];
        for (int j = 0; j < 3; ++j) {
            rep.divergence.max_abs = std::max(rep.divergence.max_abs, std::abs(divG[j][x]));
            l2d += divG[j][x] * divG[j][x];
        }
    }
    if (rep.interior_nodes == 0)
        throw std::invalid_argument("profile_residual: no interior nodes at this band width");
    rep.momentum.l2 = std::sqrt(l2u * cell);
    rep.deformation.l2 = std::sqrt(l2G * cell);
    rep.divergence.l2 = std::sqrt(l2d * cell);

    if (opts.residual_u) {
        *opts.residual_u = VectorProfile::zeros(g, 1.0);
        for (int c = 0; c < 3; ++c)
            std::copy(ru[c].begin(), ru[c].end(), opts.residual_u->component(c));
    }
    if (opts.residual_G) {
        *opts.residual_G = TensorProfile::zeros(g, 1.0);
        for (int c = 0; c < 9; ++c)
            std::copy(rG[c].begin(), rG[c].end(), opts.residual_G->component(c));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Cylinder averages
// ---------------------------------------------------------------------------

namespace detail {

/// Quadrature bookkeeping for one parabolic cylinder: grid nodes inside the
/// ball (strict inclusion), time slices spanning exactly (t0 - r^2, t0), and
/// trapezoid weights in time. The volume normalizer is analytic.
struct CylinderQuad {
    std::vector<std::size_t> inside;
    std::vector<std::size_t> slice;
    std::vector<double> wt;
    double cell = 0.0;
    double volume = 0.0;

    static CylinderQuad make(const GridSpec& g, const std::vector<double>& times,
                             const ParabolicCylinder& cyl) {
        if (!(cyl.r > 0.0)) throw std::invalid_argument("cylinder radius must be positive");
        for (int a = 0; a < 3; ++a)
            if (std::abs(cyl.x0[a]) + cyl.r > g.half_width)
                throw std::out_of_range("cylinder extends outside the sampled box");
        CylinderQuad q;
        q.cell = std::pow(g.h(), 3);
        q.volume = (4.0 * M_PI / 3.0) * std::pow(cyl.r, 5);
        const double tol = 1e-9 * std::max(1.0, cyl.r * cyl.r);
        for (std::size_t it = 0; it < times.size(); ++it)
            if (times[it] >= cyl.t_start() - tol && times[it] <= cyl.t0 + tol)
                q.slice.push_back(it);
        if (q.slice.size() < 2)
            throw std::out_of_range("cylinder time window covers fewer than two slices");
        if (std::abs(times[q.slice.front()] - cyl.t_start()) > tol ||
            std::abs(times[q.slice.back()] - cyl.t0) > tol)
            throw std::out_of_range("cylinder time endpoints must coincide with sampled slices");
        q.wt.resize(q.slice.size());
        for (std::size_t k = 0; k < q.slice.size(); ++k) {
            const double tl = k == 0 ? times[q.slice[k]] : times[q.slice[k - 1]];
            const double tr2 =
                k + 1 == q.slice.size() ? times[q.slice[k]] : times[q.slice[k + 1]];
            q.wt[k] = 0.5 * (tr2 - tl);
        }
        const std::size_t nsize = g.size();
        for (std::size_t idx = 0; idx < nsize; ++idx) {
            const Vec3 d = g.node(idx) - cyl.x0;
            if (norm2(d) < cyl.r) q.inside.push_back(idx);
        }
        if (q.inside.empty())
            throw std::out_of_range("cylinder ball contains no grid nodes");
        return q;
    }

    double tspan() const {
        double s = 0.0;
        for (double w : wt) s += w;
        return s;
    }
};

enum class MeanMode { none, cylinder, per_slice };

/// ( averaged integral over Q of |f - mean|^p )^{1/p}, where |.| is the
/// Euclidean norm across components. Inner means are counted node averages
/// (exact for constants); the outer normalizer is the analytic |Q_r|.
inline double cylinder_lp(const TimeSeriesField& f, const CylinderQuad& q, double p_exp,
                          MeanMode mode) {
    const std::size_t M = q.slice.size();
    const std::size_t N = q.inside.size();
    const int comps = f.comps;
    std::vector<double> mean(comps, 0.0);
    if (mode == MeanMode::cylinder) {
        const double span = q.tspan();
        for (int c = 0; c < comps; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < M; ++k) {
                const double* s = f.slice_component(q.slice[k], c);
                double sl = 0.0;
                for (std::size_t i : q.inside) sl += s[i];
                acc += q.wt[k] * sl / static_cast<double>(N);
            }
            mean[c] = acc / span;
        }
    }
    double total = 0.0;
    std::vector<const double*> ptr(comps);
    for (std::size_t k = 0; k < M; ++k) {
        for (int c = 0; c < comps; ++c) ptr[c] = f.slice_component(q.slice[k], c);
        if (mode == MeanMode::per_slice) {
            for (int c = 0; c < comps; ++c) {
                double sl = 0.0;
                for (std::size_t i : q.inside) sl += ptr[c][i];
                mean[c] = sl / static_cast<double>(N);
            }
        }
        double sl = 0.0;
        for (std::size_t i : q.inside) {
            double a2 = 0.0;
            for (int c = 0; c < comps; ++c) {
                const double d = ptr[c][i] - mean[c];
                a2 += d * d;
            }
            sl += std::pow(a2, 0.5 * p_exp);
        }
        total += q.wt[k] * sl * q.cell;
    }
    return std::pow(total / q.volume, 1.0 / p_exp);
}

}  // namespace detail

struct YBreakdown {
    double velocity = 0.0;
    double deformation = 0.0;
    double pressure = 0.0;
    double total = 0.0;
};

/// Mean-subtracted scale-invariant cylinder functional: L^3 averages of the
/// velocity and deformation fluctuations plus r times the L^{3/2} average of
/// the pressure fluctuation about its per-slice ball mean.
inline YBreakdown epsilon_regularity_Y(const TimeSeriesField& v, const TimeSeriesField& H,
                                       const TimeSeriesField& p,
                                       const ParabolicCylinder& cyl) {
    if (v.comps != 3 || H.comps != 9 || p.comps != 1)
        throw std::invalid_argument("epsilon_regularity_Y: component counts must be 3/9/1");
    if (!v.grid.compatible(H.grid) || !v.grid.compatible(p.grid))
        throw std::invalid_argument("epsilon_regularity_Y: grids differ");
    const detail::CylinderQuad q = detail::CylinderQuad::make(v.grid, v.times, cyl);
    YBreakdown y;
    y.velocity = detail::cylinder_lp(v, q, 3.0, detail::MeanMode::cylinder);
    y.deformation = detail::cylinder_lp(H, q, 3.0, detail::MeanMode::cylinder);
    y.pressure = cyl.r * detail::cylinder_lp(p, q, 1.5, detail::MeanMode::per_slice);
    y.total = y.velocity + y.deformation + y.pressure;
    return y;
}

/// Left-hand side of the interior smallness condition: plain (not
/// mean-subtracted) cylinder averages, with the drift and coefficient fields
/// measured in L^m. Requires m > 5.
inline double smallness_condition(const TimeSeriesField& v, const TimeSeriesField& H,
                                  const TimeSeriesField& p, const TimeSeriesField& a,
                                  const TimeSeriesField& M, double m_exp,
                                  const ParabolicCylinder& cyl) {
    if (!(m_exp > 5.0))
        throw std::invalid_argument("smallness_condition: exponent must exceed 5");
    if (v.comps != 3 || H.comps != 9 || p.comps != 1 || a.comps != 3 || M.comps != 9)
        throw std::invalid_argument("smallness_condition: component counts must be 3/9/1/3/9");
    const detail::CylinderQuad q = detail::CylinderQuad::make(v.grid, v.times, cyl);
    double lhs = 0.0;
    lhs += detail::cylinder_lp(v, q, 3.0, detail::MeanMode::none);
    lhs += detail::cylinder_lp(H, q, 3.0, detail::MeanMode::none);
    lhs += detail::cylinder_lp(p, q, 1.5, detail::MeanMode::none);
    lhs += detail::cylinder_lp(a, q, m_exp, detail::MeanMode::none);
    lhs += detail::cylinder_lp(M, q, m_exp, detail::MeanMode::none);
    return lhs;
}

// ---------------------------------------------------------------------------
// Local energy balance
// ---------------------------------------------------------------------------

/// Smooth compactly supported space-time test function: a mollifier bump in
/// the squared radial offset times a mollifier bump in scaled time.
struct SpaceTimeBump {
    Vec3 center {0.0, 0.0, 0.0};
    double t_center = 0.0;
    double radius = 1.0;
    double t_radius = 1.0;

    static double shape(double s) {
        return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
    }
    static double shape_d(double s) {
        if (s >= 1.0) return 0.0;
        const double r = 1.0 - s;
        return -shape(s) / (r * r);
    }
    static double shape_dd(double s) {
        if (s >= 1.0) return 0.0;
        const double r = 1.0 - s;
        return shape(s) * (1.0 / (r * r * r * r) - 2.0 / (r * r * r));
    }

    double space(const Vec3& x) const {
        const Vec3 d = x - center;
        return shape(dot(d, d) / (radius * radius));
    }
    Vec3 space_grad(const Vec3& x) const {
        const Vec3 d = x - center;
        const double s = dot(d, d) / (radius * radius);
        return (2.0 / (radius * radius) * shape_d(s)) * d;
    }
    double space_lap(const Vec3& x) const {
        const Vec3 d = x - center;
        const double r2 = radius * radius;
        const double s = dot(d, d) / r2;
        return shape_d(s) * 6.0 / r2 + shape_dd(s) * 4.0 * dot(d, d) / (r2 * r2);
    }
    double time(double t) const {
        const double e = (t - t_center) / t_radius;
        return shape(e * e);
    }
    double time_d(double t) const {
        const double e = (t - t_center) / t_radius;
        return shape_d(e * e) * 2.0 * e / t_radius;
    }
};

struct LocalEnergyResult {
    double residual = 0.0;     // dissipation-side total minus flux-side total
    double dissipation = 0.0;  // 2 * integral of phi (|grad u|^2 + |grad F|^2)
    double relative = 0.0;
};

/// Signed residual of the local energy balance over the bump's support:
///   2 iint phi (|grad u|^2 + |grad F|^2)
///   - iint { (phi_t + lap phi)(|u|^2 + |F|^2)
///            - 2 sigma u_i d_a(phi) (F F^t)_{ia}
///            + [sigma(|u|^2 + |F|^2) + 2p] u . grad phi }.
/// Zero for smooth flows (up to quadrature); nonpositive for admissible weak
/// flows. Gradients are spectral per slice; trapezoid in time.
inline LocalEnergyResult local_energy_residual(const TimeSeriesField& u,
                                               const TimeSeriesField& F,
                                               const TimeSeriesField& p,
                                               const SpaceTimeBump& phi, double sigma,
                                               FourierWorkspace& ws) {
    if (u.comps != 3 || F.comps != 9 || p.comps != 1)
        throw std::invalid_argument("local_energy_residual: component counts must be 3/9/1");
    if (!u.grid.compatible(F.grid) || !u.grid.compatible(p.grid) ||
        !u.grid.compatible(ws.grid()))
        throw std::invalid_argument("local_energy_residual: grids differ");
    if (u.times.size() < 3 || u.times != F.times || u.times != p.times)
        throw std::invalid_argument("local_energy_residual: series times differ or too short");
    const GridSpec& g = u.grid;
    for (int a = 0; a < 3; ++a)
        if (std::abs(phi.center[a]) + phi.radius > g.half_width)
            throw std::invalid_argument("test function support violates the sampled box");
    const double teps = 1e-12 * (u.times.back() - u.times.front());
    if (phi.t_center - phi.t_radius < u.times.front() - teps ||
        phi.t_center + phi.t_radius > u.times.back() + teps)
        throw std::invalid_argument("test function support violates the sampled window");

    const std::size_t nsize = g.size();
    // Time-independent spatial factors.
    std::vector<double> psi(nsize), psilap(nsize);
    std::array<std::vector<double>, 3> psigrad;
    for (auto& c : psigrad) c.resize(nsize);
    for (std::size_t i = 0; i < nsize; ++i) {
        const Vec3 x = g.node(i);
        psi[i] = phi.space(x);
        psilap[i] = phi.space_lap(x);
        const Vec3 gr = phi.space_grad(x);
        psigrad[0][i] = gr[0];
        psigrad[1][i] = gr[1];
        psigrad[2][i] = gr[2];
    }

    const double cell = std::pow(g.h(), 3);
    const std::size_t M = u.times.size();
    std::vector<double> s_diss(M, 0.0), s_rhs(M, 0.0);
    std::vector<double> gx(nsize), gy(nsize), gz(nsize);

    for (std::size_t it = 0; it < M; ++it) {
        const double t = u.times[it];
        const double chi = phi.time(t);
        const double chid = phi.time_d(t);
        if (chi == 0.0 && chid == 0.0) continue;

        // phi-weighted dissipation, spectral gradients one component at a time
        double diss = 0.0;
        auto add_grad2 = [&](const double* comp) {
            Spectrum s = ws.forward(comp);
            std::array<Spectrum, 3> gs = ws.gradient(s);
            ws.backward(gs[0], gx.data());
            ws.backward(gs[1], gy.data());
            ws.backward(gs[2], gz.data());
            double acc = 0.0;
            for (std::size_t i = 0; i < nsize; ++i)
                acc += psi[i] * (gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]);
            diss += acc;
        };
        for (int c = 0; c < 3; ++c) add_grad2(u.slice_component(it, c));
        for (int c = 0; c < 9; ++c) add_grad2(F.slice_component(it, c));
        s_diss[it] = chi * diss * cell;

        const double* uc[3];
        const double* Fc[9];
        for (int c = 0; c < 3; ++c) uc[c] = u.slice_component(it, c);
        for (int c = 0; c < 9; ++c) Fc[c] = F.slice_component(it, c);
        const double* pc = p.slice_component(it, 0);
        double rhs = 0.0;
        for (std::size_t i = 0; i < nsize; ++i) {
            const double u2 = uc[0][i] * uc[0][i] + uc[1][i] * uc[1][i] + uc[2][i] * uc[2][i];
            double F2 = 0.0;
            for (int c = 0; c < 9; ++c) F2 += Fc[c][i] * Fc[c][i];
            const double phit = chid * psi[i];
            const double philap = chi * psilap[i];
            const double gphi[3] = {chi * psigrad[0][i], chi * psigrad[1][i],
                                    chi * psigrad[2][i]};
            double coupling = 0.0;  // u_i d_a(phi) (F F^t)_{ia}
            for (int a = 0; a < 3; ++a)
                for (int c = 0; c < 3; ++c) {
                    double ff = 0.0;
                    for (int l = 0; l < 3; ++l) ff += Fc[c + 3 * l][i] * Fc[a + 3 * l][i];
                    coupling += uc[c][i] * gphi[a] * ff;
                }
            const double ugphi =
                uc[0][i] * gphi[0] + uc[1][i] * gphi[1] + uc[2][i] * gphi[2];
            rhs += (phit + philap) * (u2 + F2) - 2.0 * sigma * coupling +
                   (sigma * (u2 + F2) + 2.0 * pc[i]) * ugphi;
        }
        s_rhs[it] = rhs * cell;
    }

    double diss_total = 0.0, rhs_total = 0.0;
    for (std::size_t it = 0; it < M; ++it) {
        const double tl = it == 0 ? u.times[it] : u.times[it - 1];
        const double tr = it + 1 == M ? u.times[it] : u.times[it + 1];
        const double w = 0.5 * (tr - tl);
        diss_total += w * s_diss[it];
        rhs_total += w * s_rhs[it];
    }
    LocalEnergyResult res;
    res.dissipation = 2.0 * diss_total;
    res.residual = res.dissipation - rhs_total;
    res.relative = res.residual / std::max(std::abs(res.dissipation), 1e-300);
    return res;
}

/// Worst relative defect of dE/dt = -dissipation over the interior rows of a
/// trajectory, with centered differencing in time.
inline double energy_identity_residual(const std::vector<TrajectoryRow>& rows) {
    if (rows.size() < 3)
        throw std::invalid_argument("energy_identity_residual: need at least three rows");
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
        const double dEdt =
            (rows[i + 1].energy - rows[i - 1].energy) / (rows[i + 1].t - rows[i - 1].t);
        const double rel =
            std::abs(dEdt + rows[i].dissipation) / std::max(rows[i].dissipation, 1e-300);
        worst = std::max(worst, rel);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Radial decay fit
// ---------------------------------------------------------------------------

struct DecayFit {
    double exponent = 0.0;
    double r2 = 0.0;
    double offset = 0.0;
    int shells = 0;
    bool pass = false;
};

/// Log-log least-squares fit of the radial shell sup of |v| against r over
/// shells of width 2h spanning [L/4, 3L/4]. Pass iff the fitted decay
/// exponent reaches 1 + gamma - 0.1. When `table` is given it receives the
/// populated (shell center, shell sup) pairs behind the fit.
inline DecayFit decay_exponent_fit(const VectorProfile& v, double gamma,
                                   std::vector<std::pair<double, double>>* table = nullptr) {
    const GridSpec& g = v.grid;
    const double h = g.h();
    const double r_lo = g.half_width / 4.0;
    const double r_hi = 3.0 * g.half_width / 4.0;
    const double width = 2.0 * h;
    const int nshell = static_cast<int>(std::floor((r_hi - r_lo) / width));
    std::vector<double> sup(nshell, 0.0);
    const std::size_t nsize = g.size();
    for (std::size_t i = 0; i < nsize; ++i) {
        const Vec3 x = g.node(i);
        const double r = norm2(x);
        if (r < r_lo || r >= r_lo + nshell * width) continue;
        const int s = static_cast<int>((r - r_lo) / width);
        if (s >= nshell) continue;  // rounding guard at the outer edge
        const Vec3 val = v.at(i);
        sup[s] = std::max(sup[s], norm2(val));
    }
    std::vector<double> lr, lv;
    if (table) table->clear();
    for (int s = 0; s < nshell; ++s) {
        if (sup[s] <= 0.0) continue;
        const double rc = r_lo + (s + 0.5) * width;
        if (table) table->emplace_back(rc, sup[s]);
        lr.push_back(std::log(rc));
        lv.push_back(std::log(sup[s]));
    }
    if (lr.size() < 3)
        throw std::invalid_argument("decay_exponent_fit: not enough populated shells");
    const std::size_t m = lr.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += lr[i];
        sy += lv[i];
        sxx += lr[i] * lr[i];
        sxy += lr[i] * lv[i];
        syy += lv[i] * lv[i];
    }
    const double denom = m * sxx - sx * sx;
    const double slope = (m * sxy - sx * sy) / denom;
    DecayFit fit;
    fit.exponent = -slope;
    fit.offset = (sy - slope * sx) / m;
    const double ss_tot = syy - sy * sy / m;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double e = lv[i] - (fit.offset + slope * lr[i]);
        ss_res += e * e;
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.shells = static_cast<int>(m);
    fit.pass = fit.exponent >= 1.0 + gamma - 0.1;
    return fit;
}

// ---------------------------------------------------------------------------
// Self-similar reconstruction
// ---------------------------------------------------------------------------

/// Point evaluator for u(x,t) = t^{-1/2} (U0 + v)(x/sqrt t) and the matching
/// deformation columns. The background is evaluated exactly from its
/// spherical trace when one is supplied, otherwise interpolated from the
/// grid. Borrows every field passed to make(); keep them alive.
struct SelfSimilarField {
    FarFieldSampler corr_u;
    std::array<FarFieldSampler, 3> corr_F;
    bool exact_background = false;
    const SphericalTrace* tr_u = nullptr;
    const SphericalTrace* tr_F = nullptr;
    FarFieldSampler bg_u;
    std::array<FarFieldSampler, 3> bg_F;

    static SelfSimilarField make(const VectorProfile& v, const TensorProfile& H,
                                 const VectorProfile& U0, const TensorProfile& G0) {
        SelfSimilarField f = corrections_only(v, H);
        f.bg_u = FarFieldSampler::make(U0.grid, U0.component(0), U0.component(1),
                                       U0.component(2), 1.0);
        for (int j = 0; j < 3; ++j)
            f.bg_F[j] = FarFieldSampler::make(G0.grid, G0.component(0 + 3 * j),
                                              G0.component(1 + 3 * j), G0.component(2 + 3 * j),
                                              1.0);
        return f;
    }

    static SelfSimilarField make(const VectorProfile& v, const TensorProfile& H,
                                 const SphericalTrace& tru, const SphericalTrace& trF) {
        SelfSimilarField f = corrections_only(v, H);
        f.exact_background = true;
        f.tr_u = &tru;
        f.tr_F = &trF;
        return f;
    }

    void eval(const Vec3& x, double t, Vec3& u_out, Mat3& F_out) const {
        if (!(t > 0.0)) throw std::invalid_argument("reconstruction time must be positive");
        const double s = 1.0 / std::sqrt(t);
        const Vec3 y = s * x;
        Vec3 u = corr_u.eval(y);
        Mat3 F {};
        for (int j = 0; j < 3; ++j) {
            const Vec3 col = corr_F[j].eval(y);
            for (int i = 0; i < 3; ++i) F[i + 3 * j] = col[i];
        }
        if (exact_background) {
            const std::vector<double> bu = caloric_point(*tr_u, y);
            const std::vector<double> bF = caloric_point(*tr_F, y);
            for (int i = 0; i < 3; ++i) u[i] += bu[i];
            for (int c = 0; c < 9; ++c) F[c] += bF[c];
        } else {
            const Vec3 bu = bg_u.eval(y);
            for (int i = 0; i < 3; ++i) u[i] += bu[i];
            for (int j = 0; j < 3; ++j) {
                const Vec3 col = bg_F[j].eval(y);
                for (int i = 0; i < 3; ++i) F[i + 3 * j] += col[i];
            }
        }
        u_out = s * u;
        for (int c = 0; c < 9; ++c) F_out[c] = s * F[c];
    }

  private:
    static SelfSimilarField corrections_only(const VectorProfile& v, const TensorProfile& H) {
        if (!v.grid.compatible(H.grid))
            throw std::invalid_argument("reconstruction profiles do not share one grid");
        check_gamma(v.gamma);
        SelfSimilarField f;
        const double power = 1.0 + v.gamma;
        f.corr_u = FarFieldSampler::make(v.grid, v.component(0), v.component(1),
                                         v.component(2), power);
        for (int j = 0; j < 3; ++j)
            f.corr_F[j] = FarFieldSampler::make(H.grid, H.component(0 + 3 * j),
                                                H.component(1 + 3 * j),
                                                H.component(2 + 3 * j), power);
        return f;
    }
};

inline void self_similar_reconstruct(const VectorProfile& v, const TensorProfile& H,
                                     const VectorProfile& U0, const TensorProfile& G0,
                                     const Vec3& x, double t, Vec3& u_out, Mat3& F_out) {
    SelfSimilarField::make(v, H, U0, G0).eval(x, t, u_out, F_out);
}

/// Whole-slice reconstruction onto the nodes of out.grid at time t. The
/// background is re-evaluated exactly on the scaled node set (the scaled
/// grid is again a valid cell-centered grid); the corrections are spectrally
/// upsampled and then interpolated, with a homogeneous power tail beyond the
/// trusted radius of their own box.
inline void self_similar_slice(const VectorProfile& v, const TensorProfile& H,
                               const SphericalTrace& tr_u, const SphericalTrace& tr_F,
                               double t, VectorProfile& u_out, TensorProfile& F_out,
                               int upsample = 4, int workers = 1) {
    if (!(t > 0.0)) throw std::invalid_argument("reconstruction time must be positive");
    if (!u_out.grid.compatible(F_out.grid))
        throw std::invalid_argument("output profiles do not share one grid");
    if (!v.grid.compatible(H.grid))
        throw std::invalid_argument("correction profiles do not share one grid");
    if (upsample < 1) throw std::invalid_argument("upsample factor must be at least 1");
    check_gamma(v.gamma);
    const GridSpec& eg = u_out.grid;
    const double s = 1.0 / std::sqrt(t);

    GridSpec scaled = eg;
    scaled.half_width = eg.half_width * s;
    scaled.mask_radius = -1.0;
    const VectorProfile bg_u = caloric_vector(tr_u, scaled, 1.0, workers);
    const TensorProfile bg_F = caloric_tensor(tr_F, scaled, 1.0, workers);
    for (int c = 0; c < 3; ++c)
        std::copy(bg_u.component(c), bg_u.component(c) + eg.size(), u_out.component(c));
    for (int c = 0; c < 9; ++c)
        std::copy(bg_F.component(c), bg_F.component(c) + eg.size(), F_out.component(c));

    const GridSpec& cg = v.grid;
    GridSpec fgrid = cg;
    fgrid.n = cg.n * upsample;
    const double power = 1.0 + v.gamma;
    const double r_trust = std::min(0.85 * cg.half_width, cg.half_width - 3.0 * cg.h());
    const double band = 2.0 * cg.h();

    // Scaled evaluation points, fixed across components.
    const std::size_t esize = eg.size();
    std::vector<Vec3> pts(esize);
    for (std::size_t i = 0; i < esize; ++i) pts[i] = s * eg.node(i);

    std::vector<double> fine(fgrid.size());
    std::vector<double> vals(esize);
    FourierWorkspace cws(cg);
    std::unique_ptr<FourierWorkspace> fws;
    if (upsample > 1) fws = std::make_unique<FourierWorkspace>(fgrid);

    auto eval_component = [&](const double* comp, double* out) {
        const double* samples = comp;
        GridSpec sgrid = cg;
        if (upsample > 1) {
            spectral_upsample(cws, *fws, comp, fine.data());
            samples = fine.data();
            sgrid = fgrid;
        }
        TricubicField tf {sgrid, samples};
        parallel_for(esize, workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Vec3& y = pts[i];
                const double r = norm2(y);
                if (r <= r_trust - band) {
                    out[i] = tf.eval(y);
                    continue;
                }
                const Vec3 anchor = (r_trust / std::max(r, 1e-300)) * y;
                const double tail = std::pow(r_trust / r, power) * tf.eval(anchor);
                if (r >= r_trust) {
                    out[i] = tail;
                    continue;
                }
                const double tt = (r - (r_trust - band)) / band;
                const double sm = tt * tt * (3.0 - 2.0 * tt);
                out[i] = (1.0 - sm) * tf.eval(y) + sm * tail;
            }
        });
    };

    for (int c = 0; c < 3; ++c) {
        eval_component(v.component(c), vals.data());
        double* dst = u_out.component(c);
        for (std::size_t i = 0; i < esize; ++i) dst[i] += vals[i];
    }
    for (int c = 0; c < 9; ++c) {
        eval_component(H.component(c), vals.data());
        double* dst = F_out.component(c);
        for (std::size_t i = 0; i < esize; ++i) dst[i] += vals[i];
    }


    for (std::size_t i = 0; i < eg.size(); ++i) {
        for (int c = 0; c < 3; ++c) u_out.component(c)[i] *= s;
        for (int c = 0; c < 9; ++c) F_out.component(c)[i] *= s;
    }
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct DiagnosticsReport {
    ProfileResidualReport profile;
    double energy_residual = 0.0;
    std::vector<double> y_values;
    double smallness_lhs = 0.0;
    DecayFit decay;
    double self_similarity_error = 0.0;

    std::vector<std::pair<std::string, double>> key_values() const {
        std::vector<std::pair<std::string, double>> kv;
        kv.emplace_back("profile_momentum_max", profile.momentum.max_abs);
        kv.emplace_back("profile_momentum_l2", profile.momentum.l2);
        kv.emplace_back("profile_deformation_max", profile.deformation.max_abs);
        kv.emplace_back("profile_deformation_l2", profile.deformation.l2);
        kv.emplace_back("profile_divergence_max", profile.divergence.max_abs);
        kv.emplace_back("profile_divergence_l2", profile.divergence.l2);
        kv.emplace_back("energy_residual", energy_residual);
        for (std::size_t i = 0; i < y_values.size(); ++i)
            kv.emplace_back("y_cylinder_" + std::to_string(i), y_values[i]);
        kv.emplace_back("smallness_lhs", smallness_lhs);
        kv.emplace_back("decay_exponent", decay.exponent);
        kv.emplace_back("decay_r2", decay.r2);
        kv.emplace_back("decay_pass", decay.pass ? 1.0 : 0.0);
        kv.emplace_back("self_similarity_error", self_similarity_error);
        return kv;
    }

    bool all_finite() const {
        for (const auto& [k, val] : key_values())
            if (!std::isfinite(val)) return false;
        return true;
    }
};

}  // namespace ssvf

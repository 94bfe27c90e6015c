#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"
#include "ssvf/fourier.hpp"
#include "ssvf/grid.hpp"
#include "ssvf/interp.hpp"
#include "ssvf/parallel.hpp"
#include "ssvf/profile.hpp"
#include "ssvf/quadrature.hpp"
#include "ssvf/stencil.hpp"

namespace ssvf {

/// Divergence contracting the first tensor index, g_i = d_a f_{ai},
/// by 6th-order finite differences (stencils shift at the faces).
inline VectorProfile fd6_divergence(const TensorProfile& f, int workers = 1) {
    VectorProfile g = VectorProfile::zeros(f.grid, f.gamma);
    std::vector<double> part(f.size());
    for (int i = 0; i < 3; ++i) {
        double* out = g.component(i);
        for (int a = 0; a < 3; ++a) {
            fd6_partial(f.component(a, i), f.grid, a, 1, part.data(), workers);
            for (std::size_t idx = 0; idx < part.size(); ++idx) out[idx] += part[idx];
        }
    }
    return g;
}

namespace detail {

/// Cumulative radial moments of a vector field: M_i(R) = sum over |y| < R of
/// g_i h^3 and D_ia(R) likewise with a factor y_a. Grid sums are trusted up
/// to r_trust; beyond it the field is modelled by its r^-3 tail, which gives
/// a log-clamped monopole and a linearly growing dipole.
struct RadialMoments {
    double bin_width = 0.0;
    double r_trust = 0.0;
    int nbins = 0;
    // prefix[c][k] = moment component c accumulated over bins 0..k-1
    std::array<std::vector<double>, 3> mono;
    std::array<std::array<std::vector<double>, 3>, 3> dip;  // dip[i][a]
    Vec3 mono_tail_coeff{0.0, 0.0, 0.0};
    Mat3 dip_tail_slope{};  // entry (i,a) at i + 3a

    static RadialMoments build(const VectorProfile& g, double r_trust) {
        const GridSpec& grid = g.grid;
        RadialMoments rm;
        rm.r_trust = r_trust;
        rm.bin_width = grid.h() / 2.0;
        rm.nbins = static_cast<int>(std::ceil(r_trust / rm.bin_width)) + 1;
        for (int i = 0; i < 3; ++i) {
            rm.mono[i].assign(rm.nbins + 1, 0.0);
            for (int a = 0; a < 3; ++a) rm.dip[i][a].assign(rm.nbins + 1, 0.0);
        }
        const double cell = std::pow(grid.h(), 3);
        const std::size_t n = grid.size();
        for (std::size_t idx = 0; idx < n; ++idx) {
            const Vec3 x = grid.node(idx);
            const double r = std::sqrt(dot(x, x));
            if (r >= r_trust) continue;
            const int b = static_cast<int>(r / rm.bin_width);
            const Vec3 v = g.at(idx);
            for (int i = 0; i < 3; ++i) {
                rm.mono[i][b + 1] += cell * v[i];
                for (int a = 0; a < 3; ++a) rm.dip[i][a][b + 1] += cell * v[i] * x[a];
            }
        }
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < rm.nbins; ++k) rm.mono[i][k + 1] += rm.mono[i][k];
            for (int a = 0; a < 3; ++a)
                for (int k = 0; k < rm.nbins; ++k) rm.dip[i][a][k + 1] += rm.dip[i][a][k];
        }

        // Tail coefficients from the sphere of radius r_trust.
        const S2Quadrature sph = S2Quadrature::make(16, 32);
        std::array<TricubicField, 3> tri{TricubicField{grid, g.component(0)},
                                         TricubicField{grid, g.component(1)},
                                         TricubicField{grid, g.component(2)}};
        const double r3 = std::pow(r_trust, 3);
        for (std::size_t q = 0; q < sph.size(); ++q) {
            const Vec3& th = sph.node[q];
            const Vec3 y = r_trust * th;
            for (int i = 0; i < 3; ++i) {
                const double gv = tri[i].eval(y);
                rm.mono_tail_coeff[i] += sph.weight[q] * r3 * gv;
                for (int a = 0; a < 3; ++a)
                    rm.dip_tail_slope[i + 3 * a] += sph.weight[q] * r3 * th[a] * gv;
            }
        }
        return rm;
    }

    double monopole(int i, double R) const {
        if (R <= 0.0) return 0.0;
        if (R >= r_trust)
            return mono[i][nbins] + mono_tail_coeff[i] * std::log(R / r_trust);
        const int b = std::min(static_cast<int>(R / bin_width), nbins - 1);
        return mono[i][b + 1];
    }
    double dipole(int i, int a, double R) const {
        if (R <= 0.0) return 0.0;
        if (R >= r_trust)
            return dip[i][a][nbins] + dip_tail_slope[i + 3 * a] * (R - r_trust);
        const int b = std::min(static_cast<int>(R / bin_width), nbins - 1);
        return dip[i][a][b + 1];
    }
};

}  // namespace detail

struct PhiOptions {
    DuhamelSchedule schedule = DuhamelSchedule::gauss(64);
    bool project = true;   // Leray at the end
    bool dealias = true;
    int workers = 1;
    double blob_radius_cells = 3.0;
    double tail_power = 3.0;  // decay exponent of the source divergence
};

struct PhiResult {
    VectorProfile v;
    double pre_projection_div = 0.0;  // max-abs divergence before Leray
};

/// Heat-history integral of a self-similarly scaled source tensor f:
///   v(x) = int_0^1 e^{(1-s) Lap} P div( s^{-1} f(./sqrt(s)) ) ds
/// evaluated at unit time. Written through g = div f the slice at parameter
/// s is s^{-3/2} g(./sqrt(s)). The integral runs in sigma = sqrt(s) with a
/// Gauss rule, where the slice is analytic down to sigma = 0.
///
/// Each slice is sampled onto the grid with a power-tail extension of g
/// beyond its trusted radius; the part inside the blob radius rho (a few
/// cells) collapses below grid scale as s -> 0, so it is replaced by a
/// band-limited Gaussian bump carrying the matching monopole and dipole:
///   m = M_g(rho/sqrt(s)),  d = sqrt(s) D_g(rho/sqrt(s)).
/// Naive node sampling of that region would alias catastrophically.
inline PhiResult phi_profile(const TensorProfile& f, FourierWorkspace& ws,
                             const PhiOptions& opt) {
    if (!f.grid.compatible(ws.grid()))
        throw std::invalid_argument("phi_profile: tensor grid does not match workspace");
    const GridSpec& grid = f.grid;
    const std::size_t n = grid.size();
    const double h = grid.h();
    const double rho = opt.blob_radius_cells * h;

    const VectorProfile g = fd6_divergence(f, opt.workers);
    FarFieldSampler sampler = FarFieldSampler::make(grid, g.component(0), g.component(1),
                                                    g.component(2), opt.tail_power);
    const detail::RadialMoments moments = detail::RadialMoments::build(g, sampler.r_trust);

    std::array<Spectrum, 3> acc{Spectrum(ws.spectral_size()), Spectrum(ws.spectral_size()),
                                Spectrum(ws.spectral_size())};
    VectorProfile slice = VectorProfile::zeros(grid, f.gamma);

    for (int j = 0; j < opt.schedule.count(); ++j) {
        const double sig = opt.schedule.sigma[j];
        const double s = sig * sig;
        const double inv_pow = 1.0 / (s * sig);  // s^{-3/2}
        parallel_for(n, opt.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t idx = begin; idx < end; ++idx) {
                const Vec3 x = grid.node(idx);
                if (dot(x, x) < rho * rho) {
                    slice.set(idx, {0.0, 0.0, 0.0});
                    continue;
                }
                const Vec3 val = sampler.eval((1.0 / sig) * x);
                slice.set(idx, inv_pow * val);
            }
        });

        std::array<Spectrum, 3> sl = ws.forward_vector(slice);
        const double R = rho / sig;
        for (int i = 0; i < 3; ++i) {
            const Vec3 dip{sig * moments.dipole(i, 0, R), sig * moments.dipole(i, 1, R),
                           sig * moments.dipole(i, 2, R)};
            ws.add_centered_blob(sl[i], moments.monopole(i, R), dip, rho / 2.0);
        }

        const double wj = opt.schedule.weight[j] * 2.0 * sig;
        const double tau = 1.0 - s;
        ws.for_each_mode_full([&](std::size_t idx, double kx, double ky, double kz) {
            const double fac = wj * std::exp(-tau * (kx * kx + ky * ky + kz * kz));
            acc[0][idx] += fac * sl[0][idx];
            acc[1][idx] += fac * sl[1][idx];
            acc[2][idx] += fac * sl[2][idx];
        });
    }

    PhiResult res;
    res.v = VectorProfile::zeros(grid, 1.0);
    {
        Spectrum div = ws.divergence(acc);
        std::vector<double> dreal(n);
        ws.backward(div, dreal.data());
        for (double d : dreal) res.pre_projection_div = std::max(res.pre_projection_div, std::abs(d));
    }
    if (opt.project) ws.leray_project(acc);
    if (opt.dealias) ws.dealias(acc);
    ws.backward_vector(acc, res.v);
    return res;
}

/// Same integral evaluated twice, at the requested node count and at half of
/// it; disagreement beyond tol (weighted sup norm, relative to the result
/// scale) throws QuadratureError.
inline PhiResult phi_profile_validated(const TensorProfile& f, FourierWorkspace& ws,
                                       const PhiOptions& opt, double tol = 1e-6,
                                       double* deviation_out = nullptr) {
    PhiResult full = phi_profile(f, ws, opt);
    PhiOptions half = opt;
    half.schedule = DuhamelSchedule::gauss(std::max(2, opt.schedule.count() / 2));
    PhiResult coarse = phi_profile(f, ws, half);
    VectorProfile diff = full.v;
    for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= coarse.v.data[i];
    const double scale = std::max(x_gamma_norm(full.v, opt.workers), 1e-30);
    const double dev = x_gamma_norm(diff, opt.workers) / scale;
    if (deviation_out) *deviation_out = dev;
    if (dev > tol)
        throw QuadratureError("duhamel schedule not converged: halving moved the result by " +
                              std::to_string(dev));
    return full;
}

}  // namespace ssvf

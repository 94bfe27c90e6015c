#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"
#include "ssvf/grid.hpp"
#include "ssvf/parallel.hpp"
#include "ssvf/profile.hpp"
#include "ssvf/quadrature.hpp"
#include "ssvf/trace.hpp"

namespace ssvf {

/// Unit-time heat evolution of (-1)-homogeneous data trace(x/|x|)/|x|,
/// reduced to a sphere integral: the radial integral has the closed form
///   int_0^inf r exp(-(r-b)^2/4) dr = sqrt(pi) b (1 + erf(b/2)) + 2 exp(-b^2/4),
/// so with b = x.theta the kernel against the trace density is
///   K = exp(-(|x|^2 - b^2)/4) sqrt(pi) b (1 + erf(b/2)) + 2 exp(-|x|^2/4).
/// Both terms stay bounded since |b| <= |x|.
inline double caloric_kernel(double x2, double b) {
    const double t1 = std::exp(-(x2 - b * b) / 4.0) * std::sqrt(M_PI) * b *
                      (1.0 + std::erf(b / 2.0));
    return t1 + 2.0 * std::exp(-x2 / 4.0);
}

struct CaloricJob {
    const SphericalTrace* trace = nullptr;
    double* out = nullptr;  // comps * grid.size(), component-major
};

/// Evaluate the heat-evolved profiles for several traces in one sweep.
/// All traces must share the same sphere rule so the kernel is computed once
/// per (grid node, direction) pair and reused across every component.
inline void caloric_batch(const std::vector<CaloricJob>& jobs, const GridSpec& g,
                          int workers = 1) {
    if (jobs.empty()) return;
    const S2Quadrature& rule = jobs[0].trace->rule;
    int total_comps = 0;
    for (const CaloricJob& j : jobs) {
        if (j.trace->rule.size() != rule.size() ||
            j.trace->rule.n_polar != rule.n_polar)
            throw std::invalid_argument("caloric batch traces must share one sphere rule");
        total_comps += j.trace->comps;
    }
    const std::size_t nq = rule.size();
    const std::size_t nx = g.size();
    const double norm = std::pow(4.0 * M_PI, -1.5);

    // Weighted trace values, node-major: row q holds all components.
    std::vector<double> vals(nq * static_cast<std::size_t>(total_comps));
    {
        int c0 = 0;
        for (const CaloricJob& j : jobs) {
            for (int c = 0; c < j.trace->comps; ++c)
                for (std::size_t q = 0; q < nq; ++q)
                    vals[q * total_comps + c0 + c] =
                        norm * rule.weight[q] * j.trace->value(c, q);
            c0 += j.trace->comps;
        }
    }

    parallel_for(nx, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(total_comps);
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 x = g.node(i);
            const double x2 = dot(x, x);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t q = 0; q < nq; ++q) {
                const Vec3& th = rule.node[q];
                const double K = caloric_kernel(x2, dot(x, th));
                const double* row = &vals[q * total_comps];
                for (int c = 0; c < total_comps; ++c) acc[c] += K * row[c];
            }
            int c0 = 0;
            for (const CaloricJob& j : jobs) {
                for (int c = 0; c < j.trace->comps; ++c)
                    j.out[static_cast<std::size_t>(c) * nx + i] = acc[c0 + c];
                c0 += j.trace->comps;
            }
        }
    });
}

inline VectorProfile caloric_vector(const SphericalTrace& tr, const GridSpec& g,
                                    double gamma_weight, int workers = 1) {
    if (tr.comps != 3) throw std::invalid_argument("caloric_vector: vector trace expected");
    VectorProfile out = VectorProfile::zeros(g, gamma_weight);
    caloric_batch({CaloricJob{&tr, out.data.data()}}, g, workers);
    return out;
}

inline TensorProfile caloric_tensor(const SphericalTrace& tr, const GridSpec& g,
                                    double gamma_weight, int workers = 1) {
    if (tr.comps != 9) throw std::invalid_argument("caloric_tensor: matrix trace expected");
    TensorProfile out = TensorProfile::zeros(g, gamma_weight);
    caloric_batch({CaloricJob{&tr, out.data.data()}}, g, workers);
    return out;
}

/// Velocity and deformation profiles in one shared-kernel sweep.
inline std::pair<VectorProfile, TensorProfile> caloric_pair(const SphericalTrace& tr_u,
                                                            const SphericalTrace& tr_F,
                                                            const GridSpec& g,
                                                            double gamma_weight,
                                                            int workers = 1) {
    VectorProfile u = VectorProfile::zeros(g, gamma_weight);
    TensorProfile F = TensorProfile::zeros(g, gamma_weight);
    caloric_batch({CaloricJob{&tr_u, u.data.data()}, CaloricJob{&tr_F, F.data.data()}}, g,
                  workers);
    return {std::move(u), std::move(F)};
}

/// Point evaluation (all components of one trace) at an arbitrary x.
inline std::vector<double> caloric_point(const SphericalTrace& tr, const Vec3& x) {
    const S2Quadrature& rule = tr.rule;
    const double norm = std::pow(4.0 * M_PI, -1.5);
    std::vector<double> acc(tr.comps, 0.0);
    const double x2 = dot(x, x);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const double K = norm * rule.weight[q] * caloric_kernel(x2, dot(x, rule.node[q]));
        for (int c = 0; c < tr.comps; ++c) acc[c] += K * tr.value(c, q);
    }
    return acc;
}

struct CaloricValidation {
    double max_abs_diff = 0.0;
    Vec3 worst_point{0.0, 0.0, 0.0};
    double tolerance = 1e-4;
    bool passed = false;
};

/// Sphere-rule convergence check: re-evaluate the profile at probe points
/// with a doubled rule built from the exact trace evaluator, and report the
/// worst disagreement inside the inscribed ball. Throws QuadratureError when
/// the refinement moves the answer by more than tol.
inline CaloricValidation caloric_validate(
    const std::function<void(const Vec3&, double*)>& evaluator, int comps,
    const S2Quadrature& base_rule, const GridSpec& g, double tol = 1e-4,
    int probe_stride = 8, int workers = 1) {
    SphericalTrace base = SphericalTrace::make(base_rule, comps);
    const S2Quadrature fine_rule =
        S2Quadrature::make(2 * base_rule.n_polar, 2 * base_rule.n_azimuth);
    SphericalTrace fine = SphericalTrace::make(fine_rule, comps);
    std::vector<double> buf(comps);
    for (std::size_t q = 0; q < base_rule.size(); ++q) {
        evaluator(base_rule.node[q], buf.data());
        for (int c = 0; c < comps; ++c) base.value(c, q) = buf[c];
    }
    for (std::size_t q = 0; q < fine_rule.size(); ++q) {
        evaluator(fine_rule.node[q], buf.data());
        for (int c = 0; c < comps; ++c) fine.value(c, q) = buf[c];
    }

    std::vector<Vec3> probes;
    for (int k = probe_stride / 2; k < g.n; k += probe_stride)
        for (int j = probe_stride / 2; j < g.n; j += probe_stride)
            for (int i = probe_stride / 2; i < g.n; i += probe_stride) {
                const Vec3 x{g.coord(i), g.coord(j), g.coord(k)};
                if (dot(x, x) <= g.half_width * g.half_width) probes.push_back(x);
            }

    std::vector<double> diffs(probes.size(), 0.0);
    parallel_for(probes.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const std::vector<double> a = caloric_point(base, probes[p]);
            const std::vector<double> b = caloric_point(fine, probes[p]);
            double d = 0.0;
            for (int c = 0; c < comps; ++c) d = std::max(d, std::abs(a[c] - b[c]));
            diffs[p] = d;
        }
    });
    CaloricValidation v;
    v.tolerance = tol;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        if (diffs[p] > v.max_abs_diff) {
            v.max_abs_diff = diffs[p];
            v.worst_point = probes[p];
        }
    }
    v.passed = v.max_abs_diff <= tol;
    if (!v.passed)
        throw QuadratureError("sphere rule not converged: refinement moved a profile value by " +
                              std::to_string(v.max_abs_diff));
    return v;
}

}  // namespace ssvf

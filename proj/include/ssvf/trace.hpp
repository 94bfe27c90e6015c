#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"
#include "ssvf/grid.hpp"
#include "ssvf/parallel.hpp"
#include "ssvf/profile.hpp"
#include "ssvf/quadrature.hpp"

namespace ssvf {

/// Field on the unit sphere sampled at the nodes of an S2Quadrature,
/// component-major. comps is 3 for a vector trace, 9 for a matrix trace
/// (entry (a,b) at slot a + 3b). Off-node directions are reached through a
/// separable 4-point Lagrange interpolant: periodic in azimuth, and in the
/// polar angle with virtual nodes reflected across each pole, where the
/// reflected ring is read at azimuth + pi.
struct SphericalTrace {
    S2Quadrature rule;
    int comps = 3;
    std::vector<double> data;
    std::vector<double> theta_asc;  // acos(mu) re-ordered ascending

    static SphericalTrace make(const S2Quadrature& rule, int comps) {
        if (comps != 3 && comps != 9)
            throw std::invalid_argument("trace comps must be 3 or 9");
        SphericalTrace t;
        t.rule = rule;
        t.comps = comps;
        t.data.assign(static_cast<std::size_t>(comps) * rule.size(), 0.0);
        const int P = rule.n_polar;
        t.theta_asc.resize(P);
        for (int p = 0; p < P; ++p) t.theta_asc[p] = std::acos(rule.mu[P - 1 - p]);
        return t;
    }

    std::size_t nodes() const { return rule.size(); }
    double value(int c, std::size_t node) const {
        return data[static_cast<std::size_t>(c) * nodes() + node];
    }
    double& value(int c, std::size_t node) {
        return data[static_cast<std::size_t>(c) * nodes() + node];
    }
    Vec3 vec(std::size_t node) const {
        return {value(0, node), value(1, node), value(2, node)};
    }
    Mat3 mat(std::size_t node) const {
        Mat3 m;
        for (int c = 0; c < 9; ++c) m[c] = value(c, node);
        return m;
    }

    void scale(double s) {
        for (double& v : data) v *= s;
    }

    /// Largest pointwise magnitude over the quadrature nodes (Euclidean for
    /// vector traces, Frobenius for matrix traces).
    double sup() const {
        double best = 0.0;
        const std::size_t n = nodes();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int c = 0; c < comps; ++c) {
                const double v = value(c, i);
                s += v * v;
            }
            best = std::max(best, std::sqrt(s));
        }
        return best;
    }

    /// Interpolate every component at an arbitrary unit direction.
    void eval(const Vec3& dir, double* out) const {
        const int P = rule.n_polar;
        const double z = std::clamp(dir[2], -1.0, 1.0);
        const double theta = std::acos(z);
        double phi = std::atan2(dir[1], dir[0]);
        if (phi < 0.0) phi += 2.0 * M_PI;

        const auto it =
            std::lower_bound(theta_asc.begin(), theta_asc.end(), theta);
        int pe0 = static_cast<int>(it - theta_asc.begin()) - 2;
        pe0 = std::clamp(pe0, -2, P - 2);

        double tn[4];
        double ring[4][9];
        for (int s = 0; s < 4; ++s) {
            const int pe = pe0 + s;
            int asc;
            double ring_phi = phi;
            if (pe < 0) {
                asc = -1 - pe;
                tn[s] = -theta_asc[asc];
                ring_phi = phi + M_PI;
            } else if (pe >= P) {
                asc = 2 * P - 1 - pe;
                tn[s] = 2.0 * M_PI - theta_asc[asc];
                ring_phi = phi + M_PI;
            } else {
                asc = pe;
                tn[s] = theta_asc[asc];
            }
            const int polar = P - 1 - asc;  // rule.mu index for this ring
            azimuth_eval(polar, ring_phi, ring[s]);
        }

        for (int c = 0; c < comps; ++c) {
            double acc = 0.0;
            for (int s = 0; s < 4; ++s) {
                double w = 1.0;
                for (int r = 0; r < 4; ++r) {
                    if (r == s) continue;
                    w *= (theta - tn[r]) / (tn[s] - tn[r]);
                }
                acc += w * ring[s][c];
            }
            out[c] = acc;
        }
    }

    Vec3 eval_vec(const Vec3& dir) const {
        double out[9];
        eval(dir, out);
        return {out[0], out[1], out[2]};
    }
    Mat3 eval_mat(const Vec3& dir) const {
        Mat3 m;
        eval(dir, m.data());
        return m;
    }

  private:
    void azimuth_eval(int polar, double phi, double* out) const {
        const int A = rule.n_azimuth;
        const double dphi = 2.0 * M_PI / A;
        const double u = phi / dphi - 0.5;
        const double fb = std::floor(u);
        const int b = static_cast<int>(fb);
        const double xr = u - fb;
        // Lagrange weights on local equispaced nodes -1, 0, 1, 2.
        const double w0 = -xr * (xr - 1.0) * (xr - 2.0) / 6.0;
        const double w1 = (xr + 1.0) * (xr - 1.0) * (xr - 2.0) / 2.0;
        const double w2 = -(xr + 1.0) * xr * (xr - 2.0) / 2.0;
        const double w3 = (xr + 1.0) * xr * (xr - 1.0) / 6.0;
        const auto wrap = [A](int a) { return ((a % A) + A) % A; };
        const std::size_t i0 = rule.index(polar, wrap(b - 1));
        const std::size_t i1 = rule.index(polar, wrap(b));
        const std::size_t i2 = rule.index(polar, wrap(b + 1));
        const std::size_t i3 = rule.index(polar, wrap(b + 2));
        for (int c = 0; c < comps; ++c) {
            out[c] = w0 * value(c, i0) + w1 * value(c, i1) + w2 * value(c, i2) +
                     w3 * value(c, i3);
        }
    }
};

/// Curl by 5-point central differences. Intended for smooth closed-form
/// potentials; rejects stencils that touch a singularity.
template <class F>
Vec3 curl_central5(F&& A, const Vec3& x, double step = 1e-3) {
    // d[j][b] = partial_j A_b
    double d[3][3];
    for (int j = 0; j < 3; ++j) {
        Vec3 e{0.0, 0.0, 0.0};
        e[j] = step;
        const Vec3 fm2 = A(x - 2.0 * e), fm1 = A(x - e);
        const Vec3 fp1 = A(x + e), fp2 = A(x + 2.0 * e);
        for (int b = 0; b < 3; ++b) {
            d[j][b] =
                (fm2[b] - 8.0 * fm1[b] + 8.0 * fp1[b] - fp2[b]) / (12.0 * step);
            if (!std::isfinite(d[j][b]))
                throw SsvfError("potential derivative is not finite near the unit sphere");
        }
    }
    return {d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]};
}

/// Sample the (-1)-homogeneous extension trace(x/|x|)/|x| of a vector trace
/// onto a grid. Nodes inside the mask radius are zeroed and flagged.
inline VectorProfile sample_trace(const SphericalTrace& tr, const GridSpec& g,
                                  double gamma_weight, int workers = 1) {
    if (tr.comps != 3)
        throw std::invalid_argument("sample_trace: vector trace expected");
    VectorProfile out = VectorProfile::zeros(g, gamma_weight);
    out.has_mask = true;
    const std::size_t n = g.size();
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 x = g.node(i);
            if (g.masked(x)) continue;
            const double r = std::sqrt(dot(x, x));
            const Vec3 w = tr.eval_vec((1.0 / r) * x);
            out.set(i, (1.0 / r) * w);
        }
    });
    return out;
}

/// Matrix version of the (-1)-homogeneous sampling.
inline TensorProfile sample_trace_tensor(const SphericalTrace& tr,
                                         const GridSpec& g, double gamma_weight,
                                         int workers = 1) {
    if (tr.comps != 9)
        throw std::invalid_argument("sample_trace_tensor: matrix trace expected");
    TensorProfile out = TensorProfile::zeros(g, gamma_weight);
    out.has_mask = true;
    const std::size_t n = g.size();
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 x = g.node(i);
            if (g.masked(x)) continue;
            const double r = std::sqrt(dot(x, x));
            Mat3 m = tr.eval_mat((1.0 / r) * x);
            for (double& v : m) v /= r;
            out.set(i, m);
        }
    });
    return out;
}

}  // namespace ssvf

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"

namespace ssvf {

struct Quadrature1D {
    std::vector<double> node;
    std::vector<double> weight;
};

/// Gauss-Legendre rule on [-1, 1], exact for polynomials of degree 2n-1.
inline Quadrature1D gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre needs n >= 1");
    Quadrature1D q;
    q.node.resize(n);
    q.weight.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Chebyshev-based initial guess, then Newton on P_n.
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        // Recompute derivative at the converged node for the weight.
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        q.node[i] = -x;
        q.weight[i] = w;
        q.node[n - 1 - i] = x;
        q.weight[n - 1 - i] = w;
    }
    return q;
}

/// Map a [-1,1] rule onto [a, b].
inline Quadrature1D gauss_legendre_on(int n, double a, double b) {
    Quadrature1D q = gauss_legendre(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < n; ++i) {
        q.node[i] = mid + half * q.node[i];
        q.weight[i] *= half;
    }
    return q;
}

/// Product rule on the unit sphere: Gauss-Legendre in the polar cosine,
/// equispaced midpoints in azimuth. Exact for spherical harmonics of degree
/// below min(2*n_polar, n_azimuth).
struct S2Quadrature {
    int n_polar = 32;
    int n_azimuth = 64;
    std::vector<Vec3> node;       // unit directions, size n_polar * n_azimuth
    std::vector<double> weight;   // sums to 4*pi
    std::vector<double> mu;       // polar cosines (ascending)
    std::vector<double> phi;      // azimuth midpoints

    static S2Quadrature make(int n_polar, int n_azimuth) {
        if (n_polar < 2 || n_azimuth < 4)
            throw std::invalid_argument("sphere rule needs n_polar >= 2, n_azimuth >= 4");
        S2Quadrature s;
        s.n_polar = n_polar;
        s.n_azimuth = n_azimuth;
        Quadrature1D gl = gauss_legendre(n_polar);
        s.mu = gl.node;
        s.phi.resize(n_azimuth);
        const double dphi = 2.0 * M_PI / n_azimuth;
        for (int a = 0; a < n_azimuth; ++a) s.phi[a] = (a + 0.5) * dphi;
        s.node.reserve(static_cast<std::size_t>(n_polar) * n_azimuth);
        s.weight.reserve(s.node.capacity());
        for (int p = 0; p < n_polar; ++p) {
            const double m = gl.node[p];
            const double st = std::sqrt(std::max(0.0, 1.0 - m * m));
            for (int a = 0; a < n_azimuth; ++a) {
                s.node.push_back({st * std::cos(s.phi[a]), st * std::sin(s.phi[a]), m});
                s.weight.push_back(gl.weight[p] * dphi);
            }
        }
        return s;
    }

    std::size_t size() const { return node.size(); }
    std::size_t index(int p, int a) const {
        return static_cast<std::size_t>(p) * n_azimuth + static_cast<std::size_t>(a);
    }
};

/// Quadrature for s in (0, 1] written through s = sigma^2: Gauss-Legendre
/// nodes in sigma on (0, 1), weights carrying the 2*sigma Jacobian.
///
/// Invariants: no node at 0, all nodes strictly inside (0, 1), and the
/// weights reproduce integral of ds over (0,1] to machine precision.
struct DuhamelSchedule {
    std::vector<double> sigma;   // ascending
    std::vector<double> weight;  // in sigma (without the Jacobian)

    static DuhamelSchedule gauss(int nodes) {
        if (nodes < 2) throw std::invalid_argument("duhamel schedule needs at least 2 nodes");
        DuhamelSchedule d;
        Quadrature1D q = gauss_legendre_on(nodes, 0.0, 1.0);
        d.sigma = q.node;
        d.weight = q.weight;
        return d;
    }

    int count() const { return static_cast<int>(sigma.size()); }

    /// Sum of the transported weights: should equal 1 = integral of ds.
    double total_s_measure() const {
        double t = 0.0;
        for (std::size_t i = 0; i < sigma.size(); ++i) t += weight[i] * 2.0 * sigma[i];
        return t;
    }
};

}  // namespace ssvf

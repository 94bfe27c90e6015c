#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ssvf/grid.hpp"
#include "ssvf/parallel.hpp"

namespace ssvf {

/// Finite-difference weights on arbitrary nodes (Fornberg recurrence):
/// weights[j] approximates the m-th derivative at z from values at nodes[j].
inline std::vector<double> fornberg_weights(double z, const std::vector<double>& nodes,
                                            int m) {
    const int nd = static_cast<int>(nodes.size());
    if (nd < m + 1) throw std::invalid_argument("stencil too short for derivative order");
    std::vector<std::vector<double>> c(nd, std::vector<double>(m + 1, 0.0));
    double c1 = 1.0;
    double c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for (int i = 1; i < nd; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = nodes[i] - z;
        for (int j = 0; j < i; ++j) {
            const double c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k)
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(nd);
    for (int j = 0; j < nd; ++j) w[j] = c[j][m];
    return w;
}

/// Sixth-order 7-point stencils for first and second derivatives, one weight
/// row per position of the evaluation node inside the stencil (row 3 is the
/// centered case; rows 0..2 and 4..6 are the shifted edge variants).
struct Fd6 {
    double d1[7][7];
    double d2[7][7];

    explicit Fd6(double h) {
        for (int p = 0; p < 7; ++p) {
            std::vector<double> nodes(7);
            for (int j = 0; j < 7; ++j) nodes[j] = (j - p) * h;
            const std::vector<double> w1 = fornberg_weights(0.0, nodes, 1);
            const std::vector<double> w2 = fornberg_weights(0.0, nodes, 2);
            for (int j = 0; j < 7; ++j) {
                d1[p][j] = w1[j];
                d2[p][j] = w2[j];
            }
        }
    }
};

/// Partial derivative of a gridded scalar along one axis, order 1 or 2,
/// with stencils shifted near the faces so every node gets a 6th-order value.
inline void fd6_partial(const double* f, const GridSpec& g, int axis, int order,
                        double* out, int workers = 1) {
    if (order != 1 && order != 2) throw std::invalid_argument("fd6 order must be 1 or 2");
    const int n = g.n;
    if (n < 7) throw std::invalid_argument("fd6 needs n >= 7");
    const Fd6 table(g.h());
    const std::size_t stride = (axis == 0) ? 1
                               : (axis == 1) ? static_cast<std::size_t>(n)
                                             : static_cast<std::size_t>(n) * n;
    const std::size_t total = g.size();
    parallel_for(total, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const int i = static_cast<int>(idx % n);
            const int j = static_cast<int>((idx / n) % n);
            const int k = static_cast<int>(idx / (static_cast<std::size_t>(n) * n));
            const int a = (axis == 0) ? i : (axis == 1) ? j : k;
            const int start = std::clamp(a - 3, 0, n - 7);
            const int p = a - start;
            const std::size_t base = idx - static_cast<std::size_t>(p) * stride;
            const double* row = (order == 1) ? table.d1[p] : table.d2[p];
            double acc = 0.0;
            for (int t = 0; t < 7; ++t) acc += row[t] * f[base + static_cast<std::size_t>(t) * stride];
            out[idx] = acc;
        }
    });
}

}  // namespace ssvf

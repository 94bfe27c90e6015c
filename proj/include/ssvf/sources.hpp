#pragma once

#include <array>
#include <stdexcept>

#include "ssvf/parallel.hpp"
#include "ssvf/profile.hpp"

namespace ssvf {

/// Quadratic sources of the fixed-point map. q feeds the velocity update,
/// Q[j] feeds column j of the deformation update.
struct AssembledSources {
    TensorProfile q;
    std::array<TensorProfile, 3> Q;
};

/// q = (G0+H)(G0+H)^t - (U0+v) (x) (U0+v)      (symmetric)
/// Q_j = (G0+H)_j (x) (U0+v) - (U0+v) (x) (G0+H)_j   (antisymmetric)
/// with (a (x) b)_{ij} = a_i b_j. Entries decay two weight powers faster than
/// the inputs; the stored gamma attribute is capped at 1, the top of the
/// representable decay class.
inline AssembledSources assemble_sources(const VectorProfile& v, const TensorProfile& H,
                                         const VectorProfile& U0, const TensorProfile& G0,
                                         int workers = 1) {
    const GridSpec& g = v.grid;
    if (!g.compatible(H.grid) || !g.compatible(U0.grid) || !g.compatible(G0.grid))
        throw std::invalid_argument("assemble_sources: profiles do not share one grid");
    const std::size_t n = g.size();

    AssembledSources out;
    out.q = TensorProfile::zeros(g, 1.0);
    for (auto& Qj : out.Q) Qj = TensorProfile::zeros(g, 1.0);

    const double* vc[3] = {v.component(0), v.component(1), v.component(2)};
    const double* uc[3] = {U0.component(0), U0.component(1), U0.component(2)};
    const double* hc[9];
    const double* gc[9];
    for (int c = 0; c < 9; ++c) {
        hc[c] = H.component(c);
        gc[c] = G0.component(c);
    }

    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double U[3];
            double G[3][3];  // G[a][j]: row a, column j
            for (int a = 0; a < 3; ++a) U[a] = uc[a][i] + vc[a][i];
            for (int a = 0; a < 3; ++a)
                for (int j = 0; j < 3; ++j) {
                    const int c = a + 3 * j;
                    G[a][j] = gc[c][i] + hc[c][i];
                }
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    double gg = 0.0;
                    for (int l = 0; l < 3; ++l) gg += G[a][l] * G[b][l];
                    out.q.component(a + 3 * b)[i] = gg - U[a] * U[b];
                    for (int j = 0; j < 3; ++j)
                        out.Q[j].component(a + 3 * b)[i] = G[a][j] * U[b] - U[a] * G[b][j];
                }
        }
    });
    return out;
}

}  // namespace ssvf

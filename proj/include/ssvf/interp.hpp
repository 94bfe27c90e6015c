#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "ssvf/core.hpp"
#include "ssvf/grid.hpp"

namespace ssvf {

namespace detail {
/// Cubic Lagrange weights at local coordinate r measured from the first of
/// four consecutive unit-spaced nodes.
inline void cubic_weights(double r, double* w) {
    w[0] = -(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0;
    w[1] = r * (r - 2.0) * (r - 3.0) / 2.0;
    w[2] = -r * (r - 1.0) * (r - 3.0) / 2.0;
    w[3] = r * (r - 1.0) * (r - 2.0) / 6.0;
}
}  // namespace detail

/// Tricubic (4-point Lagrange per axis) interpolation of a gridded scalar.
/// Stencils clamp at the faces, so queries must stay a couple of cells
/// inside the box for full accuracy. Holds a borrowed data pointer.
struct TricubicField {
    GridSpec grid;
    const double* f = nullptr;

    double eval(const Vec3& x) const {
        const int n = grid.n;
        const double h = grid.h();
        int si[3];
        double w[3][4];
        for (int a = 0; a < 3; ++a) {
            const double u = (x[a] + grid.half_width) / h - 0.5;  // node i sits at u = i
            const int base = static_cast<int>(std::floor(u));
            const int start = std::clamp(base - 1, 0, n - 4);
            si[a] = start;
            detail::cubic_weights(u - start, w[a]);
        }
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) {
            const std::size_t zoff = static_cast<std::size_t>(si[2] + c) * n * n;
            double accy = 0.0;
            for (int b = 0; b < 4; ++b) {
                const std::size_t yoff = zoff + static_cast<std::size_t>(si[1] + b) * n;
                const double* row = f + yoff + si[0];
                accy += w[1][b] * (w[0][0] * row[0] + w[0][1] * row[1] +
                                   w[0][2] * row[2] + w[0][3] * row[3]);
            }
            acc += w[2][c] * accy;
        }
        return acc;
    }
};

/// Vector field sampler that extends a gridded field beyond a trusted radius
/// by a homogeneous power tail: outside r_trust the value is taken from the
/// sphere of radius r_trust and scaled by (r_trust/r)^power. A smoothstep
/// band below r_trust blends the two representations.
struct FarFieldSampler {
    std::array<TricubicField, 3> comp;
    double power = 3.0;
    double r_trust = 0.0;
    double band = 0.0;

    static FarFieldSampler make(const GridSpec& g, const double* c0, const double* c1,
                                const double* c2, double power) {
        FarFieldSampler s;
        s.comp = {TricubicField{g, c0}, TricubicField{g, c1}, TricubicField{g, c2}};
        s.power = power;
        const double L = g.half_width, h = g.h();
        s.r_trust = std::min(0.85 * L, L - 3.0 * h);
        s.band = 2.0 * h;
        return s;
    }

    Vec3 eval(const Vec3& x) const {
        const double r = std::sqrt(dot(x, x));
        if (r <= r_trust - band) {
            return {comp[0].eval(x), comp[1].eval(x), comp[2].eval(x)};
        }
        const Vec3 anchor = (r_trust / std::max(r, 1e-300)) * x;
        const double scale = std::pow(r_trust / r, power);
        const Vec3 tail{scale * comp[0].eval(anchor), scale * comp[1].eval(anchor),
                        scale * comp[2].eval(anchor)};
        if (r >= r_trust) return tail;
        const double t = (r - (r_trust - band)) / band;
        const double s = t * t * (3.0 - 2.0 * t);
        const Vec3 inner{comp[0].eval(x), comp[1].eval(x), comp[2].eval(x)};
        return (1.0 - s) * inner + s * tail;
    }
};

}  // namespace ssvf

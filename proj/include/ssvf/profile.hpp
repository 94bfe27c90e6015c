#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"
#include "ssvf/grid.hpp"
#include "ssvf/parallel.hpp"

namespace ssvf {

inline void check_gamma(double gamma) {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw std::invalid_argument("gamma must lie in (0,1]");
}

/// Scalar field sampled on a GridSpec, stored x-fastest.
struct ScalarProfile {
    GridSpec grid;
    std::vector<double> data;

    static ScalarProfile zeros(const GridSpec& g) {
        ScalarProfile p;
        p.grid = g;
        p.data.assign(g.size(), 0.0);
        return p;
    }
    double& at(std::size_t idx) { return data[idx]; }
    double at(std::size_t idx) const { return data[idx]; }
};

/// Vector field on a grid, component-major (all of component 0, then 1, 2).
/// gamma is the decay weight the field is measured in; has_mask marks fields
/// whose values near the origin are excluded from sup norms (datum traces
/// carry a 1/|x| factor that is not meaningful at the node scale).
struct VectorProfile {
    GridSpec grid;
    std::vector<double> data;  // 3 * grid.size()
    double gamma = 0.5;
    bool has_mask = false;

    static VectorProfile zeros(const GridSpec& g, double gamma_weight = 0.5) {
        check_gamma(gamma_weight);
        VectorProfile p;
        p.grid = g;
        p.gamma = gamma_weight;
        p.data.assign(3 * g.size(), 0.0);
        return p;
    }

    std::size_t size() const { return grid.size(); }
    double* component(int c) { return data.data() + static_cast<std::size_t>(c) * size(); }
    const double* component(int c) const {
        return data.data() + static_cast<std::size_t>(c) * size();
    }
    Vec3 at(std::size_t idx) const {
        const std::size_t n = size();
        return {data[idx], data[idx + n], data[idx + 2 * n]};
    }
    void set(std::size_t idx, const Vec3& v) {
        const std::size_t n = size();
        data[idx] = v[0];
        data[idx + n] = v[1];
        data[idx + 2 * n] = v[2];
    }
};

/// 3x3 tensor field, component-major with entry (a,b) stored at slot a + 3b.
struct TensorProfile {
    GridSpec grid;
    std::vector<double> data;  // 9 * grid.size()
    double gamma = 0.5;
    bool has_mask = false;

    static TensorProfile zeros(const GridSpec& g, double gamma_weight = 0.5) {
        check_gamma(gamma_weight);
        TensorProfile p;
        p.grid = g;
        p.gamma = gamma_weight;
        p.data.assign(9 * g.size(), 0.0);
        return p;
    }

    std::size_t size() const { return grid.size(); }
    double* component(int a, int b) {
        return data.data() + static_cast<std::size_t>(a + 3 * b) * size();
    }
    const double* component(int a, int b) const {
        return data.data() + static_cast<std::size_t>(a + 3 * b) * size();
    }
    double* component(int c) { return data.data() + static_cast<std::size_t>(c) * size(); }
    const double* component(int c) const {
        return data.data() + static_cast<std::size_t>(c) * size();
    }
    Mat3 at(std::size_t idx) const {
        Mat3 m;
        const std::size_t n = size();
        for (int c = 0; c < 9; ++c) m[c] = data[idx + static_cast<std::size_t>(c) * n];
        return m;
    }
    void set(std::size_t idx, const Mat3& m) {
        const std::size_t n = size();
        for (int c = 0; c < 9; ++c) data[idx + static_cast<std::size_t>(c) * n] = m[c];
    }

    /// Column j as a vector field (deformation columns evolve independently).
    VectorProfile column(int j) const {
        VectorProfile v = VectorProfile::zeros(grid, gamma);
        v.has_mask = has_mask;
        const std::size_t n = size();
        for (int a = 0; a < 3; ++a) {
            const double* src = component(a, j);
            double* dst = v.component(a);
            for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
        }
        return v;
    }
    void set_column(int j, const VectorProfile& v) {
        const std::size_t n = size();
        for (int a = 0; a < 3; ++a) {
            const double* src = v.component(a);
            double* dst = component(a, j);
            for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
        }
    }
};

/// Weighted sup norm sup_x <x>^wexp |u(x)| over unmasked nodes.
/// r_max >= 0 restricts the sup to |x| <= r_max.
inline double weighted_sup(const VectorProfile& u, double wexp, int workers = 1,
                           double r_max = -1.0) {
    const GridSpec& g = u.grid;
    const std::size_t n = g.size();
    const double* c0 = u.component(0);
    const double* c1 = u.component(1);
    const double* c2 = u.component(2);
    const bool masked = u.has_mask;
    const double r2cap = r_max < 0.0 ? -1.0 : r_max * r_max;
    return parallel_reduce_max(n, workers, [&](std::size_t begin, std::size_t end) {
        double best = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 x = g.node(i);
            if (masked && g.masked(x)) continue;
            if (r2cap >= 0.0 && dot(x, x) > r2cap) continue;
            const double mag =
                std::sqrt(c0[i] * c0[i] + c1[i] * c1[i] + c2[i] * c2[i]);
            const double w = std::pow(bracket(x), wexp);
            if (w * mag > best) best = w * mag;
        }
        return best;
    });
}

inline double weighted_sup(const TensorProfile& t, double wexp, int workers = 1,
                           double r_max = -1.0) {
    const GridSpec& g = t.grid;
    const std::size_t n = g.size();
    const bool masked = t.has_mask;
    const double r2cap = r_max < 0.0 ? -1.0 : r_max * r_max;
    return parallel_reduce_max(n, workers, [&](std::size_t begin, std::size_t end) {
        double best = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 x = g.node(i);
            if (masked && g.masked(x)) continue;
            if (r2cap >= 0.0 && dot(x, x) > r2cap) continue;
            double s = 0.0;
            for (int c = 0; c < 9; ++c) {
                const double v = t.data[i + static_cast<std::size_t>(c) * n];
                s += v * v;
            }
            const double w = std::pow(bracket(x), wexp);
            const double mag = std::sqrt(s);
            if (w * mag > best) best = w * mag;
        }
        return best;
    });
}

/// sup_x <x>^{1+gamma} |u(x)| using the profile's own decay class.
inline double x_gamma_norm(const VectorProfile& u, int workers = 1) {
    check_gamma(u.gamma);
    return weighted_sup(u, 1.0 + u.gamma, workers);
}

/// Same weighted sup applied to the Frobenius norm of a tensor field.
inline double x_gamma_norm(const TensorProfile& t, int workers = 1) {
    check_gamma(t.gamma);
    return weighted_sup(t, 1.0 + t.gamma, workers);
}

/// Norm value together with the node attaining it (reporting aid).
struct XGammaNorm {
    double value = 0.0;
    double gamma = 0.0;
    std::size_t attained_index = 0;
    Vec3 attained_at {0.0, 0.0, 0.0};
};

inline XGammaNorm x_gamma_norm_info(const VectorProfile& u) {
    check_gamma(u.gamma);
    const GridSpec& g = u.grid;
    XGammaNorm out;
    out.gamma = u.gamma;
    const double* c0 = u.component(0);
    const double* c1 = u.component(1);
    const double* c2 = u.component(2);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.node(i);
        if (u.has_mask && g.masked(x)) continue;
        const double mag = std::sqrt(c0[i] * c0[i] + c1[i] * c1[i] + c2[i] * c2[i]);
        const double v = std::pow(bracket(x), 1.0 + u.gamma) * mag;
        if (v > out.value) {
            out.value = v;
            out.attained_index = i;
            out.attained_at = x;
        }
    }
    return out;
}

/// Pointwise sup of |u| (no weight), mask-aware.
inline double sup_norm(const VectorProfile& u, int workers = 1) {
    const GridSpec& g = u.grid;
    const double* c0 = u.component(0);
    const double* c1 = u.component(1);
    const double* c2 = u.component(2);
    const bool masked = u.has_mask;
    return parallel_reduce_max(g.size(), workers, [&](std::size_t begin, std::size_t end) {
        double best = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            if (masked && g.masked(g.node(i))) continue;
            const double mag =
                std::sqrt(c0[i] * c0[i] + c1[i] * c1[i] + c2[i] * c2[i]);
            if (mag > best) best = mag;
        }
        return best;
    });
}

}  // namespace ssvf

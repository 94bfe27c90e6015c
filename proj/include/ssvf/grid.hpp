#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "ssvf/core.hpp"

namespace ssvf {

/// Uniform cell-centered grid on the cube [-L, L]^3.
///
/// Nodes sit at x_i = -L + (i + 1/2) h with h = 2L/n, so the node set is
/// symmetric under x -> -x and never contains the origin. Linear storage is
/// x-fastest: index = i + n*(j + n*k).
struct GridSpec {
    int n = 64;                 // nodes per axis, even, >= 8
    double half_width = 16.0;   // L
    double mask_radius = -1.0;  // nodes with |x| below this are masked; < 0 selects 2h

    double h() const { return 2.0 * half_width / n; }
    double effective_mask_radius() const { return mask_radius < 0.0 ? 2.0 * h() : mask_radius; }

    std::size_t size() const {
        const std::size_t m = static_cast<std::size_t>(n);
        return m * m * m;
    }

    double coord(int i) const { return -half_width + (i + 0.5) * h(); }

    std::size_t index(int i, int j, int k) const {
        const std::size_t m = static_cast<std::size_t>(n);
        return static_cast<std::size_t>(i) + m * (static_cast<std::size_t>(j) + m * static_cast<std::size_t>(k));
    }

    Vec3 node(std::size_t idx) const {
        const int i = static_cast<int>(idx % static_cast<std::size_t>(n));
        const int j = static_cast<int>((idx / static_cast<std::size_t>(n)) % static_cast<std::size_t>(n));
        const int k = static_cast<int>(idx / (static_cast<std::size_t>(n) * static_cast<std::size_t>(n)));
        return {coord(i), coord(j), coord(k)};
    }

    bool masked(const Vec3& x) const { return norm2(x) < effective_mask_radius(); }

    /// True if the node lies at least `band` cells away from every face.
    bool interior(const Vec3& x, int band) const {
        const double margin = band * h();
        for (double c : x)
            if (std::abs(c) > half_width - margin) return false;
        return true;
    }

    bool compatible(const GridSpec& o) const {
        return n == o.n && half_width == o.half_width;
    }

    void validate() const {
        if (n < 8) throw std::invalid_argument("grid n must be at least 8");
        if (n % 2 != 0) throw std::invalid_argument("grid n must be even");
        if (!(half_width > 0.0)) throw std::invalid_argument("grid half_width must be positive");
        if (mask_radius >= 0.0 && mask_radius < h())
            throw std::invalid_argument("mask_radius must be at least one cell");
    }
};

}  // namespace ssvf

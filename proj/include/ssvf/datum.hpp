#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "ssvf/config.hpp"
#include "ssvf/quadrature.hpp"
#include "ssvf/trace.hpp"

namespace ssvf {

struct DatumError : SsvfError {
    using SsvfError::SsvfError;
};

namespace detail {

/// Degree-0 vector potentials whose curls are the degree -1 pole fields.
/// Component a of the potential is x_a / |x|.
inline Vec3 pole_potential(int axis, const Vec3& x) {
    const double r = norm2(x);
    Vec3 a {0.0, 0.0, 0.0};
    a[axis] = x[axis] / r;
    return a;
}

/// Closed-form curls on the unit sphere, one per potential axis. These are
/// the validation oracles for the numerical-curl production path.
inline Vec3 pole_field(int axis, const Vec3& d) {
    switch (axis) {
        case 0: return {0.0, -d[0] * d[2], d[0] * d[1]};
        case 1: return {d[1] * d[2], 0.0, -d[1] * d[0]};
        default: return {-d[1] * d[2], d[0] * d[2], 0.0};
    }
}

}  // namespace detail

/// Initial-data traces on the unit sphere: a velocity trace and a
/// deformation trace whose columns are divergence-free degree -1 fields.
struct DatumTraces {
    S2Quadrature rule;
    SphericalTrace u;
    SphericalTrace F;
    double scale = 1.0;  // normalization factor applied to reach the amplitude
};

namespace detail {

inline double trace_sup_joint(const SphericalTrace& u, const SphericalTrace& F) {
    double best = 0.0;
    for (std::size_t q = 0; q < u.nodes(); ++q) {
        double m = norm2(u.vec(q));
        double f2 = 0.0;
        for (int c = 0; c < 9; ++c) {
            const double v = F.value(c, q);
            f2 += v * v;
        }
        best = std::max(best, m + std::sqrt(f2));
    }
    return best;
}

inline DatumTraces tabulated_traces(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DatumError("cannot read trace file: " + path);
    std::string tag;
    int n_polar = 0, n_azimuth = 0;
    is >> tag >> n_polar >> n_azimuth;
    if (!is || tag != "ssvf-trace")
        throw DatumError("trace file must start with `ssvf-trace n_polar n_azimuth`: " + path);
    DatumTraces d;
    try {
        d.rule = S2Quadrature::make(n_polar, n_azimuth);
    } catch (const std::exception& e) {
        throw DatumError(std::string("bad trace rule size: ") + e.what());
    }
    d.u = SphericalTrace::make(d.rule, 3);
    d.F = SphericalTrace::make(d.rule, 9);
    for (std::size_t q = 0; q < d.rule.size(); ++q) {
        for (int c = 0; c < 3; ++c)
            if (!(is >> d.u.value(c, q)))
                throw DatumError("truncated trace file at node " + std::to_string(q) + ": " +
                                 path);
        for (int c = 0; c < 9; ++c)
            if (!(is >> d.F.value(c, q)))
                throw DatumError("truncated trace file at node " + std::to_string(q) + ": " +
                                 path);
    }
    return d;
}

}  // namespace detail

/// Builds the configured datum family and normalizes the joint trace sup
/// (|omega_u| + |omega_F|_F over the quadrature nodes) to the amplitude.
/// The pole families are produced by numerical curl of their potentials;
/// closed forms exist for cross-checking.
inline DatumTraces build_datum(const DatumConfig& cfg, int n_polar = 16, int n_azimuth = 32) {
    DatumTraces d;
    if (cfg.family == "tabulated") {
        d = detail::tabulated_traces(cfg.trace_file);
    } else if (cfg.family == "curl_poles" || cfg.family == "u_only") {
        d.rule = S2Quadrature::make(n_polar, n_azimuth);
        d.u = SphericalTrace::make(d.rule, 3);
        d.F = SphericalTrace::make(d.rule, 9);
        const bool with_F = cfg.family == "curl_poles";
        for (std::size_t q = 0; q < d.rule.size(); ++q) {
            const Vec3 dir = d.rule.node[q];
            const Vec3 wu =
                curl_central5([&](const Vec3& x) { return detail::pole_potential(2, x); }, dir);
            for (int c = 0; c < 3; ++c) d.u.value(c, q) = wu[c];
            if (!with_F) continue;
            for (int j = 0; j < 3; ++j) {
                const Vec3 wj = curl_central5(
                    [&](const Vec3& x) { return detail::pole_potential(j, x); }, dir);
                for (int i = 0; i < 3; ++i) d.F.value(i + 3 * j, q) = wj[i];
            }
        }
    } else {
        throw DatumError("unknown datum family: " + cfg.family);
    }
    const double sup = detail::trace_sup_joint(d.u, d.F);
    if (!(sup > 0.0)) throw DatumError("datum trace is identically zero");
    d.scale = cfg.amplitude / sup;
    d.u.scale(d.scale);
    d.F.scale(d.scale);
    return d;
}

/// Writes traces in the tabulated text format; round-trips through
/// build_datum with family = tabulated (modulo the normalization pass).
inline void write_trace_file(const std::string& path, const DatumTraces& d) {
    std::ofstream os(path);
    if (!os) throw DatumError("cannot write trace file: " + path);
    os << "ssvf-trace " << d.rule.n_polar << " " << d.rule.n_azimuth << "\n";
    os.precision(17);
    for (std::size_t q = 0; q < d.rule.size(); ++q) {
        for (int c = 0; c < 3; ++c) os << d.u.value(c, q) << " ";
        for (int c = 0; c < 9; ++c) os << d.F.value(c, q) << (c == 8 ? "" : " ");
        os << "\n";
    }
}

}  // namespace ssvf

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssvf {

inline constexpr const char* version_string = "0.1.0";

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // entry (a,b) at index a + 3*b

inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm2(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

/// Frobenius norm of a 3x3 matrix stored column-major.
inline double frobenius(const Mat3& m) {
    double s = 0.0;
    for (double e : m) s += e * e;
    return std::sqrt(s);
}

/// sqrt(1 + |x|^2), the weight underlying all decay bookkeeping.
inline double bracket(double r) { return std::sqrt(1.0 + r * r); }
inline double bracket(const Vec3& x) { return bracket(norm2(x)); }

struct SsvfError : std::runtime_error {
    explicit SsvfError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a quadrature self-check exceeds its tolerance.
struct QuadratureError : SsvfError {
    using SsvfError::SsvfError;
};

}  // namespace ssvf

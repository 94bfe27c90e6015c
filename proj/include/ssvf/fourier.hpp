#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "ssvf/core.hpp"
#include "ssvf/grid.hpp"
#include "ssvf/profile.hpp"

namespace ssvf {

using Spectrum = std::vector<std::complex<double>>;

/// FFT workspace bound to one grid. Real fields are stored x-fastest on the
/// cell-centered nodes; spectra use the r2c half layout, x halved.
///
/// Not thread-safe: all transforms go through internal buffers so callers
/// serialize FFT work and parallelize real-space loops instead. Plans use
/// FFTW_ESTIMATE so results do not depend on planner timing.
///
/// Wavenumbers are k = (pi/L) m. Derivative multipliers use tables with the
/// Nyquist entry zeroed (its sign is not representable); the heat factor
/// uses the full magnitude.
class FourierWorkspace {
  public:
    explicit FourierWorkspace(const GridSpec& g) : grid_(g) {
        grid_.validate();
        n_ = g.n;
        nh_ = n_ / 2 + 1;
        rsize_ = static_cast<std::size_t>(n_) * n_ * n_;
        csize_ = static_cast<std::size_t>(n_) * n_ * nh_;
        rbuf_ = fftw_alloc_real(rsize_);
        cbuf_ = fftw_alloc_complex(csize_);
        if (!rbuf_ || !cbuf_) throw std::bad_alloc();
        fwd_ = fftw_plan_dft_r2c_3d(n_, n_, n_, rbuf_, cbuf_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_3d(n_, n_, n_, cbuf_, rbuf_, FFTW_ESTIMATE);
        if (!fwd_ || !bwd_) throw SsvfError("fftw plan creation failed");

        const double base = M_PI / g.half_width;
        khalf_.resize(nh_);
        kdhalf_.resize(nh_);
        for (int i = 0; i < nh_; ++i) {
            khalf_[i] = base * i;
            kdhalf_[i] = (i == n_ / 2) ? 0.0 : base * i;
        }
        kfull_.resize(n_);
        kdfull_.resize(n_);
        mfull_.resize(n_);
        for (int i = 0; i < n_; ++i) {
            const int m = (i <= n_ / 2) ? i : i - n_;
            mfull_[i] = m;
            kfull_[i] = base * m;
            kdfull_[i] = (i == n_ / 2) ? 0.0 : base * m;
        }
        const int keep = (n_ - 1) / 3;  // products of kept modes alias onto dropped ones only
        keep_.assign(csize_, 0);
        for (int iz = 0; iz < n_; ++iz)
            for (int iy = 0; iy < n_; ++iy)
                for (int ix = 0; ix < nh_; ++ix) {
                    const bool ok = std::abs(mfull_[iz]) <= keep &&
                                    std::abs(mfull_[iy]) <= keep && ix <= keep;
                    keep_[cindex(ix, iy, iz)] = ok ? 1 : 0;
                }
    }

    ~FourierWorkspace() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(rbuf_);
        fftw_free(cbuf_);
    }
    FourierWorkspace(const FourierWorkspace&) = delete;
    FourierWorkspace& operator=(const FourierWorkspace&) = delete;

    const GridSpec& grid() const { return grid_; }
    int n() const { return n_; }
    std::size_t real_size() const { return rsize_; }
    std::size_t spectral_size() const { return csize_; }
    std::size_t cindex(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(nh_) *
                   (static_cast<std::size_t>(iy) + static_cast<std::size_t>(n_) * iz);
    }

    Spectrum forward(const double* real) {
        std::memcpy(rbuf_, real, rsize_ * sizeof(double));
        fftw_execute(fwd_);
        Spectrum out(csize_);
        // std::complex<double> is layout-compatible with fftw_complex.
        std::memcpy(static_cast<void*>(out.data()), cbuf_, csize_ * sizeof(fftw_complex));
        return out;
    }

    /// Inverse transform with the 1/n^3 normalization folded in.
    void backward(const Spectrum& spec, double* real_out) {
        if (spec.size() != csize_) throw std::invalid_argument("spectrum size mismatch");
        std::memcpy(cbuf_, spec.data(), csize_ * sizeof(fftw_complex));
        fftw_execute(bwd_);
        const double scale = 1.0 / static_cast<double>(rsize_);
        for (std::size_t i = 0; i < rsize_; ++i) real_out[i] = rbuf_[i] * scale;
    }

    std::array<Spectrum, 3> forward_vector(const VectorProfile& u) {
        return {forward(u.component(0)), forward(u.component(1)), forward(u.component(2))};
    }
    void backward_vector(const std::array<Spectrum, 3>& spec, VectorProfile& u) {
        for (int c = 0; c < 3; ++c) backward(spec[c], u.component(c));
    }

    /// Loop over spectral modes: fn(flat_index, kx, ky, kz) with the
    /// derivative (Nyquist-zeroed) wavenumbers.
    template <class Fn>
    void for_each_mode(Fn&& fn) const {
        for (int iz = 0; iz < n_; ++iz)
            for (int iy = 0; iy < n_; ++iy) {
                const double ky = kdfull_[iy], kz = kdfull_[iz];
                std::size_t idx = cindex(0, iy, iz);
                for (int ix = 0; ix < nh_; ++ix, ++idx) fn(idx, kdhalf_[ix], ky, kz);
            }
    }

    /// Same loop with full-magnitude wavenumbers (for diffusion factors).
    template <class Fn>
    void for_each_mode_full(Fn&& fn) const {
        for (int iz = 0; iz < n_; ++iz)
            for (int iy = 0; iy < n_; ++iy) {
                const double ky = kfull_[iy], kz = kfull_[iz];
                std::size_t idx = cindex(0, iy, iz);
                for (int ix = 0; ix < nh_; ++ix, ++idx) fn(idx, khalf_[ix], ky, kz);
            }
    }

    void dealias(Spectrum& s) const {
        for (std::size_t i = 0; i < csize_; ++i)
            if (!keep_[i]) s[i] = 0.0;
    }
    void dealias(std::array<Spectrum, 3>& s) const {
        for (auto& c : s) dealias(c);
    }

    /// Remove the gradient part: u -= k (k.u)/|k|^2. The zero mode passes
    /// through untouched; Nyquist planes are cleared since their derivative
    /// sign is undefined.
    void leray_project(std::array<Spectrum, 3>& u) const {
        for (int iz = 0; iz < n_; ++iz)
            for (int iy = 0; iy < n_; ++iy) {
                const bool ny_yz = (iy == n_ / 2) || (iz == n_ / 2);
                const double ky = kdfull_[iy], kz = kdfull_[iz];
                std::size_t idx = cindex(0, iy, iz);
                for (int ix = 0; ix < nh_; ++ix, ++idx) {
                    if (ny_yz || ix == n_ / 2) {
                        u[0][idx] = u[1][idx] = u[2][idx] = 0.0;
                        continue;
                    }
                    const double kx = kdhalf_[ix];
                    const double k2 = kx * kx + ky * ky + kz * kz;
                    if (k2 == 0.0) continue;
                    const std::complex<double> kd =
                        (kx * u[0][idx] + ky * u[1][idx] + kz * u[2][idx]) / k2;
                    u[0][idx] -= kx * kd;
                    u[1][idx] -= ky * kd;
                    u[2][idx] -= kz * kd;
                }
            }
    }

    /// exp(tau * Laplacian) as a spectral multiplier; tau >= 0.
    void heat_multiply(Spectrum& s, double tau) const {
        if (tau < 0.0) throw std::invalid_argument("heat factor needs tau >= 0");
        for_each_mode_full([&](std::size_t idx, double kx, double ky, double kz) {
            s[idx] *= std::exp(-tau * (kx * kx + ky * ky + kz * kz));
        });
    }
    void heat_multiply(std::array<Spectrum, 3>& s, double tau) const {
        for (auto& c : s) heat_multiply(c, tau);
    }

    /// Divergence of a vector spectrum (contracts the lone index).
    Spectrum divergence(const std::array<Spectrum, 3>& u) const {
        Spectrum d(csize_);
        const std::complex<double> I(0.0, 1.0);
        for_each_mode([&](std::size_t idx, double kx, double ky, double kz) {
            d[idx] = I * (kx * u[0][idx] + ky * u[1][idx] + kz * u[2][idx]);
        });
        return d;
    }

    std::array<Spectrum, 3> gradient(const Spectrum& p) const {
        std::array<Spectrum, 3> g{Spectrum(csize_), Spectrum(csize_), Spectrum(csize_)};
        const std::complex<double> I(0.0, 1.0);
        for_each_mode([&](std::size_t idx, double kx, double ky, double kz) {
            const std::complex<double> v = I * p[idx];
            g[0][idx] = kx * v;
            g[1][idx] = ky * v;
            g[2][idx] = kz * v;
        });
        return g;
    }

    /// Pressure that closes a momentum source div(S): P_hat = (k.S.k)/|k|^2,
    /// zero mode fixed to zero. S is given by its 9 component spectra, entry
    /// (a,b) at slot a + 3b.
    Spectrum pressure_from_tensor(const std::array<Spectrum, 9>& s) const {
        Spectrum p(csize_);
        for_each_mode([&](std::size_t idx, double kx, double ky, double kz) {
            const double k2 = kx * kx + ky * ky + kz * kz;
            if (k2 == 0.0) {
                p[idx] = 0.0;
                return;
            }
            const double k[3] = {kx, ky, kz};
            std::complex<double> acc = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) acc += k[a] * k[b] * s[a + 3 * b][idx];
            p[idx] = acc / k2;
        });
        return p;
    }

    /// Add the band-limited field whose continuum Fourier transform is
    /// (monopole - i dipole.k) exp(-|k|^2 width^2 / 4) centered at x = 0.
    /// The phase factor accounts for the half-cell node offset, so the added
    /// samples agree with point evaluation of the continuum field.
    void add_centered_blob(Spectrum& s, double monopole, const Vec3& dipole,
                           double width) const {
        const double vol_inv = 1.0 / std::pow(grid_.h(), 3);  // n^3 / box volume
        const double w24 = width * width / 4.0;
        const std::complex<double> I(0.0, 1.0);
        for (int iz = 0; iz < n_; ++iz)
            for (int iy = 0; iy < n_; ++iy) {
                const int my = mfull_[iy], mz = mfull_[iz];
                const double ky = kfull_[iy], kz = kfull_[iz];
                std::size_t idx = cindex(0, iy, iz);
                for (int ix = 0; ix < nh_; ++ix, ++idx) {
                    const int M = ix + my + mz;
                    const double kx = khalf_[ix];
                    const double k2 = kx * kx + ky * ky + kz * kz;
                    const std::complex<double> amp =
                        monopole - I * (dipole[0] * kx + dipole[1] * ky + dipole[2] * kz);
                    // offset phase: (-1)^M exp(i pi M / n)
                    const double ang = M_PI * M / n_;
                    std::complex<double> phase(std::cos(ang), std::sin(ang));
                    if (M % 2 != 0) phase = -phase;
                    s[idx] += vol_inv * amp * std::exp(-k2 * w24) * phase;
                }
            }
    }

    /// Max-abs real-space divergence of a gridded vector field.
    double divergence_max(const VectorProfile& u) {
        auto spec = forward_vector(u);
        Spectrum d = divergence(spec);
        std::vector<double> div(rsize_);
        backward(d, div.data());
        double best = 0.0;
        for (double v : div) best = std::max(best, std::abs(v));
        return best;
    }

    /// Divergence samples plus their max-abs, for reporting.
    struct SpectralDivergence {
        ScalarProfile samples;
        double max_abs = 0.0;
    };

    SpectralDivergence spectral_divergence(const VectorProfile& u) {
        auto spec = forward_vector(u);
        Spectrum d = divergence(spec);
        SpectralDivergence out;
        out.samples = ScalarProfile::zeros(grid_);
        backward(d, out.samples.data.data());
        for (double v : out.samples.data) out.max_abs = std::max(out.max_abs, std::abs(v));
        return out;
    }

    /// sup over components and directions of |d_a u_b|; scale reference for
    /// relative divergence checks.
    double gradient_sup(const VectorProfile& u) {
        std::vector<double> tmp(rsize_);
        double best = 0.0;
        for (int b = 0; b < 3; ++b) {
            Spectrum s = forward(u.component(b));
            auto g = gradient(s);
            for (int a = 0; a < 3; ++a) {
                backward(g[a], tmp.data());
                for (double v : tmp) best = std::max(best, std::abs(v));
            }
        }
        return best;
    }

    const std::vector<int>& mode_numbers() const { return mfull_; }

  private:
    GridSpec grid_;
    int n_ = 0, nh_ = 0;
    std::size_t rsize_ = 0, csize_ = 0;
    double* rbuf_ = nullptr;
    fftw_complex* cbuf_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
    std::vector<double> khalf_, kdhalf_, kfull_, kdfull_;
    std::vector<int> mfull_;
    std::vector<unsigned char> keep_;
};

/// Band-limited interpolation of coarse samples onto a finer grid over the
/// same box. Coarse Nyquist planes are dropped (their sign is ambiguous);
/// the phase factor accounts for the differing half-cell node offsets.
inline void spectral_upsample(FourierWorkspace& coarse, FourierWorkspace& fine,
                              const double* in, double* out) {
    const int n = coarse.n();
    const int N = fine.n();
    if (N <= n || coarse.grid().half_width != fine.grid().half_width)
        throw std::invalid_argument("spectral_upsample: fine grid must refine the same box");
    Spectrum cs = coarse.forward(in);
    Spectrum fs(fine.spectral_size(), std::complex<double>(0.0, 0.0));
    const double scale = std::pow(static_cast<double>(N) / n, 3);
    const double dphi = M_PI * (1.0 / N - 1.0 / n);
    const auto& modes = coarse.mode_numbers();
    const int nh = n / 2 + 1;
    for (int iz = 0; iz < n; ++iz) {
        const int mz = modes[iz];
        if (iz == n / 2) continue;
        for (int iy = 0; iy < n; ++iy) {
            const int my = modes[iy];
            if (iy == n / 2) continue;
            const int IY = my >= 0 ? my : N + my;
            const int IZ = mz >= 0 ? mz : N + mz;
            for (int ix = 0; ix < nh; ++ix) {
                if (ix == n / 2) continue;
                const double ang = dphi * (ix + my + mz);
                const std::complex<double> ph(std::cos(ang), std::sin(ang));
                fs[fine.cindex(ix, IY, IZ)] = scale * ph * cs[coarse.cindex(ix, iy, iz)];
            }
        }
    }
    fine.backward(fs, out);
}

}  // namespace ssvf

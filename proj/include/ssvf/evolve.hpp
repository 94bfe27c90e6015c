#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ssvf/fourier.hpp"
#include "ssvf/profile.hpp"

namespace ssvf {

struct EvolverError : SsvfError {
    using SsvfError::SsvfError;
};

struct EvolveState {
    VectorProfile u;
    TensorProfile F;
    double t = 1.0;
    double sigma = 1.0;
};

struct EvolveConfig {
    double dt = 0.02;
    int max_subiters = 12;
    double subiter_tol = 1e-11;
    int max_halvings = 8;
    int record_every = 1;
    double m_exp = 3.0;      // instantaneous L^m tracking exponent
    bool monitor = true;
    int monitor_steps = 16;  // resolution of the window-norm estimate
    bool project_init = true;
    int workers = 1;
    /// Called on every recorded step with the current state and recovered
    /// pressure; hook for space-time diagnostics.
    std::function<void(const EvolveState&, const ScalarProfile&)> on_record;
};

struct TrajectoryRow {
    double t = 0.0;
    double energy = 0.0;       // (1/2) integral |u|^2 + |F|^2
    double dissipation = 0.0;  // integral |grad u|^2 + |grad F|^2
    double l2_u = 0.0, l2_F = 0.0;
    double lm_u = 0.0, lm_F = 0.0;  // instantaneous L^m norms
    double st_norm = 0.0;           // running L^{5m/3} space-time norm of (u, F)
    double div_u = 0.0, div_F = 0.0;
    double kappa = 0.0;  // running heat-flow window norm
};

struct MonitorReport {
    double kappa = 0.0;
    double c0_estimate = 0.0;
    double threshold = 0.0;  // 1 / (4 c0)
    double window = 0.0;
    bool warned = false;
};

struct EvolveResult {
    EvolveState final_state;
    std::vector<TrajectoryRow> rows;
    MonitorReport monitor;
    int steps = 0;
    int rejected = 0;
    double dt_final = 0.0;
};

/// Pressure consistent with the momentum balance of the current snapshot:
/// lap p = div div sigma (F F^t - u (x) u), periodic, zero mean.
inline ScalarProfile recover_flow_pressure(FourierWorkspace& ws, const VectorProfile& u,
                                           const TensorProfile& F, double sigma) {
    if (!u.grid.compatible(ws.grid()) || !F.grid.compatible(ws.grid()))
        throw std::invalid_argument("pressure recovery: fields do not match the workspace grid");
    const std::size_t n = u.size();
    std::array<Spectrum, 9> qs;
    std::vector<double> prod(n);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const double* ua = u.component(a);
            const double* ub = u.component(b);
            for (std::size_t i = 0; i < n; ++i) {
                double ff = 0.0;
                for (int l = 0; l < 3; ++l)
                    ff += F.component(a + 3 * l)[i] * F.component(b + 3 * l)[i];
                prod[i] = sigma * (ff - ua[i] * ub[i]);
            }
            qs[a + 3 * b] = ws.forward(prod.data());
        }
    Spectrum ps = ws.pressure_from_tensor(qs);
    ScalarProfile p = ScalarProfile::zeros(u.grid);
    ws.backward(ps, p.data.data());
    return p;
}

namespace detail {

/// Exponential-trapezoid coefficients for one decay rate z = k^2 dt:
/// next = e^{-z} now + A N_now + B N_next, exact for the linear part.
inline void etd_coeffs(double z, double dt, double& f0, double& A, double& B) {
    f0 = std::exp(-z);
    if (z < 0.05) {
        A = dt * (0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0 + z * z * z * z / 144.0);
        B = dt * (0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0 + z * z * z * z / 720.0);
    } else {
        A = dt * (1.0 - f0 * (1.0 + z)) / (z * z);
        B = dt * (z - 1.0 + f0) / (z * z);
    }
}

class EvolverCore {
  public:
    EvolverCore(FourierWorkspace& ws, const EvolveConfig& cfg) : ws_(ws), cfg_(cfg) {
        rsize_ = ws.real_size();
        csize_ = ws.spectral_size();
        cell_ = std::pow(ws.grid().h(), 3);
        prod_.resize(rsize_);
        for (auto& c : ur_) c.resize(rsize_);
        for (auto& c : Fr_) c.resize(rsize_);
    }

    void load(const EvolveState& st) {
        sigma_ = st.sigma;
        for (int c = 0; c < 3; ++c) uh_[c] = ws_.forward(st.u.component(c));
        for (int c = 0; c < 9; ++c) Fh_[c] = ws_.forward(st.F.component(c));
        for (int c = 0; c < 3; ++c) ws_.dealias(uh_[c]);
        for (int c = 0; c < 9; ++c) ws_.dealias(Fh_[c]);
        if (cfg_.project_init) {
            ws_.leray_project(uh_);
            for (int j = 0; j < 3; ++j) {
                std::array<Spectrum, 3> col {Fh_[3 * j], Fh_[1 + 3 * j], Fh_[2 + 3 * j]};
                ws_.leray_project(col);
                for (int i = 0; i < 3; ++i) Fh_[i + 3 * j] = col[i];
            }
        }
        synthesize();
    }

    void store(EvolveState& st, double t) const {
        st.t = t;
        st.sigma = sigma_;
        for (int c = 0; c < 3; ++c)
            std::copy(ur_[c].begin(), ur_[c].end(), st.u.component(c));
        for (int c = 0; c < 9; ++c)
            std::copy(Fr_[c].begin(), Fr_[c].end(), st.F.component(c));
    }

    /// One trapezoid step with fixed-point sub-iteration; returns false when
    /// the sub-iteration fails to settle (caller halves dt).
    bool step(double dt) {
        prepare_coeffs(dt);
        if (!have_n_) {
            nonlinear(ur_, Fr_, Nu_, NF_);
            have_n_ = true;
        }
        std::array<Spectrum, 3> cu;
        std::array<Spectrum, 9> cF;
        // Exponential-Euler predictor.
        for (int c = 0; c < 3; ++c) combine(uh_[c], Nu_[c], Nu_[c], cu[c], true);
        for (int c = 0; c < 9; ++c) combine(Fh_[c], NF_[c], NF_[c], cF[c], true);
        std::array<Spectrum, 3> nu2;
        std::array<Spectrum, 9> nf2;
        bool settled = false;
        for (int it = 0; it < cfg_.max_subiters && !settled; ++it) {
            synthesize_from(cu, cF);
            nonlinear(ur_, Fr_, nu2, nf2);
            double diff2 = 0.0, norm2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                Spectrum next;
                combine(uh_[c], Nu_[c], nu2[c], next, false);
                accumulate_change(cu[c], next, diff2, norm2);
                cu[c] = std::move(next);
            }
            for (int c = 0; c < 9; ++c) {
                Spectrum next;
                combine(Fh_[c], NF_[c], nf2[c], next, false);
                accumulate_change(cF[c], next, diff2, norm2);
                cF[c] = std::move(next);
            }
            settled = diff2 <= cfg_.subiter_tol * cfg_.subiter_tol * (norm2 + 1e-300);
        }
        if (!settled) {
            synthesize();  // restore the pre-step real fields
            return false;
        }
        ws_.leray_project(cu);
        for (int c = 0; c < 3; ++c) uh_[c] = std::move(cu[c]);
        for (int c = 0; c < 9; ++c) Fh_[c] = std::move(cF[c]);
        Nu_ = std::move(nu2);
        NF_ = std::move(nf2);
        synthesize();
        return true;
    }

    TrajectoryRow measure(double t) {
        TrajectoryRow row;
        row.t = t;
        double e2u = 0.0, e2F = 0.0, emu = 0.0, emF = 0.0;
        const double m = cfg_.m_exp;
        for (std::size_t i = 0; i < rsize_; ++i) {
            const double au2 = ur_[0][i] * ur_[0][i] + ur_[1][i] * ur_[1][i] +
                               ur_[2][i] * ur_[2][i];
            double aF2 = 0.0;
            for (int c = 0; c < 9; ++c) aF2 += Fr_[c][i] * Fr_[c][i];
            e2u += au2;
            e2F += aF2;
            emu += std::pow(au2, 0.5 * m);
            emF += std::pow(aF2, 0.5 * m);
        }
        row.l2_u = std::sqrt(e2u * cell_);
        row.l2_F = std::sqrt(e2F * cell_);
        row.lm_u = std::pow(emu * cell_, 1.0 / m);
        row.lm_F = std::pow(emF * cell_, 1.0 / m);
        row.energy = 0.5 * (e2u + e2F) * cell_;
        row.dissipation = dissipation();
        row.div_u = spectral_div_max(uh_);
        double dF = 0.0;
        for (int j = 0; j < 3; ++j) {
            std::array<Spectrum, 3> col {Fh_[3 * j], Fh_[1 + 3 * j], Fh_[2 + 3 * j]};
            dF = std::max(dF, spectral_div_max(col));
        }
        row.div_F = dF;
        return row;
    }

    /// integral over the box of |u|^q + |F|^q at the current real fields.
    void space_power(double q, double& iu, double& iF) const {
        double su = 0.0, sF = 0.0;
        for (std::size_t i = 0; i < rsize_; ++i) {
            const double au2 = ur_[0][i] * ur_[0][i] + ur_[1][i] * ur_[1][i] +
                               ur_[2][i] * ur_[2][i];
            double aF2 = 0.0;
            for (int c = 0; c < 9; ++c) aF2 += Fr_[c][i] * Fr_[c][i];
            su += std::pow(au2, 0.5 * q);
            sF += std::pow(aF2, 0.5 * q);
        }
        iu = su * cell_;
        iF = sF * cell_;
    }

    ScalarProfile pressure(const GridSpec& g) {
        VectorProfile u = VectorProfile::zeros(g, 1.0);
        TensorProfile F = TensorProfile::zeros(g, 1.0);
        for (int c = 0; c < 3; ++c) std::copy(ur_[c].begin(), ur_[c].end(), u.component(c));
        for (int c = 0; c < 9; ++c) std::copy(Fr_[c].begin(), Fr_[c].end(), F.component(c));
        return recover_flow_pressure(ws_, u, F, sigma_);
    }

    const std::array<Spectrum, 3>& u_spectra() const { return uh_; }
    const std::array<Spectrum, 9>& F_spectra() const { return Fh_; }
    double sigma() const { return sigma_; }
    void set_sigma(double s) { sigma_ = s; }

    /// Nonlinear sources at given real fields: velocity part is projected,
    /// deformation part is not (its divergence vanishes structurally).
    void nonlinear(const std::array<std::vector<double>, 3>& u,
                   const std::array<std::vector<double>, 9>& F,
                   std::array<Spectrum, 3>& nu, std::array<Spectrum, 9>& nf) {
        for (auto& s : nu) s.assign(csize_, std::complex<double>(0.0, 0.0));
        for (auto& s : nf) s.assign(csize_, std::complex<double>(0.0, 0.0));
        // Velocity source: div of sigma (F F^t - u (x) u), first index contracted.
        for (int a = 0; a < 3; ++a)
            for (int i = 0; i < 3; ++i) {
                for (std::size_t x = 0; x < rsize_; ++x) {
                    double ff = 0.0;
                    for (int l = 0; l < 3; ++l) ff += F[a + 3 * l][x] * F[i + 3 * l][x];
                    prod_[x] = sigma_ * (ff - u[a][x] * u[i][x]);
                }
                add_derivative(a, nu[i]);
            }
        ws_.leray_project(nu);
        for (auto& s : nu) ws_.dealias(s);
        // Column sources: div of sigma (F_j (x) u - u (x) F_j).
        for (int j = 0; j < 3; ++j)
            for (int a = 0; a < 3; ++a)
                for (int i = 0; i < 3; ++i) {
                    const std::vector<double>& Fa = F[a + 3 * j];
                    const std::vector<double>& Fi = F[i + 3 * j];
                    for (std::size_t x = 0; x < rsize_; ++x)
                        prod_[x] = sigma_ * (Fa[x] * u[i][x] - u[a][x] * Fi[x]);
                    add_derivative(a, nf[i + 3 * j]);
                }
        for (auto& s : nf) ws_.dealias(s);
    }

    void synthesize() {
        for (int c = 0; c < 3; ++c) ws_.backward(uh_[c], ur_[c].data());
        for (int c = 0; c < 9; ++c) ws_.backward(Fh_[c], Fr_[c].data());
    }

  private:
    void synthesize_from(const std::array<Spectrum, 3>& cu, const std::array<Spectrum, 9>& cF) {
        for (int c = 0; c < 3; ++c) ws_.backward(cu[c], ur_[c].data());
        for (int c = 0; c < 9; ++c) ws_.backward(cF[c], Fr_[c].data());
    }

    /// forward(prod_), multiply by i k_a, accumulate into out.
    void add_derivative(int axis, Spectrum& out) {
        Spectrum t = ws_.forward(prod_.data());
        ws_.for_each_mode([&](std::size_t idx, double kx, double ky, double kz) {
            const double ka = axis == 0 ? kx : axis == 1 ? ky : kz;
            const std::complex<double> v = t[idx];
            out[idx] += std::complex<double>(-ka * v.imag(), ka * v.real());
        });
    }

    void prepare_coeffs(double dt) {
        if (dt == dt_cached_) return;
        f0_.resize(csize_);
        ca_.resize(csize_);
        cb_.resize(csize_);
        ws_.for_each_mode_full([&](std::size_t idx, double kx, double ky, double kz) {
            etd_coeffs((kx * kx + ky * ky + kz * kz) * dt, dt, f0_[idx], ca_[idx], cb_[idx]);
        });
        dt_cached_ = dt;
    }

    void combine(const Spectrum& base, const Spectrum& n0, const Spectrum& n1, Spectrum& out,
                 bool euler) const {
        out.resize(csize_);
        if (euler) {
            for (std::size_t i = 0; i < csize_; ++i)
                out[i] = f0_[i] * base[i] + (ca_[i] + cb_[i]) * n0[i];
        } else {
            for (std::size_t i = 0; i < csize_; ++i)
                out[i] = f0_[i] * base[i] + ca_[i] * n0[i] + cb_[i] * n1[i];
        }
    }

    static void accumulate_change(const Spectrum& old_s, const Spectrum& new_s, double& diff2,
                                  double& norm2) {
        for (std::size_t i = 0; i < old_s.size(); ++i) {
            const std::complex<double> d = new_s[i] - old_s[i];
            diff2 += d.real() * d.real() + d.imag() * d.imag();
            norm2 += new_s[i].real() * new_s[i].real() + new_s[i].imag() * new_s[i].imag();
        }
    }

    double dissipation() const {
        // Parseval with r2c half-layout weights; full wavenumbers.
        const int n = ws_.n();
        const int nh = n / 2 + 1;
        const auto& modes = ws_.mode_numbers();
        const double L = ws_.grid().half_width;
        const double kbase = M_PI / L;
        double total = 0.0;
        for (int iz = 0; iz < n; ++iz)
            for (int iy = 0; iy < n; ++iy)
                for (int ix = 0; ix < nh; ++ix) {
                    const double kx = kbase * ix;
                    const double ky = kbase * modes[iy];
                    const double kz = kbase * modes[iz];
                    const double k2 = kx * kx + ky * ky + kz * kz;
                    if (k2 == 0.0) continue;
                    const double w = (ix == 0 || ix == n / 2) ? 1.0 : 2.0;
                    const std::size_t idx = ws_.cindex(ix, iy, iz);
                    double s = 0.0;
                    for (int c = 0; c < 3; ++c) s += std::norm(uh_[c][idx]);
                    for (int c = 0; c < 9; ++c) s += std::norm(Fh_[c][idx]);
                    total += w * k2 * s;
                }
        const double V = std::pow(2.0 * L, 3);
        const double n3 = std::pow(static_cast<double>(n), 3);
        return total * V / (n3 * n3);
    }

    double spectral_div_max(const std::array<Spectrum, 3>& f) {
        Spectrum d = ws_.divergence(f);
        std::vector<double> real(rsize_);
        ws_.backward(d, real.data());
        double best = 0.0;
        for (double v : real) best = std::max(best, std::abs(v));
        return best;
    }

    FourierWorkspace& ws_;
    const EvolveConfig& cfg_;
    std::size_t rsize_ = 0, csize_ = 0;
    double cell_ = 0.0;
    double sigma_ = 1.0;
    std::array<Spectrum, 3> uh_, Nu_;
    std::array<Spectrum, 9> Fh_, NF_;
    std::array<std::vector<double>, 3> ur_;
    std::array<std::vector<double>, 9> Fr_;
    std::vector<double> prod_;
    std::vector<double> f0_, ca_, cb_;
    double dt_cached_ = -1.0;
    bool have_n_ = false;
};

}  // namespace detail

/// Single accepted step; throws instead of halving. Exposed for tests and
/// point probes; evolve() below owns the production loop.
inline EvolveState evolve_step(const EvolveState& state, double dt, FourierWorkspace& ws,
                               const EvolveConfig& cfg = {}) {
    if (!(dt > 0.0)) throw std::invalid_argument("evolve_step: dt must be positive");
    if (!state.u.grid.compatible(ws.grid()) || !state.F.grid.compatible(ws.grid()))
        throw std::invalid_argument("evolve_step: state does not match the workspace grid");
    detail::EvolverCore core(ws, cfg);
    core.load(state);
    if (!core.step(dt))
        throw EvolverError("evolver step rejected: sub-iteration did not settle");
    EvolveState out = state;
    core.store(out, state.t + dt);
    return out;
}

namespace detail {

/// Window norms of the heat evolution of the initial data, plus the measured
/// bilinear constant from one frozen-source pass: the pair (w, G) is driven
/// from zero by the sources evaluated on the heat flow alone, and the ratio
/// of its window norm to kappa^2 is the empirical bilinear constant.
/// Trapezoid in time throughout.
inline MonitorReport run_monitor(FourierWorkspace& ws, const std::array<Spectrum, 3>& u0,
                                 const std::array<Spectrum, 9>& F0, double sigma, double t0,
                                 double t1, const EvolveConfig& cfg) {
    const int steps = std::max(2, cfg.monitor_steps);
    const double dt = (t1 - t0) / steps;
    const double q = 5.0 * cfg.m_exp / 3.0;
    const std::size_t csize = ws.spectral_size();

    EvolverCore src(ws, cfg);  // borrowed for its source assembly
    src.set_sigma(sigma);

    std::array<Spectrum, 3> uh, wh, nu_prev, nu_cur;
    std::array<Spectrum, 9> Fh, Gh, nf_prev, nf_cur;
    for (auto& s : wh) s.assign(csize, std::complex<double>(0.0, 0.0));
    for (auto& s : Gh) s.assign(csize, std::complex<double>(0.0, 0.0));

    std::vector<double> f0(csize), ca(csize), cb(csize);
    ws.for_each_mode_full([&](std::size_t idx, double kx, double ky, double kz) {
        etd_coeffs((kx * kx + ky * ky + kz * kz) * dt, dt, f0[idx], ca[idx], cb[idx]);
    });
    auto etd_apply = [&](Spectrum& state, const Spectrum& n0, const Spectrum& n1) {
        for (std::size_t i = 0; i < csize; ++i)
            state[i] = f0[i] * state[i] + ca[i] * n0[i] + cb[i] * n1[i];
    };

    std::array<std::vector<double>, 3> ur;
    std::array<std::vector<double>, 9> Fr;
    for (auto& c : ur) c.resize(ws.real_size());
    for (auto& c : Fr) c.resize(ws.real_size());
    const double cell = std::pow(ws.grid().h(), 3);

    auto synth = [&](const std::array<Spectrum, 3>& a, const std::array<Spectrum, 9>& b) {
        for (int c = 0; c < 3; ++c) ws.backward(a[c], ur[c].data());
        for (int c = 0; c < 9; ++c) ws.backward(b[c], Fr[c].data());
    };
    auto power_sum = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < ur[0].size(); ++i) {
            const double au2 = ur[0][i] * ur[0][i] + ur[1][i] * ur[1][i] + ur[2][i] * ur[2][i];
            double aF2 = 0.0;
            for (int c = 0; c < 9; ++c) aF2 += Fr[c][i] * Fr[c][i];
            s += std::pow(au2, 0.5 * q) + std::pow(aF2, 0.5 * q);
        }
        return s * cell;
    };
    auto heat_to = [&](double tau) {
        uh = u0;
        Fh = F0;
        for (auto& s : uh) ws.heat_multiply(s, tau);
        for (auto& s : Fh) ws.heat_multiply(s, tau);
    };

    double acc_lin = 0.0, acc_w = 0.0;
    heat_to(0.0);
    synth(uh, Fh);
    double prev_lin = power_sum();
    src.nonlinear(ur, Fr, nu_prev, nf_prev);
    double prev_w = 0.0;  // (w, G) starts from zero

    for (int s = 1; s <= steps; ++s) {
        heat_to(s * dt);
        synth(uh, Fh);
        const double cur_lin = power_sum();
        acc_lin += 0.5 * dt * (prev_lin + cur_lin);
        prev_lin = cur_lin;
        src.nonlinear(ur, Fr, nu_cur, nf_cur);
        for (int c = 0; c < 3; ++c) etd_apply(wh[c], nu_prev[c], nu_cur[c]);
        for (int c = 0; c < 9; ++c) etd_apply(Gh[c], nf_prev[c], nf_cur[c]);
        nu_prev = nu_cur;
        nf_prev = nf_cur;
        synth(wh, Gh);
        const double cur_w = power_sum();
        acc_w += 0.5 * dt * (prev_w + cur_w);
        prev_w = cur_w;
    }

    MonitorReport rep;
    rep.window = t1 - t0;
    rep.kappa = std::pow(acc_lin, 1.0 / q);
    const double growth = std::pow(acc_w, 1.0 / q);
    rep.c0_estimate = rep.kappa > 0.0 ? growth / (rep.kappa * rep.kappa) : 0.0;
    rep.threshold = rep.c0_estimate > 0.0 ? 1.0 / (4.0 * rep.c0_estimate)
                                          : std::numeric_limits<double>::infinity();
    rep.warned = rep.kappa >= rep.threshold;
    return rep;
}

}  // namespace detail

/// Mild-solution integration of the periodic flow from t0 to t1.
inline EvolveResult evolve(const EvolveState& init, double t0, double t1,
                           FourierWorkspace& ws, const EvolveConfig& cfg = {}) {
    if (!(t1 > t0) || !(t0 > 0.0))
        throw std::invalid_argument("evolve: need t1 > t0 > 0");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("evolve: dt must be positive");
    if (!init.u.grid.compatible(ws.grid()) || !init.F.grid.compatible(ws.grid()))
        throw std::invalid_argument("evolve: state does not match the workspace grid");

    detail::EvolverCore core(ws, cfg);
    core.load(init);

    EvolveResult result;
    result.rows.reserve(64);

    // running space-time accumulators, trapezoid in time
    const double q = 5.0 * cfg.m_exp / 3.0;
    double acc_st = 0.0, acc_kappa = 0.0;
    double prev_st = 0.0, prev_kappa = 0.0;

    const std::array<Spectrum, 3> u0 = core.u_spectra();
    const std::array<Spectrum, 9> F0 = core.F_spectra();

    std::array<std::vector<double>, 3> hur;
    std::array<std::vector<double>, 9> hFr;
    for (auto& c : hur) c.resize(ws.real_size());
    for (auto& c : hFr) c.resize(ws.real_size());
    const double cell = std::pow(ws.grid().h(), 3);

    auto heat_power = [&](double tau) {
        std::array<Spectrum, 3> a = u0;
        std::array<Spectrum, 9> b = F0;
        for (auto& s : a) ws.heat_multiply(s, tau);
        for (auto& s : b) ws.heat_multiply(s, tau);
        for (int c = 0; c < 3; ++c) ws.backward(a[c], hur[c].data());
        for (int c = 0; c < 9; ++c) ws.backward(b[c], hFr[c].data());
        double s = 0.0;
        for (std::size_t i = 0; i < hur[0].size(); ++i) {
            const double au2 =
                hur[0][i] * hur[0][i] + hur[1][i] * hur[1][i] + hur[2][i] * hur[2][i];
            double aF2 = 0.0;
            for (int c = 0; c < 9; ++c) aF2 += hFr[c][i] * hFr[c][i];
            s += std::pow(au2, 0.5 * q) + std::pow(aF2, 0.5 * q);
        }
        return s * cell;
    };

    {
        double iu, iF;
        core.space_power(q, iu, iF);
        prev_st = iu + iF;
        prev_kappa = heat_power(0.0);
        TrajectoryRow row = core.measure(t0);
        row.st_norm = 0.0;
        row.kappa = 0.0;
        result.rows.push_back(row);
        if (cfg.on_record) {
            EvolveState snap = init;
            core.store(snap, t0);
            cfg.on_record(snap, core.pressure(init.u.grid));
        }
    }

    double t = t0;
    double dt = cfg.dt;
    int halvings = 0;
    int since_record = 0;
    const double t_eps = 1e-12 * (t1 - t0);

    while (t < t1 - t_eps) {
        const double step_dt = std::min(dt, t1 - t);
        if (!core.step(step_dt)) {
            ++result.rejected;
            if (++halvings > cfg.max_halvings)
                throw EvolverError(
                    "evolver failed: sub-iteration did not settle at the minimum step size");
            dt *= 0.5;
            continue;
        }
        t += step_dt;
        ++result.steps;

        double iu, iF;
        core.space_power(q, iu, iF);
        const double cur_st = iu + iF;
        acc_st += 0.5 * step_dt * (prev_st + cur_st);
        prev_st = cur_st;
        const double cur_kappa = heat_power(t - t0);
        acc_kappa += 0.5 * step_dt * (prev_kappa + cur_kappa);
        prev_kappa = cur_kappa;

        const bool final_step = t >= t1 - t_eps;
        if (++since_record >= cfg.record_every || final_step) {
            since_record = 0;
            TrajectoryRow row = core.measure(t);
            row.st_norm = std::pow(acc_st, 1.0 / q);
            row.kappa = std::pow(acc_kappa, 1.0 / q);
            result.rows.push_back(row);
            if (cfg.on_record) {
                EvolveState snap = init;
                core.store(snap, t);
                cfg.on_record(snap, core.pressure(init.u.grid));
            }
        }
    }

    result.dt_final = dt;
    result.final_state = init;
    core.store(result.final_state, t);

    if (cfg.monitor)
        result.monitor = detail::run_monitor(ws, u0, F0, init.sigma, t0, t1, cfg);
    return result;
}

}  // namespace ssvf

#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssvf/duhamel.hpp"
#include "ssvf/fourier.hpp"
#include "ssvf/profile.hpp"
#include "ssvf/sources.hpp"

namespace ssvf {

/// Correction pair (v, H) over the caloric background, at one homotopy value.
struct ProfileState {
    VectorProfile v;
    TensorProfile H;
    double sigma = 0.0;
    double gamma = 0.5;

    static ProfileState zeros(const GridSpec& g, double sigma, double gamma) {
        check_gamma(gamma);
        ProfileState s;
        s.v = VectorProfile::zeros(g, 1.0);
        s.H = TensorProfile::zeros(g, 1.0);
        s.sigma = sigma;
        s.gamma = gamma;
        return s;
    }
};

/// Sum of the four weighted sup norms: v plus each deformation column,
/// measured in the ambient decay class of the state.
inline double state_norm(const ProfileState& s, int workers = 1) {
    const double wexp = 1.0 + s.gamma;
    double total = weighted_sup(s.v, wexp, workers);
    for (int j = 0; j < 3; ++j) total += weighted_sup(s.H.column(j), wexp, workers);
    return total;
}

inline ProfileState state_diff(const ProfileState& a, const ProfileState& b) {
    ProfileState d = a;
    for (std::size_t i = 0; i < d.v.data.size(); ++i) d.v.data[i] -= b.v.data[i];
    for (std::size_t i = 0; i < d.H.data.size(); ++i) d.H.data[i] -= b.H.data[i];
    return d;
}

enum class SolveStatus { Converged, MaxItersExceeded, DivergenceDetected, CeilingExceeded };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "Converged";
        case SolveStatus::MaxItersExceeded: return "MaxItersExceeded";
        case SolveStatus::DivergenceDetected: return "DivergenceDetected";
        default: return "CeilingExceeded";
    }
}

struct SolveConfig {
    std::vector<double> sigma_schedule {0.0, 0.25, 0.5, 0.75, 1.0};
    double damping = 1.0;           // Picard mixing weight theta
    double tol_fixed_point = 1e-8;  // relative residual threshold
    int max_iters = 40;             // per sigma value
    int anderson_depth = 0;         // 0 disables acceleration
    double norm_ceiling = 50.0;     // a-priori bound on the state norm
    double divergence_factor = 10.0;
    int duhamel_nodes = 64;
    bool validate_quadrature = false;  // node-halving cross-check on first apply
    double quadrature_tol = 1e-6;
    int workers = 1;

    void validate() const {
        if (!(damping > 0.0) || damping > 1.0)
            throw std::invalid_argument("solve: damping must lie in (0,1]");
        if (sigma_schedule.empty())
            throw std::invalid_argument("solve: sigma schedule is empty");
        double prev = -1.0;
        for (double s : sigma_schedule) {
            if (s < 0.0 || s > 1.0 || s <= prev)
                throw std::invalid_argument(
                    "solve: sigma schedule must be strictly increasing within [0,1]");
            prev = s;
        }
        if (!(tol_fixed_point > 0.0)) throw std::invalid_argument("solve: tol must be positive");
        if (max_iters < 1) throw std::invalid_argument("solve: max_iters must be at least 1");
        if (anderson_depth < 0 || anderson_depth > 5)
            throw std::invalid_argument("solve: anderson_depth must lie in [0,5]");
        if (duhamel_nodes < 4) throw std::invalid_argument("solve: duhamel_nodes must be >= 4");
    }
};

/// Divergence bookkeeping for one map application.
struct ApplyTReport {
    double pre_projection_div_v = 0.0;  // max-abs before the final projection
    double pre_projection_div_H = 0.0;  // worst column
    double rel_div_v = 0.0;             // post projection, relative to sup |grad|
    double rel_div_H = 0.0;
};

/// One application of the fixed-point map. The map is exactly linear in
/// sigma, so it is evaluated once at sigma = 1 and scaled; sigma = 0 returns
/// exact zeros without touching the quadrature.
inline ProfileState apply_T(const ProfileState& w, const VectorProfile& U0,
                            const TensorProfile& G0, FourierWorkspace& ws,
                            const SolveConfig& cfg, ApplyTReport* report = nullptr,
                            bool validated = false) {
    ProfileState out = ProfileState::zeros(w.v.grid, w.sigma, w.gamma);
    if (w.sigma == 0.0) {
        if (report) *report = ApplyTReport {};
        return out;
    }

    AssembledSources src = assemble_sources(w.v, w.H, U0, G0, cfg.workers);

    PhiOptions opt;
    opt.schedule = DuhamelSchedule::gauss(cfg.duhamel_nodes);
    opt.workers = cfg.workers;
    opt.tail_power = 3.0;  // div of a two-power-decay source

    ApplyTReport rep;
    auto run = [&](const TensorProfile& f) {
        return validated ? phi_profile_validated(f, ws, opt, cfg.quadrature_tol)
                         : phi_profile(f, ws, opt);
    };

    PhiResult pv = run(src.q);
    rep.pre_projection_div_v = pv.pre_projection_div;
    out.v = pv.v;

    for (int j = 0; j < 3; ++j) {
        PhiResult ph = run(src.Q[j]);
        rep.pre_projection_div_H = std::max(rep.pre_projection_div_H, ph.pre_projection_div);
        out.H.set_column(j, ph.v);
    }
    out.H.gamma = 1.0;

    if (report) {
        const double tiny = 1e-300;
        const double scale_v = std::max(ws.gradient_sup(out.v), tiny);
        rep.rel_div_v = ws.divergence_max(out.v) / scale_v;
        for (int j = 0; j < 3; ++j) {
            VectorProfile col = out.H.column(j);
            const double sc = std::max(ws.gradient_sup(col), tiny);
            rep.rel_div_H = std::max(rep.rel_div_H, ws.divergence_max(col) / sc);
        }
        *report = rep;
    }

    const double sig = w.sigma;
    for (double& x : out.v.data) x *= sig;
    for (double& x : out.H.data) x *= sig;
    return out;
}

struct FixedPointResult {
    ProfileState state;
    std::vector<double> residual_history;   // ||w - T(w)|| per iteration
    std::vector<double> contraction_ratios; // successive residual quotients
    bool converged = false;
    SolveStatus status = SolveStatus::MaxItersExceeded;
    int iterations = 0;                     // map applications
    double final_norm = 0.0;
    double max_rel_div_v = 0.0;             // worst post-projection divergence seen
    double max_rel_div_H = 0.0;
    double pre_projection_div_H = 0.0;      // from the final map application
};

namespace detail {

/// Least-squares mixing over the residual-difference history (type-II
/// Anderson). Histories hold the newest entry last.
inline void anderson_update(std::vector<double>& w_next,
                            const std::deque<std::vector<double>>& g_hist,
                            const std::deque<std::vector<double>>& f_hist) {
    const int m = static_cast<int>(f_hist.size()) - 1;
    if (m < 1) return;
    const std::size_t n = w_next.size();
    // Normal equations for gamma in span of residual differences.
    std::vector<std::vector<double>> df(m), dg(m);
    for (int j = 0; j < m; ++j) {
        df[j].resize(n);
        dg[j].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            df[j][i] = f_hist[j + 1][i] - f_hist[j][i];
            dg[j][i] = g_hist[j + 1][i] - g_hist[j][i];
        }
    }
    const std::vector<double>& fk = f_hist.back();
    std::vector<double> A(static_cast<std::size_t>(m) * m, 0.0), b(m, 0.0);
    for (int r = 0; r < m; ++r) {
        for (int c = r; c < m; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += df[r][i] * df[c][i];
            A[r * m + c] = A[c * m + r] = s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += df[r][i] * fk[i];
        b[r] = s;
    }
    // Tikhonov guard keeps near-singular histories harmless.
    double trace = 0.0;
    for (int r = 0; r < m; ++r) trace += A[r * m + r];
    const double reg = 1e-12 * std::max(trace, 1e-300);
    for (int r = 0; r < m; ++r) A[r * m + r] += reg;
    // Gaussian elimination with partial pivoting (m <= 5).
    std::vector<int> piv(m);
    for (int r = 0; r < m; ++r) piv[r] = r;
    for (int col = 0; col < m; ++col) {
        int best = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(A[r * m + col]) > std::abs(A[best * m + col])) best = r;
        if (best != col) {
            for (int c = 0; c < m; ++c) std::swap(A[col * m + c], A[best * m + c]);
            std::swap(b[col], b[best]);
        }
        const double d = A[col * m + col];
        if (d == 0.0) return;  // defective history; plain step stands
        for (int r = col + 1; r < m; ++r) {
            const double f = A[r * m + col] / d;
            for (int c = col; c < m; ++c) A[r * m + c] -= f * A[col * m + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> gma(m, 0.0);
    for (int r = m - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < m; ++c) s -= A[r * m + c] * gma[c];
        gma[r] = s / A[r * m + r];
    }
    // w_next starts as g_k; subtract the history combination.
    for (int j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) w_next[i] -= gma[j] * dg[j][i];
}

inline std::vector<double> flatten(const ProfileState& s) {
    std::vector<double> out;
    out.reserve(s.v.data.size() + s.H.data.size());
    out.insert(out.end(), s.v.data.begin(), s.v.data.end());
    out.insert(out.end(), s.H.data.begin(), s.H.data.end());
    return out;
}

inline void unflatten(const std::vector<double>& flat, ProfileState& s) {
    const std::size_t nv = s.v.data.size();
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nv), s.v.data.begin());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(nv), flat.end(), s.H.data.begin());
}

}  // namespace detail

/// Damped Picard iteration on the fixed-point map at the state's sigma.
/// Non-convergence is reported through the status field, never thrown;
/// quadrature failures from the validated first application do propagate.
inline FixedPointResult picard_solve(const ProfileState& init, const VectorProfile& U0,
                                     const TensorProfile& G0, FourierWorkspace& ws,
                                     const SolveConfig& cfg) {
    cfg.validate();
    FixedPointResult result;
    ProfileState w = init;
    double min_res = std::numeric_limits<double>::infinity();

    std::deque<std::vector<double>> g_hist, f_hist;  // Anderson memory
    const std::size_t hist_cap = static_cast<std::size_t>(cfg.anderson_depth) + 1;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        ApplyTReport rep;
        ProfileState tw =
            apply_T(w, U0, G0, ws, cfg, &rep, cfg.validate_quadrature && iter == 0);
        result.iterations = iter + 1;
        result.max_rel_div_v = std::max(result.max_rel_div_v, rep.rel_div_v);
        result.max_rel_div_H = std::max(result.max_rel_div_H, rep.rel_div_H);
        result.pre_projection_div_H = rep.pre_projection_div_H;

        const double res = state_norm(state_diff(w, tw), cfg.workers);
        if (!result.residual_history.empty()) {
            const double prev = result.residual_history.back();
            result.contraction_ratios.push_back(prev > 0.0 ? res / prev : 0.0);
        }
        result.residual_history.push_back(res);

        const double wnorm = state_norm(w, cfg.workers);
        if (res < cfg.tol_fixed_point * std::max(1.0, wnorm)) {
            result.state = std::move(w);
            result.final_norm = wnorm;
            result.converged = true;
            result.status = SolveStatus::Converged;
            return result;
        }
        if (wnorm > cfg.norm_ceiling) {
            result.state = std::move(w);
            result.final_norm = wnorm;
            result.status = SolveStatus::CeilingExceeded;
            return result;
        }
        if (res > cfg.divergence_factor * min_res) {
            result.state = std::move(w);
            result.final_norm = wnorm;
            result.status = SolveStatus::DivergenceDetected;
            return result;
        }
        min_res = std::min(min_res, res);

        const double theta = cfg.damping;
        if (cfg.anderson_depth > 0) {
            std::vector<double> wf = detail::flatten(w);
            std::vector<double> gf = detail::flatten(tw);
            std::vector<double> ff(gf.size());
            for (std::size_t i = 0; i < gf.size(); ++i) ff[i] = gf[i] - wf[i];
            g_hist.push_back(std::move(gf));
            f_hist.push_back(std::move(ff));
            if (g_hist.size() > hist_cap) {
                g_hist.pop_front();
                f_hist.pop_front();
            }
            std::vector<double> next = g_hist.back();
            detail::anderson_update(next, g_hist, f_hist);
            if (theta < 1.0)
                for (std::size_t i = 0; i < next.size(); ++i)
                    next[i] = (1.0 - theta) * wf[i] + theta * next[i];
            detail::unflatten(next, w);
        } else {
            for (std::size_t i = 0; i < w.v.data.size(); ++i)
                w.v.data[i] = (1.0 - theta) * w.v.data[i] + theta * tw.v.data[i];
            for (std::size_t i = 0; i < w.H.data.size(); ++i)
                w.H.data[i] = (1.0 - theta) * w.H.data[i] + theta * tw.H.data[i];
        }
    }

    result.final_norm = state_norm(w, cfg.workers);
    result.state = std::move(w);
    result.status = SolveStatus::MaxItersExceeded;
    return result;
}

struct ContinuationRecord {
    double sigma = 0.0;
    double norm = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct ContinuationResult {
    std::vector<FixedPointResult> results;  // one per schedule value
    std::vector<ContinuationRecord> records;
};

/// Raised when some homotopy step fails to converge; carries the last value
/// that did converge (-1 when none did) plus the per-step records.
struct ContinuationStalled : SsvfError {
    double last_good_sigma;
    std::vector<ContinuationRecord> records;
    ContinuationStalled(const std::string& msg, double last_good,
                        std::vector<ContinuationRecord> recs)
        : SsvfError(msg), last_good_sigma(last_good), records(std::move(recs)) {}
};

/// Warm-started sweep along the sigma schedule from the zero state.
inline ContinuationResult sigma_continuation(const VectorProfile& U0, const TensorProfile& G0,
                                             FourierWorkspace& ws, const SolveConfig& cfg,
                                             double gamma) {
    cfg.validate();
    ContinuationResult out;
    ProfileState w = ProfileState::zeros(U0.grid, cfg.sigma_schedule.front(), gamma);
    double last_good = -1.0;
    for (double sigma : cfg.sigma_schedule) {
        w.sigma = sigma;
        FixedPointResult r = picard_solve(w, U0, G0, ws, cfg);
        ContinuationRecord rec;
        rec.sigma = sigma;
        rec.norm = r.final_norm;
        rec.residual = r.residual_history.empty() ? 0.0 : r.residual_history.back();
        rec.iterations = r.iterations;
        rec.converged = r.converged;
        out.records.push_back(rec);
        if (!r.converged) {
            out.results.push_back(std::move(r));
            throw ContinuationStalled(
                "continuation stalled at sigma = " + std::to_string(sigma) +
                    " (" + to_string(out.results.back().status) +
                    "); last converged sigma = " + std::to_string(last_good),
                last_good, out.records);
        }
        w = r.state;
        out.results.push_back(std::move(r));
        last_good = sigma;
    }
    return out;
}

}  // namespace ssvf

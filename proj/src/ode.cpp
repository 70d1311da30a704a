#include "tsgen/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tsgen/errors.hpp"

namespace tsgen {
namespace {

bool all_finite(const Tensor& t) {
    for (double v : t.vec()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double rms_scaled_error(const Tensor& err, const Tensor& y0, const Tensor& y1,
                        double atol, double rtol) {
    const auto& e = err.vec();
    const auto& a = y0.vec();
    const auto& b = y1.vec();
    double acc = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        double sc = atol + rtol * std::max(std::abs(a[i]), std::abs(b[i]));
        double r = e[i] / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(e.size()));
}

// Hairer's starting-step heuristic (Solving ODEs I, II.4): balance the size of
// the initial derivative against the state scale, probe one Euler step, and
// take the more conservative of the two candidates.
double initial_step(const OdeField& field, const Tensor& y0, double t0, double dir,
                    double atol, double rtol) {
    Tensor f0 = field(t0, y0).detach();
    const auto& y = y0.vec();
    const auto& f = f0.vec();
    const auto n = static_cast<double>(y.size());

    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double sc = atol + rtol * std::abs(y[i]);
        double r0 = y[i] / sc;
        double r1 = f[i] / sc;
        d0 += r0 * r0;
        d1 += r1 * r1;
    }
    d0 = std::sqrt(d0 / n);
    d1 = std::sqrt(d1 / n);

    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * (d0 / d1);

    // one explicit Euler probe to estimate the second derivative scale
    std::vector<double> y1v(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y1v[i] = y[i] + dir * h0 * f[i];
    Tensor y1 = Tensor::from(y0.shape(), y1v);
    Tensor f1 = field(t0 + dir * h0, y1).detach();
    double d2 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double sc = atol + rtol * std::abs(y[i]);
        double r = (f1.vec()[i] - f[i]) / sc;
        d2 += r * r;
    }
    d2 = std::sqrt(d2 / n) / h0;

    double h1;
    if (std::max(d1, d2) <= 1e-15) {
        h1 = std::max(1e-6, h0 * 1e-3);
    } else {
        h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    }
    return std::min(100.0 * h0, h1);
}

OdeSolution run_rk4(const OdeField& field, const Tensor& y0, double t0, double t1,
                    const SolverConfig& cfg) {
    const double span = t1 - t0;
    std::size_t n_steps = 1;
    if (cfg.step_size > 0.0) {
        n_steps = static_cast<std::size_t>(
            std::max(1.0, std::round(std::abs(span) / cfg.step_size)));
    }
    if (n_steps > cfg.max_steps) {
        throw numeric_error("rk4: step budget exhausted (" + std::to_string(n_steps) +
                            " steps needed, max " + std::to_string(cfg.max_steps) + ")");
    }
    const double h = span / static_cast<double>(n_steps);

    Tensor y = y0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = t0 + h * static_cast<double>(k);
        Tensor k1 = field(t, y);
        Tensor k2 = field(t + 0.5 * h, y + scale(k1, 0.5 * h));
        Tensor k3 = field(t + 0.5 * h, y + scale(k2, 0.5 * h));
        Tensor k4 = field(t + h, y + scale(k3, h));
        Tensor incr = k1 + scale(k2, 2.0) + scale(k3, 2.0) + k4;
        y = y + scale(incr, h / 6.0);
        if (!all_finite(y)) {
            throw numeric_error("rk4: non-finite state at t=" +
                                std::to_string(t + h));
        }
    }
    OdeSolution sol;
    sol.y1 = y;
    sol.steps_taken = n_steps;
    return sol;
}

// Dormand-Prince 5(4) Butcher tableau.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {0, 0, 0, 0, 0, 0},
    {1.0 / 5, 0, 0, 0, 0, 0},
    {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
    {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
// 5th-order solution weights (b) and the (b - b*) error weights.
constexpr double kB[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192,
                          -2187.0 / 6784, 11.0 / 84, 0};
constexpr double kE[7] = {
    35.0 / 384 - 5179.0 / 57600, 0.0, 500.0 / 1113 - 7571.0 / 16695,
    125.0 / 192 - 393.0 / 640,   -2187.0 / 6784 + 92097.0 / 339200,
    11.0 / 84 - 187.0 / 2100,    -1.0 / 40};

OdeSolution run_dopri5(const OdeField& field, const Tensor& y0, double t0, double t1,
                       const SolverConfig& cfg) {
    OdeSolution sol;
    if (t1 == t0) {
        sol.y1 = y0;
        return sol;
    }
    const double dir = (t1 > t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);

    double h = std::min(initial_step(field, y0, t0, dir, cfg.atol, cfg.rtol), span);
    double t = t0;
    Tensor y = y0;
    Tensor f_first = field(t, y);  // FSAL: stage 7 of an accepted step is stage 1 of the next
    std::size_t attempts = 0;

    while (dir * (t1 - t) > 0.0) {
        if (attempts++ >= cfg.max_steps) {
            numeric_error err("dopri5: step budget exhausted at t=" + std::to_string(t));
            throw err;
        }
        h = std::min(h, std::abs(t1 - t));
        const double hs = dir * h;

        Tensor k[7];
        k[0] = f_first;
        for (int s = 1; s < 7; ++s) {
            Tensor ys = y;
            for (int j = 0; j < s; ++j) {
                if (kA[s][j] != 0.0) ys = ys + scale(k[j], hs * kA[s][j]);
            }
            k[s] = field(t + hs * kC[s], ys);
        }

        Tensor y_next = y;
        for (int s = 0; s < 7; ++s) {
            if (kB[s] != 0.0) y_next = y_next + scale(k[s], hs * kB[s]);
        }
        // error estimate (values only; never differentiated)
        std::vector<double> errv(y.numel(), 0.0);
        for (int s = 0; s < 7; ++s) {
            if (kE[s] == 0.0) continue;
            const auto& kv = k[s].vec();
            for (std::size_t i = 0; i < errv.size(); ++i) errv[i] += hs * kE[s] * kv[i];
        }
        Tensor err = Tensor::from(y.shape(), errv);

        if (!all_finite(y_next)) {
            throw numeric_error("dopri5: non-finite state at t=" + std::to_string(t));
        }
        double norm = rms_scaled_error(err, y, y_next, cfg.atol, cfg.rtol);

        if (norm <= 1.0) {
            t += hs;
            y = y_next;
            f_first = k[6];  // FSAL
            ++sol.steps_taken;
            sol.max_error_norm = std::max(sol.max_error_norm, norm);
        } else {
            ++sol.steps_rejected;
        }
        double factor = (norm <= 1e-300) ? 5.0
                                         : 0.9 * std::pow(norm, -0.2);
        factor = std::clamp(factor, 0.2, 5.0);
        h = h * factor;
        if (!(h > 0.0) || !std::isfinite(h)) {
            throw numeric_error("dopri5: degenerate step size at t=" + std::to_string(t));
        }
    }
    sol.y1 = y;
    return sol;
}

}  // namespace

OdeMethod ode_method_from_string(const std::string& name) {
    if (name == "rk4") return OdeMethod::rk4;
    if (name == "dopri5") return OdeMethod::dopri5;
    throw value_error("unknown ODE method: '" + name + "' (expected rk4 or dopri5)");
}

std::string ode_method_to_string(OdeMethod m) {
    return m == OdeMethod::rk4 ? "rk4" : "dopri5";
}

OdeSolution integrate(const OdeField& field, const Tensor& y0, double t0, double t1,
                      const SolverConfig& cfg) {
    if (y0.numel() == 0) throw shape_error("integrate: empty state");
    if (t0 == t1) {
        OdeSolution sol;
        sol.y1 = y0;
        return sol;
    }
    switch (cfg.method) {
        case OdeMethod::rk4:
            return run_rk4(field, y0, t0, t1, cfg);
        case OdeMethod::dopri5:
            return run_dopri5(field, y0, t0, t1, cfg);
    }
    throw value_error("integrate: bad method enum");
}

OdeSolution integrate_reverse_time(const OdeField& field, const Tensor& y1, double t1, double t0,
                                   const SolverConfig& cfg) {
    return integrate(field, y1, t1, t0, cfg);
}

Tensor integrate_rows(const RowOdeField& field, const Tensor& y0,
                      const std::vector<double>& t0, const std::vector<double>& t1,
                      std::size_t substeps) {
    if (y0.rank() != 2) throw shape_error("integrate_rows: state must be [B, d]");
    const std::size_t B = y0.rows();
    if (t0.size() != B || t1.size() != B) {
        throw shape_error("integrate_rows: time vectors must have one entry per row");
    }
    if (substeps == 0) throw value_error("integrate_rows: substeps must be >= 1");

    // Per-row step sizes; a zero-length interval contributes exactly zero.
    std::vector<double> hv(B);
    for (std::size_t b = 0; b < B; ++b) {
        hv[b] = (t1[b] - t0[b]) / static_cast<double>(substeps);
    }
    Tensor h_col = Tensor::from({B, 1}, hv);

    Tensor y = y0;
    for (std::size_t s = 0; s < substeps; ++s) {
        std::vector<double> ts(B), tmid(B), tend(B);
        for (std::size_t b = 0; b < B; ++b) {
            ts[b] = t0[b] + hv[b] * static_cast<double>(s);
            tmid[b] = ts[b] + 0.5 * hv[b];
            tend[b] = ts[b] + hv[b];
        }
        Tensor t_a = Tensor::from({B, 1}, ts);
        Tensor t_m = Tensor::from({B, 1}, tmid);
        Tensor t_b = Tensor::from({B, 1}, tend);

        Tensor k1 = field(t_a, y);
        Tensor k2 = field(t_m, y + mul(scale(h_col, 0.5), k1));
        Tensor k3 = field(t_m, y + mul(scale(h_col, 0.5), k2));
        Tensor k4 = field(t_b, y + mul(h_col, k3));
        Tensor incr = k1 + scale(k2, 2.0) + scale(k3, 2.0) + k4;
        y = y + mul(scale(h_col, 1.0 / 6.0), incr);
        if (!all_finite(y)) {
            throw numeric_error("integrate_rows: non-finite state at substep " +
                                std::to_string(s));
        }
    }
    return y;
}

}  // namespace tsgen

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "kraichnan/errors.hpp"
#include "kraichnan/generator.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

enum class IntegrationPath { uniformization, krylov };

inline const char* to_string(IntegrationPath p) { return p == IntegrationPath::uniformization ? "uniformization" : "krylov"; }

struct IntegrateOptions {
    double tol = 1e-10;
    double explicit_min_step = 1e-6;
    double explicit_work_budget = 2e9;  // rho * T * matvec cost above which the explicit path is abandoned
    std::optional<IntegrationPath> path;
    int krylov_dim = 64;
    std::size_t max_matvecs = 2'000'000;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> values;     // a(t_i)
    std::vector<std::vector<double>> integrals;  // int_0^{t_i} a(s) ds
    std::vector<double> outflow;                 // cumulative mass lost through the truncation
    std::vector<double> heat;                    // cumulative mass removed by diffusion
    IntegrationPath path = IntegrationPath::uniformization;
    std::size_t matvecs = 0;
    double error_bound = 0;
};

class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& msg, double t) : NumericalError(msg), time(t) {}
    double time;
};

namespace detail {

inline void finish_ledgers(const Generator& g, Trajectory& tr) {
    for (const auto& I : tr.integrals) {
        tr.outflow.push_back(compensated_sum(I.size(), [&](std::size_t k) { return g.outflow_rate()[k] * I[k]; }));
        tr.heat.push_back(compensated_sum(I.size(), [&](std::size_t k) { return g.heat_rate()[k] * I[k]; }));
    }
}

// a(t) = sum_n Pois(n; rho t) P^n a0 with P = I + G/rho >= 0 entrywise
inline Trajectory uniformization(const Generator& g, std::span<const double> a0, std::span<const double> ts,
                                 const IntegrateOptions& opt) {
    const std::size_t n = g.size(), nt = ts.size();
    Trajectory tr;
    tr.path = IntegrationPath::uniformization;
    tr.times.assign(ts.begin(), ts.end());
    tr.values.assign(nt, std::vector<double>(n, 0.0));
    tr.integrals.assign(nt, std::vector<double>(n, 0.0));
    const double rho = g.max_rate();
    if (rho == 0) {
        for (std::size_t i = 0; i < nt; ++i)
            for (std::size_t k = 0; k < n; ++k) tr.values[i][k] = a0[k], tr.integrals[i][k] = ts[i] * a0[k];
        finish_ledgers(g, tr);
        return tr;
    }
    const double cut = std::max(opt.tol * 1e-3, 1e-300);
    std::vector<std::vector<double>> pmf(nt), Q(nt);
    std::size_t nmax = 0;
    double tail_max = 0;
    for (std::size_t i = 0; i < nt; ++i) {
        const double lam = rho * ts[i];
        if (lam == 0) {
            pmf[i] = {1.0};
            Q[i] = {0.0};
            continue;
        }
        const double ll = std::log(lam);
        double tail = 0;
        for (std::size_t m = 0;; ++m) {
            const double p = std::exp(-lam + double(m) * ll - std::lgamma(double(m) + 1.0));
            pmf[i].push_back(p);
            if (double(m) + 2.0 > lam) {
                tail = p * lam / (double(m) + 2.0 - lam);
                if (tail < cut && double(m) > lam) break;
            }
        }
        Q[i].resize(pmf[i].size());
        CompensatedSum s;
        s.add(tail);
        for (std::size_t m = pmf[i].size(); m-- > 0;) {
            Q[i][m] = s.value();
            s.add(pmf[i][m]);
        }
        nmax = std::max(nmax, pmf[i].size());
        tail_max = std::max(tail_max, tail);
    }
    std::vector<double> v(a0.begin(), a0.end()), w(n);
    std::vector<std::vector<CompensatedSum>> acc_v(nt, std::vector<CompensatedSum>(n)), acc_i = acc_v;
    for (std::size_t m = 0; m < nmax; ++m) {
        for (std::size_t i = 0; i < nt; ++i) {
            if (m >= pmf[i].size()) continue;
            const double p = pmf[i][m], q = Q[i][m];
            if (p != 0)
                for (std::size_t k = 0; k < n; ++k) acc_v[i][k].add(p * v[k]);
            if (q != 0)
                for (std::size_t k = 0; k < n; ++k) acc_i[i][k].add(q * v[k]);
        }
        if (m + 1 == nmax) break;
        g.apply(v, w);
        ++tr.matvecs;
        for (std::size_t k = 0; k < n; ++k) v[k] += w[k] / rho;
    }
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            tr.values[i][k] = acc_v[i][k].value();
            tr.integrals[i][k] = acc_i[i][k].value() / rho;
        }
    tr.error_bound = tail_max * compensated_sum(a0);
    finish_ledgers(g, tr);
    return tr;
}

inline double norm2(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// Lanczos with full reorthogonalization; windowed steps controlled by the a posteriori estimate
inline Trajectory krylov(const Generator& g, std::span<const double> a0, std::span<const double> ts,
                         const IntegrateOptions& opt) {
    const std::size_t n = g.size(), nt = ts.size();
    Trajectory tr;
    tr.path = IntegrationPath::krylov;
    tr.times.assign(ts.begin(), ts.end());
    std::vector<double> v(a0.begin(), a0.end()), I(n, 0.0);
    const double scale = std::max(norm2(a0), 1e-300);
    double t = 0;
    const int mmax = std::max(2, std::min<int>(opt.krylov_dim, int(n)));
    std::vector<std::vector<double>> V;
    std::vector<double> w(n);

    for (std::size_t it = 0; it < nt; ++it) {
        const double target = ts[it];
        while (t < target) {
            const double beta = norm2(v);
            if (beta == 0) {
                t = target;
                break;
            }
            V.assign(1, std::vector<double>(n));
            for (std::size_t k = 0; k < n; ++k) V[0][k] = v[k] / beta;
            std::vector<double> al, be;
            double hnext = 0;
            bool happy = false;
            for (int j = 0; j < mmax; ++j) {
                g.apply(V[j], w);
                ++tr.matvecs;
                double a = 0;
                for (std::size_t k = 0; k < n; ++k) a += w[k] * V[j][k];
                al.push_back(a);
                for (int pass = 0; pass < 2; ++pass)
                    for (const auto& q : V) {
                        double s = 0;
                        for (std::size_t k = 0; k < n; ++k) s += w[k] * q[k];
                        for (std::size_t k = 0; k < n; ++k) w[k] -= s * q[k];
                    }
                const double b = norm2(w);
                if (b <= 1e-13 * (std::abs(a) + (be.empty() ? 0.0 : be.back())) || b == 0) {
                    happy = true;
                    hnext = 0;
                    break;
                }
                if (j + 1 == mmax) {
                    hnext = b;
                    break;
                }
                be.push_back(b);
                V.emplace_back(n);
                for (std::size_t k = 0; k < n; ++k) V.back()[k] = w[k] / b;
            }
            const int m = int(al.size());
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
            for (int i = 0; i < m; ++i) T(i, i) = al[i];
            for (int i = 0; i + 1 < m; ++i) T(i, i + 1) = T(i + 1, i) = be[i];
            // computeFromTridiagonal fails to converge on some restarted bases; the dense solver does not
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
            if (es.info() != Eigen::Success) throw IntegrationError("krylov: tridiagonal eigensolver failed at t = " + std::to_string(t), t);
            const auto& lam = es.eigenvalues();
            const auto& Qm = es.eigenvectors();

            auto phi1 = [](double z) { return std::abs(z) < 1e-8 ? 1.0 + z / 2.0 : std::expm1(z) / z; };
            auto err = [&](double tau) {
                if (happy) return 0.0;
                double s = 0;
                for (int i = 0; i < m; ++i) s += Qm(m - 1, i) * phi1(tau * lam[i]) * Qm(0, i);
                return beta * hnext * tau * std::abs(s);
            };
            const double remain = target - t;
            double tau = remain;
            if (err(tau) > opt.tol * tau * scale) {
                double lo = 0, hi = remain;
                for (int b = 0; b < 60; ++b) {
                    const double mid = 0.5 * (lo + hi);
                    if (err(mid) <= opt.tol * mid * scale)
                        lo = mid;
                    else
                        hi = mid;
                }
                tau = lo;
            }
            if (!(tau > 1e-14 * std::max(1.0, target)) || tr.matvecs > opt.max_matvecs)
                throw IntegrationError("krylov step size underflow (stiffness beyond budget) at t = " + std::to_string(t), t);
            tr.error_bound += err(tau);

            std::vector<double> ce(m), ci(m);
            for (int r = 0; r < m; ++r) {
                double se = 0, si = 0;
                for (int i = 0; i < m; ++i) {
                    se += Qm(r, i) * std::exp(tau * lam[i]) * Qm(0, i);
                    si += Qm(r, i) * tau * phi1(tau * lam[i]) * Qm(0, i);
                }
                ce[r] = beta * se;
                ci[r] = beta * si;
            }
            std::fill(v.begin(), v.end(), 0.0);
            for (int r = 0; r < m; ++r)
                for (std::size_t k = 0; k < n; ++k) {
                    v[k] += ce[r] * V[r][k];
                    I[k] += ci[r] * V[r][k];
                }
            t = (tau == remain) ? target : t + tau;
        }
        tr.values.push_back(v);
        tr.integrals.push_back(I);
    }
    finish_ledgers(g, tr);
    return tr;
}

}  // namespace detail

inline IntegrationPath choose_path(const Generator& g, double t_end, const IntegrateOptions& opt = {}) {
    if (opt.path) return *opt.path;
    const double rho = g.max_rate();
    if (rho == 0) return IntegrationPath::uniformization;
    if (1.0 / rho < opt.explicit_min_step) return IntegrationPath::krylov;
    if (rho * t_end * g.matvec_cost() > opt.explicit_work_budget) return IntegrationPath::krylov;
    return IntegrationPath::uniformization;
}

inline Trajectory integrate(const Generator& g, std::span<const double> a0, std::span<const double> t_grid,
                            const IntegrateOptions& opt = {}) {
    if (a0.size() != g.size()) throw std::invalid_argument("integrate: a0 has the wrong length");
    for (double x : a0)
        if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument("integrate: a0 must be finite and nonnegative");
    if (t_grid.empty()) throw std::invalid_argument("integrate: empty time grid");
    if (!(t_grid[0] >= 0)) throw std::invalid_argument("integrate: times must be >= 0");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("integrate: times must be increasing");
    const auto path = choose_path(g, t_grid.back(), opt);
    return path == IntegrationPath::uniformization ? detail::uniformization(g, a0, t_grid, opt)
                                                   : detail::krylov(g, a0, t_grid, opt);
}

}  // namespace kraichnan

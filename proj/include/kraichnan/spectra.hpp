#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kraichnan/coefficients.hpp"
#include "kraichnan/errors.hpp"
#include "kraichnan/generator.hpp"
#include "kraichnan/integrate.hpp"
#include "kraichnan/lattice.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

class SigmaWeight {
public:
    // r^beta / (log r + 1)^m
    static SigmaWeight power_log(double beta, double m) {
        if (!(beta >= 0 && beta <= 1) || !(m >= 0)) throw std::invalid_argument("SigmaWeight: need 0 <= beta <= 1, m >= 0");
        SigmaWeight s;
        s.beta_ = beta;
        s.m_ = m;
        return s;
    }
    // S(R r) / (log r + 1)
    static SigmaWeight tabulated(StructureFunction S, double R) {
        if (!(R > 0)) throw std::invalid_argument("SigmaWeight: R must be positive");
        SigmaWeight s;
        s.S_ = std::move(S);
        s.R_ = R;
        return s;
    }
    double operator()(double r) const {
        if (S_) return (*S_)(R_ * r) / (std::log(r) + 1.0);
        return std::pow(r, beta_) / std::pow(std::log(r) + 1.0, m_);
    }

private:
    double beta_ = 0, m_ = 0, R_ = 0;
    std::optional<StructureFunction> S_;
};

inline double sigma_norm_sq(const Lattice& lat, std::span<const double> a, const SigmaWeight& s) {
    return compensated_sum(lat.size(), [&](std::size_t k) {
        const double v = s(lat.norm(k));
        return v * v * a[k];
    });
}

// sum |k_axis|^power a_k
inline double axis_moment(const Lattice& lat, std::span<const double> a, int axis, int power) {
    return compensated_sum(lat.size(), [&](std::size_t k) { return std::pow(std::abs(double(lat.site(k)[axis])), power) * a[k]; });
}

struct DecayFit {
    double rate = 0;
    double prefactor = 0;
    double residual = 0;  // rms of log residuals
};

inline DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> v) {
    if (t.size() != v.size()) throw std::invalid_argument("fit_decay_rate: length mismatch");
    if (t.size() < 5) throw std::invalid_argument("fit_decay_rate: need at least 5 points");
    const std::size_t n = t.size();
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(v[i] > 0)) throw std::invalid_argument("fit_decay_rate: values must be positive");
        A(i, 0) = 1.0;
        A(i, 1) = t[i];
        y[i] = std::log(v[i]);
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    DecayFit f;
    f.rate = -c[1];
    f.prefactor = std::exp(c[0]);
    f.residual = std::sqrt((A * c - y).squaredNorm() / double(n));
    return f;
}

struct InvariantSpectrum {
    std::vector<double> x;
    int iterations = 0;
    double residual = 0;  // relative
    double heat = 0;      // 8 pi^2 kappa sum |k|^2 x_k
    double outflow = 0;   // sum outflow_k x_k
    double input = 0;     // sum Fhat^2
};

struct SolveOptions {
    double tol = 1e-12;
    int max_iter = 200000;
};

// G x = -Fhat^2 by Jacobi-preconditioned conjugate gradients on -G
inline InvariantSpectrum invariant_spectrum(const Generator& g, std::span<const double> f, const SolveOptions& opt = {}) {
    if (!(g.kappa() > 0)) throw std::invalid_argument("invariant_spectrum: kappa must be > 0");
    const std::size_t n = g.size();
    if (f.size() != n) throw std::invalid_argument("invariant_spectrum: forcing has the wrong length");
    for (double v : f)
        if (!(v >= 0)) throw std::invalid_argument("invariant_spectrum: forcing must be nonnegative");
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        return compensated_sum(n, [&](std::size_t i) { return a[i] * b[i]; });
    };
    std::vector<double> x(n, 0.0), r(f.begin(), f.end()), z(n), p(n), Ap(n);
    const auto dg = g.diagonal();
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / -dg[i];
    p = z;
    const double bnorm = std::sqrt(dot(r, r));
    InvariantSpectrum out;
    if (bnorm == 0) {
        out.x = x;
        return out;
    }
    double rz = dot(r, z);
    int it = 0;
    double rel = 1.0;
    for (; it < opt.max_iter; ++it) {
        g.apply(p, Ap);
        for (auto& v : Ap) v = -v;
        const double pAp = dot(p, Ap);
        if (!(pAp > 0)) throw NumericalError("invariant_spectrum: operator not positive definite");
        const double alpha = rz / pAp;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i], r[i] -= alpha * Ap[i];
        rel = std::sqrt(dot(r, r)) / bnorm;
        if (rel <= opt.tol) break;
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / -dg[i];
        const double rz2 = dot(r, z);
        const double b = rz2 / rz;
        rz = rz2;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + b * p[i];
    }
    // recompute the true residual
    auto Gx = g.apply(x);
    double rr = 0;
    for (std::size_t i = 0; i < n; ++i) rr += (Gx[i] + f[i]) * (Gx[i] + f[i]);
    out.residual = std::sqrt(rr) / bnorm;
    out.iterations = it + 1;
    if (!(out.residual <= std::max(opt.tol * 10.0, 1e-14)))
        throw NumericalError("invariant_spectrum: no convergence, relative residual " + std::to_string(out.residual));
    out.x = std::move(x);
    out.heat = compensated_sum(n, [&](std::size_t k) { return g.heat_rate()[k] * out.x[k]; });
    out.outflow = compensated_sum(n, [&](std::size_t k) { return g.outflow_rate()[k] * out.x[k]; });
    out.input = compensated_sum(f);
    return out;
}

struct QuadratureSpectrum {
    std::vector<double> x;
    double t_end = 0;
    double tail_bound = 0;  // ell^1 bound on the omitted integral past t_end
    IntegrationPath path = IntegrationPath::uniformization;
};

// int_0^T e^{tG} Fhat^2 dt with T chosen so the remaining mass is below tol
inline QuadratureSpectrum invariant_spectrum_quadrature(const Generator& g, std::span<const double> f, double tol = 1e-13,
                                                        const IntegrateOptions& opt = {}) {
    if (!(g.kappa() > 0)) throw std::invalid_argument("invariant_spectrum_quadrature: kappa must be > 0");
    const double floor_rate = 8.0 * std::numbers::pi * std::numbers::pi * g.kappa();
    const double T = std::log(1.0 / tol) / floor_rate;
    const std::vector<double> ts{T};
    auto tr = integrate(g, f, ts, opt);
    QuadratureSpectrum q;
    q.x = tr.integrals[0];
    q.t_end = T;
    q.tail_bound = compensated_sum(tr.values[0]) / floor_rate;
    q.path = tr.path;
    return q;
}

inline double annulus_sum(const Lattice& lat, std::span<const double> x, double a, double b) {
    const auto an = annulus(lat, a, b);
    return compensated_sum(an.sites.size(), [&](std::size_t i) { return x[an.sites[i]]; });
}

struct SlopeFit {
    double slope = 0;
    double intercept = 0;
    std::vector<double> scales, sums;
    std::vector<std::size_t> counts;
};

// weighted least squares of log(annulus sum) against log K over annuli [K/width, K width], weights by cardinality
inline SlopeFit fit_shell_slope(const Lattice& lat, std::span<const double> x, std::span<const double> K, double width = 2.0) {
    SlopeFit f;
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double k : K) {
        const auto an = annulus(lat, k / width, k * width);
        const double s = compensated_sum(an.sites.size(), [&](std::size_t i) { return x[an.sites[i]]; });
        f.scales.push_back(k);
        f.sums.push_back(s);
        f.counts.push_back(an.sites.size());
        if (!(s > 0)) continue;
        const double w = double(an.sites.size()), lx = std::log(k), ly = std::log(s);
        sw += w, sx += w * lx, sy += w * ly, sxx += w * lx * lx, sxy += w * lx * ly;
    }
    const double den = sw * sxx - sx * sx;
    if (!(den > 0)) throw std::invalid_argument("fit_shell_slope: need at least two nonempty annuli");
    f.slope = (sw * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / sw;
    return f;
}

struct AnnulusConstants {
    double C = 2.0;
    std::optional<double> m;  // log exponent of the upper bound, 4/alpha when unset
};

struct AnnulusRow {
    double r = 0;
    double k_lo = 0, k_hi = 0;
    double sum = 0;
    std::size_t count = 0;
    bool lower_ok = false, upper_ok = false;
    double fitted_C = 0;
    bool escapes_truncation = false;
    bool outside_range = false;
};

struct SpectrumReport {
    std::vector<double> x;
    double alpha = 0.5;
    double kappa = 0;
    double forcing_norm_sq = 0;
    double C = 2, m = 8;
    std::vector<AnnulusRow> rows;
    std::optional<SlopeFit> slope;
};

namespace detail {

struct AnnulusEval {
    double lo, hi, sum;
    std::size_t count;
    bool lower_ok, upper_ok;
};

inline AnnulusEval eval_annulus(const Lattice& lat, std::span<const double> x, double alpha, double r, double C, double m,
                                double F2) {
    const double L = std::log(1.0 / r);
    AnnulusEval e;
    e.lo = std::pow(L, -2.0 / alpha) / (C * r);
    e.hi = C * std::pow(L, 2.0 / (1.0 - alpha)) / r;
    e.count = 0;
    CompensatedSum s;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        const double q = lat.norm(k);
        if (e.lo <= q && q <= e.hi) s.add(x[k]), ++e.count;
    }
    e.sum = s.value();
    const double base = std::pow(r, 2.0 * (1.0 - alpha)) * F2;
    e.lower_ok = e.sum >= base / C;
    e.upper_ok = e.sum <= C * std::pow(L, m) * base;
    return e;
}

}  // namespace detail

inline SpectrumReport annulus_report(const Lattice& lat, std::span<const double> x, double alpha, double kappa,
                                     double forcing_norm_sq, std::span<const double> r_list, const AnnulusConstants& cst = {},
                                     double r0 = 1.0) {
    SpectrumReport rep;
    rep.x.assign(x.begin(), x.end());
    rep.alpha = alpha;
    rep.kappa = kappa;
    rep.forcing_norm_sq = forcing_norm_sq;
    rep.C = cst.C;
    rep.m = cst.m.value_or(4.0 / alpha);
    const double rmin = std::pow(kappa, 1.0 / (2.0 * alpha));
    for (double r : r_list) {
        if (!(r > 0 && r < 1)) throw std::invalid_argument("annulus_report: r must lie in (0,1)");
        AnnulusRow row;
        row.r = r;
        row.outside_range = !(r > rmin && r < r0);
        auto e = detail::eval_annulus(lat, x, alpha, r, cst.C, rep.m, forcing_norm_sq);
        row.k_lo = e.lo, row.k_hi = e.hi, row.sum = e.sum, row.count = e.count;
        row.lower_ok = e.lower_ok, row.upper_ok = e.upper_ok;
        row.escapes_truncation = e.hi > double(lat.radius());
        auto ok = [&](double C) {
            auto v = detail::eval_annulus(lat, x, alpha, r, C, rep.m, forcing_norm_sq);
            return v.lower_ok && v.upper_ok;
        };
        double lo = 1.0, hi = 1.0;
        if (ok(1.0)) {
            row.fitted_C = 1.0;
        } else {
            while (!ok(hi) && hi < 1e12) lo = hi, hi *= 1.25;
            if (!ok(hi)) {
                row.fitted_C = std::numeric_limits<double>::infinity();
            } else {
                for (int b = 0; b < 60; ++b) {
                    const double mid = std::sqrt(lo * hi);
                    if (ok(mid))
                        hi = mid;
                    else
                        lo = mid;
                }
                row.fitted_C = hi;
            }
        }
        rep.rows.push_back(row);
    }
    return rep;
}

inline Eigen::MatrixXd covariance(const NoiseCoefficients& c, std::span<const double> x) {
    const int d = c.dim();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < c.size(); ++i) {
        auto k = c.mode(i);
        double kx = 0;
        for (int a = 0; a < d; ++a) kx += k[a] * x[a];
        const double f = c.w[i] * c.w[i] * std::cos(2.0 * std::numbers::pi * kx);
        for (const auto& e : perp_basis(k))
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) D(a, b) += f * e[a] * e[b];
    }
    return D;
}

struct Correlation {
    std::vector<double> values;
    double max_imag = 0;
    bool warning = false;  // a not even: imaginary residue above 1e-10
};

// g(x) = sum_k a_k exp(2 pi i k.x) at points given as a flattened (count x d) array
inline Correlation correlation_function(const Lattice& lat, std::span<const double> a, std::span<const double> points) {
    const int d = lat.dim();
    const std::size_t np = points.size() / std::size_t(d);
    Correlation out;
    out.values.resize(np);
    double scale = 0;
    for (double v : a) scale += std::abs(v);
    for (std::size_t p = 0; p < np; ++p) {
        CompensatedSum re, im;
        for (std::size_t k = 0; k < lat.size(); ++k) {
            auto s = lat.site(k);
            double kx = 0;
            for (int i = 0; i < d; ++i) kx += s[i] * points[p * d + i];
            const double ph = 2.0 * std::numbers::pi * kx;
            re.add(a[k] * std::cos(ph));
            im.add(a[k] * std::sin(ph));
        }
        out.values[p] = re.value();
        out.max_imag = std::max(out.max_imag, std::abs(im.value()));
    }
    out.warning = out.max_imag > 1e-10 * std::max(scale, 1e-300);
    return out;
}

}  // namespace kraichnan

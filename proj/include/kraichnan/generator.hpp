#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

#include "kraichnan/coefficients.hpp"
#include "kraichnan/lattice.hpp"
#include "kraichnan/parallel.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

inline constexpr double four_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;

enum class Backend { csr, fft };

inline const char* to_string(Backend b) { return b == Backend::csr ? "csr" : "fft"; }

struct AssembleOptions {
    std::optional<Backend> backend;
    std::size_t csr_max_nnz = 4'000'000;
    unsigned threads = default_threads();
};

namespace detail {

inline int fft_friendly(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

// Off-diagonal action sum_j 4 pi^2 w_j^2 |P_{j perp} k|^2 x_{k-j} through periodic convolutions
// with the kernels w_j^2 j_p j_q / |j|^2 on a grid large enough to avoid wraparound.
class FftConvolver {
public:
    FftConvolver(const Lattice& lat, const NoiseCoefficients& c) : d_(lat.dim()) {
        int jmax = 0;
        for (std::size_t i = 0; i < c.size(); ++i)
            jmax = std::max(jmax, int(std::ceil(std::sqrt(double(c.mode_norm2(i))))));
        L_ = fft_friendly(2 * lat.radius() + jmax + 1);
        dims_.assign(d_, L_);
        nreal_ = 1;
        for (int i = 0; i < d_; ++i) nreal_ *= std::size_t(L_);
        ncomplex_ = nreal_ / std::size_t(L_) * std::size_t(L_ / 2 + 1);

        grid_.resize(lat.size());
        for (std::size_t id = 0; id < lat.size(); ++id) grid_[id] = wrap(lat.site(id));

        std::vector<double> rbuf(nreal_);
        std::vector<std::complex<double>> cbuf(ncomplex_);
        fwd_ = fftw_plan_dft_r2c(d_, dims_.data(), rbuf.data(), reinterpret_cast<fftw_complex*>(cbuf.data()),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
        inv_ = fftw_plan_dft_c2r(d_, dims_.data(), reinterpret_cast<fftw_complex*>(cbuf.data()), rbuf.data(),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!fwd_ || !inv_) throw std::runtime_error("fftw planning failed");

        for (int p = 0; p < d_; ++p)
            for (int q = p; q < d_; ++q) pairs_.emplace_back(p, q);
        kernels_.resize(pairs_.size() * ncomplex_);
        for (std::size_t s = 0; s < pairs_.size(); ++s) {
            std::fill(rbuf.begin(), rbuf.end(), 0.0);
            auto [p, q] = pairs_[s];
            for (std::size_t i = 0; i < c.size(); ++i) {
                auto j = c.mode(i);
                rbuf[wrap(j)] += c.w[i] * c.w[i] * double(j[p]) * double(j[q]) / double(c.mode_norm2(i));
            }
            fftw_execute_dft_r2c(fwd_, rbuf.data(), reinterpret_cast<fftw_complex*>(kernels_.data() + s * ncomplex_));
        }
    }
    FftConvolver(const FftConvolver&) = delete;
    FftConvolver& operator=(const FftConvolver&) = delete;
    ~FftConvolver() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
    }

    void apply(const Lattice& lat, std::span<const double> x, std::span<double> y) const {
        std::vector<double> rbuf(nreal_, 0.0);
        std::vector<std::complex<double>> X(ncomplex_), Y(ncomplex_);
        for (std::size_t id = 0; id < lat.size(); ++id) rbuf[grid_[id]] = x[id];
        fftw_execute_dft_r2c(fwd_, rbuf.data(), reinterpret_cast<fftw_complex*>(X.data()));
        std::vector<double> acc(lat.size(), 0.0);
        const double scale = four_pi_sq / double(nreal_);
        for (std::size_t s = 0; s < pairs_.size(); ++s) {
            const auto* K = kernels_.data() + s * ncomplex_;
            for (std::size_t i = 0; i < ncomplex_; ++i) Y[i] = X[i] * K[i];
            fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(Y.data()), rbuf.data());
            auto [p, q] = pairs_[s];
            for (std::size_t id = 0; id < lat.size(); ++id) {
                auto k = lat.site(id);
                const double f = p == q ? double(lat.norm2(id)) - double(k[p]) * k[p] : -2.0 * double(k[p]) * k[q];
                acc[id] += f * rbuf[grid_[id]];
            }
        }
        for (std::size_t id = 0; id < lat.size(); ++id) y[id] = scale * acc[id];
    }

    double cost() const { return double(pairs_.size() + 1) * 2.5 * double(nreal_) * std::log2(double(nreal_)); }
    int grid() const { return L_; }

private:
    std::size_t wrap(std::span<const int> k) const {
        std::size_t c = 0;
        for (int i = 0; i < d_; ++i) c = c * std::size_t(L_) + std::size_t(((k[i] % L_) + L_) % L_);
        return c;
    }

    int d_;
    int L_;
    std::vector<int> dims_;
    std::size_t nreal_, ncomplex_;
    std::vector<std::size_t> grid_;
    std::vector<std::pair<int, int>> pairs_;
    std::vector<std::complex<double>> kernels_;
    fftw_plan fwd_ = nullptr, inv_ = nullptr;
};

}  // namespace detail

struct Coupling {
    std::size_t col;
    double rate;
};

class Generator {
public:
    const Lattice& lattice() const { return *lat_; }
    std::shared_ptr<const Lattice> lattice_ptr() const { return lat_; }
    const NoiseCoefficients& coefficients() const { return *coeffs_; }
    double kappa() const { return kappa_; }
    Backend backend() const { return backend_; }
    std::size_t size() const { return lat_->size(); }

    std::span<const double> diagonal() const { return diag_; }
    std::span<const double> outflow_rate() const { return outflow_; }
    std::span<const double> heat_rate() const { return heat_; }
    double max_rate() const {
        double m = 0;
        for (double v : diag_) m = std::max(m, -v);
        return m;
    }
    std::size_t nnz() const { return col_.size(); }

    // y = G x
    void apply(std::span<const double> x, std::span<double> y) const {
        if (backend_ == Backend::csr) {
            parallel_for(size(), threads_, [&](std::size_t b, std::size_t e) {
                for (std::size_t r = b; r < e; ++r) {
                    double s = diag_[r] * x[r];
                    for (std::size_t p = row_[r]; p < row_[r + 1]; ++p) s += val_[p] * x[col_[p]];
                    y[r] = s;
                }
            });
        } else {
            fft_->apply(*lat_, x, y);
            for (std::size_t r = 0; r < size(); ++r) y[r] += diag_[r] * x[r];
        }
    }

    std::vector<double> apply(std::span<const double> x) const {
        std::vector<double> y(size());
        apply(x, y);
        return y;
    }

    // couplings c_{k <- m} of one row, computed from the formula
    std::vector<Coupling> row(std::size_t k) const {
        std::vector<Coupling> out;
        if (backend_ == Backend::csr) {
            for (std::size_t p = row_[k]; p < row_[k + 1]; ++p) out.push_back({col_[p], val_[p]});
            return out;
        }
        const auto& c = *coeffs_;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double pr = proj_norm_sq(c.mode(i), lat_->site(k));
            if (pr == 0 || c.w[i] == 0) continue;
            const auto m = lat_->find_shifted(k, c.mode(i), -1);
            if (m >= 0) out.push_back({std::size_t(m), four_pi_sq * c.w[i] * c.w[i] * pr});
        }
        std::sort(out.begin(), out.end(), [](const Coupling& a, const Coupling& b) { return a.col < b.col; });
        return out;
    }

    double matvec_cost() const { return backend_ == Backend::csr ? double(nnz() + size()) : fft_->cost(); }

private:
    friend Generator assemble(const NoiseCoefficients&, std::shared_ptr<const Lattice>, double, const AssembleOptions&);

    std::shared_ptr<const Lattice> lat_;
    std::shared_ptr<const NoiseCoefficients> coeffs_;
    double kappa_ = 0;
    Backend backend_ = Backend::csr;
    unsigned threads_ = 1;
    std::vector<double> diag_, outflow_, heat_;
    std::vector<std::size_t> row_, col_;
    std::vector<double> val_;
    std::shared_ptr<const detail::FftConvolver> fft_;
};

inline Generator assemble(const NoiseCoefficients& coeffs, std::shared_ptr<const Lattice> lat, double kappa,
                          const AssembleOptions& opt = {}) {
    if (!lat) throw std::invalid_argument("assemble: null lattice");
    if (coeffs.dim() != lat->dim()) throw std::invalid_argument("assemble: coefficient and lattice dimensions differ");
    if (!(kappa >= 0) || !std::isfinite(kappa)) throw std::invalid_argument("assemble: kappa must be >= 0");
    double jmax = 0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) jmax = std::max(jmax, std::sqrt(double(coeffs.mode_norm2(i))));
    if (jmax > 2.0 * lat->radius()) throw std::invalid_argument("assemble: noise reach J exceeds 2N");

    Generator g;
    g.lat_ = lat;
    g.coeffs_ = std::make_shared<const NoiseCoefficients>(coeffs);
    g.kappa_ = kappa;
    g.threads_ = std::max(1u, opt.threads);
    const std::size_t n = lat->size();
    const double est = double(n) * double(coeffs.size());
    g.backend_ = opt.backend.value_or(est > double(opt.csr_max_nnz) ? Backend::fft : Backend::csr);

    g.heat_.resize(n);
    g.diag_.resize(n);
    g.outflow_.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) g.heat_[k] = 2.0 * four_pi_sq * kappa * double(lat->norm2(k));

    if (g.backend_ == Backend::csr) {
        std::vector<std::vector<Coupling>> rows(n);
        parallel_for(n, g.threads_, [&](std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
                CompensatedSum total, lost;
                auto& r = rows[k];
                for (std::size_t i = 0; i < coeffs.size(); ++i) {
                    const double pr = proj_norm_sq(coeffs.mode(i), lat->site(k));
                    if (pr == 0 || coeffs.w[i] == 0) continue;
                    const double rate = four_pi_sq * coeffs.w[i] * coeffs.w[i] * pr;
                    total.add(rate);
                    const auto m = lat->find_shifted(k, coeffs.mode(i), -1);
                    if (m >= 0)
                        r.push_back({std::size_t(m), rate});
                    else
                        lost.add(rate);
                }
                std::sort(r.begin(), r.end(), [](const Coupling& a, const Coupling& b) { return a.col < b.col; });
                g.diag_[k] = -g.heat_[k] - total.value();
                g.outflow_[k] = lost.value();
            }
        });
        g.row_.assign(n + 1, 0);
        for (std::size_t k = 0; k < n; ++k) g.row_[k + 1] = g.row_[k] + rows[k].size();
        g.col_.resize(g.row_[n]);
        g.val_.resize(g.row_[n]);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t p = 0; p < rows[k].size(); ++p) {
                g.col_[g.row_[k] + p] = rows[k][p].col;
                g.val_[g.row_[k] + p] = rows[k][p].rate;
            }
    } else {
        const int d = lat->dim();
        std::vector<CompensatedSum> M(std::size_t(d * d));
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            auto j = coeffs.mode(i);
            const double w2 = coeffs.w[i] * coeffs.w[i] / double(coeffs.mode_norm2(i));
            for (int p = 0; p < d; ++p)
                for (int q = 0; q < d; ++q) M[std::size_t(p * d + q)].add(w2 * double(j[p]) * double(j[q]));
        }
        double tr = 0;
        for (int p = 0; p < d; ++p) tr += M[std::size_t(p * d + p)].value();
        const double reach = std::ceil(jmax);
        for (std::size_t k = 0; k < n; ++k) {
            auto s = lat->site(k);
            double q = 0;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) q += double(s[a]) * double(s[b]) * M[std::size_t(a * d + b)].value();
            g.diag_[k] = -g.heat_[k] - four_pi_sq * (double(lat->norm2(k)) * tr - q);
            if (lat->norm(k) + reach > double(lat->radius())) {
                CompensatedSum lost;
                for (std::size_t i = 0; i < coeffs.size(); ++i) {
                    if (lat->find_shifted(k, coeffs.mode(i), -1) >= 0) continue;
                    const double pr = proj_norm_sq(coeffs.mode(i), s);
                    if (pr == 0) continue;
                    lost.add(four_pi_sq * coeffs.w[i] * coeffs.w[i] * pr);
                }
                g.outflow_[k] = lost.value();
            }
        }
        g.fft_ = std::make_shared<const detail::FftConvolver>(*lat, coeffs);
    }
    return g;
}

struct LpBalance {
    double lhs_rate = 0;              // p sum a^{p-1} (G a)
    double explicit_rhs = 0;          // heat term - 2 pi^2 p * bilinear - (p == 1 ? outflow : 0)
    double heat_term = 0;             // -8 pi^2 kappa p sum |k|^2 a^p
    double dissipation_bilinear = 0;  // sum over k in Z^d, j of w^2 |P k|^2 (a_k - a_{k-j})(a_k^{p-1} - a_{k-j}^{p-1})
    double outflow_term = 0;          // sum outflow_k a_k
};

inline LpBalance lp_balance(const Generator& gen, std::span<const double> a, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("lp_balance: p must be >= 1");
    const auto& lat = gen.lattice();
    const auto& c = gen.coefficients();
    const std::size_t n = lat.size();
    auto pw = [&](double x) { return p == 1.0 ? 1.0 : std::pow(x, p - 1.0); };

    LpBalance out;
    auto Ga = gen.apply(a);
    out.lhs_rate = p * compensated_sum(n, [&](std::size_t k) { return pw(a[k]) * Ga[k]; });
    out.heat_term = -2.0 * four_pi_sq * gen.kappa() * p *
                    compensated_sum(n, [&](std::size_t k) { return double(lat.norm2(k)) * a[k] * pw(a[k]); });
    out.outflow_term = compensated_sum(n, [&](std::size_t k) { return gen.outflow_rate()[k] * a[k]; });

    CompensatedSum bil;
    for (std::size_t k = 0; k < n; ++k) {
        const double ak = a[k], pk = pw(a[k]);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double pr = proj_norm_sq(c.mode(i), lat.site(k));
            if (pr == 0) continue;
            const double wt = c.w[i] * c.w[i] * pr;
            const auto m = lat.find_shifted(k, c.mode(i), -1);
            if (m >= 0) {
                bil.add(wt * (ak - a[std::size_t(m)]) * (pk - pw(a[std::size_t(m)])));
            } else if (p != 1.0) {
                // the pair (k, k-j) with k-j outside the lattice is met from both ends in the sum over Z^d
                bil.add(2.0 * wt * ak * pk);
            }
        }
    }
    out.dissipation_bilinear = bil.value();
    out.explicit_rhs = out.heat_term - 0.5 * four_pi_sq * p * out.dissipation_bilinear -
                       (p == 1.0 ? out.outflow_term : 0.0);
    return out;
}

}  // namespace kraichnan

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "kraichnan/coefficients.hpp"
#include "kraichnan/lattice.hpp"
#include "kraichnan/parallel.hpp"
#include "kraichnan/philox.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

struct McOptions {
    unsigned threads = default_threads();
    double basis_rotation = 0.0;  // rotates each e_{j,n} frame inside j-perp
    std::size_t batch = 64;
    bool keep_final_states = false;
};

struct TrajectoryEnsemble {
    std::shared_ptr<const Lattice> lattice;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double dt = 0;
    std::size_t steps = 0;
    std::vector<double> times;
    std::vector<std::size_t> reps;     // half-lattice representative site ids
    std::vector<std::size_t> rep_of;   // site id -> index into reps
    // per snapshot, per representative, per sample |phi_hat|^2
    std::vector<std::vector<std::vector<double>>> power;
    // per snapshot, per sample: full-lattice sum |phi_hat|^2 and accumulated outflow ledger
    std::vector<std::vector<double>> l2, outflow;
    std::vector<std::vector<std::complex<double>>> final_states;
};

namespace detail {

inline bool lex_positive(std::span<const int> k) {
    for (int v : k)
        if (v != 0) return v > 0;
    return false;
}

struct McEntry {
    std::uint32_t src;    // representative index of k - j
    std::uint32_t noise;  // noise component index
    float src_sign;       // -1 when k - j is the conjugate partner
    float noise_sign;     // -1 when the noise is W^{-j} = conj(W^j)
    double c;             // 2 pi w_j (k . e_{j,n})
};

}  // namespace detail

inline double mc_stability_number(const NoiseCoefficients& c, const Lattice& lat, double kappa, double dt) {
    double mx = 0;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        double s = 0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c.w[i] * c.w[i] * proj_norm_sq(c.mode(i), lat.site(k));
        mx = std::max(mx, s);
    }
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double N = lat.radius();
    return dt * (4.0 * pi2 * kappa * N * N + 2.0 * pi2 * mx);
}

// Ito Euler-Maruyama for the Galerkin-truncated Fourier SDE. The Stratonovich correction gives the drift
// -2 pi^2 sum_j w_j^2 |P_{j perp} k|^2 phi(k); couplings from outside the lattice are zero. Complex Brownian
// increments W = (B1 + i B2)/sqrt(2), E|dW|^2 = dt, with W^{-j,n} = conj(W^{j,n}).
inline TrajectoryEnsemble simulate(const NoiseCoefficients& coeffs, std::shared_ptr<const Lattice> lat, double kappa,
                                   std::span<const std::complex<double>> fhat0, double dt, std::span<const double> snapshot_times,
                                   std::size_t n_samples, std::uint64_t seed, const McOptions& opt = {}) {
    if (!lat) throw std::invalid_argument("simulate: null lattice");
    if (coeffs.dim() != lat->dim()) throw std::invalid_argument("simulate: dimension mismatch");
    if (fhat0.size() != lat->size()) throw std::invalid_argument("simulate: initial state has the wrong length");
    if (!(dt > 0)) throw std::invalid_argument("simulate: dt must be positive");
    if (!(kappa >= 0)) throw std::invalid_argument("simulate: kappa must be >= 0");
    if (n_samples == 0) throw std::invalid_argument("simulate: need at least one sample");
    if (snapshot_times.empty()) throw std::invalid_argument("simulate: no snapshot times");
    const double stab = mc_stability_number(coeffs, *lat, kappa, dt);
    if (!(stab < 0.1)) throw std::invalid_argument("simulate: dt violates the stability bound (" + std::to_string(stab) + " >= 0.1)");

    const auto& L = *lat;
    const int d = L.dim();
    const double pi = std::numbers::pi;

    TrajectoryEnsemble ens;
    ens.lattice = lat;
    ens.n_samples = n_samples;
    ens.seed = seed;
    ens.dt = dt;
    std::vector<std::size_t> snap_steps;
    for (double t : snapshot_times) {
        const double s = std::round(t / dt);
        if (!(s >= 0) || std::abs(s * dt - t) > 1e-9 * std::max(1.0, t))
            throw std::invalid_argument("simulate: snapshot times must be multiples of dt");
        if (!snap_steps.empty() && std::size_t(s) <= snap_steps.back())
            throw std::invalid_argument("simulate: snapshot times must be increasing");
        snap_steps.push_back(std::size_t(s));
        ens.times.push_back(t);
    }
    ens.steps = snap_steps.back();

    ens.rep_of.assign(L.size(), 0);
    for (std::size_t k = 0; k < L.size(); ++k)
        if (detail::lex_positive(L.site(k))) ens.rep_of[k] = ens.reps.size(), ens.reps.push_back(k);
    for (std::size_t k = 0; k < L.size(); ++k)
        if (!detail::lex_positive(L.site(k))) ens.rep_of[k] = ens.rep_of[L.neg(k)];
    const std::size_t nr = ens.reps.size();

    for (std::size_t k = 0; k < L.size(); ++k) {
        const auto a = fhat0[k], b = std::conj(fhat0[L.neg(k)]);
        if (std::abs(a - b) > 1e-12 * (1.0 + std::abs(a))) throw std::invalid_argument("simulate: initial state is not Hermitian");
    }

    // noise components: one complex Brownian motion per (representative mode, n)
    std::vector<std::size_t> mode_rep(coeffs.size());
    std::vector<bool> mode_conj(coeffs.size());
    std::size_t n_mode_reps = 0;
    {
        std::map<std::vector<int>, std::size_t> rep_idx;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            auto j = coeffs.mode(i);
            if (detail::lex_positive(j)) rep_idx.emplace(std::vector<int>(j.begin(), j.end()), rep_idx.size());
        }
        n_mode_reps = rep_idx.size();
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            auto j = coeffs.mode(i);
            std::vector<int> r(j.begin(), j.end());
            mode_conj[i] = !detail::lex_positive(j);
            if (mode_conj[i])
                for (auto& x : r) x = -x;
            mode_rep[i] = rep_idx.at(r);
        }
    }
    const std::size_t comps = std::size_t(d - 1);
    const std::size_t n_noise = n_mode_reps * comps;

    std::vector<std::vector<detail::McEntry>> entries(nr);
    std::vector<double> drift(nr), outflow_rate(nr);
    for (std::size_t r = 0; r < nr; ++r) {
        const std::size_t k = ens.reps[r];
        auto ks = L.site(k);
        double ito = 0, lost = 0;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            const double pr = proj_norm_sq(coeffs.mode(i), ks);
            if (pr == 0 || coeffs.w[i] == 0) continue;
            const double w2 = coeffs.w[i] * coeffs.w[i];
            ito += w2 * pr;
            const auto m = L.find_shifted(k, coeffs.mode(i), -1);
            if (m < 0) {
                lost += 4.0 * pi * pi * w2 * pr;
                continue;
            }
            const auto basis = perp_basis(coeffs.mode(i), opt.basis_rotation);
            for (std::size_t n = 0; n < comps; ++n) {
                double ke = 0;
                for (int a = 0; a < d; ++a) ke += ks[a] * basis[n][a];
                if (ke == 0) continue;
                detail::McEntry e;
                e.src = std::uint32_t(ens.rep_of[std::size_t(m)]);
                e.src_sign = detail::lex_positive(L.site(std::size_t(m))) ? 1.0f : -1.0f;
                e.noise = std::uint32_t(mode_rep[i] * comps + n);
                e.noise_sign = mode_conj[i] ? -1.0f : 1.0f;
                e.c = 2.0 * pi * coeffs.w[i] * ke;
                entries[r].push_back(e);
            }
        }
        drift[r] = -4.0 * pi * pi * kappa * double(L.norm2(k)) - 2.0 * pi * pi * ito;
        outflow_rate[r] = lost;
    }

    const std::size_t ns = snap_steps.size();
    ens.power.assign(ns, std::vector<std::vector<double>>(nr, std::vector<double>(n_samples)));
    ens.l2.assign(ns, std::vector<double>(n_samples));
    ens.outflow.assign(ns, std::vector<double>(n_samples));
    if (opt.keep_final_states) ens.final_states.assign(n_samples, std::vector<std::complex<double>>(nr));

    const Philox4x32::Key key{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    const std::size_t B = std::max<std::size_t>(1, opt.batch);
    const std::size_t n_batches = (n_samples + B - 1) / B;
    const double sq = std::sqrt(dt / 2.0);
    const std::size_t blocks = (2 * n_noise + 3) / 4;

    parallel_for(n_batches, opt.threads, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> re(nr * B), im(nr * B), nre(nr * B), nim(nr * B), wre(n_noise * B), wim(n_noise * B);
        std::vector<double> ledger(B);
        for (std::size_t bt = b0; bt < b1; ++bt) {
            const std::size_t s0 = bt * B, nb = std::min(B, n_samples - s0);
            for (std::size_t r = 0; r < nr; ++r)
                for (std::size_t b = 0; b < B; ++b) {
                    re[r * B + b] = fhat0[ens.reps[r]].real();
                    im[r * B + b] = fhat0[ens.reps[r]].imag();
                }
            std::fill(ledger.begin(), ledger.end(), 0.0);
            std::fill(wre.begin(), wre.end(), 0.0);
            std::fill(wim.begin(), wim.end(), 0.0);
            std::size_t snap = 0;
            auto record = [&](std::size_t si) {
                for (std::size_t b = 0; b < nb; ++b) {
                    CompensatedSum l2;
                    for (std::size_t r = 0; r < nr; ++r) {
                        const double p = re[r * B + b] * re[r * B + b] + im[r * B + b] * im[r * B + b];
                        ens.power[si][r][s0 + b] = p;
                        l2.add(2.0 * p);
                    }
                    ens.l2[si][s0 + b] = l2.value();
                    ens.outflow[si][s0 + b] = ledger[b];
                }
            };
            if (snap_steps[0] == 0) record(snap++);
            for (std::size_t step = 0; step < ens.steps; ++step) {
                for (std::size_t b = 0; b < nb; ++b) {
                    const std::uint64_t sid = s0 + b;
                    for (std::size_t blk = 0; blk < blocks; ++blk) {
                        const auto z = normals4({std::uint32_t(blk), std::uint32_t(step), std::uint32_t(sid),
                                                 std::uint32_t(sid >> 32)},
                                                key);
                        for (std::size_t q = 0; q < 4; ++q) {
                            const std::size_t idx = blk * 4 + q;
                            if (idx >= 2 * n_noise) break;
                            (idx % 2 ? wim : wre)[(idx / 2) * B + b] = sq * z[q];
                        }
                    }
                }
                for (std::size_t r = 0; r < nr; ++r) {
                    const double f = 1.0 + dt * drift[r];
                    double* __restrict or_ = &nre[r * B];
                    double* __restrict oi = &nim[r * B];
                    const double* xr = &re[r * B];
                    const double* xi = &im[r * B];
                    for (std::size_t b = 0; b < B; ++b) or_[b] = f * xr[b], oi[b] = f * xi[b];
                    for (const auto& e : entries[r]) {
                        const double* sr = &re[e.src * B];
                        const double* si = &im[e.src * B];
                        const double* ar = &wre[e.noise * B];
                        const double* ai = &wim[e.noise * B];
                        const double ss = e.src_sign, sn = e.noise_sign, c = e.c;
                        for (std::size_t b = 0; b < B; ++b) {
                            const double pi_ = ss * si[b], wi = sn * ai[b];
                            const double zr = sr[b] * ar[b] - pi_ * wi;
                            const double zi = sr[b] * wi + pi_ * ar[b];
                            // -i c z
                            or_[b] += c * zi;
                            oi[b] -= c * zr;
                        }
                    }
                }
                for (std::size_t b = 0; b < nb; ++b) {
                    double lost = 0;
                    for (std::size_t r = 0; r < nr; ++r)
                        lost += 2.0 * outflow_rate[r] * (re[r * B + b] * re[r * B + b] + im[r * B + b] * im[r * B + b]);
                    ledger[b] += dt * lost;
                }
                std::swap(re, nre);
                std::swap(im, nim);
                if (snap < ns && snap_steps[snap] == step + 1) record(snap++);
            }
            if (opt.keep_final_states)
                for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t r = 0; r < nr; ++r) ens.final_states[s0 + b][r] = {re[r * B + b], im[r * B + b]};
        }
    });
    return ens;
}

struct SecondMoments {
    std::vector<double> mean;  // full lattice
    std::vector<double> se;    // full lattice; NaN when n_samples = 1
    std::size_t n_samples = 0;
    bool se_defined = false;
};

inline SecondMoments empirical_second_moments(const TrajectoryEnsemble& ens, double t) {
    std::size_t si = ens.times.size();
    for (std::size_t i = 0; i < ens.times.size(); ++i)
        if (std::abs(ens.times[i] - t) <= 1e-12 * std::max(1.0, t)) si = i;
    if (si == ens.times.size()) throw std::invalid_argument("empirical_second_moments: no snapshot at t");
    const std::size_t n = ens.n_samples, nr = ens.reps.size();
    std::vector<double> mean(nr), se(nr);
    for (std::size_t r = 0; r < nr; ++r) {
        const auto& v = ens.power[si][r];
        const double m = pairwise_sum(v) / double(n);
        mean[r] = m;
        if (n > 1) {
            // shifted by the first sample so a constant ensemble has exactly zero variance
            std::vector<double> dev(n), sq(n);
            for (std::size_t s = 0; s < n; ++s) dev[s] = v[s] - v[0], sq[s] = dev[s] * dev[s];
            const double s1 = pairwise_sum(dev);
            const double var = std::max(0.0, (pairwise_sum(sq) - s1 * s1 / double(n)) / double(n - 1));
            se[r] = std::sqrt(var / double(n));
        } else {
            se[r] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    SecondMoments out;
    out.n_samples = n;
    out.se_defined = n > 1;
    const auto& L = *ens.lattice;
    out.mean.resize(L.size());
    out.se.resize(L.size());
    for (std::size_t k = 0; k < L.size(); ++k) out.mean[k] = mean[ens.rep_of[k]], out.se[k] = se[ens.rep_of[k]];
    return out;
}

}  // namespace kraichnan

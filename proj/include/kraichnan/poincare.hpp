#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "kraichnan/coefficients.hpp"
#include "kraichnan/lattice.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

enum class PairOrdering { forward, backward };  // pairs (k, k+j) or (k, k-j)

inline void check_support(const Lattice& lat, const NoiseCoefficients& c, std::span<const double> a) {
    if (a.size() != lat.size()) throw std::invalid_argument("poincare: field has the wrong length");
    double jmax = 0;
    for (std::size_t i = 0; i < c.size(); ++i) jmax = std::max(jmax, std::sqrt(double(c.mode_norm2(i))));
    const double limit = double(lat.radius()) - jmax;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        if (!(a[k] >= 0)) throw std::invalid_argument("poincare: field must be nonnegative");
        if (a[k] != 0 && lat.norm(k) > limit)
            throw std::invalid_argument("poincare: support must lie within radius N - J");
    }
}

inline double poincare_lhs(const Lattice& lat, std::span<const double> a, const StructureFunction& S, double p, double R) {
    return compensated_sum(lat.size(), [&](std::size_t k) {
        if (a[k] == 0) return 0.0;
        const double s = S(R * lat.norm(k));
        return s * s * std::pow(a[k], p);
    });
}

// sum over k in Z^d\{0} and j of w_j^2 |P_{j perp} k|^2 (a_{k+j}^{p-1} - a_k^{p-1})(a_{k+j} - a_k), a zero off its support
inline double rhs_bilinear(const Lattice& lat, const NoiseCoefficients& c, std::span<const double> a, double p,
                           PairOrdering order = PairOrdering::forward) {
    const int sign = order == PairOrdering::forward ? +1 : -1;
    auto pw = [&](double x) { return x == 0 ? 0.0 : std::pow(x, p - 1.0); };
    CompensatedSum acc;
    for (std::size_t k = 0; k < lat.size(); ++k) {
        if (a[k] == 0) continue;
        const double ak = a[k], pk = pw(ak);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double pr = proj_norm_sq(c.mode(i), lat.site(k));
            if (pr == 0) continue;
            const auto y = lat.find_shifted(k, c.mode(i), sign);
            const double ay = y >= 0 ? a[std::size_t(y)] : 0.0;
            const double term = c.w[i] * c.w[i] * pr * (pw(ay) - pk) * (ay - ak);
            // an ordered pair leaving the support is never visited from its other end
            acc.add(ay == 0 ? 2.0 * term : term);
        }
    }
    return acc.value();
}

inline double explicit_constant(double R, double p, double delta, double psi) {
    return std::pow(2.0, 17) * R * R * p * p * psi * psi / (delta * delta * (p - 1.0));
}

struct PoincareVerdict {
    bool applicable = true;
    bool holds_with_explicit_constant = false;
    double lhs = 0, rhs = 0;
    double explicit_constant = 0;
    double empirical_best_constant = 0;  // lhs / rhs
    double psi_argument = 0;
    double psi = 0;
    bool extrapolated_psi = false;
};

inline PoincareVerdict verify(const Lattice& lat, const NoiseCoefficients& c, const StructureFunction& S,
                              const AssumptionAudit& audit, std::span<const double> a, double p, double R) {
    PoincareVerdict v;
    if (!audit.ok || !(audit.delta > 0)) {
        v.applicable = false;
        return v;
    }
    if (!(p > 1.0 && p <= 2.0)) throw std::invalid_argument("verify: p must lie in (1,2]");
    if (R < audit.r0) throw std::invalid_argument("verify: R must be >= r0");
    check_support(lat, c, a);
    v.lhs = poincare_lhs(lat, a, S, p, R);
    v.rhs = rhs_bilinear(lat, c, a, p);
    v.psi_argument = std::pow(24.0 * R / audit.delta, 3);
    v.psi = audit.psi_at(v.psi_argument, &v.extrapolated_psi);
    v.explicit_constant = explicit_constant(R, p, audit.delta, v.psi);
    v.holds_with_explicit_constant = v.lhs <= v.explicit_constant * v.rhs;
    v.empirical_best_constant = v.lhs == 0 ? 0.0 : (v.rhs == 0 ? std::numeric_limits<double>::infinity() : v.lhs / v.rhs);
    return v;
}

}  // namespace kraichnan

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "kraichnan/lattice.hpp"
#include "kraichnan/summation.hpp"

namespace kraichnan {

enum class Family { isotropic, shear, custom };

// untruncated: Z^2 is the full lattice sum, bracketed by an integral tail.
// truncated: Z^2 is the finite sum up to J_Z.
enum class Normalization { untruncated, truncated };

struct CustomMode {
    std::vector<int> j;
    double w = 0;
};

struct ModelSpec {
    int d = 2;
    double alpha = 0.5;
    Family family = Family::isotropic;
    int J = 1;
    int J_Z = 1;
    Normalization normalization = Normalization::untruncated;
    bool literal_plane_support = false;
    std::vector<CustomMode> custom_table;
};

struct NoiseCoefficients {
    ModelSpec spec;
    std::vector<int> modes;  // flattened, lexicographic
    std::vector<double> w;
    double Z = 1.0;
    double z_sq = 1.0;
    double z_sq_lattice = 0.0;  // exact lattice part of the normalizing sum
    int lattice_sum_radius = 0;
    double tail_lo = 0.0;       // bracket of the omitted tail of the normalizing sum
    double tail_hi = 0.0;
    double regularity_sum = 0.0;  // sum over stored modes of |j|^{2 alpha} w_j^2
    double deficit = 0.0;         // 1 - regularity_sum
    double deficit_lo = 0.0;      // lower bracket of the true deficit

    int dim() const { return spec.d; }
    double alpha() const { return spec.alpha; }
    std::size_t size() const { return w.size(); }
    std::span<const int> mode(std::size_t i) const {
        return {modes.data() + i * std::size_t(spec.d), std::size_t(spec.d)};
    }
    std::int64_t mode_norm2(std::size_t i) const { return norm_sq(mode(i)); }

    double find(std::span<const int> j) const {
        auto it = index_.find(std::vector<int>(j.begin(), j.end()));
        return it == index_.end() ? 0.0 : w[it->second];
    }

    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < size(); ++i) {
            auto m = mode(i);
            index_.emplace(std::vector<int>(m.begin(), m.end()), i);
        }
    }

private:
    std::map<std::vector<int>, std::size_t> index_;
};

namespace detail {

inline void validate_spec(const ModelSpec& s) {
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw std::invalid_argument("model: alpha must lie in (0,1)");
    if (s.d < 2) throw std::invalid_argument("model: d must be >= 2");
    if (s.J < 1) throw std::invalid_argument("model: J must be >= 1");
    if (s.family != Family::custom && s.J_Z < s.J) throw std::invalid_argument("model: J_Z must be >= J");
}

template <class F>
void for_each_point(int d, int R, F&& f) {
    std::vector<int> k(d, -R);
    const std::int64_t r2 = std::int64_t(R) * R;
    while (true) {
        const std::int64_t n2 = norm_sq(k);
        if (n2 > 0 && n2 <= r2) f(std::span<const int>(k), n2);
        int i = d - 1;
        for (; i >= 0; --i) {
            if (++k[i] <= R) break;
            k[i] = -R;
        }
        if (i < 0) break;
    }
}

inline double log1(double r) { return std::log(r) + 1.0; }

// int_{s0}^inf (1 + sign*h/s)^{d-1} s^{-1} (log s + 1)^{-2} ds, with v = 1/(log s + 1)
inline double radial_tail(int d, double s0, double h, int sign) {
    const double vmax = 1.0 / log1(s0);
    const int n = 4096;
    const double dv = vmax / n;
    auto g = [&](double v) {
        if (v <= 0) return 1.0;
        const double s = std::exp(1.0 / v - 1.0);
        return std::pow(1.0 + sign * h / s, d - 1);
    };
    double acc = g(0) + g(vmax);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(i * dv);
    return acc * dv / 3.0;
}

inline double sphere_area(int d) { return 2.0 * std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0); }

inline void finish(NoiseCoefficients& c) {
    CompensatedSum reg;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.w[i] < 0 || !std::isfinite(c.w[i])) throw std::invalid_argument("model: coefficients must be finite and >= 0");
        reg.add(std::pow(double(c.mode_norm2(i)), c.spec.alpha) * c.w[i] * c.w[i]);
    }
    c.regularity_sum = reg.value();
    if (c.regularity_sum > 1.0 + 1e-12)
        throw std::invalid_argument("model: sum |j|^{2 alpha} w_j^2 = " + std::to_string(c.regularity_sum) + " exceeds 1");
    c.deficit = 1.0 - c.regularity_sum;
    c.reindex();
}

}  // namespace detail

inline NoiseCoefficients build_isotropic(const ModelSpec& spec) {
    detail::validate_spec(spec);
    if (spec.family != Family::isotropic) throw std::invalid_argument("build_isotropic: family is not isotropic");
    const int d = spec.d;
    NoiseCoefficients c;
    c.spec = spec;

    const double h = std::sqrt(double(d)) / 2.0;
    int radius = spec.J_Z;
    if (spec.normalization == Normalization::untruncated)
        radius = std::max(radius, int(std::ceil(2.0 * h)) + 2);
    CompensatedSum lat;
    detail::for_each_point(d, radius, [&](std::span<const int>, std::int64_t n2) {
        const double r = std::sqrt(double(n2));
        const double l = detail::log1(r);
        lat.add(std::pow(r, -d) / (l * l));
    });
    c.z_sq_lattice = lat.value();
    c.lattice_sum_radius = radius;
    const double om = detail::sphere_area(d);
    c.tail_lo = om * detail::radial_tail(d, radius + 2.0 * h, h, -1);
    c.tail_hi = radius - 2.0 * h > 1.0 ? om * detail::radial_tail(d, radius - 2.0 * h, h, +1)
                                        : std::numeric_limits<double>::infinity();
    c.z_sq = c.z_sq_lattice + (spec.normalization == Normalization::untruncated ? c.tail_hi : 0.0);
    c.Z = std::sqrt(c.z_sq);

    detail::for_each_point(d, spec.J, [&](std::span<const int> k, std::int64_t n2) {
        const double r = std::sqrt(double(n2));
        c.modes.insert(c.modes.end(), k.begin(), k.end());
        c.w.push_back(std::pow(r, -d / 2.0 - spec.alpha) / detail::log1(r) / c.Z);
    });
    detail::finish(c);
    if (spec.normalization == Normalization::untruncated)
        c.deficit_lo = (c.z_sq_lattice + c.tail_lo) / c.z_sq - c.regularity_sum;
    else
        c.deficit_lo = c.deficit;
    return c;
}

inline NoiseCoefficients build_shear(const ModelSpec& spec) {
    detail::validate_spec(spec);
    if (spec.family != Family::shear) throw std::invalid_argument("build_shear: family is not shear");
    const int d = spec.d;
    NoiseCoefficients c;
    c.spec = spec;

    if (spec.literal_plane_support) {
        if (spec.normalization != Normalization::truncated)
            throw std::invalid_argument("build_shear: plane support diverges without truncated normalization");
        CompensatedSum lat;
        std::vector<std::pair<std::vector<int>, double>> pts;
        detail::for_each_point(d, spec.J_Z, [&](std::span<const int> k, std::int64_t n2) {
            for (int i = 2; i < d; ++i)
                if (k[i] != 0) return;
            const double r = std::sqrt(double(n2));
            const double l = detail::log1(r);
            lat.add(1.0 / (r * l * l));
            if (n2 <= std::int64_t(spec.J) * spec.J) pts.emplace_back(std::vector<int>(k.begin(), k.end()), r);
        });
        c.z_sq_lattice = c.z_sq = lat.value();
        c.lattice_sum_radius = spec.J_Z;
        c.tail_lo = c.tail_hi = std::numeric_limits<double>::infinity();
        c.Z = std::sqrt(c.z_sq);
        for (auto& [k, r] : pts) {
            c.modes.insert(c.modes.end(), k.begin(), k.end());
            c.w.push_back(std::pow(r, -0.5 - spec.alpha) / detail::log1(r) / c.Z);
        }
        detail::finish(c);
        c.deficit_lo = c.deficit;
        return c;
    }

    CompensatedSum lat;
    for (int m = 1; m <= spec.J_Z; ++m) {
        const double l = detail::log1(m);
        lat.add(4.0 / (m * l * l));
    }
    c.z_sq_lattice = lat.value();
    c.lattice_sum_radius = spec.J_Z;
    c.tail_lo = 4.0 / detail::log1(spec.J_Z + 1.0);
    c.tail_hi = 4.0 / detail::log1(spec.J_Z);
    c.z_sq = c.z_sq_lattice + (spec.normalization == Normalization::untruncated ? c.tail_hi : 0.0);
    c.Z = std::sqrt(c.z_sq);

    std::vector<std::vector<int>> axis_modes;
    for (int axis = 0; axis < 2; ++axis)
        for (int m = 1; m <= spec.J; ++m)
            for (int sgn : {-1, 1}) {
                std::vector<int> k(d, 0);
                k[axis] = sgn * m;
                axis_modes.push_back(std::move(k));
            }
    std::sort(axis_modes.begin(), axis_modes.end());
    for (const auto& k : axis_modes) {
        const double m = std::sqrt(double(norm_sq(k)));
        c.modes.insert(c.modes.end(), k.begin(), k.end());
        c.w.push_back(std::pow(m, -0.5 - spec.alpha) / detail::log1(m) / c.Z);
    }
    detail::finish(c);
    if (spec.normalization == Normalization::untruncated)
        c.deficit_lo = (c.z_sq_lattice + c.tail_lo) / c.z_sq - c.regularity_sum;
    else
        c.deficit_lo = c.deficit;
    return c;
}

inline NoiseCoefficients build_custom(const ModelSpec& spec) {
    detail::validate_spec(spec);
    if (spec.family != Family::custom) throw std::invalid_argument("build_custom: family is not custom");
    std::map<std::vector<int>, double> table;
    const std::int64_t J2 = std::int64_t(spec.J) * spec.J;
    for (const auto& e : spec.custom_table) {
        if (int(e.j.size()) != spec.d) throw std::invalid_argument("custom table: entry dimension differs from d");
        const std::int64_t n2 = norm_sq(e.j);
        if (n2 == 0) throw std::invalid_argument("custom table: w_0 is not allowed");
        if (n2 > J2) throw std::invalid_argument("custom table: entry with |j| > J");
        if (!(e.w >= 0) || !std::isfinite(e.w)) throw std::invalid_argument("custom table: w must be finite and >= 0");
        if (!table.emplace(e.j, e.w).second) throw std::invalid_argument("custom table: duplicate entry");
    }
    for (const auto& [j, w] : table) {
        std::vector<int> m(j.size());
        for (std::size_t i = 0; i < j.size(); ++i) m[i] = -j[i];
        auto it = table.find(m);
        if (it == table.end() || it->second != w)
            throw std::invalid_argument("custom table: w_j != w_{-j}, asymmetric input is rejected");
    }
    NoiseCoefficients c;
    c.spec = spec;
    for (const auto& [j, w] : table) {
        if (w == 0) continue;
        c.modes.insert(c.modes.end(), j.begin(), j.end());
        c.w.push_back(w);
    }
    c.lattice_sum_radius = spec.J;
    detail::finish(c);
    c.deficit_lo = 0.0;
    return c;
}

inline NoiseCoefficients build(const ModelSpec& spec) {
    switch (spec.family) {
        case Family::isotropic: return build_isotropic(spec);
        case Family::shear: return build_shear(spec);
        case Family::custom: return build_custom(spec);
    }
    throw std::invalid_argument("unknown family");
}

class StructureFunction {
public:
    StructureFunction() = default;

    StructureFunction(const NoiseCoefficients& c, std::vector<double> radii) : alpha_(c.alpha()) {
        j_max_ = 0;
        std::map<std::int64_t, CompensatedSum> by_norm;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const std::int64_t n2 = c.mode_norm2(i);
            const double r = std::sqrt(double(n2));
            by_norm[n2].add(std::pow(r, 1.0 + alpha_) * c.w[i] * c.w[i]);
            if (c.w[i] > 0) j_max_ = std::max(j_max_, r);
        }
        CompensatedSum acc;
        for (auto& [n2, s] : by_norm) {
            acc.add(s.value());
            breaks_.push_back(std::sqrt(double(n2)));
            cum_.push_back(acc.value());
        }
        truncation_radius_ = double(c.spec.J);
        if (!std::is_sorted(radii.begin(), radii.end())) throw std::invalid_argument("structure_function: radii must be sorted");
        for (double r : radii) {
            if (!(r > 0)) throw std::invalid_argument("structure_function: radii must be positive");
            radii_.push_back(r);
            values_.push_back((*this)(r));
            truncation_limited_.push_back(r > truncation_radius_);
        }
    }

    // S(r), closed at r
    double operator()(double r) const {
        auto it = std::upper_bound(breaks_.begin(), breaks_.end(), r);
        return it == breaks_.begin() ? 0.0 : cum_[std::size_t(it - breaks_.begin()) - 1];
    }
    // S(r^-), open at r
    double left(double r) const {
        auto it = std::lower_bound(breaks_.begin(), breaks_.end(), r);
        return it == breaks_.begin() ? 0.0 : cum_[std::size_t(it - breaks_.begin()) - 1];
    }

    double alpha() const { return alpha_; }
    double truncation_radius() const { return truncation_radius_; }
    const std::vector<double>& breaks() const { return breaks_; }
    const std::vector<double>& radii() const { return radii_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<bool>& truncation_limited() const { return truncation_limited_; }

private:
    double alpha_ = 0.5;
    double j_max_ = 0;
    double truncation_radius_ = 0;
    std::vector<double> breaks_, cum_;
    std::vector<double> radii_, values_;
    std::vector<bool> truncation_limited_;
};

inline StructureFunction structure_function(const NoiseCoefficients& c, std::vector<double> radii) {
    return StructureFunction(c, std::move(radii));
}

struct ParetoPoint {
    double beta;
    double delta;
};

struct AuditOptions {
    std::vector<double> beta_grid = [] {
        std::vector<double> b;
        for (int i = 1; i <= 19; ++i) b.push_back(0.05 * i);
        return b;
    }();
    int angles = 4096;
    int directions = 10000;
    int refine_starts = 10;
    std::uint64_t seed = 0x6b7261696368ULL;
};

struct AssumptionAudit {
    double r0 = 4;
    double J = 0;
    double alpha = 0.5;
    double beta = 0;
    double delta_S = 0;               // min S(r)/r^beta on [r0, J] at the chosen beta
    double nondegeneracy_ratio = 0;   // inf over v and r of the directional mass over S(r)
    double delta = 0;                 // min(delta_S, nondegeneracy_ratio)
    std::vector<ParetoPoint> pareto;
    std::vector<std::pair<double, double>> psi;  // (K, Psi(K)) for K with J/K >= r0
    std::vector<double> psi_unavailable;         // K beyond the truncation
    double psi_power_prefactor = 1;              // c in Psi(K) ~ c K^{1-alpha}
    std::vector<double> witness_v;
    double witness_r = 0;
    double deficit = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string message;

    // Psi at K, extrapolated by c K^{1-alpha} past the audited grid
    double psi_at(double K, bool* extrapolated = nullptr) const {
        for (const auto& [k, v] : psi)
            if (k == K) {
                if (extrapolated) *extrapolated = false;
                return v;
            }
        if (extrapolated) *extrapolated = true;
        return psi_power_prefactor * std::pow(K, 1.0 - alpha);
    }
};

class AssumptionError : public std::runtime_error {
public:
    AssumptionError(const std::string& msg, AssumptionAudit a) : std::runtime_error(msg), audit(std::move(a)) {}
    AssumptionAudit audit;
};

namespace detail {

struct DirectionalMass {
    int d;
    std::vector<double> unit;       // radius-sorted mode unit vectors
    std::vector<double> weight;     // |k|^{1+alpha} w^2
    std::vector<std::size_t> cuts;  // prefix lengths at the evaluation radii
    std::vector<double> s_at_cut;
    std::vector<double> r_at_cut;

    // min over evaluation radii of sum |k|^{1+a} w^2 |P_{k perp} v| / S(r); v unit
    std::pair<double, double> ratio(std::span<const double> v) const {
        CompensatedSum acc;
        std::size_t i = 0;
        double best = std::numeric_limits<double>::infinity(), best_r = 0;
        for (std::size_t c = 0; c < cuts.size(); ++c) {
            for (; i < cuts[c]; ++i) {
                double kv = 0;
                for (int a = 0; a < d; ++a) kv += unit[i * d + a] * v[a];
                acc.add(weight[i] * std::sqrt(std::max(0.0, 1.0 - kv * kv)));
            }
            const double q = s_at_cut[c] > 0 ? acc.value() / s_at_cut[c] : 0.0;
            if (q < best) best = q, best_r = r_at_cut[c];
        }
        return {best, best_r};
    }
};

inline double nm_objective(const gsl_vector* x, void* p) {
    auto* m = static_cast<const DirectionalMass*>(p);
    std::vector<double> v(m->d);
    double n = 0;
    for (int a = 0; a < m->d; ++a) v[a] = gsl_vector_get(x, a), n += v[a] * v[a];
    n = std::sqrt(n);
    if (n == 0) return 1e300;
    for (auto& e : v) e /= n;
    return m->ratio(v).first;
}

}  // namespace detail

inline AssumptionAudit audit_assumption(const NoiseCoefficients& c, double r0, const std::vector<double>& K_grid,
                                        const AuditOptions& opt = {}) {
    const double J = double(c.spec.J);
    if (!(r0 >= 4.0)) throw std::invalid_argument("audit_assumption: r0 must be >= 4");
    if (r0 > J) throw std::invalid_argument("audit_assumption: r0 must not exceed J");
    const int d = c.dim();
    const double alpha = c.alpha();
    StructureFunction S(c, {});

    AssumptionAudit out;
    out.r0 = r0;
    out.J = J;
    out.alpha = alpha;
    out.deficit = c.deficit;
    out.seed = opt.seed;

    std::vector<double> eval_r{r0};
    for (double b : S.breaks())
        if (b > r0 && b <= J) eval_r.push_back(b);

    // S(r) >= delta r^beta: the infimum over [r0, J] sits at left limits of jumps or at the ends
    for (double beta : opt.beta_grid) {
        double dl = S(r0) / std::pow(r0, beta);
        for (double b : S.breaks())
            if (b > r0 && b <= J) dl = std::min(dl, S.left(b) / std::pow(b, beta));
        dl = std::min(dl, S(J) / std::pow(J, beta));
        out.pareto.push_back({beta, dl});
    }

    // non-degeneracy
    detail::DirectionalMass dm;
    dm.d = d;
    {
        std::vector<std::size_t> order(c.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return c.mode_norm2(a) < c.mode_norm2(b); });
        for (std::size_t i : order) {
            if (c.w[i] == 0) continue;
            auto k = c.mode(i);
            const double r = std::sqrt(double(c.mode_norm2(i)));
            for (int a = 0; a < d; ++a) dm.unit.push_back(k[a] / r);
            dm.weight.push_back(std::pow(r, 1.0 + alpha) * c.w[i] * c.w[i]);
        }
        std::vector<double> norms;
        for (std::size_t i : order)
            if (c.w[i] != 0) norms.push_back(std::sqrt(double(c.mode_norm2(i))));
        for (double r : eval_r) {
            dm.cuts.push_back(std::size_t(std::upper_bound(norms.begin(), norms.end(), r) - norms.begin()));
            dm.s_at_cut.push_back(S(r));
            dm.r_at_cut.push_back(r);
        }
    }

    struct Cand {
        double q, r;
        std::vector<double> v;
    };
    std::vector<Cand> cands;
    auto consider = [&](std::vector<double> v) {
        auto [q, r] = dm.ratio(v);
        cands.push_back({q, r, std::move(v)});
    };

    // exact zeros along mode directions need integer arithmetic
    auto exact_mode_direction = [&](std::span<const int> m) {
        std::vector<std::size_t> idx(c.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return c.mode_norm2(a) < c.mode_norm2(b); });
        const double mm = double(norm_sq(m));
        CompensatedSum acc;
        std::size_t p = 0;
        double best = std::numeric_limits<double>::infinity(), best_r = 0;
        for (std::size_t cut = 0; cut < eval_r.size(); ++cut) {
            for (; p < idx.size() && std::sqrt(double(c.mode_norm2(idx[p]))) <= eval_r[cut]; ++p) {
                const std::size_t i = idx[p];
                if (c.w[i] == 0) continue;
                auto k = c.mode(i);
                const double kk = double(c.mode_norm2(i));
                const std::int64_t km = dot(k, m);
                const std::int64_t num = c.mode_norm2(i) * norm_sq(m) - km * km;
                const double r = std::sqrt(kk);
                acc.add(std::pow(r, 1.0 + alpha) * c.w[i] * c.w[i] * std::sqrt(double(num) / (kk * mm)));
            }
            const double s = S(eval_r[cut]);
            const double q = s > 0 ? acc.value() / s : 0.0;
            if (q < best) best = q, best_r = eval_r[cut];
        }
        std::vector<double> v(d);
        const double nm = std::sqrt(mm);
        for (int a = 0; a < d; ++a) v[a] = m[a] / nm;
        cands.push_back({best, best_r, std::move(v)});
    };

    std::map<std::vector<int>, bool> seen;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.w[i] == 0) continue;
        auto k = c.mode(i);
        int g = 0;
        for (int a = 0; a < d; ++a) g = std::gcd(g, std::abs(k[a]));
        std::vector<int> prim(d);
        for (int a = 0; a < d; ++a) prim[a] = k[a] / g;
        for (int a = 0; a < d; ++a)
            if (prim[a] != 0) {
                if (prim[a] < 0)
                    for (auto& x : prim) x = -x;
                break;
            }
        if (seen.emplace(prim, true).second) exact_mode_direction(prim);
    }

    if (d == 2) {
        for (int i = 0; i < opt.angles; ++i) {
            const double th = std::numbers::pi * i / opt.angles;
            consider({std::cos(th), std::sin(th)});
        }
    } else {
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> nd;
        for (int i = 0; i < opt.directions; ++i) {
            std::vector<double> v(d);
            double n = 0;
            for (auto& x : v) x = nd(rng), n += x * x;
            n = std::sqrt(n);
            for (auto& x : v) x /= n;
            consider(std::move(v));
        }
        std::vector<std::size_t> order(cands.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cands[a].q < cands[b].q; });
        const std::size_t starts = std::min<std::size_t>(order.size(), std::size_t(opt.refine_starts));
        std::vector<std::vector<double>> seeds;
        for (std::size_t s = 0; s < starts; ++s) seeds.push_back(cands[order[s]].v);
        gsl_set_error_handler_off();
        for (const auto& v0 : seeds) {
            gsl_multimin_function f{&detail::nm_objective, std::size_t(d), &dm};
            gsl_vector* x = gsl_vector_alloc(d);
            gsl_vector* step = gsl_vector_alloc(d);
            for (int a = 0; a < d; ++a) gsl_vector_set(x, a, v0[a]), gsl_vector_set(step, a, 0.05);
            gsl_multimin_fminimizer* m = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d);
            gsl_multimin_fminimizer_set(m, &f, x, step);
            for (int it = 0; it < 400; ++it) {
                if (gsl_multimin_fminimizer_iterate(m)) break;
                if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m), 1e-10) == GSL_SUCCESS) break;
            }
            std::vector<double> v(d);
            double n = 0;
            for (int a = 0; a < d; ++a) v[a] = gsl_vector_get(m->x, a), n += v[a] * v[a];
            n = std::sqrt(n);
            for (auto& e : v) e /= n;
            consider(std::move(v));
            gsl_multimin_fminimizer_free(m);
            gsl_vector_free(x);
            gsl_vector_free(step);
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
        if (cands[i].q < cands[best].q) best = i;
    out.nondegeneracy_ratio = cands.empty() ? 0.0 : std::max(0.0, cands[best].q);
    if (!cands.empty()) out.witness_v = cands[best].v, out.witness_r = cands[best].r;

    // largest beta whose S-bound constant still reaches the non-degeneracy ratio
    const ParetoPoint* pick = nullptr;
    for (const auto& p : out.pareto)
        if (p.delta >= out.nondegeneracy_ratio && p.delta > 0) pick = &p;
    if (!pick) {
        for (const auto& p : out.pareto)
            if (!pick || p.delta > pick->delta) pick = &p;
    }
    if (pick) out.beta = pick->beta, out.delta_S = pick->delta;
    out.delta = std::min(out.delta_S, out.nondegeneracy_ratio);

    // Psi(K) = sup over r in [r0, J/K] of S(Kr)/S(r); right-continuous, so jump points suffice
    double pref = 1.0;
    for (double K : K_grid) {
        if (!(K >= 1.0)) throw std::invalid_argument("audit_assumption: K grid entries must be >= 1");
        if (J / K < r0) {
            out.psi_unavailable.push_back(K);
            continue;
        }
        std::vector<double> pts{r0, J / K};
        for (double b : S.breaks()) {
            if (b >= r0 && b <= J / K) pts.push_back(b);
            if (b / K >= r0 && b / K <= J / K) pts.push_back(b / K);
        }
        double psi = K == 1.0 ? 1.0 : 0.0;
        if (K != 1.0)
            for (double r : pts) {
                const double s = S(r);
                psi = std::max(psi, s > 0 ? S(K * r) / s : std::numeric_limits<double>::infinity());
            }
        out.psi.emplace_back(K, psi);
        pref = std::max(pref, psi / std::pow(K, 1.0 - alpha));
    }
    out.psi_power_prefactor = pref;

    if (!(out.delta_S > 0)) {
        out.message = "S(r) >= delta r^beta fails on [r0, J]: S vanishes on the tested range";
        throw AssumptionError(out.message, out);
    }
    if (!(out.nondegeneracy_ratio > 0)) {
        out.message = "non-degeneracy fails: directional mass vanishes along v = (";
        for (std::size_t a = 0; a < out.witness_v.size(); ++a)
            out.message += (a ? ", " : "") + std::to_string(out.witness_v[a]);
        out.message += ")";
        throw AssumptionError(out.message, out);
    }
    out.ok = true;
    return out;
}

}  // namespace kraichnan

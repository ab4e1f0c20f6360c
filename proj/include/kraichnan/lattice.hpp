#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace kraichnan {

inline std::int64_t dot(std::span<const int> a, std::span<const int> b) {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::int64_t(a[i]) * b[i];
    return s;
}

inline std::int64_t norm_sq(std::span<const int> k) { return dot(k, k); }

// |k|^2 - (k.j)^2/|j|^2 with the numerator formed in integers
inline double proj_norm_sq(std::span<const int> j, std::span<const int> k) {
    if (j.size() != k.size()) throw std::invalid_argument("proj_norm_sq: dimension mismatch");
    const std::int64_t jj = norm_sq(j);
    if (jj == 0) throw std::invalid_argument("proj_norm_sq: j = 0");
    const std::int64_t kj = dot(k, j);
    const std::int64_t num = norm_sq(k) * jj - kj * kj;
    return double(num) / double(jj);
}

class Lattice {
public:
    Lattice(int d, int N) : d_(d), n_(N) {
        if (d < 2) throw std::invalid_argument("Lattice: d must be >= 2");
        if (N < 1) throw std::invalid_argument("Lattice: N must be >= 1");
        side_ = std::size_t(2 * N + 1);
        std::size_t cube = 1;
        for (int i = 0; i < d; ++i) {
            if (__builtin_mul_overflow(cube, side_, &cube) ||
                cube > std::size_t(std::numeric_limits<std::int32_t>::max()))
                throw std::length_error("Lattice: site count overflows the index type");
        }
        lookup_.assign(cube, -1);
        std::vector<int> k(d, -N);
        const std::int64_t r2 = std::int64_t(N) * N;
        for (std::size_t c = 0; c < cube; ++c) {
            const std::int64_t n2 = norm_sq(k);
            if (n2 > 0 && n2 <= r2) {
                lookup_[c] = std::int32_t(norm2_.size());
                coords_.insert(coords_.end(), k.begin(), k.end());
                norm2_.push_back(n2);
            }
            for (int i = d - 1; i >= 0; --i) {
                if (++k[i] <= N) break;
                k[i] = -N;
            }
        }
        neg_.resize(size());
        std::vector<int> m(d);
        for (std::size_t id = 0; id < size(); ++id) {
            auto s = site(id);
            for (int i = 0; i < d; ++i) m[i] = -s[i];
            neg_[id] = std::size_t(find(m));
        }
    }

    int dim() const { return d_; }
    int radius() const { return n_; }
    std::size_t size() const { return norm2_.size(); }

    std::span<const int> site(std::size_t id) const {
        return {coords_.data() + id * std::size_t(d_), std::size_t(d_)};
    }
    std::int64_t norm2(std::size_t id) const { return norm2_[id]; }
    double norm(std::size_t id) const { return std::sqrt(double(norm2_[id])); }
    std::size_t neg(std::size_t id) const { return neg_[id]; }

    // id of k, or -1 when k is 0 or outside the ball
    std::ptrdiff_t find(std::span<const int> k) const {
        std::size_t c = 0;
        for (int i = 0; i < d_; ++i) {
            if (k[i] < -n_ || k[i] > n_) return -1;
            c = c * side_ + std::size_t(k[i] + n_);
        }
        return lookup_[c];
    }

    // id of site(id) - j, or -1
    std::ptrdiff_t find_shifted(std::size_t id, std::span<const int> j, int sign = -1) const {
        auto s = site(id);
        std::size_t c = 0;
        for (int i = 0; i < d_; ++i) {
            const int v = s[i] + sign * j[i];
            if (v < -n_ || v > n_) return -1;
            c = c * side_ + std::size_t(v + n_);
        }
        return lookup_[c];
    }

    const std::vector<int>& coords() const { return coords_; }

private:
    int d_;
    int n_;
    std::size_t side_;
    std::vector<std::int32_t> lookup_;
    std::vector<int> coords_;
    std::vector<std::int64_t> norm2_;
    std::vector<std::size_t> neg_;
};

struct Annulus {
    double a = 0;
    double b = 0;
    std::vector<std::size_t> sites;
};

inline Annulus annulus(const Lattice& lat, double a, double b) {
    if (!(a > 0) || !(a <= b)) throw std::invalid_argument("annulus: need 0 < a <= b");
    Annulus out{a, b, {}};
    for (std::size_t id = 0; id < lat.size(); ++id) {
        const double r = lat.norm(id);
        if (a <= r && r <= b) out.sites.push_back(id);
    }
    return out;
}

// Orthonormal basis of k-perp. Gram-Schmidt over k/|k| followed by the standard
// basis vectors ordered from least to most aligned with k (ties by index).
// The result depends on k only up to sign.
inline std::vector<std::vector<double>> perp_basis(std::span<const int> k, double rotation = 0.0) {
    const std::size_t d = k.size();
    const double nk = std::sqrt(double(norm_sq(k)));
    if (nk == 0) throw std::invalid_argument("perp_basis: k = 0");
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    for (std::size_t i = 1; i < d; ++i)
        for (std::size_t m = i; m > 0 && std::abs(k[order[m]]) < std::abs(k[order[m - 1]]); --m)
            std::swap(order[m], order[m - 1]);

    std::vector<std::vector<double>> q;
    std::vector<double> u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = k[i] / nk;
    q.push_back(u);
    for (std::size_t c = 0; c < d && q.size() < d; ++c) {
        std::vector<double> v(d, 0.0);
        v[order[c]] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& e : q) {
                double s = 0;
                for (std::size_t i = 0; i < d; ++i) s += v[i] * e[i];
                for (std::size_t i = 0; i < d; ++i) v[i] -= s * e[i];
            }
        double nv = 0;
        for (double x : v) nv += x * x;
        nv = std::sqrt(nv);
        if (nv < 1e-8) continue;
        for (auto& x : v) x /= nv;
        q.push_back(v);
    }
    q.erase(q.begin());
    if (rotation != 0.0 && q.size() >= 2) {
        const double c = std::cos(rotation), s = std::sin(rotation);
        for (std::size_t i = 0; i < d; ++i) {
            const double x = q[0][i], y = q[1][i];
            q[0][i] = c * x + s * y;
            q[1][i] = -s * x + c * y;
        }
    } else if (rotation != 0.0) {
        const double c = std::cos(rotation);
        for (auto& x : q[0]) x *= (c >= 0 ? 1.0 : -1.0);
    }
    return q;
}

}  // namespace kraichnan

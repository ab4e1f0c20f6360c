#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace kraichnan {

// Neumaier compensated accumulator
struct CompensatedSum {
    double sum = 0.0;
    double c = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            c += (sum - t) + x;
        else
            c += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

inline double compensated_sum(std::span<const double> x) {
    CompensatedSum s;
    for (double v : x) s.add(v);
    return s.value();
}

template <class F>
double compensated_sum(std::size_t n, F&& term) {
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(term(i));
    return s.value();
}

inline double pairwise_sum(std::span<const double> x) {
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t h = x.size() / 2;
    return pairwise_sum(x.first(h)) + pairwise_sum(x.subspan(h));
}

}  // namespace kraichnan

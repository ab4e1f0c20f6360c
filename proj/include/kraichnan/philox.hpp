#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace kraichnan {

// Philox4x32-10 (Salmon et al., SC'11)
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter c, Key k) {
        for (int r = 0; r < 10; ++r) {
            if (r) k[0] += 0x9E3779B9u, k[1] += 0xBB67AE85u;
            const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c[0];
            const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c[2];
            c = {std::uint32_t(p1 >> 32) ^ c[1] ^ k[0], std::uint32_t(p1), std::uint32_t(p0 >> 32) ^ c[3] ^ k[1],
                 std::uint32_t(p0)};
        }
        return c;
    }
};

// four standard normals from one counter block (Box-Muller on open-interval uniforms)
inline std::array<double, 4> normals4(const Philox4x32::Counter& c, const Philox4x32::Key& k) {
    const auto r = Philox4x32::generate(c, k);
    auto u = [](std::uint32_t x) { return (double(x) + 0.5) * 0x1p-32; };
    std::array<double, 4> out;
    for (int i = 0; i < 2; ++i) {
        const double rad = std::sqrt(-2.0 * std::log(u(r[2 * i])));
        const double th = 2.0 * std::numbers::pi * u(r[2 * i + 1]);
        out[2 * i] = rad * std::cos(th);
        out[2 * i + 1] = rad * std::sin(th);
    }
    return out;
}

}  // namespace kraichnan

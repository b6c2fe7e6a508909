#include "parcellate/rng.hpp"

#include <cmath>
#include <numbers>

#include "parcellate/errors.hpp"

namespace ppa {

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (int shift = 0; shift < 64; shift += 8) {
        mix(static_cast<unsigned char>(master >> shift));
    }
    for (char c : stage) mix(static_cast<unsigned char>(c));
    return h;
}

std::uint64_t Rng::next_index(std::uint64_t n) {
    if (n == 0) throw InvalidParameter("next_index: n must be positive");
    const std::uint64_t reject_below = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    while (x < reject_below) x = next_u64();
    return x % n;
}

double Rng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::next_gamma(double shape) {
    if (!(shape > 0.0)) throw InvalidParameter("next_gamma: shape must be positive");
    if (shape < 1.0) {
        double u = next_double();
        while (u <= 0.0) u = next_double();
        return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = next_double();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::size_t Rng::next_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw InvalidParameter("next_weighted: bad weight");
        total += w;
    }
    if (!(total > 0.0)) throw InvalidParameter("next_weighted: weights sum to zero");
    const double target = next_double() * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cumulative += weights[i];
        if (target < cumulative) return i;
    }
    // target landed on the accumulated rounding tail
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return weights.size() - 1;
}

}  // namespace ppa

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ppa {

// Stable FNV-1a hash of the stage name folded into the master seed. Every
// pipeline stage draws from its own stream so adding a stage never shifts
// the randomness of another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

// mt19937_64 with the distributions implemented here: the standard pins the
// engine's output sequence but not the library distributions, and model
// files must reproduce bit-for-bit from a seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, n). n must be positive.
    std::uint64_t next_index(std::uint64_t n);

    // Standard normal via Box-Muller, one spare cached.
    double next_normal();

    // Marsaglia-Tsang gamma(shape, 1), shape > 0.
    double next_gamma(double shape);

    // Index drawn proportionally to non-negative weights (at least one > 0).
    std::size_t next_weighted(const std::vector<double>& weights);

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_index(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ppa

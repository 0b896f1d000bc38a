#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace l2h {

// Deterministic pseudo-random stream. All draws are derived from the raw
// mt19937_64 output with fixed bit manipulation, so identical seeds give
// identical sequences on every platform and standard library.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian();

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Splits one master seed into independent per-component seeds. The component
// tag is hashed (FNV-1a) and mixed with the master via splitmix64, so adding
// or reordering components never perturbs the others.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

std::uint64_t splitmix64(std::uint64_t state);

}  // namespace l2h

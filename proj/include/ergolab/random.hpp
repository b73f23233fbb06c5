#pragma once

// Seeded pseudo-random streams. Every stream is derived from one master seed
// and a stream name, so modules draw from independent, reproducible sources.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace ergolab {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Rng(std::uint64_t seed, std::string_view stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(fnv1a(stream)),
                          static_cast<std::uint32_t>(fnv1a(stream) >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits; avoids implementation-defined
    // distribution objects so streams are identical across standard libraries.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(index(static_cast<std::size_t>(hi - lo + 1)));
    }

    /// Real and imaginary parts independently uniform on [-1, 1).
    std::complex<double> complex_box() { return {uniform(-1.0, 1.0), uniform(-1.0, 1.0)}; }

    std::complex<double> unimodular() {
        const double turns = uniform();
        return std::polar(1.0, 2.0 * 3.14159265358979323846 * turns);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace ergolab

#pragma once

#include <cstdint>
#include <random>

namespace odmix {

/// Every random stream in the library is a 64-bit Mersenne twister.
using Rng = std::mt19937_64;

/// Derives the seed of substream `index` from `master`.
///
/// The rule is two rounds of SplitMix64 over (master, index), so a single
/// master seed reproduces every chain, ensemble row and synthetic dataset.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

inline Rng make_stream(std::uint64_t master, std::uint64_t index) {
    return Rng(derive_seed(master, index));
}

/// Uniform on the open interval (0, 1).
double uniform_open(Rng& rng);

double standard_normal(Rng& rng);

/// Gamma with shape/rate parameterization (mean shape/rate).
double gamma_draw(double shape, double rate, Rng& rng);

/// Poisson count; a zero mean returns 0.
std::int64_t poisson_draw(double mean, Rng& rng);

}  // namespace odmix

#include "odmix/random.hpp"

#include <cmath>

#include "odmix/errors.hpp"

namespace odmix {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

double uniform_open(Rng& rng) {
    // 53 random bits, shifted half a step off zero.
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

double gamma_draw(double shape, double rate, Rng& rng) {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
        throw DomainError("gamma_draw: shape and rate must be positive and finite");
    }
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    return gamma(rng);
}

std::int64_t poisson_draw(double mean, Rng& rng) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw DomainError("poisson_draw: mean must be finite and non-negative");
    }
    if (mean == 0.0) return 0;
    std::poisson_distribution<std::int64_t> poisson(mean);
    return poisson(rng);
}

}  // namespace odmix

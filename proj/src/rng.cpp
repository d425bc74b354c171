#include "psdmap/rng.hpp"

#include <cmath>
#include <numbers>

namespace psdmap {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = splitmix64(master + kGolden);
    h = splitmix64(h ^ (a + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ (b + 0x8CB92BA72F3D8DD7ULL));
    return h;
}

CounterRng::CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream)
    : key_(derive_seed(seed, static_cast<std::uint64_t>(stream), substream)) {}

CounterRng::result_type CounterRng::operator()() {
    ++counter_;
    return splitmix64(key_ + counter_ * kGolden);
}

double CounterRng::uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v = (*this)();
    while (v >= limit) v = (*this)();
    return v % n;
}

}  // namespace psdmap

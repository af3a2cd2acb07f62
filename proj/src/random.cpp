#include "tcm/random.hpp"

#include "tcm/errors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace tcm {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fmix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(seed_, fmix64(stream_ ^ fmix64(child + 0x632BE59BD9B4E019ULL)));
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t key = fmix64(seed_ ^ fmix64(stream_ + 0xD1B54A32D192ED03ULL));
    ++counter_;
    return fmix64(key + counter_ * kGolden);
}

double RngStream::uniform() {
    // 53 random bits mapped to (0, 1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t RngStream::below(std::size_t n) {
    if (n == 0) throw ContractError("RngStream::below: empty range");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::size_t RngStream::categorical(std::span<const double> probs) {
    if (probs.empty()) throw ContractError("categorical: no outcomes");
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    double target = uniform() * total;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        target -= probs[i];
        if (target < 0.0) return i;
    }
    return probs.size() - 1;
}

std::vector<Vector> sample_gaussian(RngStream& rng, std::span<const double> mean, double sigma2,
                                    std::size_t count) {
    if (!(sigma2 > 0.0)) throw ContractError("sample_gaussian: sigma2 must be positive");
    const double sd = std::sqrt(sigma2);
    std::vector<Vector> out(count, Vector(mean.begin(), mean.end()));
    for (auto& v : out)
        for (auto& x : v) x += sd * rng.normal();
    return out;
}

double gauss_logpdf(std::span<const double> x, std::span<const double> mean, double sigma2) {
    if (x.size() != mean.size())
        throw ShapeError("gauss_logpdf: x has " + std::to_string(x.size()) + " dims, mean has " +
                         std::to_string(mean.size()));
    if (!(sigma2 > 0.0)) throw ContractError("gauss_logpdf: sigma2 must be positive");
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - mean[i]) * (x[i] - mean[i]);
    const double d = static_cast<double>(x.size());
    return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma2) - q / (2.0 * sigma2);
}

std::vector<std::size_t> permutation(RngStream& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

} // namespace tcm

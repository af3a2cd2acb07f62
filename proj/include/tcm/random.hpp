#pragma once

#include "tcm/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tcm {

// Counter-based generator: output i of stream (seed, id) is a pure function of
// (seed, id, i). Copies are independent; splitting derives a child stream id
// without consuming from the parent.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    RngStream split(std::uint64_t child) const;

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    // Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    std::size_t categorical(std::span<const double> probs);

    friend bool operator==(const RngStream&, const RngStream&) = default;

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// i.i.d. draws from N(mean, sigma2 * I).
std::vector<Vector> sample_gaussian(RngStream& rng, std::span<const double> mean, double sigma2,
                                    std::size_t count);

// Log density of N(mean, sigma2 * I) at x.
double gauss_logpdf(std::span<const double> x, std::span<const double> mean, double sigma2);

// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(RngStream& rng, std::size_t n);

} // namespace tcm

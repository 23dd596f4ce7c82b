// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace beamfix {

/// Seedable pseudo-random stream with a fixed, documented derivation.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The conversions to uniform, normal and bounded-integer
/// variates are implemented here (the std distributions are
/// implementation-defined), so a given seed yields the same stream on every
/// conforming toolchain:
///   uniform()  = (next >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on two uniforms, both outputs used in order
///   below(n)   = rejection sampling on the top bits
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal variate.
    double normal();

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    /// Derives an independent child seed; used to split one seed into sub-streams.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace beamfix

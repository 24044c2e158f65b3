#pragma once
//! \file rng.hpp
//! Counter-based random streams (Philox4x32-10) and stream-key derivation.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace critdiff {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

//! Derives a child seed from (root, label, index).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ hash_name(label)) + index);
}

//! Philox4x32 with ten rounds.
class Philox {
  public:
    using Block = std::array<std::uint32_t, 4>;

    Philox(std::uint64_t key, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          stream_(stream) {}

    //! Block for counter position \p ctr; pure function of (key, stream, ctr).
    Block block(std::uint64_t ctr) const noexcept {
        Block x{static_cast<std::uint32_t>(ctr), static_cast<std::uint32_t>(ctr >> 32),
                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        std::uint32_t k0 = key_[0], k1 = key_[1];
        for (int r = 0; r < 10; ++r) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * x[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * x[2];
            x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k0, static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k1, static_cast<std::uint32_t>(p0)};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return x;
    }

  private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
};

/*!
 * Sequential standard-normal generator on top of a Philox stream. Each
 * counter block yields one Box-Muller pair, so the stream position after
 * n draws is ceil(n/2) regardless of how draws are grouped.
 */
class NormalStream {
  public:
    NormalStream(std::uint64_t key, std::uint64_t stream, std::uint64_t start = 0) noexcept
        : gen_(key, stream), ctr_(start) {}

    double operator()() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto b = gen_.block(ctr_++);
        const std::uint64_t a = (std::uint64_t{b[0]} << 32 | b[1]) >> 11;
        const std::uint64_t c = (std::uint64_t{b[2]} << 32 | b[3]) >> 11;
        const double u1 = (static_cast<double>(a) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(c) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    //! Uniform on (0,1), consuming one counter block.
    double uniform() noexcept {
        const auto b = gen_.block(ctr_++);
        const std::uint64_t a = (std::uint64_t{b[0]} << 32 | b[1]) >> 11;
        return (static_cast<double>(a) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t position() const noexcept { return ctr_; }

  private:
    Philox gen_;
    std::uint64_t ctr_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace critdiff

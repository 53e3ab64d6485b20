#pragma once

#include <cstdint>

#include "crisk/normal.hpp"

namespace crisk {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One Philox4x32-10 block: 4 outputs from a 128-bit counter and 64-bit key.
inline void philox4x32_block(const std::uint32_t counter[4], std::uint32_t k0, std::uint32_t k1,
                             std::uint32_t out[4]) {
    std::uint32_t c0 = counter[0], c1 = counter[1], c2 = counter[2], c3 = counter[3];
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = 0xD2511F53ULL * c0;
        const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        c0 = hi1 ^ c1 ^ k0;
        c1 = lo1;
        c2 = hi0 ^ c3 ^ k1;
        c3 = lo0;
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
}

}  // namespace detail

// Counter-based generator (Philox4x32-10) keyed on (master_seed, stream_index).
// Equal keys replay the exact same sequence; distinct stream indices give
// independent streams, so a simulation can hand one stream per scenario and
// stay reproducible under any work partitioning.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_index = 0)
        : master_seed_(master_seed), stream_index_(stream_index) {
        const std::uint64_t key =
            detail::splitmix64(detail::splitmix64(master_seed) ^
                               detail::splitmix64(stream_index ^ 0xa5a5a5a5a5a5a5a5ULL));
        key_[0] = static_cast<std::uint32_t>(key);
        key_[1] = static_cast<std::uint32_t>(key >> 32);
        counter_[0] = counter_[1] = counter_[2] = counter_[3] = 0;
        block_pos_ = 4;
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_index() const { return stream_index_; }

    std::uint32_t next_u32() {
        if (block_pos_ == 4) {
            fill_block();
            block_pos_ = 0;
        }
        return block_[block_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on the open interval (0,1); never returns an exact 0 or 1.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_normal() { return std_normal_quantile(next_uniform()); }

private:
    void fill_block() {
        detail::philox4x32_block(counter_, key_[0], key_[1], block_);
        if (++counter_[0] == 0 && ++counter_[1] == 0 && ++counter_[2] == 0) ++counter_[3];
    }

    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
    std::uint32_t key_[2];
    std::uint32_t counter_[4];
    std::uint32_t block_[4];
    int block_pos_;
};

}  // namespace crisk

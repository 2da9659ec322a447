#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace htn {

// Error hierarchy. Everything user-facing derives from Error so the CLI can
// catch one type and report a clean message.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// splitmix64 finalizer; good enough to decorrelate seeds derived from
// (base, tag) pairs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return mix64(base ^ mix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag1, std::uint64_t tag2) {
    return mix64(derive_seed(base, tag1) ^ mix64(tag2 + 0x5851f42d4c957f2dULL));
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) {
    return Rng(mix64(seed));
}

}  // namespace htn

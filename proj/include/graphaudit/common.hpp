// Shared primitives: node ids, error types, deterministic hashing/RNG,
// and atomic file writes. Everything else in the library builds on these.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace graphaudit {

using NodeId = std::int64_t;

// Raised on malformed/inconsistent input data (exit code 2 in the CLI).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on numeric failures such as non-finite losses (exit code 3 in the CLI).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a over bytes. Used to seed the hash embedder and to checksum bundle files.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// splitmix64 step: advances `state` and returns the next output word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits of a splitmix64 draw.
inline double splitmix_unit(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double splitmix_range(std::uint64_t& state, double lo, double hi) {
    return lo + (hi - lo) * splitmix_unit(state);
}

// Uniform integer in [0, n). n must be positive; modulo bias is irrelevant
// at the scales used here and keeps the stream portable.
inline std::uint64_t splitmix_below(std::uint64_t& state, std::uint64_t n) {
    return splitmix64(state) % n;
}

// Deterministic in-place Fisher-Yates shuffle driven by splitmix64.
template <typename T>
void splitmix_shuffle(std::vector<T>& v, std::uint64_t& state) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(splitmix_below(state, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Writes `contents` to `path` via a temp file + rename so readers never see
// a partially written file.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

}  // namespace graphaudit

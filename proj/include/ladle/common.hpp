#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ladle {

// Error taxonomy. The CLI maps these onto process exit codes
// (config 2, data/input 3, numeric 4).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for config hashes, checkpoint hashes and seed derivation.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

// Deterministic RNG. mt19937_64 has a standard-mandated sequence; the
// standard distributions do not, so the uniform/normal transforms are done
// here to keep streams identical across library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // independent substream for a named purpose
    static Rng derive(uint64_t seed, std::string_view tag) {
        uint64_t h = fnv1a64(tag);
        h = fnv1a64(&seed, sizeof(seed), h);
        return Rng(h);
    }

    uint64_t bits() { return eng_(); }

    double uniform() {  // [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one value per call, cached pair discarded for simplicity
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // integer in [0, n)
    uint64_t index(uint64_t n) {
        // rejection sampling keeps the draw unbiased
        uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = eng_();
        while (v >= lim) v = eng_();
        return v % n;
    }

private:
    std::mt19937_64 eng_;
};

// Filesystem helpers. Writes go through a temp file and a rename so that
// readers never observe a partially written artifact.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
uint64_t hash_file(const std::filesystem::path& path);

void log_warn(const std::string& msg);

}  // namespace ladle

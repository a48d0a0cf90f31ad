#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hf {

inline constexpr const char* kVersion = "hfields 0.1.0";

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct VocabError : std::runtime_error {
    explicit VocabError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NanLossError : std::runtime_error {
    explicit NanLossError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// pcg32 (Melissa O'Neill's minimal PCG). Hand-rolled so random streams are
// bit-identical across platforms and standard library versions.
class Pcg32 {
public:
    Pcg32() : Pcg32(0x853c49e6748fea9bULL) {}
    explicit Pcg32(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbULL) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbULL) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // uniform in [0, 1)
    double next_double() { return next_u32() * (1.0 / 4294967296.0); }

    // uniform in [0, n)
    uint32_t next_below(uint32_t n) {
        // unbiased rejection sampling
        uint32_t threshold = (-n) % n;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // standard normal via Box-Muller
    double normal() {
        double u1 = 0.0;
        do { u1 = next_double(); } while (u1 <= 1e-12);
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    uint64_t state() const { return state_; }
    uint64_t inc() const { return inc_; }
    void restore(uint64_t state, uint64_t inc) { state_ = state; inc_ = inc; }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
};

// Sample k distinct indices from [0, n) (partial Fisher-Yates), order random.
inline std::vector<int> sample_without_replacement(int n, int k, Pcg32& rng) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(rng.next_below(static_cast<uint32_t>(n - i)));
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    return out;
}

// Global numeric thread budget. HF_DETERMINISTIC=1 forces single-threaded
// execution; row-partitioned kernels are bit-deterministic either way.
namespace detail {
inline int g_num_threads = 0;  // 0 = auto
}

inline bool deterministic_mode() {
    const char* e = std::getenv("HF_DETERMINISTIC");
    return e != nullptr && e[0] == '1';
}

inline void set_num_threads(int n) { detail::g_num_threads = n; }

inline int num_threads() {
    if (detail::g_num_threads > 0) return detail::g_num_threads;
    if (deterministic_mode()) return 1;
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// Keeps big tensor buffers on the heap across free/alloc cycles instead of
// round-tripping through mmap; a per-step training graph reallocates the same
// sizes thousands of times.
void tune_allocator();

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace hf

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace seqloc {

// ---------------------------------------------------------------------------
// Errors. UsageError-derived types map to CLI exit code 2 (bad input or
// arguments), InternalError-derived types to exit code 1.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};
struct InternalError : Error {
    using Error::Error;
};

struct ParseError : UsageError {
    using UsageError::UsageError;
};
struct SchemaError : UsageError {
    using UsageError::UsageError;
};
struct InvalidArgument : UsageError {
    using UsageError::UsageError;
};
struct DataIntegrityError : UsageError {
    using UsageError::UsageError;
};
struct ConfigError : UsageError {
    using UsageError::UsageError;
};
struct IoError : UsageError {
    using UsageError::UsageError;
};

struct DegenerateWeightsError : InternalError {
    using InternalError::InternalError;
};
struct PartitionViolation : InternalError {
    using InternalError::InternalError;
};
struct EvaluationError : InternalError {
    using InternalError::InternalError;
};
struct LeafFitError : InternalError {
    using InternalError::InternalError;
};

struct DivergenceError : InternalError {
    DivergenceError(const std::string& msg, int epoch_, double learning_rate_)
        : InternalError(msg), epoch(epoch_), learning_rate(learning_rate_) {}
    int epoch;
    double learning_rate;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. xoshiro256** seeded through splitmix64, with explicit
// uniform/normal transforms so results do not depend on the standard library.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // inclusive bounds
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    double normal(double mean, double sigma) {
        if (has_cached_) {
            has_cached_ = false;
            return mean + sigma * cached_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        cached_ = radius * std::sin(two_pi * u2);
        has_cached_ = true;
        return mean + sigma * radius * std::cos(two_pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Deterministic sub-seed derivation for independent training runs.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    std::uint64_t h = fnv1a64(tag, base ^ 0x9e3779b97f4a7c15ULL);
    std::uint64_t sm = h ^ (a * 0xd1342543de82ef95ULL) ^ (b * 0xaf251af3b0f025b5ULL);
    return splitmix64(sm);
}

inline std::string hex16(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Number formatting: shortest round-trip decimal, integers without a point.
// ---------------------------------------------------------------------------

inline std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, bool& ok) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = token.data() + token.size();
    const auto res = std::from_chars(begin, end, value);
    ok = res.ec == std::errc() && res.ptr == end && !token.empty();
    return value;
}

inline std::int64_t parse_int(std::string_view token, bool& ok) {
    std::int64_t value = 0;
    const char* begin = token.data();
    const char* end = token.data() + token.size();
    const auto res = std::from_chars(begin, end, value);
    ok = res.ec == std::errc() && res.ptr == end && !token.empty();
    return value;
}

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string file_content_hash(const std::filesystem::path& path) {
    return hex16(fnv1a64(read_file(path)));
}

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must be
// written to pre-sized slots so the order of completion does not matter.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    if (count == 0) return;
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace seqloc

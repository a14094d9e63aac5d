#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace specsel {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

/// Problem with the input data (bad CSV cell, class too small, ...).
/// Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad flag value, impossible level, ...).
/// Maps to CLI exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Every candidate covariance structure collapsed for a fit.
class SingularFitError : public std::runtime_error {
public:
    explicit SingularFitError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Logging, controlled by the SPECSEL_LOG environment variable
// (off|error|warn|info|debug, default warn).
// ---------------------------------------------------------------------------

enum class LogLevel : int { off = 0, error = 1, warn = 2, info = 3, debug = 4 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("SPECSEL_LOG");
        if (!env) return LogLevel::warn;
        std::string_view v(env);
        if (v == "off" || v == "0") return LogLevel::off;
        if (v == "error" || v == "1") return LogLevel::error;
        if (v == "warn" || v == "2") return LogLevel::warn;
        if (v == "info" || v == "3") return LogLevel::info;
        if (v == "debug" || v == "4") return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

inline bool log_enabled(LogLevel level) {
    return static_cast<int>(level) <= static_cast<int>(log_level());
}

inline void log_message(LogLevel level, const std::string& msg) {
    if (!log_enabled(level)) return;
    static std::mutex mu;
    static const char* names[] = {"off", "error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[specsel " << names[static_cast<int>(level)] << "] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// Numeric helpers
// ---------------------------------------------------------------------------

/// log(sum(exp(v))) without overflow.
inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Shortest round-trip decimal representation; used for CSV output so that
/// identical runs emit identical bytes.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Deterministic randomness.  std::shuffle / std::uniform_int_distribution are
// implementation-defined, so splits use an explicit Fisher-Yates driven by raw
// mt19937_64 output.
// ---------------------------------------------------------------------------

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Work-sharing loop for embarrassingly parallel jobs (split evaluation).
// Results must be written to preallocated slots indexed by the loop counter.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    if (n <= 0) return;
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr first_error;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace specsel

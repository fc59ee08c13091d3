#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mvfd {

inline constexpr const char* kVersion = "0.1.0";

// All dense data is row-major f64 so that on-disk layout == in-memory layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Bad inputs / violated contracts. CLI maps these to exit code 1.
struct ValidationError : Error {
  using Error::Error;
};
// Filesystem / serialization failures. CLI maps these to exit code 2.
struct IoError : Error {
  using Error::Error;
};
// Optimization failures (divergence etc.). CLI maps these to exit code 2.
struct TrainError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void io_require(bool cond, const std::string& msg) {
  if (!cond) throw IoError(msg);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, tag).
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

// Deterministic RNG wrapper. All distribution code is written out explicitly
// so that sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform integer on [lo, hi] inclusive, rejection-sampled for exactness.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    require(lo <= hi, "Rng::uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<int64_t>(x % span);
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method with an explicit spare, identical everywhere.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a random permutation of 0..n-1 (partial Fisher-Yates),
  // returned in draw order.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
    require(k >= 0 && k <= n, "Rng::sample_without_replacement: k out of range");
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < k; ++i) {
      const int64_t j = uniform_int(i, n - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for dataset fingerprints.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Runs fn(i) for i in [0, count) on `jobs` threads. Results must be written to
// disjoint slots; the schedule is work-stealing but output placement is by
// index, so merged results are deterministic.
template <typename Fn>
void parallel_for(int64_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> workers;
  const int n_workers = static_cast<int>(std::min<int64_t>(jobs, count));
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const int64_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
#if defined(_WIN32)
  gmtime_s(&tm, &t);
#else
  gmtime_r(&t, &tm);
#endif
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace mvfd

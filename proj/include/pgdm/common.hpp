#pragma once
// Shared infrastructure: error taxonomy, deterministic RNG, hashing, logging,
// and a static-partition parallel loop.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace pgdm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorKind {
  InvalidInput,
  ShapeError,
  InvalidArity,
  InvalidTarget,
  InvalidState,
  NumericalDivergence,
  MissingArtifact,
  StaleArtifact,
  ParseError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::ShapeError: return "shape_error";
    case ErrorKind::InvalidArity: return "invalid_arity";
    case ErrorKind::InvalidTarget: return "invalid_target";
    case ErrorKind::InvalidState: return "invalid_state";
    case ErrorKind::NumericalDivergence: return "numerical_divergence";
    case ErrorKind::MissingArtifact: return "missing_artifact";
    case ErrorKind::StaleArtifact: return "stale_artifact";
    case ErrorKind::ParseError: return "parse_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) {
  throw Error(k, msg);
}

inline void require(bool cond, ErrorKind k, const std::string& msg) {
  if (!cond) fail(k, msg);
}

// ---------------------------------------------------------------------------
// Logging. Level comes from the PGDM_LOG environment variable
// (error|warn|info|debug); default is warn.

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
  static const LogLevel lv = [] {
    const char* e = std::getenv("PGDM_LOG");
    if (!e) return LogLevel::Warn;
    std::string_view s(e);
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return lv;
}

inline void log(LogLevel lv, const std::string& msg) {
  if (lv > log_level()) return;
  static const char* tags[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[pgdm %s] %s\n", tags[int(lv)], msg.c_str());
}

// ---------------------------------------------------------------------------
// Deterministic randomness. mt19937_64 supplies the bit stream; uniform/normal
// transforms are written out explicitly so draws are identical across
// platforms and standard-library implementations.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Independent child stream; used to keep parallel work order-free.
  static Rng derive(uint64_t root, uint64_t stream) {
    return Rng(splitmix64(root ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
  }

  uint64_t bits() { return gen_(); }

  // [0, 1) with 53-bit resolution.
  double uniform() { return double(bits() >> 11) * 0x1.0p-53; }

  // [0, n) without modulo bias (128-bit multiply).
  int uniform_int(int n) {
    require(n > 0, ErrorKind::InvalidInput, "Rng::uniform_int: n must be positive");
    return int((unsigned __int128)bits() * (unsigned __int128)(uint64_t)n >> 64);
  }

  // Box-Muller with the spare cached; u1 is shifted into (0, 1].
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = double((bits() >> 11) + 1) * 0x1.0p-53;
    double u2 = double(bits() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vector normal_vec(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Vector uniform_vec(int n, double lo = 0.0, double hi = 1.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * uniform();
    return v;
  }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (int i = int(xs.size()) - 1; i > 0; --i) {
      std::swap(xs[i], xs[size_t(uniform_int(i + 1))]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// FNV-1a, used for config hashes embedded in checkpoints.

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Static-partition parallel loop. Results must not depend on scheduling, so
// the partition is fixed by (n, n_threads) alone; n_threads <= 1 runs inline.

template <class F>
void parallel_for(int n, int n_threads, F&& body) {
  if (n <= 0) return;
  if (n_threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  int k = std::min(n_threads, n);
  std::vector<std::thread> pool;
  pool.reserve(size_t(k));
  std::exception_ptr err;
  std::mutex err_mu;
  for (int t = 0; t < k; ++t) {
    int lo = int(int64_t(n) * t / k);
    int hi = int(int64_t(n) * (t + 1) / k);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::InvalidInput,
          "pearson: need two same-length samples of size >= 2");
  double n = double(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace pgdm

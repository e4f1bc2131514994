#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace stnn {

enum class ErrorCode {
  InvalidArgument,
  Dimension,
  Io,
  Parse,
  NotFound,
  State,
  Numeric,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 keystream with hand-rolled draws so the
// sequences do not depend on the standard library's distribution internals.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x5bf03635ull)) {}

  std::uint64_t next_u64() {
    // xorshift* keystream; stable across platforms.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return n ? next_u64() % n : 0;
  }

  // Knuth's product-of-uniforms sampler; fine for the rates used here.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Thread fan-out. Workers get contiguous index ranges; callers that need
// determinism must reduce worker results in worker order.
// ---------------------------------------------------------------------------

int thread_cap();  // SF_THREADS env var, else hardware concurrency

inline int resolve_threads(int requested) {
  int cap = thread_cap();
  if (requested <= 0) return cap;
  return requested < cap ? requested : cap;
}

inline void parallel_ranges(std::int64_t total, int threads,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (total <= 0) return;
  int n = threads < 1 ? 1 : threads;
  if (static_cast<std::int64_t>(n) > total) n = static_cast<int>(total);
  if (n == 1) {
    fn(0, 0, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  const std::int64_t chunk = (total + n - 1) / n;
  for (int w = 0; w < n; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = begin + chunk < total ? begin + chunk : total;
    if (begin >= end) break;
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Round-trip float formatting (shortest representation that parses back to
// the identical bits).
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, bool& ok) {
  double v = 0.0;
  // Leading whitespace is not expected in our files; keep the parse strict.
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  ok = res.ec == std::errc() && res.ptr == text.data() + text.size();
  if (!ok && (text == "inf" || text == "+inf" || text == "infinity")) {
    v = std::numeric_limits<double>::infinity();
    ok = true;
  }
  return v;
}

}  // namespace stnn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace afpipe {

// Per-sample rhythm annotation. Class 0 / class 1 in reports.
enum class Rhythm : std::uint8_t { NonAf = 0, Af = 1 };

inline const char* to_string(Rhythm r) { return r == Rhythm::Af ? "AF" : "NON_AF"; }

inline Rhythm rhythm_from_string(const std::string& s) {
  if (s == "AF") return Rhythm::Af;
  if (s == "NON_AF") return Rhythm::NonAf;
  throw std::invalid_argument("unknown rhythm label: '" + s + "'");
}

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DetectorError : Error {
  using Error::Error;
};
struct InsufficientDataError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct SerializationError : Error {
  using Error::Error;
};

// Seeded RNG with fixed sampling algorithms. std::*_distribution is
// implementation-defined, which would make serialized models differ between
// standard libraries; these routines pin the byte stream to the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Population standard deviation (divides by N).
inline double population_std(std::span<const double> x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

// Linearly interpolated order statistic, q in [0, 1].
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw ValidationError("quantile of empty sequence");
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lo), x.end());
  const double vlo = x[lo];
  if (lo + 1 >= x.size()) return vlo;
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return vlo;
  const double vhi = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(lo) + 1, x.end());
  return vlo + frac * (vhi - vlo);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

}  // namespace afpipe

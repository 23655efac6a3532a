#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gmddf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A covariance that is not symmetric, not positive definite or too badly conditioned.
class InvalidCovariance : public Error {
 public:
  using Error::Error;
};

class DensityUnderflow : public Error {
 public:
  using Error::Error;
};

/// Importance-sampling estimate whose effective sample size is too small to trust.
class EstimateUnreliable : public Error {
 public:
  EstimateUnreliable(const std::string& what, double ess) : Error(what), ess_(ess) {}
  [[nodiscard]] double ess() const noexcept { return ess_; }

 private:
  double ess_;
};

/// Free-form flags attached to results whose quality is degraded.
using Flags = std::vector<std::string>;

inline void add_flag(Flags* flags, std::string flag) {
  if (flags != nullptr) flags->push_back(std::move(flag));
}

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Linear-space densities are clamped at exp(-700); all density math stays in log space.
inline constexpr double kLogUnderflow = -700.0;

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

/// Symmetrize in place; cheap guard against round-off asymmetry from products.
inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Floor the eigenvalues of a symmetric matrix.
inline Mat eigen_floored(const Mat& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m));
  Vec ev = es.eigenvalues().cwiseMax(floor);
  return symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

// ---- random streams ----

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Counter-based sub-stream: the seed depends only on (root, index), never on scheduling.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline Rng derive_stream(std::uint64_t root, std::uint64_t index) { return Rng(derive_seed(root, index)); }

inline Vec standard_normal(Index d, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec z(d);
  for (Index k = 0; k < d; ++k) z(k) = n01(rng);
  return z;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// ---- data-parallel loops ----

namespace detail {
inline int& thread_override() {
  static int n = 0;
  return n;
}
}  // namespace detail

/// Caps worker threads; 0 restores the default (GMDDF_THREADS, else logical cores).
inline void set_thread_count(int n) { detail::thread_override() = std::max(0, n); }

inline int thread_count() {
  if (detail::thread_override() > 0) return detail::thread_override();
  if (const char* env = std::getenv("GMDDF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
inline bool& inside_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// Runs fn(i) for i in [0, n). Each index must write only its own output slot.
/// Calls made from inside a worker run serially, so nesting never multiplies threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = detail::inside_worker() ? std::size_t{1} : std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // The lowest failing index wins so the reported error does not depend on timing.
  std::exception_ptr first_error;
  std::size_t first_index = n;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::inside_worker() = true;
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (i < first_index) {
            first_index = i;
            first_error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gmddf

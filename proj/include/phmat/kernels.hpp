#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "phmat/common.hpp"

namespace phmat {

// Parametric isotropic kernels kappa(x, y; theta) = f_theta(||x - y||).
//
//   e    exp(-r/lambda)
//   tps  (r/lambda)^2 log(r/lambda), 0 at r = 0 by continuous extension
//   se   exp(-(r/lambda)^2)
//   mc   sqrt(1 + (r/lambda)^2)
//   mn   2^(1-nu)/Gamma(nu) (sqrt(2 nu) r/lambda)^nu K_nu(sqrt(2 nu) r/lambda)
//
// mn takes theta = (lambda, nu); all others take theta = (lambda).
enum class KernelFamily { Exponential, ThinPlateSpline, SquaredExponential, Multiquadric, Matern };

KernelFamily kernel_family_from_id(std::string_view id);  // "e","tps","se","mc","mn"
std::string kernel_id(KernelFamily family);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  std::vector<Interval> theta_box;  // hypercube B_theta, one interval per parameter

  int d_theta() const { return static_cast<int>(theta_box.size()); }
  void validate() const;  // throws std::invalid_argument on a malformed spec
};

// Default parameter boxes: lambda in [0.25, 1], and nu in [0.5, 3] for mn.
KernelSpec default_kernel_spec(KernelFamily family);

// Tally of scalar kernel evaluations. One counter per build stage
// (offline / online / baseline / audit), swapped explicitly by the caller.
class KernelEvalCounter {
 public:
  void add(std::uint64_t k = 1) noexcept { n_.fetch_add(k, std::memory_order_relaxed); }
  std::uint64_t value() const noexcept { return n_.load(std::memory_order_relaxed); }
  void reset() noexcept { n_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> n_{0};
};

struct StageCounters {
  KernelEvalCounter offline;
  KernelEvalCounter online;
  KernelEvalCounter baseline;
  KernelEvalCounter audit;  // instrumentation-only evaluations (error probes)
};

// Radial profile f_theta(r). Pure; does not count or validate theta.
double kernel_value(const KernelSpec& spec, double r, const double* theta);

// Full evaluation with domain checks; counts one evaluation on `counter`
// when non-null. theta outside the box -> std::domain_error; non-finite
// input -> std::invalid_argument.
double kernel_eval(const KernelSpec& spec, const double* x, const double* y, int d,
                   const double* theta, KernelEvalCounter* counter = nullptr);

}  // namespace phmat

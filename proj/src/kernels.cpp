#include "phmat/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace phmat {

KernelFamily kernel_family_from_id(std::string_view id) {
  if (id == "e") return KernelFamily::Exponential;
  if (id == "tps") return KernelFamily::ThinPlateSpline;
  if (id == "se") return KernelFamily::SquaredExponential;
  if (id == "mc") return KernelFamily::Multiquadric;
  if (id == "mn") return KernelFamily::Matern;
  throw std::invalid_argument("unknown kernel id: " + std::string(id));
}

std::string kernel_id(KernelFamily family) {
  switch (family) {
    case KernelFamily::Exponential: return "e";
    case KernelFamily::ThinPlateSpline: return "tps";
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::Multiquadric: return "mc";
    case KernelFamily::Matern: return "mn";
  }
  return "?";
}

void KernelSpec::validate() const {
  const int expected = family == KernelFamily::Matern ? 2 : 1;
  if (d_theta() != expected)
    throw std::invalid_argument("kernel " + kernel_id(family) + " expects " +
                                std::to_string(expected) + " parameter(s)");
  for (const Interval& iv : theta_box)
    if (!(iv.lo <= iv.hi)) throw std::invalid_argument("empty theta interval");
  if (!(theta_box[0].lo > 0.0))
    throw std::invalid_argument("length scale lower bound must be positive");
  if (family == KernelFamily::Matern && !(theta_box[1].lo >= 0.5))
    throw std::invalid_argument("matern smoothness lower bound must be >= 0.5");
}

KernelSpec default_kernel_spec(KernelFamily family) {
  KernelSpec spec;
  spec.family = family;
  spec.theta_box = {{0.25, 1.0}};
  if (family == KernelFamily::Matern) spec.theta_box.push_back({0.5, 3.0});
  return spec;
}

double kernel_value(const KernelSpec& spec, double r, const double* theta) {
  const double lambda = theta[0];
  switch (spec.family) {
    case KernelFamily::Exponential:
      return std::exp(-r / lambda);
    case KernelFamily::ThinPlateSpline: {
      if (r == 0.0) return 0.0;  // limit of r^2 log(r/lambda) as r -> 0
      const double s = r / lambda;
      return s * s * std::log(s);
    }
    case KernelFamily::SquaredExponential: {
      const double s = r / lambda;
      return std::exp(-s * s);
    }
    case KernelFamily::Multiquadric: {
      const double s = r / lambda;
      return std::sqrt(1.0 + s * s);
    }
    case KernelFamily::Matern: {
      // Standard Matern normalization, 2^(1-nu)/Gamma(nu); reduces to the
      // exponential kernel at nu = 1/2.
      const double nu = theta[1];
      if (r == 0.0) return 1.0;
      const double z = std::sqrt(2.0 * nu) * r / lambda;
      return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(z, nu) *
             std::cyl_bessel_k(nu, z);
    }
  }
  return 0.0;
}

double kernel_eval(const KernelSpec& spec, const double* x, const double* y, int d,
                   const double* theta, KernelEvalCounter* counter) {
  double r2 = 0.0;
  for (int k = 0; k < d; ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(y[k]))
      throw std::invalid_argument("kernel_eval: non-finite point coordinate");
    const double delta = x[k] - y[k];
    r2 += delta * delta;
  }
  for (int k = 0; k < spec.d_theta(); ++k) {
    if (!std::isfinite(theta[k])) throw std::invalid_argument("kernel_eval: non-finite theta");
    if (!spec.theta_box[k].contains(theta[k]))
      throw std::domain_error("kernel_eval: theta outside the parameter box");
  }
  if (counter) counter->add();
  return kernel_value(spec, std::sqrt(r2), theta);
}

}  // namespace phmat

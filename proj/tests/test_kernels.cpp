#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "phmat/kernels.hpp"

using namespace phmat;

namespace {

// Independent oracle for the modified Bessel function of the second kind:
// K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt, evaluated by composite
// 16-point Gauss-Legendre panels out to where the integrand is negligible.
double bessel_k_oracle(double nu, double z) {
  static const double gl_x[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                 0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                 0.9445750230732326, 0.9894009349916499};
  static const double gl_w[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                 0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                 0.0622535239386479, 0.0271524594117541};
  // exp(-z cosh t) < 1e-320 once z cosh t > 740.
  const double t_max = std::acosh(std::max(2.0, 740.0 / z));
  const int panels = 256;
  const double h = t_max / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = (p + 0.5) * h;
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double t = c + sgn * 0.5 * h * gl_x[i];
        acc += gl_w[i] * std::exp(-z * std::cosh(t)) * std::cosh(nu * t);
      }
    }
    total += 0.5 * h * acc;
  }
  return total;
}

double matern_reference(double r, double lambda, double nu) {
  if (r == 0.0) return 1.0;
  const double z = std::sqrt(2.0 * nu) * r / lambda;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(z, nu) * bessel_k_oracle(nu, z);
}

}  // namespace

TEST_CASE("kernel ids round-trip") {
  for (auto id : {"e", "tps", "se", "mc", "mn"})
    CHECK(kernel_id(kernel_family_from_id(id)) == id);
  CHECK_THROWS_AS(kernel_family_from_id("gaussian"), std::invalid_argument);
}

TEST_CASE("spec validation") {
  KernelSpec spec = default_kernel_spec(KernelFamily::SquaredExponential);
  CHECK_NOTHROW(spec.validate());
  spec.theta_box[0].lo = 0.0;  // length scale must stay positive
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

  KernelSpec mn = default_kernel_spec(KernelFamily::Matern);
  CHECK(mn.d_theta() == 2);
  mn.theta_box[1].lo = 0.25;  // nu lower bound is 1/2
  CHECK_THROWS_AS(mn.validate(), std::invalid_argument);
}

TEST_CASE("pointwise values") {
  const double lambda = 0.62;
  double th[1] = {lambda};

  const KernelSpec se = default_kernel_spec(KernelFamily::SquaredExponential);
  CHECK(kernel_value(se, 0.0, th) == 1.0);

  const KernelSpec e = default_kernel_spec(KernelFamily::Exponential);
  CHECK(kernel_value(e, lambda, th) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  const KernelSpec tps = default_kernel_spec(KernelFamily::ThinPlateSpline);
  CHECK(kernel_value(tps, lambda, th) == 0.0);  // log(1) = 0
  CHECK(kernel_value(tps, 0.0, th) == 0.0);     // continuous extension at r = 0

  const KernelSpec mc = default_kernel_spec(KernelFamily::Multiquadric);
  CHECK(kernel_value(mc, lambda, th) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  const KernelSpec mn = default_kernel_spec(KernelFamily::Matern);
  double thmn[2] = {lambda, 0.5};
  CHECK(kernel_value(mn, lambda, thmn) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("matern at nu = 1/2 equals the exponential kernel") {
  const KernelSpec mn = default_kernel_spec(KernelFamily::Matern);
  const KernelSpec e = default_kernel_spec(KernelFamily::Exponential);
  for (double lambda : {0.25, 0.5, 0.77, 1.0}) {
    for (double r : {1e-8, 1e-3, 0.05, 0.3, 0.9, 1.7}) {
      double thmn[2] = {lambda, 0.5};
      double the[1] = {lambda};
      CHECK(kernel_value(mn, r, thmn) ==
            doctest::Approx(kernel_value(e, r, the)).epsilon(1e-10));
    }
  }
}

TEST_CASE("bessel backend matches the quadrature oracle") {
  // Closed forms at half-integer orders.
  for (double z : {1e-6, 1e-3, 0.1, 1.0, 7.0, 30.0, 50.0}) {
    const double k12 = std::sqrt(std::numbers::pi / (2.0 * z)) * std::exp(-z);
    CHECK(std::cyl_bessel_k(0.5, z) == doctest::Approx(k12).epsilon(1e-12));
    CHECK(std::cyl_bessel_k(1.5, z) == doctest::Approx(k12 * (1.0 + 1.0 / z)).epsilon(1e-12));
  }
  // General orders against the integral representation.
  for (double nu : {0.5, 0.8, 1.3, 2.0, 2.7, 3.0}) {
    for (double z : {1e-6, 1e-2, 0.4, 2.0, 11.0, 50.0}) {
      const double ref = bessel_k_oracle(nu, z);
      CHECK(std::cyl_bessel_k(nu, z) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("matern values against the oracle across the parameter box") {
  const KernelSpec mn = default_kernel_spec(KernelFamily::Matern);
  for (double nu : {0.5, 1.0, 1.5, 2.2, 3.0}) {
    for (double lambda : {0.25, 0.6, 1.0}) {
      for (double r : {0.0, 1e-5, 0.04, 0.33, 1.2, 1.7320508075688772}) {
        double th[2] = {lambda, nu};
        CHECK(kernel_value(mn, r, th) ==
              doctest::Approx(matern_reference(r, lambda, nu)).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("eval: symmetry, translation invariance, counting, domain errors") {
  const KernelSpec spec = default_kernel_spec(KernelFamily::SquaredExponential);
  KernelEvalCounter counter;
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    double x[3], y[3], c[3];
    for (int k = 0; k < 3; ++k) {
      x[k] = rng.uniform();
      y[k] = rng.uniform();
      c[k] = rng.uniform(-2.0, 2.0);
    }
    double th[1] = {rng.uniform(0.25, 1.0)};
    const double kxy = kernel_eval(spec, x, y, 3, th, &counter);
    const double kyx = kernel_eval(spec, y, x, 3, th, &counter);
    CHECK(kxy == kyx);
    double xs[3], ys[3];
    for (int k = 0; k < 3; ++k) {
      xs[k] = x[k] + c[k];
      ys[k] = y[k] + c[k];
    }
    CHECK(kernel_eval(spec, xs, ys, 3, th, &counter) == doctest::Approx(kxy).epsilon(1e-12));
  }
  CHECK(counter.value() == 300);

  double x[3] = {0, 0, 0}, y[3] = {1, 0, 0};
  double bad_theta[1] = {7.0};
  CHECK_THROWS_AS(kernel_eval(spec, x, y, 3, bad_theta, &counter), std::domain_error);
  double nan_x[3] = {std::nan(""), 0, 0};
  double th[1] = {0.5};
  CHECK_THROWS_AS(kernel_eval(spec, nan_x, y, 3, th, &counter), std::invalid_argument);
  CHECK(counter.value() == 300);  // failed evaluations are not counted
}

TEST_CASE("dense assembly counts exactly n^2 evaluations") {
  const KernelSpec spec = default_kernel_spec(KernelFamily::Exponential);
  KernelEvalCounter counter;
  Rng rng(7);
  const int n = 23;
  std::vector<double> pts(3 * n);
  for (auto& v : pts) v = rng.uniform();
  double th[1] = {0.5};
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      sum += kernel_eval(spec, &pts[3 * i], &pts[3 * j], 3, th, &counter);
  CHECK(counter.value() == static_cast<std::uint64_t>(n) * n);
  CHECK(sum > 0.0);
}

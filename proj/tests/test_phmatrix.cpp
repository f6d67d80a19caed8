#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "phmat/harness.hpp"
#include "phmat/phmatrix.hpp"

using namespace phmat;

namespace {

Eigen::MatrixXd dense_kernel_matrix(const Eigen::MatrixXd& points, const KernelSpec& spec,
                                    const std::vector<double>& theta) {
  const Index n = points.rows();
  const int d = static_cast<int>(points.cols());
  Eigen::MatrixXd k(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double delta = points(i, c) - points(j, c);
        r2 += delta * delta;
      }
      k(i, j) = kernel_value(spec, std::sqrt(r2), theta.data());
    }
  return k;
}

PHConfig small_config(KernelFamily family, int l_max, int p_s, int p_theta, double eps) {
  PHConfig cfg;
  cfg.spec = default_kernel_spec(family);
  cfg.l_max = l_max;
  cfg.p_s = p_s;
  cfg.p_theta = p_theta;
  cfg.eps = eps;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("structure: every far leaf gets a far block, every near leaf a near block") {
  const Eigen::MatrixXd points = generate_points(512, 3, 12);
  StageCounters counters;
  const PHConfig cfg = small_config(KernelFamily::SquaredExponential, 1, 4, 4, 1e-4);
  const ParametricHMatrix pm = offline_h(points, cfg, counters);
  CHECK(pm.far.size() == pm.blocks.far.size());
  CHECK(pm.near.size() == pm.blocks.near.size());
  CHECK(coverage_sum(*pm.tree, pm.blocks) == 512 * 512);
}

TEST_CASE("induced dense matrix matches the kernel matrix (H and H2, d = 3)") {
  const Index n = 512;
  const Eigen::MatrixXd points = generate_points(n, 3, 42);
  // l_max = 2 so far blocks exist at level 2
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 2, 6, 8, 1e-4);
  StageCounters counters;

  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));
  CHECK(!ph->blocks.far.empty());

  Rng rng(9);
  for (int t = 0; t < 3; ++t) {
    const std::vector<double> theta{rng.uniform(0.25, 1.0)};
    const Eigen::MatrixXd exact = dense_kernel_matrix(points, cfg.spec, theta);
    const double scale = exact.norm();

    const InstantiatedHMatrix ih = instantiate(ph, theta);
    CHECK((ih.to_dense() - exact).norm() <= 10 * cfg.eps * scale);

    const InstantiatedH2Matrix ih2 = instantiate(ph2, theta);
    CHECK((ih2.to_dense() - exact).norm() <= 10 * cfg.eps * scale);
  }
}

TEST_CASE("induced dense matrix: all four smooth kernels at d = 2") {
  const Index n = 400;
  const Eigen::MatrixXd points = generate_points(n, 2, 4);
  StageCounters counters;
  for (auto family : {KernelFamily::Exponential, KernelFamily::SquaredExponential,
                      KernelFamily::Multiquadric, KernelFamily::Matern}) {
    // p_theta rich enough that the TT tolerance dominates theta interpolation
    PHConfig cfg = small_config(family, 2, 6, 12, 1e-4);
    auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
    auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));
    Rng rng(9);
    for (int t = 0; t < 5; ++t) {
      std::vector<double> theta{rng.uniform(0.25, 1.0)};
      if (family == KernelFamily::Matern) theta.push_back(rng.uniform(0.5, 3.0));
      const Eigen::MatrixXd exact = dense_kernel_matrix(points, cfg.spec, theta);
      CHECK((instantiate(ph, theta).to_dense() - exact).norm() <= 10 * cfg.eps * exact.norm());
      CHECK((instantiate(ph2, theta).to_dense() - exact).norm() <= 10 * cfg.eps * exact.norm());
    }
  }
}

TEST_CASE("mvm agrees with the dense matvec and is linear") {
  const Index n = 420;
  const Eigen::MatrixXd points = generate_points(n, 2, 7);
  PHConfig cfg = small_config(KernelFamily::Exponential, 2, 6, 8, 1e-5);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));

  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    const std::vector<double> theta{rng.uniform(0.25, 1.0)};
    const InstantiatedHMatrix ih = instantiate(ph, theta);
    const InstantiatedH2Matrix ih2 = instantiate(ph2, theta);
    const Eigen::MatrixXd exact = dense_kernel_matrix(points, cfg.spec, theta);

    Eigen::VectorXd x(n);
    for (Index i = 0; i < n; ++i) x[i] = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd want = exact * x;
    CHECK((ih.apply(x) - want).norm() <= 10 * cfg.eps * want.norm());
    CHECK((ih2.apply(x) - want).norm() <= 10 * cfg.eps * want.norm());

    // H and H2 approximate the same matrix
    CHECK((ih.apply(x) - ih2.apply(x)).norm() <= 20 * cfg.eps * want.norm());

    // zero in, zero out; linearity
    CHECK(ih.apply(Eigen::VectorXd::Zero(n)).norm() == 0.0);
    Eigen::VectorXd z(n);
    for (Index i = 0; i < n; ++i) z[i] = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd lhs = ih.apply(2.0 * x - 3.0 * z);
    const Eigen::VectorXd rhs = 2.0 * ih.apply(x) - 3.0 * ih.apply(z);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff() + 1e-14);
  }
}

TEST_CASE("unit vector input extracts a matrix column") {
  const Index n = 256;
  const Eigen::MatrixXd points = generate_points(n, 2, 19);
  PHConfig cfg = small_config(KernelFamily::Multiquadric, 2, 5, 6, 1e-6);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  const std::vector<double> theta{0.7};
  const InstantiatedHMatrix ih = instantiate(ph, theta);
  const Eigen::MatrixXd dense = ih.to_dense();
  for (Index j : {Index(0), Index(100), Index(255)}) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    CHECK((ih.apply(e) - dense.col(j)).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("online stage and MVMs perform zero kernel evaluations") {
  const Eigen::MatrixXd points = generate_points(420, 2, 3);
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 2, 5, 6, 1e-4);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));
  const std::uint64_t offline = counters.offline.value();
  CHECK(offline > 0);

  Eigen::VectorXd x(420);
  Rng rng(5);
  for (Index i = 0; i < 420; ++i) x[i] = rng.uniform(-1.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    const std::vector<double> theta{rng.uniform(0.25, 1.0)};
    const InstantiatedHMatrix ih = instantiate(ph, theta, &counters.online);
    const InstantiatedH2Matrix ih2 = instantiate(ph2, theta, &counters.online);
    ih.apply(x);
    ih2.apply(x);
  }
  CHECK(counters.online.value() == 0);
  CHECK(counters.offline.value() == offline);
}

TEST_CASE("direct near mode instantiates near blocks by evaluation") {
  const Eigen::MatrixXd points = generate_points(256, 3, 23);
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 1, 4, 6, 1e-4);
  cfg.near_mode = NearMode::Direct;
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  CHECK(ph->near.empty());  // nothing stored offline for near blocks

  Index near_entries = 0;
  for (const Block& b : ph->blocks.near)
    near_entries += ph->tree->node(b.sigma).size() * ph->tree->node(b.tau).size();

  const std::vector<double> theta{0.5};
  const InstantiatedHMatrix ih = instantiate(ph, theta, &counters.online);
  CHECK(counters.online.value() == static_cast<std::uint64_t>(near_entries));

  // near blocks are exact in this mode
  const Eigen::MatrixXd exact = dense_kernel_matrix(points, cfg.spec, theta);
  CHECK((ih.to_dense() - exact).norm() <= 10 * cfg.eps * exact.norm());
}

TEST_CASE("instantiation is deterministic and the parametric build reproducible") {
  const Eigen::MatrixXd points = generate_points(256, 2, 5);
  PHConfig cfg = small_config(KernelFamily::Exponential, 2, 5, 6, 1e-5);
  StageCounters c1, c2;
  auto a = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, c1));
  auto b = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, c2));
  CHECK(c1.offline.value() == c2.offline.value());

  const std::vector<double> theta{0.4};
  const InstantiatedHMatrix ia = instantiate(a, theta);
  const InstantiatedHMatrix ib = instantiate(b, theta);
  REQUIRE(ia.far_h.size() == ib.far_h.size());
  for (std::size_t i = 0; i < ia.far_h.size(); ++i)
    CHECK((ia.far_h[i] - ib.far_h[i]).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < ia.near_d.size(); ++i)
    CHECK((ia.near_d[i] - ib.near_d[i]).cwiseAbs().maxCoeff() == 0.0);

  const InstantiatedHMatrix ia2 = instantiate(a, theta);
  Eigen::VectorXd x(256);
  Rng rng(6);
  for (Index i = 0; i < 256; ++i) x[i] = rng.uniform(-1.0, 1.0);
  CHECK((ia.apply(x) - ia2.apply(x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("metrics: ratios, rank, m_a, coupling ratio") {
  const Eigen::MatrixXd points = generate_points(512, 3, 31);
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 2, 4, 5, 1e-3);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));

  const StructureMetrics mh = metrics(*ph);
  const StructureMetrics mh2 = metrics(*ph2);
  const double n2 = 512.0 * 512.0;

  Index near_dense = 0;
  for (const Block& b : ph->blocks.near)
    near_dense += ph->tree->node(b.sigma).size() * ph->tree->node(b.tau).size();
  CHECK(mh.nf_ratio == doctest::Approx(near_dense / n2));
  CHECK(mh2.nf_ratio == mh.nf_ratio);

  // online far entries of the instantiated objects match the metric
  const std::vector<double> theta{0.5};
  const InstantiatedHMatrix ih = instantiate(ph, theta);
  CHECK(mh.ff_ratio == doctest::Approx(ih.online_entries_far() / n2));
  const InstantiatedH2Matrix ih2 = instantiate(ph2, theta);
  CHECK(mh2.ff_ratio == doctest::Approx(ih2.online_entries_far() / n2));

  CHECK(mh.rank >= 1.0);
  CHECK(mh.m_a == mh2.m_a);
  CHECK(mh.m_a <= static_cast<Index>(ph->blocks.far.size()));
  CHECK(mh.c_sp <= 216);
  CHECK(mh2.coupling_ratio > 0.0);
  CHECK(mh2.coupling_ratio < mh2.ff_ratio);
  CHECK(mh.storage_gb == doctest::Approx(mh.storage_entries * 8.0 / 1e9));

  // H2 shares coupling data across a translation class
  CHECK(ph2->couplings.size() == static_cast<std::size_t>(mh2.m_a));
}

TEST_CASE("near-only tree: FF ratio is zero and row sums match the dense matrix") {
  const Eigen::MatrixXd points = generate_points(128, 3, 3);
  PHConfig cfg = small_config(KernelFamily::Exponential, 1, 4, 12, 1e-5);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  CHECK(ph->blocks.far.empty());  // level-1 octants all touch
  const StructureMetrics m = metrics(*ph);
  CHECK(m.ff_ratio == 0.0);
  CHECK(m.rank == 0.0);

  const std::vector<double> theta{0.5};
  const InstantiatedHMatrix ih = instantiate(ph, theta);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(128);
  const Eigen::MatrixXd exact = dense_kernel_matrix(points, cfg.spec, theta);
  CHECK((ih.apply(ones) - exact * ones).cwiseAbs().maxCoeff() <=
        10 * cfg.eps * exact.cwiseAbs().maxCoeff() * 128);
}

TEST_CASE("theta outside the box is rejected at instantiation") {
  const Eigen::MatrixXd points = generate_points(128, 2, 8);
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 1, 4, 5, 1e-4);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  CHECK_THROWS_AS(instantiate(ph, std::vector<double>{3.0}), std::domain_error);
}

TEST_CASE("mvm rejects mismatched lengths") {
  const Eigen::MatrixXd points = generate_points(64, 2, 8);
  PHConfig cfg = small_config(KernelFamily::SquaredExponential, 1, 3, 4, 1e-3);
  StageCounters counters;
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  const InstantiatedHMatrix ih = instantiate(ph, std::vector<double>{0.5});
  CHECK_THROWS_AS(ih.apply(Eigen::VectorXd::Zero(65)), std::invalid_argument);
}

TEST_CASE("artifact round trip preserves the instantiated matrices bitwise") {
  const Eigen::MatrixXd points = generate_points(256, 3, 77);
  PHConfig cfg = small_config(KernelFamily::Multiquadric, 2, 4, 5, 1e-4);
  StageCounters counters;

  const std::string path_h = "test_artifact_h.phm";
  const std::string path_h2 = "test_artifact_h2.phm";
  auto ph = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, counters));
  save_parametric(*ph, path_h);
  auto ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(points, cfg, counters));
  save_parametric(*ph2, path_h2);

  CHECK_FALSE(artifact_is_h2(path_h));
  CHECK(artifact_is_h2(path_h2));

  auto lh = std::make_shared<ParametricHMatrix>(load_parametric_h(path_h));
  auto lh2 = std::make_shared<ParametricH2Matrix>(load_parametric_h2(path_h2));
  CHECK_THROWS(load_parametric_h(path_h2));

  const std::vector<double> theta{0.63};
  Eigen::VectorXd x(256);
  Rng rng(2);
  for (Index i = 0; i < 256; ++i) x[i] = rng.uniform(-1.0, 1.0);

  const Eigen::VectorXd ya = instantiate(ph, theta).apply(x);
  const Eigen::VectorXd yb = instantiate(lh, theta).apply(x);
  CHECK((ya - yb).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd za = instantiate(ph2, theta).apply(x);
  const Eigen::VectorXd zb = instantiate(lh2, theta).apply(x);
  CHECK((za - zb).cwiseAbs().maxCoeff() == 0.0);

  std::remove(path_h.c_str());
  std::remove(path_h2.c_str());
}

TEST_CASE("translation cache off: same induced matrices, more kernel work") {
  const Eigen::MatrixXd points = generate_points(400, 2, 15);
  PHConfig cfg = small_config(KernelFamily::Exponential, 2, 4, 5, 1e-4);

  StageCounters c_on, c_off;
  auto on = std::make_shared<ParametricHMatrix>(offline_h(points, cfg, c_on));
  PHConfig cfg_off = cfg;
  cfg_off.translation_cache = false;
  auto off = std::make_shared<ParametricHMatrix>(offline_h(points, cfg_off, c_off));

  CHECK(on->couplings.size() < off->couplings.size());
  CHECK(off->couplings.size() == off->far.size());
  CHECK(c_off.offline.value() > c_on.offline.value());

  const std::vector<double> theta{0.5};
  const InstantiatedHMatrix ia = instantiate(on, theta);
  const InstantiatedHMatrix ib = instantiate(off, theta);
  for (std::size_t i = 0; i < ia.far_h.size(); ++i)
    CHECK((ia.far_h[i] - ib.far_h[i]).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < ia.near_d.size(); ++i)
    CHECK((ia.near_d[i] - ib.near_d[i]).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(!ia.far_h.empty());

  // S/T factors also agree bitwise
  for (std::size_t i = 0; i < on->far.size(); ++i) {
    CHECK((on->far[i].s - off->far[i].s).cwiseAbs().maxCoeff() == 0.0);
    CHECK((on->far[i].t - off->far[i].t).cwiseAbs().maxCoeff() == 0.0);
  }
}

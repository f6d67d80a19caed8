#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phmat/harness.hpp"
#include "phmat/nearfield.hpp"

using namespace phmat;

namespace {

struct Setup {
  std::shared_ptr<ClusterTree> tree;
  BlockClusterTree blocks;
  KernelSpec spec;
  ThetaGrids grids;
};

Setup make_setup(int d, Index n, int l_max, int p_theta, KernelFamily family,
                 std::uint64_t seed) {
  Setup s;
  s.tree = std::make_shared<ClusterTree>(generate_points(n, d, seed), unit_box(d), l_max);
  s.blocks = build_block_cluster_tree(*s.tree, std::sqrt(double(d)));
  s.spec = default_kernel_spec(family);
  s.grids = make_theta_grids(s.spec, p_theta);
  return s;
}

Block self_block(const Setup& s) {
  for (const Block& b : s.blocks.near)
    if (b.sigma == b.tau && s.tree->node(b.sigma).size() > 4) return b;
  REQUIRE(false);
  return {};
}

}  // namespace

TEST_CASE("near oracle: definitional entries and shape") {
  Setup s = make_setup(3, 512, 2, 5, KernelFamily::SquaredExponential, 2);
  const Block b = s.blocks.near.front();
  const ClusterNode& sn = s.tree->node(b.sigma);
  const ClusterNode& tn = s.tree->node(b.tau);
  KernelEvalCounter counter;
  EntryOracle oracle = near_oracle(*s.tree, b, s.spec, s.grids, &counter);

  REQUIRE(oracle.order() == 2);  // d_theta = 1
  CHECK(oracle.dims()[0] == sn.size() * tn.size());
  CHECK(oracle.dims()[1] == 5);

  // entry (flat = 0, k) = kappa(x_{sigma,1}, x_{tau,1}; eta_k)
  for (Index k = 0; k < 5; ++k) {
    Index idx[2] = {0, k};
    double x[3], y[3], th[1] = {s.grids.grids[0].nodes[k]};
    for (int c = 0; c < 3; ++c) {
      x[c] = s.tree->points()(sn.indices[0], c);
      y[c] = s.tree->points()(tn.indices[0], c);
    }
    CHECK(oracle(idx) == doctest::Approx(kernel_eval(s.spec, x, y, 3, th)).epsilon(1e-14));
  }

  // general flat index pairs (i, j) little-endian: flat = i + j * n_sigma
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const Index i = static_cast<Index>(rng.integer(sn.size()));
    const Index j = static_cast<Index>(rng.integer(tn.size()));
    const Index k = static_cast<Index>(rng.integer(5));
    Index idx[2] = {i + j * sn.size(), k};
    double x[3], y[3], th[1] = {s.grids.grids[0].nodes[k]};
    for (int c = 0; c < 3; ++c) {
      x[c] = s.tree->points()(sn.indices[i], c);
      y[c] = s.tree->points()(tn.indices[j], c);
    }
    CHECK(oracle(idx) == doctest::Approx(kernel_eval(s.spec, x, y, 3, th)).epsilon(1e-14));
  }

  // matern: 3 modes
  Setup m = make_setup(2, 128, 1, 4, KernelFamily::Matern, 3);
  EntryOracle mo = near_oracle(*m.tree, m.blocks.near.front(), m.spec, m.grids, nullptr);
  CHECK(mo.order() == 3);
}

TEST_CASE("diagonal of a self block with SE kernel is one for every theta node") {
  Setup s = make_setup(3, 512, 2, 4, KernelFamily::SquaredExponential, 5);
  const Block b = self_block(s);
  EntryOracle oracle = near_oracle(*s.tree, b, s.spec, s.grids, nullptr);
  const Index n = s.tree->node(b.sigma).size();
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < 4; ++k) {
      Index idx[2] = {i + i * n, k};
      CHECK(oracle(idx) == 1.0);
    }
}

TEST_CASE("nearfield offline + online against the dense block") {
  Setup s = make_setup(3, 512, 2, 10, KernelFamily::SquaredExponential, 8);
  const Block b = self_block(s);
  NearCrossOptions opt;
  opt.eps = 1e-5;
  opt.seed = 4;
  KernelEvalCounter counter, audit;
  const NearBlockTT nb = nearfield_offline(*s.tree, b, s.spec, s.grids, opt, &counter, &audit);
  CHECK(nb.n_rows == s.tree->node(b.sigma).size());

  // kernel evals stay within 4x of the budget n_s n_t r + d_t p_t r^2
  const Index r = nb.tt.max_rank();
  const double budget = static_cast<double>(nb.n_rows * nb.n_cols) * r + 10.0 * r * r;
  CHECK(static_cast<double>(counter.value()) <= 4.0 * budget);

  // at grid thetas interpolation is exact, so only the TT error remains
  const std::uint64_t before = counter.value();
  for (Index k = 0; k < 10; ++k) {
    const std::vector<double> theta{s.grids.grids[0].nodes[k]};
    const Eigen::MatrixXd d = nearfield_online(nb, parametric_vectors(s.grids, theta));
    const Eigen::MatrixXd exact = dense_kernel_block(*s.tree, b, s.spec, theta, nullptr);
    CHECK((d - exact).cwiseAbs().maxCoeff() <= 10 * opt.eps * exact.cwiseAbs().maxCoeff());
  }
  CHECK(counter.value() == before);  // online: zero kernel evaluations

  // off the grid the theta interpolation error joins in
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const std::vector<double> theta{rng.uniform(0.25, 1.0)};
    const Eigen::MatrixXd d = nearfield_online(nb, parametric_vectors(s.grids, theta));
    const Eigen::MatrixXd exact = dense_kernel_block(*s.tree, b, s.spec, theta, nullptr);
    CHECK((d - exact).cwiseAbs().maxCoeff() <= 1e-4 + 10 * opt.eps);
  }
}

TEST_CASE("reshape orientation: entry (i, j) is oracle flat i + j n_sigma") {
  Setup s = make_setup(2, 200, 2, 6, KernelFamily::Exponential, 13);
  Block b{-1, -1};
  for (const Block& cand : s.blocks.near)
    if (cand.sigma != cand.tau && s.tree->node(cand.sigma).size() > 3 &&
        s.tree->node(cand.tau).size() > 3) {
      b = cand;
      break;
    }
  REQUIRE(b.sigma >= 0);
  NearCrossOptions opt;
  opt.eps = 1e-9;
  const NearBlockTT nb = nearfield_offline(*s.tree, b, s.spec, s.grids, opt, nullptr);

  const Index k = 2;  // a grid node, where interpolation is exact
  const std::vector<double> theta{s.grids.grids[0].nodes[k]};
  const Eigen::MatrixXd d = nearfield_online(nb, parametric_vectors(s.grids, theta));
  EntryOracle oracle = near_oracle(*s.tree, b, s.spec, s.grids, nullptr);
  for (Index i = 0; i < nb.n_rows; ++i)
    for (Index j = 0; j < nb.n_cols; ++j) {
      Index idx[2] = {i + j * nb.n_rows, k};
      CHECK(d(i, j) == doctest::Approx(oracle(idx)).epsilon(1e-7));
    }
}

TEST_CASE("constant-in-theta tensor compresses to rank one in the theta modes") {
  // synthetic: SE kernel with the length scale pinned, so theta slices agree
  Setup s = make_setup(2, 128, 1, 7, KernelFamily::SquaredExponential, 21);
  const Block b = s.blocks.near.front();
  const ClusterNode& sn = s.tree->node(b.sigma);
  const ClusterNode& tn = s.tree->node(b.tau);
  const Index pairs = sn.size() * tn.size();

  EntryOracle oracle({pairs, 7}, [&](const Index* idx) {
    const Index i = idx[0] % sn.size();
    const Index j = idx[0] / sn.size();
    double r2 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double delta =
          s.tree->points()(sn.indices[i], c) - s.tree->points()(tn.indices[j], c);
      r2 += delta * delta;
    }
    double th[1] = {0.5};  // fixed: no theta dependence
    return kernel_value(s.spec, std::sqrt(r2), th);
  });
  TTCrossOptions opt;
  opt.eps = 1e-10;
  const TTCrossResult res = tt_cross(oracle, opt);
  CHECK(res.tt.rank(1) == 1);
}

TEST_CASE("two theta nodes: midpoint instantiation averages the slices") {
  KernelSpec spec = default_kernel_spec(KernelFamily::SquaredExponential);
  spec.theta_box = {{0.4, 0.8}};
  Setup s = make_setup(2, 128, 1, 2, KernelFamily::SquaredExponential, 30);
  s.spec = spec;
  s.grids = make_theta_grids(spec, 2);
  const Block b = s.blocks.near.front();
  NearCrossOptions opt;
  opt.eps = 1e-12;
  opt.r_max = 4;
  const NearBlockTT nb = nearfield_offline(*s.tree, b, s.spec, s.grids, opt, nullptr);

  const Eigen::MatrixXd d_mid =
      nearfield_online(nb, parametric_vectors(s.grids, std::vector<double>{0.6}));
  const Eigen::MatrixXd d0 = nearfield_online(
      nb, parametric_vectors(s.grids, std::vector<double>{s.grids.grids[0].nodes[0]}));
  const Eigen::MatrixXd d1 = nearfield_online(
      nb, parametric_vectors(s.grids, std::vector<double>{s.grids.grids[0].nodes[1]}));
  CHECK((d_mid - 0.5 * (d0 + d1)).cwiseAbs().maxCoeff() <= 1e-12);
}

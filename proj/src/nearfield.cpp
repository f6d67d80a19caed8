#include "phmat/nearfield.hpp"

#include <cmath>

namespace phmat {

EntryOracle near_oracle(const ClusterTree& tree, Block b, const KernelSpec& spec,
                        const ThetaGrids& grids, KernelEvalCounter* counter,
                        KernelEvalCounter* audit) {
  const ClusterNode& s = tree.node(b.sigma);
  const ClusterNode& t = tree.node(b.tau);
  PHMAT_CHECK(s.size() > 0 && t.size() > 0, "near_oracle: empty block");
  const int d_theta = grids.d_theta();

  std::vector<Index> dims;
  dims.push_back(s.size() * t.size());
  for (int k = 0; k < d_theta; ++k) dims.push_back(grids.grids[k].p);

  struct Ctx {
    Eigen::MatrixXd xs, xt;  // gathered coordinates
    std::vector<Eigen::VectorXd> theta_nodes;
    KernelSpec spec;
    Index n_rows;
    int d, d_theta;
  };
  auto ctx = std::make_shared<Ctx>();
  ctx->xs = tree.gather_points(b.sigma);
  ctx->xt = tree.gather_points(b.tau);
  ctx->spec = spec;
  ctx->n_rows = s.size();
  ctx->d = tree.dim();
  ctx->d_theta = d_theta;
  for (int k = 0; k < d_theta; ++k) ctx->theta_nodes.push_back(grids.grids[k].nodes);

  auto fn = [ctx](const Index* idx) {
    const Index i = idx[0] % ctx->n_rows;
    const Index j = idx[0] / ctx->n_rows;
    double r2 = 0.0;
    for (int k = 0; k < ctx->d; ++k) {
      const double delta = ctx->xs(i, k) - ctx->xt(j, k);
      r2 += delta * delta;
    }
    double theta[2];
    for (int k = 0; k < ctx->d_theta; ++k) theta[k] = ctx->theta_nodes[k][idx[1 + k]];
    return kernel_value(ctx->spec, std::sqrt(r2), theta);
  };
  return EntryOracle(std::move(dims), std::move(fn), counter, audit);
}

NearBlockTT nearfield_offline(const ClusterTree& tree, Block b, const KernelSpec& spec,
                              const ThetaGrids& grids, const NearCrossOptions& opt,
                              KernelEvalCounter* counter, KernelEvalCounter* audit) {
  TTCrossOptions copt;
  copt.eps = opt.eps;
  copt.r_max = opt.r_max;
  copt.seed = opt.seed;

  EntryOracle oracle = near_oracle(tree, b, spec, grids, counter, audit);
  TTCrossResult res = tt_cross(oracle, copt);

  NearBlockTT out;
  out.tt = std::move(res.tt);
  out.n_rows = tree.node(b.sigma).size();
  out.n_cols = tree.node(b.tau).size();
  out.rank_capped = res.rank_capped;
  out.est_rel_error = res.est_rel_error;
  out.evals = res.evals;
  return out;
}

Eigen::MatrixXd nearfield_online(const NearBlockTT& block, const std::vector<Eigen::VectorXd>& v) {
  PHMAT_CHECK(static_cast<int>(v.size()) + 1 == block.tt.order(),
              "nearfield_online: vector count mismatch");
  const auto& cores = block.tt.cores;
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(cores[0].r1, cores[0].r1);
  for (std::size_t i = 0; i < v.size(); ++i) w = (w * cores[i + 1].contract_mode2(v[i])).eval();
  // w is r_1 x 1; a_b(theta) = G_1^{(2)} w, reshaped (i fastest, then j).
  Eigen::VectorXd a = cores[0].right() * w.col(0);
  return Eigen::Map<const Eigen::MatrixXd>(a.data(), block.n_rows, block.n_cols);
}

Eigen::MatrixXd dense_kernel_block(const ClusterTree& tree, Block b, const KernelSpec& spec,
                                   std::span<const double> theta, KernelEvalCounter* counter) {
  const ClusterNode& s = tree.node(b.sigma);
  const ClusterNode& t = tree.node(b.tau);
  const int d = tree.dim();
  Eigen::MatrixXd out(s.size(), t.size());
  std::vector<double> xi(d), xj(d);
  for (Index j = 0; j < t.size(); ++j) {
    for (int k = 0; k < d; ++k) xj[k] = tree.points()(t.indices[j], k);
    for (Index i = 0; i < s.size(); ++i) {
      for (int k = 0; k < d; ++k) xi[k] = tree.points()(s.indices[i], k);
      out(i, j) = kernel_eval(spec, xi.data(), xj.data(), d, theta.data(), counter);
    }
  }
  return out;
}

}  // namespace phmat

#include "phmat/farfield.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phmat {

ThetaGrids make_theta_grids(const KernelSpec& spec, int p_theta) {
  spec.validate();
  ThetaGrids g;
  for (const Interval& iv : spec.theta_box) g.grids.push_back(cheb_grid(iv.lo, iv.hi, p_theta));
  return g;
}

std::vector<Eigen::VectorXd> parametric_vectors(const ThetaGrids& grids,
                                                std::span<const double> theta) {
  PHMAT_CHECK(theta.size() == static_cast<std::size_t>(grids.d_theta()),
              "parametric_vectors: theta dimension mismatch");
  std::vector<Eigen::VectorXd> v(grids.d_theta());
  for (int k = 0; k < grids.d_theta(); ++k) {
    const ChebGrid1D& g = grids.grids[k];
    if (theta[k] < g.lo || theta[k] > g.hi)
      throw std::domain_error("parametric_vectors: theta outside the parameter box");
    v[k].resize(g.p);
    lagrange_eval_all(g, theta[k], v[k].data());
  }
  return v;
}

TranslationKey translation_key(const ClusterTree& tree, Block b) {
  const ClusterNode& s = tree.node(b.sigma);
  const ClusterNode& t = tree.node(b.tau);
  PHMAT_CHECK(s.level == t.level, "translation_key: blocks must pair same-level boxes");
  TranslationKey key;
  key.level = s.level;
  for (int k = 0; k < tree.dim(); ++k) key.offset[k] = t.coords[k] - s.coords[k];
  return key;
}

namespace {

// In-box Chebyshev node offsets at a level: identical for every box of that
// level, so translated blocks see bitwise-identical coordinate differences.
std::vector<double> node_offsets(double side, int p) {
  std::vector<double> u(p);
  for (int k = 0; k < p; ++k) {
    const double c = std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * p));
    u[p - 1 - k] = 0.5 * (c + 1.0) * side;
  }
  return u;
}

}  // namespace

EntryOracle coupling_oracle(const ClusterTree& tree, Block b, const KernelSpec& spec, int p_s,
                            const ThetaGrids& grids, KernelEvalCounter* counter,
                            KernelEvalCounter* audit) {
  const int d = tree.dim();
  const int d_theta = grids.d_theta();
  const ClusterNode& s = tree.node(b.sigma);
  const ClusterNode& t = tree.node(b.tau);
  PHMAT_CHECK(s.level == t.level, "coupling_oracle: blocks must pair same-level boxes");

  std::vector<Index> dims;
  for (int k = 0; k < d; ++k) dims.push_back(p_s);
  for (int k = 0; k < d_theta; ++k) dims.push_back(grids.grids[k].p);
  for (int k = 0; k < d; ++k) dims.push_back(p_s);

  struct Ctx {
    int d, d_theta;
    std::array<double, kMaxDim> box_delta;          // corner(sigma) - corner(tau)
    std::vector<std::vector<double>> offsets;       // per spatial dim
    std::vector<Eigen::VectorXd> theta_nodes;       // per parameter dim
    KernelSpec spec;
  };
  auto ctx = std::make_shared<Ctx>();
  ctx->d = d;
  ctx->d_theta = d_theta;
  ctx->spec = spec;
  for (int k = 0; k < d; ++k) {
    const double side = tree.level_side(s.level, k);
    ctx->box_delta[k] = static_cast<double>(s.coords[k] - t.coords[k]) * side;
    ctx->offsets.push_back(node_offsets(side, p_s));
  }
  for (int k = 0; k < d_theta; ++k) ctx->theta_nodes.push_back(grids.grids[k].nodes);

  auto fn = [ctx](const Index* idx) {
    double r2 = 0.0;
    for (int k = 0; k < ctx->d; ++k) {
      const double delta =
          ctx->box_delta[k] + (ctx->offsets[k][idx[k]] - ctx->offsets[k][idx[ctx->d + ctx->d_theta + k]]);
      r2 += delta * delta;
    }
    double theta[2];
    for (int k = 0; k < ctx->d_theta; ++k) theta[k] = ctx->theta_nodes[k][idx[ctx->d + k]];
    return kernel_value(ctx->spec, std::sqrt(r2), theta);
  };
  return EntryOracle(std::move(dims), std::move(fn), counter, audit);
}

CouplingTT build_coupling(const ClusterTree& tree, Block b, const KernelSpec& spec, int p_s,
                          const ThetaGrids& grids, const FarCrossOptions& opt,
                          KernelEvalCounter* counter, KernelEvalCounter* audit) {
  const TranslationKey key = translation_key(tree, b);
  TTCrossOptions copt;
  copt.eps = opt.eps;
  copt.r_max = opt.r_max;
  std::uint64_t s = mix_seed(opt.seed, static_cast<std::uint64_t>(key.level));
  for (int k = 0; k < kMaxDim; ++k) s = mix_seed(s, static_cast<std::uint64_t>(key.offset[k]));
  copt.seed = s;

  EntryOracle oracle = coupling_oracle(tree, b, spec, p_s, grids, counter, audit);
  TTCrossResult res = tt_cross(oracle, copt);

  CouplingTT out;
  out.tt = std::move(res.tt);
  out.d = tree.dim();
  out.d_theta = grids.d_theta();
  out.rank_capped = res.rank_capped;
  out.est_rel_error = res.est_rel_error;
  out.evals = res.evals;
  return out;
}

FarBlockH pttk_offline(const ClusterTree& tree, Block b, int p_s,
                       std::shared_ptr<const CouplingTT> coupling) {
  PHMAT_CHECK(coupling != nullptr, "pttk_offline: missing coupling");
  const int d = tree.dim();
  const auto& cores = coupling->tt.cores;
  PHMAT_CHECK(coupling->tt.order() == 2 * d + coupling->d_theta, "pttk_offline: core count");

  const std::vector<Eigen::MatrixXd> us = cluster_basis_factors(tree, b.sigma, p_s);
  const std::vector<Eigen::MatrixXd> ut = cluster_basis_factors(tree, b.tau, p_s);

  FarBlockH out;
  out.s.noalias() = us[0] * cores[0].right();
  for (int i = 1; i < d; ++i) out.s = face_split(us[i], out.s) * cores[i].right();

  const int last = coupling->tt.order() - 1;
  Eigen::MatrixXd tt = cores[last].left() * ut[d - 1].transpose();
  for (int i = 1; i < d; ++i)
    tt = cores[last - i].left() * face_split_cols(tt, ut[d - 1 - i].transpose());
  out.t = tt.transpose();
  out.coupling = std::move(coupling);
  return out;
}

Eigen::MatrixXd pttk_online(const CouplingTT& coupling, const std::vector<Eigen::VectorXd>& v) {
  PHMAT_CHECK(static_cast<int>(v.size()) == coupling.d_theta, "pttk_online: vector count");
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(coupling.rank_left(), coupling.rank_left());
  for (int i = 0; i < coupling.d_theta; ++i)
    h = (h * coupling.tt.cores[coupling.d + i].contract_mode2(v[i])).eval();
  return h;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_L_R(const CouplingTT& coupling, Index guard) {
  const int d = coupling.d;
  const auto& cores = coupling.tt.cores;
  const Index p = cores[0].m;
  Index rows = 1;
  for (int i = 0; i < d; ++i) {
    rows *= p;
    if (rows > guard) throw std::runtime_error("assemble_L_R: p_s^d exceeds the size guard");
  }

  Eigen::MatrixXd l = cores[0].right();  // p x r_1
  for (int k = 1; k < d; ++k) {
    Eigen::MatrixXd tmp = l * cores[k].left();
    l = Eigen::Map<const Eigen::MatrixXd>(tmp.data(), tmp.rows() * cores[k].m, cores[k].r1);
  }

  const int last = coupling.tt.order() - 1;
  Eigen::MatrixXd q = cores[last].left();  // r_{last-1} x p
  for (int k = last - 1; k >= d + coupling.d_theta; --k) {
    const TTCore& c = cores[k];
    Eigen::MatrixXd next(c.r0, c.m * q.cols());
    for (Index cc = 0; cc < q.cols(); ++cc)
      for (Index j = 0; j < c.m; ++j)
        next.col(j + c.m * cc) = c.slice(j) * q.col(cc);
    q = std::move(next);
  }
  return {std::move(l), q.transpose()};
}

Eigen::VectorXd coupling_apply(const CouplingTT& coupling, const Eigen::MatrixXd& h,
                               const Eigen::VectorXd& xhat) {
  const int d = coupling.d;
  const auto& cores = coupling.tt.cores;
  const int q = coupling.tt.order();

  // Right pass: z <- reshape(z) (G^{(1)})^T against cores q-1 .. d+d_theta.
  Eigen::VectorXd z = xhat;
  for (int i = 0; i < d; ++i) {
    const TTCore& c = cores[q - 1 - i];
    const Index lead = z.size() / (c.m * c.r1);
    Eigen::Map<const Eigen::MatrixXd> zin(z.data(), lead, c.m * c.r1);
    Eigen::MatrixXd out = zin * c.left().transpose();
    z = Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
  }
  // z now has length r_{d+d_theta}.
  z = (h * z).eval();
  // Left pass: z <- G^{(2)} reshape(z) against cores d-1 .. 0.
  for (int i = 0; i < d; ++i) {
    const TTCore& c = cores[d - 1 - i];
    const Index trail = z.size() / c.r1;
    Eigen::Map<const Eigen::MatrixXd> zin(z.data(), c.r1, trail);
    Eigen::MatrixXd out = c.right() * zin;
    z = Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
  }
  return z;
}

}  // namespace phmat

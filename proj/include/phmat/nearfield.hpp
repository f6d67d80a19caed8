#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "phmat/farfield.hpp"
#include "phmat/geometry.hpp"
#include "phmat/kernels.hpp"
#include "phmat/tt.hpp"

namespace phmat {

// TT compression of the (d_theta + 1)-dimensional near-field tensor A_b:
// first mode pairs (i, j) little-endian as i + j * n_sigma, remaining modes
// run over the parameter grids.
struct NearBlockTT {
  TTTensor tt;
  Index n_rows = 0;  // n_sigma
  Index n_cols = 0;  // n_tau
  bool rank_capped = false;
  double est_rel_error = 0.0;
  std::uint64_t evals = 0;
};

EntryOracle near_oracle(const ClusterTree& tree, Block b, const KernelSpec& spec,
                        const ThetaGrids& grids, KernelEvalCounter* counter,
                        KernelEvalCounter* audit = nullptr);

struct NearCrossOptions {
  double eps = 1e-5;
  Index r_max = 150;
  std::uint64_t seed = 0;
};

NearBlockTT nearfield_offline(const ClusterTree& tree, Block b, const KernelSpec& spec,
                              const ThetaGrids& grids, const NearCrossOptions& opt,
                              KernelEvalCounter* counter, KernelEvalCounter* audit = nullptr);

// D_b(theta) = reshape(a_b(theta), [n_sigma, n_tau]); zero kernel evaluations.
Eigen::MatrixXd nearfield_online(const NearBlockTT& block, const std::vector<Eigen::VectorXd>& v);

// Dense kernel block K(X_sigma, X_tau; theta) through the counted path.
Eigen::MatrixXd dense_kernel_block(const ClusterTree& tree, Block b, const KernelSpec& spec,
                                   std::span<const double> theta, KernelEvalCounter* counter);

}  // namespace phmat

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "phmat/phmatrix.hpp"

namespace phmat {

// Rank-t factorization K ~ V Y^T from partially pivoted adaptive cross
// approximation.
struct LowRankFactors {
  Eigen::MatrixXd v;  // n_sigma x t
  Eigen::MatrixXd y;  // n_tau x t
  bool capped = false;

  Index rank() const { return v.cols(); }
};

// Partially pivoted ACA with the standard stopping rule
// ||u_t|| ||v_t|| <= eps * ||A_t||_F (running Frobenius estimate).
LowRankFactors aca_partial(const std::function<double(Index, Index)>& entry, Index n_rows,
                           Index n_cols, double eps, Index r_max, std::uint64_t seed);

// Non-parametric H-matrix at a fixed theta: ACA factors on far blocks, dense
// near blocks. Every kernel evaluation is charged to `counter`.
class HAcaMatrix : public LinearOperator {
 public:
  HAcaMatrix(std::shared_ptr<const ClusterTree> tree, BlockClusterTree blocks,
             const KernelSpec& spec, std::span<const double> theta, double eps, Index r_max,
             KernelEvalCounter* counter, int threads = 0);

  Index rows() const override;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd to_dense(Index guard = 8192) const;

  double mean_far_rank() const;
  const BlockClusterTree& blocks() const { return blocks_; }
  double far_build_seconds() const { return far_seconds_; }
  double near_build_seconds() const { return near_seconds_; }

 private:
  std::shared_ptr<const ClusterTree> tree_;
  BlockClusterTree blocks_;
  std::vector<LowRankFactors> far_;
  std::vector<Eigen::MatrixXd> near_;
  double far_seconds_ = 0.0;
  double near_seconds_ = 0.0;
};

// Non-parametric H^2 matrix at a fixed theta: ACA on the Chebyshev
// node-interaction matrix W_b (hybrid cross approximation), nested cluster
// basis shared with the parametric build. Translated blocks reuse factors.
class H2HcaMatrix : public LinearOperator {
 public:
  H2HcaMatrix(std::shared_ptr<const ClusterTree> tree, BlockClusterTree blocks,
              const KernelSpec& spec, std::span<const double> theta, int p_s, double eps,
              Index r_max, KernelEvalCounter* counter, int threads = 0);

  Index rows() const override;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd to_dense(Index guard = 8192) const;

  double mean_far_rank() const;
  double coupling_ratio() const;  // (2/n^2) sum_b p_s^d t_b
  const BlockClusterTree& blocks() const { return blocks_; }
  double far_build_seconds() const { return far_seconds_; }
  double near_build_seconds() const { return near_seconds_; }

 private:
  double far_seconds_ = 0.0;
  double near_seconds_ = 0.0;
  std::shared_ptr<const ClusterTree> tree_;
  BlockClusterTree blocks_;
  NestedClusterBasis basis_;
  int p_s_ = 0;
  std::vector<int> far_key_;
  std::vector<std::shared_ptr<const LowRankFactors>> far_;  // shared within a class
  std::vector<Eigen::MatrixXd> near_;                       // dense near blocks
};

}  // namespace phmat

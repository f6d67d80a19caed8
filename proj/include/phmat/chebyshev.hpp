#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "phmat/geometry.hpp"

namespace phmat {

// Chebyshev nodes of the first kind on [lo, hi], sorted ascending, with
// barycentric weights of the second form (normalized to unit max).
struct ChebGrid1D {
  double lo = -1.0;
  double hi = 1.0;
  int p = 1;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

ChebGrid1D cheb_grid(double lo, double hi, int p);

// k-th Lagrange cardinal polynomial at x (0-based k). Exact delta at nodes.
double lagrange_eval(const ChebGrid1D& grid, int k, double x);

// All p cardinal values at x; out must hold p doubles.
void lagrange_eval_all(const ChebGrid1D& grid, double x, double* out);

// Factor matrices U_{sigma,k} (n_sigma x p_s): entry (i, j) is the j-th
// cardinal polynomial of the box interval along dim k at point i.
std::vector<Eigen::MatrixXd> cluster_basis_factors(const ClusterTree& tree, int node, int p_s);

// Transfer factors E_{child,k} (p_s x p_s): entry (i, j) is the parent's i-th
// cardinal polynomial at the child's j-th node.
std::vector<Eigen::MatrixXd> transfer_factors(const ClusterTree& tree, int parent, int child,
                                              int p_s);

// Row-wise Kronecker (face-splitting) product: row i = a_i (x) b_i.
Eigen::MatrixXd face_split(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Column-wise Kronecker product: column j = a_j (x) b_j.
Eigen::MatrixXd face_split_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Dense Kronecker product (test oracle and small assemblies).
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Assembled cluster basis U_sigma = U_d |x| ... |x| U_1 (n_sigma x p_s^d).
Eigen::MatrixXd assemble_cluster_basis(const std::vector<Eigen::MatrixXd>& factors);

// Assembled transfer matrix E = E_d (x) ... (x) E_1.
Eigen::MatrixXd assemble_transfer(const std::vector<Eigen::MatrixXd>& factors);

// (A_d (x) ... (x) A_1) x via d sequential mode contractions, never forming
// the Kronecker product. factors[k] applies to mode k. flops, when non-null,
// accumulates the multiply-add count actually performed.
Eigen::VectorXd fast_kron(const std::vector<Eigen::MatrixXd>& factors, const Eigen::VectorXd& x,
                          std::uint64_t* flops = nullptr);

// Transposed variant: (A_d (x) ... (x) A_1)^T x.
Eigen::VectorXd fast_kron_transposed(const std::vector<Eigen::MatrixXd>& factors,
                                     const Eigen::VectorXd& x, std::uint64_t* flops = nullptr);

// Leaf cluster-basis factors plus transfer factors for every non-root node:
// the nested basis machinery shared by H^2 formats. Basis matrices are held
// implicitly by their per-dimension factors.
class NestedClusterBasis {
 public:
  NestedClusterBasis() = default;
  NestedClusterBasis(const ClusterTree& tree, int p_s);

  int p_s() const { return p_s_; }
  const std::vector<Eigen::MatrixXd>& leaf_factors(int node) const;
  const std::vector<Eigen::MatrixXd>& transfer(int node) const;

  // Upward pass: xhat[sigma] = U_sigma^T x|sigma at leaves, accumulated
  // through transfer factors at internal nodes.
  std::vector<Eigen::VectorXd> forward(const ClusterTree& tree, const Eigen::VectorXd& x) const;

  // Downward pass: scatters yhat back to y, mirroring forward.
  void backward(const ClusterTree& tree, std::vector<Eigen::VectorXd>& yhat,
                Eigen::VectorXd& y) const;

  Index storage_entries() const;

 private:
  int p_s_ = 0;
  std::vector<std::vector<Eigen::MatrixXd>> leaf_factors_;  // by node id; empty if not a leaf
  std::vector<std::vector<Eigen::MatrixXd>> transfer_;      // by node id; empty at root
};

}  // namespace phmat

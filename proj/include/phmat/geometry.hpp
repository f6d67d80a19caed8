#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "phmat/common.hpp"

namespace phmat {

constexpr int kMaxDim = 3;

struct Hypercube {
  int d = 0;
  std::array<double, kMaxDim> lo{};
  std::array<double, kMaxDim> hi{};

  double diam() const;
};

double dist(const Hypercube& a, const Hypercube& b);

// max(diam(a), diam(b)) <= eta * dist(a, b)
bool is_admissible(const Hypercube& a, const Hypercube& b, double eta);

struct ClusterNode {
  Hypercube box;
  // Integer grid coordinates of the box corner at this level: the box corner
  // is root.lo + coords * side(level). Exact integer arithmetic on these
  // coordinates identifies translated boxes.
  std::array<std::int64_t, kMaxDim> coords{};
  int level = 0;
  int parent = -1;
  int first_child = -1;  // children occupy ids [first_child, first_child + 2^d)
  std::vector<std::int32_t> indices;  // global point ids, sorted ascending

  bool is_leaf() const { return first_child < 0; }
  Index size() const { return static_cast<Index>(indices.size()); }
};

// Uniform 2^d-way spatial partition down to level l_max. Empty boxes are kept
// as nodes so every level is a full grid; all leaves sit at level l_max.
// Points exactly on a split midpoint go to the lower child.
class ClusterTree {
 public:
  ClusterTree(Eigen::MatrixXd points, const Hypercube& root_box, int l_max);

  const ClusterNode& node(int id) const { return nodes_[id]; }
  int root() const { return 0; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int dim() const { return d_; }
  int l_max() const { return l_max_; }
  Index n_points() const { return points_.rows(); }
  const Eigen::MatrixXd& points() const { return points_; }
  const Hypercube& root_box() const { return nodes_[0].box; }

  int child(int id, int k) const { return nodes_[id].first_child + k; }
  double level_side(int level, int k) const;  // box side length along dim k

  std::vector<int> leaves() const;  // all leaf ids, including empty ones

  // Gathers the coordinate block X_sigma (n_sigma x d).
  Eigen::MatrixXd gather_points(int id) const;

 private:
  void split(int id, int l_max);

  Eigen::MatrixXd points_;  // n x d
  int d_ = 0;
  int l_max_ = 0;
  std::vector<ClusterNode> nodes_;
};

struct Block {
  int sigma = -1;
  int tau = -1;
};

// Leaf partition of I x I into admissible (far) and inadmissible (near)
// blocks, per the standard recursion: an inadmissible pair with children is
// split into all 2^d x 2^d child pairs. Blocks with an empty side are pruned
// from the leaf lists (their index-set product is empty).
struct BlockClusterTree {
  std::vector<Block> far;
  std::vector<Block> near;
  int c_sp = 0;              // sparsity constant over all constructed blocks
  std::int64_t block_count = 0;
  double eta = 0.0;
};

BlockClusterTree build_block_cluster_tree(const ClusterTree& tree, double eta);

inline int sparsity_constant(const BlockClusterTree& bct) { return bct.c_sp; }

// Sum over far+near leaves of n_sigma * n_tau; equals n^2 on a valid tree.
std::int64_t coverage_sum(const ClusterTree& tree, const BlockClusterTree& bct);

Hypercube unit_box(int d);

}  // namespace phmat

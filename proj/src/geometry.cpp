#include "phmat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace phmat {

double Hypercube::diam() const {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double w = hi[k] - lo[k];
    s += w * w;
  }
  return std::sqrt(s);
}

double dist(const Hypercube& a, const Hypercube& b) {
  PHMAT_CHECK(a.d == b.d, "dist: dimension mismatch");
  double s = 0.0;
  for (int k = 0; k < a.d; ++k) {
    const double gap_lo = std::max(0.0, a.lo[k] - b.hi[k]);
    const double gap_hi = std::max(0.0, b.lo[k] - a.hi[k]);
    s += gap_lo * gap_lo + gap_hi * gap_hi;
  }
  return std::sqrt(s);
}

bool is_admissible(const Hypercube& a, const Hypercube& b, double eta) {
  PHMAT_CHECK(eta > 0.0, "is_admissible: eta must be positive");
  return std::max(a.diam(), b.diam()) <= eta * dist(a, b);
}

Hypercube unit_box(int d) {
  PHMAT_CHECK(d >= 1 && d <= kMaxDim, "unit_box: d out of range");
  Hypercube box;
  box.d = d;
  for (int k = 0; k < d; ++k) {
    box.lo[k] = 0.0;
    box.hi[k] = 1.0;
  }
  return box;
}

ClusterTree::ClusterTree(Eigen::MatrixXd points, const Hypercube& root_box, int l_max)
    : points_(std::move(points)), d_(root_box.d), l_max_(l_max) {
  PHMAT_CHECK(d_ >= 1 && d_ <= kMaxDim, "ClusterTree: dimension out of range");
  PHMAT_CHECK(points_.cols() == d_, "ClusterTree: point dimension mismatch");
  PHMAT_CHECK(l_max >= 0, "ClusterTree: l_max must be >= 0");

  const Index n = points_.rows();
  for (Index i = 0; i < n; ++i)
    for (int k = 0; k < d_; ++k)
      if (points_(i, k) < root_box.lo[k] || points_(i, k) > root_box.hi[k])
        throw std::invalid_argument("ClusterTree: point outside the root box");

  ClusterNode root;
  root.box = root_box;
  root.level = 0;
  root.indices.resize(n);
  for (Index i = 0; i < n; ++i) root.indices[i] = static_cast<std::int32_t>(i);
  nodes_.push_back(std::move(root));
  split(0, l_max);
}

double ClusterTree::level_side(int level, int k) const {
  return (nodes_[0].box.hi[k] - nodes_[0].box.lo[k]) * std::ldexp(1.0, -level);
}

void ClusterTree::split(int id, int l_max) {
  if (nodes_[id].level >= l_max) return;

  const int d = d_;
  const int n_children = 1 << d;
  const ClusterNode parent = nodes_[id];  // copy: nodes_ reallocates below

  std::array<double, kMaxDim> mid{};
  for (int k = 0; k < d; ++k) mid[k] = 0.5 * (parent.box.lo[k] + parent.box.hi[k]);

  // Child c has bit k set when it takes the upper half along dim k.
  // Points with coordinate <= midpoint go to the lower child.
  std::vector<std::vector<std::int32_t>> child_indices(n_children);
  for (std::int32_t idx : parent.indices) {
    int c = 0;
    for (int k = 0; k < d; ++k)
      if (points_(idx, k) > mid[k]) c |= 1 << k;
    child_indices[c].push_back(idx);
  }

  const int first = static_cast<int>(nodes_.size());
  nodes_[id].first_child = first;
  for (int c = 0; c < n_children; ++c) {
    ClusterNode child;
    child.box.d = d;
    child.level = parent.level + 1;
    child.parent = id;
    for (int k = 0; k < d; ++k) {
      const bool upper = (c >> k) & 1;
      child.box.lo[k] = upper ? mid[k] : parent.box.lo[k];
      child.box.hi[k] = upper ? parent.box.hi[k] : mid[k];
      child.coords[k] = 2 * parent.coords[k] + (upper ? 1 : 0);
    }
    child.indices = std::move(child_indices[c]);
    nodes_.push_back(std::move(child));
  }
  for (int c = 0; c < n_children; ++c) split(first + c, l_max);
}

std::vector<int> ClusterTree::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i)
    if (nodes_[i].is_leaf()) out.push_back(i);
  return out;
}

Eigen::MatrixXd ClusterTree::gather_points(int id) const {
  const ClusterNode& nd = nodes_[id];
  Eigen::MatrixXd out(nd.size(), d_);
  for (Index i = 0; i < nd.size(); ++i) out.row(i) = points_.row(nd.indices[i]);
  return out;
}

namespace {

void recurse_blocks(const ClusterTree& tree, int sigma, int tau, double eta,
                    BlockClusterTree& bct, std::unordered_map<int, int>& row_count) {
  ++bct.block_count;
  ++row_count[sigma];

  const ClusterNode& s = tree.node(sigma);
  const ClusterNode& t = tree.node(tau);
  const bool admissible = is_admissible(s.box, t.box, eta);
  if (!admissible && !s.is_leaf() && !t.is_leaf()) {
    const int nc = 1 << tree.dim();
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j)
        recurse_blocks(tree, tree.child(sigma, i), tree.child(tau, j), eta, bct, row_count);
    return;
  }
  if (s.size() == 0 || t.size() == 0) return;  // empty blocks are pruned
  if (admissible)
    bct.far.push_back({sigma, tau});
  else
    bct.near.push_back({sigma, tau});
}

}  // namespace

BlockClusterTree build_block_cluster_tree(const ClusterTree& tree, double eta) {
  BlockClusterTree bct;
  bct.eta = eta;
  std::unordered_map<int, int> row_count;
  recurse_blocks(tree, tree.root(), tree.root(), eta, bct, row_count);
  for (const auto& [sigma, count] : row_count) bct.c_sp = std::max(bct.c_sp, count);
  return bct;
}

std::int64_t coverage_sum(const ClusterTree& tree, const BlockClusterTree& bct) {
  std::int64_t total = 0;
  for (const Block& b : bct.far)
    total += static_cast<std::int64_t>(tree.node(b.sigma).size()) * tree.node(b.tau).size();
  for (const Block& b : bct.near)
    total += static_cast<std::int64_t>(tree.node(b.sigma).size()) * tree.node(b.tau).size();
  return total;
}

}  // namespace phmat

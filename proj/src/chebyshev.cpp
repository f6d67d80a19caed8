#include "phmat/chebyshev.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace phmat {

ChebGrid1D cheb_grid(double lo, double hi, int p) {
  if (p < 1) throw std::invalid_argument("cheb_grid: p must be >= 1");
  PHMAT_CHECK(lo <= hi, "cheb_grid: empty interval");

  // Degenerate intervals get machine-epsilon-scaled padding so the
  // barycentric weights stay finite.
  if (hi - lo < 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lo))) {
    const double pad = 8 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lo));
    lo -= pad;
    hi += pad;
  }

  ChebGrid1D g;
  g.lo = lo;
  g.hi = hi;
  g.p = p;
  g.nodes.resize(p);
  g.weights.resize(p);
  for (int k = 0; k < p; ++k) {
    // cos((2k+1) pi / (2p)) is descending in k; store ascending.
    const double c = std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * p));
    g.nodes[p - 1 - k] = lo + 0.5 * (c + 1.0) * (hi - lo);
  }
  // Generic barycentric weights w_k = 1 / prod_{j != k} (x_k - x_j),
  // normalized to unit max; only ratios enter the barycentric formula.
  for (int k = 0; k < p; ++k) {
    double w = 1.0;
    for (int j = 0; j < p; ++j)
      if (j != k) w /= (g.nodes[k] - g.nodes[j]);
    g.weights[k] = w;
  }
  g.weights /= g.weights.cwiseAbs().maxCoeff();
  return g;
}

double lagrange_eval(const ChebGrid1D& grid, int k, double x) {
  PHMAT_CHECK(k >= 0 && k < grid.p, "lagrange_eval: index out of range");
  double denom = 0.0;
  for (int j = 0; j < grid.p; ++j) {
    const double diff = x - grid.nodes[j];
    if (diff == 0.0) return j == k ? 1.0 : 0.0;  // exact node hit
    denom += grid.weights[j] / diff;
  }
  return (grid.weights[k] / (x - grid.nodes[k])) / denom;
}

void lagrange_eval_all(const ChebGrid1D& grid, double x, double* out) {
  const int p = grid.p;
  double denom = 0.0;
  for (int j = 0; j < p; ++j) {
    const double diff = x - grid.nodes[j];
    if (diff == 0.0) {
      for (int k = 0; k < p; ++k) out[k] = (k == j) ? 1.0 : 0.0;
      return;
    }
    out[j] = grid.weights[j] / diff;
    denom += out[j];
  }
  for (int k = 0; k < p; ++k) out[k] /= denom;
}

std::vector<Eigen::MatrixXd> cluster_basis_factors(const ClusterTree& tree, int node, int p_s) {
  const ClusterNode& nd = tree.node(node);
  const int d = tree.dim();
  const Index n = nd.size();
  std::vector<Eigen::MatrixXd> factors(d);
  std::vector<double> row(p_s);
  for (int k = 0; k < d; ++k) {
    const ChebGrid1D grid = cheb_grid(nd.box.lo[k], nd.box.hi[k], p_s);
    factors[k].resize(n, p_s);
    for (Index i = 0; i < n; ++i) {
      lagrange_eval_all(grid, tree.points()(nd.indices[i], k), row.data());
      for (int j = 0; j < p_s; ++j) factors[k](i, j) = row[j];
    }
  }
  return factors;
}

std::vector<Eigen::MatrixXd> transfer_factors(const ClusterTree& tree, int parent, int child,
                                              int p_s) {
  PHMAT_CHECK(tree.node(child).parent == parent, "transfer_factors: not a parent/child pair");
  const int d = tree.dim();
  std::vector<Eigen::MatrixXd> factors(d);
  for (int k = 0; k < d; ++k) {
    const ChebGrid1D pg = cheb_grid(tree.node(parent).box.lo[k], tree.node(parent).box.hi[k], p_s);
    const ChebGrid1D cg = cheb_grid(tree.node(child).box.lo[k], tree.node(child).box.hi[k], p_s);
    // Row i holds the parent's cardinal values at the child's i-th node, the
    // orientation that satisfies Gamma_child U_parent = U_child E_child.
    factors[k].resize(p_s, p_s);
    std::vector<double> row(p_s);
    for (int i = 0; i < p_s; ++i) {
      lagrange_eval_all(pg, cg.nodes[i], row.data());
      for (int j = 0; j < p_s; ++j) factors[k](i, j) = row[j];
    }
  }
  return factors;
}

Eigen::MatrixXd face_split(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  PHMAT_CHECK(a.rows() == b.rows(), "face_split: row count mismatch");
  Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index k = 0; k < b.cols(); ++k)
      out.col(j * b.cols() + k) = a.col(j).cwiseProduct(b.col(k));
  return out;
}

Eigen::MatrixXd face_split_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  PHMAT_CHECK(a.cols() == b.cols(), "face_split_cols: column count mismatch");
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.col(j).segment(i * b.rows(), b.rows()) = a(i, j) * b.col(j);
  return out;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Eigen::MatrixXd assemble_cluster_basis(const std::vector<Eigen::MatrixXd>& factors) {
  PHMAT_CHECK(!factors.empty(), "assemble_cluster_basis: no factors");
  Eigen::MatrixXd u = factors[0];
  for (std::size_t k = 1; k < factors.size(); ++k) u = face_split(factors[k], u);
  return u;
}

Eigen::MatrixXd assemble_transfer(const std::vector<Eigen::MatrixXd>& factors) {
  PHMAT_CHECK(!factors.empty(), "assemble_transfer: no factors");
  Eigen::MatrixXd e = factors[0];
  for (std::size_t k = 1; k < factors.size(); ++k) e = kron(factors[k], e);
  return e;
}

namespace {

// One mode contraction of the iterated Kronecker product: z viewed as a
// (q_k x rest) stack along mode k, replaced by A applied along that mode.
Eigen::VectorXd kron_apply(const std::vector<Eigen::MatrixXd>& factors, const Eigen::VectorXd& x,
                           bool transposed, std::uint64_t* flops) {
  const int d = static_cast<int>(factors.size());
  Index expected = 1;
  for (const auto& a : factors) expected *= transposed ? a.rows() : a.cols();
  PHMAT_CHECK(x.size() == expected, "fast_kron: length mismatch");

  Eigen::VectorXd z = x;
  std::uint64_t ops = 0;
  Index lead = 1;  // product of output sizes of modes already applied
  for (int k = 0; k < d; ++k) {
    const Index in_k = transposed ? factors[k].rows() : factors[k].cols();
    const Index out_k = transposed ? factors[k].cols() : factors[k].rows();
    const Index trail = z.size() / (lead * in_k);
    Eigen::VectorXd next(lead * out_k * trail);
    for (Index t = 0; t < trail; ++t) {
      Eigen::Map<const Eigen::MatrixXd> zin(z.data() + t * lead * in_k, lead, in_k);
      Eigen::Map<Eigen::MatrixXd> zout(next.data() + t * lead * out_k, lead, out_k);
      if (transposed)
        zout.noalias() = zin * factors[k];
      else
        zout.noalias() = zin * factors[k].transpose();
      ops += static_cast<std::uint64_t>(lead) * in_k * out_k;
    }
    z = std::move(next);
    lead *= out_k;
  }
  if (flops) *flops += ops;
  return z;
}

}  // namespace

Eigen::VectorXd fast_kron(const std::vector<Eigen::MatrixXd>& factors, const Eigen::VectorXd& x,
                          std::uint64_t* flops) {
  return kron_apply(factors, x, false, flops);
}

Eigen::VectorXd fast_kron_transposed(const std::vector<Eigen::MatrixXd>& factors,
                                     const Eigen::VectorXd& x, std::uint64_t* flops) {
  return kron_apply(factors, x, true, flops);
}

NestedClusterBasis::NestedClusterBasis(const ClusterTree& tree, int p_s) : p_s_(p_s) {
  leaf_factors_.resize(tree.node_count());
  transfer_.resize(tree.node_count());
  for (int id = 0; id < tree.node_count(); ++id) {
    const ClusterNode& nd = tree.node(id);
    if (nd.is_leaf() && nd.size() > 0) leaf_factors_[id] = cluster_basis_factors(tree, id, p_s);
    if (nd.parent >= 0) transfer_[id] = transfer_factors(tree, nd.parent, id, p_s);
  }
}

const std::vector<Eigen::MatrixXd>& NestedClusterBasis::leaf_factors(int node) const {
  return leaf_factors_[node];
}

const std::vector<Eigen::MatrixXd>& NestedClusterBasis::transfer(int node) const {
  return transfer_[node];
}

namespace {

Index pow_int(Index base, int exp) {
  Index r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

std::vector<Eigen::VectorXd> NestedClusterBasis::forward(const ClusterTree& tree,
                                                         const Eigen::VectorXd& x) const {
  PHMAT_CHECK(x.size() == tree.n_points(), "forward: length mismatch");
  const int d = tree.dim();
  const Index m = pow_int(p_s_, d);
  std::vector<Eigen::VectorXd> xhat(tree.node_count());

  // Leaves first (node ids are ordered parents-before-children), then
  // accumulate upward through transfer factors.
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    const ClusterNode& nd = tree.node(id);
    if (nd.size() == 0) continue;
    xhat[id] = Eigen::VectorXd::Zero(m);
    if (nd.is_leaf()) {
      const auto& factors = leaf_factors_[id];
      // U_sigma^T x|sigma accumulated point by point: the kron row of point i
      // scaled by x_i, built dimension by dimension.
      Eigen::VectorXd row(m);
      for (Index i = 0; i < nd.size(); ++i) {
        const double xi = x[nd.indices[i]];
        if (xi == 0.0) continue;
        Index len = p_s_;
        row.head(p_s_) = xi * factors[0].row(i).transpose();
        for (int k = 1; k < d; ++k) {
          for (Index j = p_s_ - 1; j >= 0; --j)
            row.segment(j * len, len) = factors[k](i, j) * row.head(len);
          len *= p_s_;
        }
        xhat[id] += row;
      }
    } else {
      const int nc = 1 << d;
      for (int c = 0; c < nc; ++c) {
        const int cid = tree.child(id, c);
        if (tree.node(cid).size() == 0) continue;
        xhat[id] += fast_kron_transposed(transfer_[cid], xhat[cid]);
      }
    }
  }
  return xhat;
}

void NestedClusterBasis::backward(const ClusterTree& tree, std::vector<Eigen::VectorXd>& yhat,
                                  Eigen::VectorXd& y) const {
  const int d = tree.dim();
  for (int id = 0; id < tree.node_count(); ++id) {
    const ClusterNode& nd = tree.node(id);
    if (nd.size() == 0 || yhat[id].size() == 0) continue;
    if (nd.is_leaf()) {
      const auto& factors = leaf_factors_[id];
      // y_i += <kron row of point i, yhat>: fold yhat one dimension at a time.
      for (Index i = 0; i < nd.size(); ++i) {
        Eigen::VectorXd fold = yhat[id];
        Index len = fold.size();
        for (int k = d - 1; k >= 1; --k) {
          len /= p_s_;
          Eigen::Map<const Eigen::MatrixXd> mat(fold.data(), len, p_s_);
          Eigen::VectorXd next = mat * factors[k].row(i).transpose();
          fold.head(len) = next;
        }
        y[nd.indices[i]] += factors[0].row(i).dot(fold.head(p_s_));
      }
    } else {
      const int nc = 1 << d;
      for (int c = 0; c < nc; ++c) {
        const int cid = tree.child(id, c);
        if (tree.node(cid).size() == 0) continue;
        Eigen::VectorXd down = fast_kron(transfer_[cid], yhat[id]);
        if (yhat[cid].size() == 0)
          yhat[cid] = std::move(down);
        else
          yhat[cid] += down;
      }
    }
  }
}

Index NestedClusterBasis::storage_entries() const {
  Index total = 0;
  for (const auto& fs : leaf_factors_)
    for (const auto& f : fs) total += f.size();
  for (const auto& fs : transfer_)
    for (const auto& f : fs) total += f.size();
  return total;
}

}  // namespace phmat

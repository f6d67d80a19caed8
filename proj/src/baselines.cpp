#include "phmat/baselines.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "aca_impl.hpp"

namespace phmat {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Eigen::VectorXd gather(const Eigen::VectorXd& x, const std::vector<std::int32_t>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = x[idx[i]];
  return out;
}

void scatter_add(Eigen::VectorXd& y, const std::vector<std::int32_t>& idx,
                 const Eigen::VectorXd& v) {
  for (std::size_t i = 0; i < idx.size(); ++i) y[idx[i]] += v[i];
}

LowRankFactors factors_from(detail::AcaResult&& aca, Index m, Index n) {
  LowRankFactors f;
  f.capped = aca.capped;
  const Index t = aca.rank();
  f.v.resize(m, t);
  f.y.resize(n, t);
  for (Index l = 0; l < t; ++l) {
    f.v.col(l) = aca.us[l];
    f.y.col(l) = aca.vs[l];
  }
  return f;
}

}  // namespace

LowRankFactors aca_partial(const std::function<double(Index, Index)>& entry, Index n_rows,
                           Index n_cols, double eps, Index r_max, std::uint64_t seed) {
  PHMAT_CHECK(eps > 0.0, "aca_partial: eps must be positive");
  Rng rng(seed);
  return factors_from(detail::aca_engine(entry, n_rows, n_cols, eps, r_max, rng), n_rows, n_cols);
}

HAcaMatrix::HAcaMatrix(std::shared_ptr<const ClusterTree> tree, BlockClusterTree blocks,
                       const KernelSpec& spec, std::span<const double> theta, double eps,
                       Index r_max, KernelEvalCounter* counter, int threads)
    : tree_(std::move(tree)), blocks_(std::move(blocks)) {
  spec.validate();
  const ClusterTree& t = *tree_;
  const int d = t.dim();
  const std::vector<double> th(theta.begin(), theta.end());

  const double t0 = now_seconds();
  far_.resize(blocks_.far.size());
  parallel_for(
      static_cast<Index>(blocks_.far.size()),
      [&](Index i) {
        const Block b = blocks_.far[i];
        const auto& ri = t.node(b.sigma).indices;
        const auto& ci = t.node(b.tau).indices;
        auto entry = [&](Index r, Index c) {
          double r2 = 0.0;
          for (int k = 0; k < d; ++k) {
            const double delta = t.points()(ri[r], k) - t.points()(ci[c], k);
            r2 += delta * delta;
          }
          if (counter) counter->add();
          return kernel_value(spec, std::sqrt(r2), th.data());
        };
        Rng rng(mix_seed(0x61636121ULL, static_cast<std::uint64_t>(i)));
        far_[i] = factors_from(detail::aca_engine(entry, static_cast<Index>(ri.size()),
                                                  static_cast<Index>(ci.size()), eps, r_max, rng),
                               static_cast<Index>(ri.size()), static_cast<Index>(ci.size()));
      },
      threads);
  far_seconds_ = now_seconds() - t0;

  const double t1 = now_seconds();
  near_.resize(blocks_.near.size());
  parallel_for(
      static_cast<Index>(blocks_.near.size()),
      [&](Index i) {
        near_[i] = dense_kernel_block(t, blocks_.near[i], spec, theta, counter);
      },
      threads);
  near_seconds_ = now_seconds() - t1;
}

Index HAcaMatrix::rows() const { return tree_->n_points(); }

Eigen::VectorXd HAcaMatrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != rows()) throw std::invalid_argument("mvm: length mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
  for (std::size_t i = 0; i < blocks_.far.size(); ++i) {
    const Block b = blocks_.far[i];
    const Eigen::VectorXd xt = gather(x, tree_->node(b.tau).indices);
    scatter_add(y, tree_->node(b.sigma).indices, far_[i].v * (far_[i].y.transpose() * xt));
  }
  for (std::size_t i = 0; i < blocks_.near.size(); ++i) {
    const Block b = blocks_.near[i];
    const Eigen::VectorXd xt = gather(x, tree_->node(b.tau).indices);
    scatter_add(y, tree_->node(b.sigma).indices, near_[i] * xt);
  }
  return y;
}

Eigen::MatrixXd HAcaMatrix::to_dense(Index guard) const {
  if (rows() > guard) throw std::runtime_error("to_dense: matrix exceeds the size guard");
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(rows(), rows());
  auto put = [&](const Block& b, const Eigen::MatrixXd& block) {
    const auto& ri = tree_->node(b.sigma).indices;
    const auto& ci = tree_->node(b.tau).indices;
    for (std::size_t cc = 0; cc < ci.size(); ++cc)
      for (std::size_t rr = 0; rr < ri.size(); ++rr) k(ri[rr], ci[cc]) = block(rr, cc);
  };
  for (std::size_t i = 0; i < blocks_.far.size(); ++i)
    put(blocks_.far[i], far_[i].v * far_[i].y.transpose());
  for (std::size_t i = 0; i < blocks_.near.size(); ++i) put(blocks_.near[i], near_[i]);
  return k;
}

double HAcaMatrix::mean_far_rank() const {
  if (far_.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : far_) s += static_cast<double>(f.rank());
  return s / static_cast<double>(far_.size());
}

H2HcaMatrix::H2HcaMatrix(std::shared_ptr<const ClusterTree> tree, BlockClusterTree blocks,
                         const KernelSpec& spec, std::span<const double> theta, int p_s,
                         double eps, Index r_max, KernelEvalCounter* counter, int threads)
    : tree_(std::move(tree)), blocks_(std::move(blocks)), p_s_(p_s) {
  spec.validate();
  const ClusterTree& t = *tree_;
  const int d = t.dim();
  const std::vector<double> th(theta.begin(), theta.end());
  const double t0 = now_seconds();
  basis_ = NestedClusterBasis(t, p_s);

  Index rows = 1;
  for (int k = 0; k < d; ++k) rows *= p_s;

  // Translation classes share one node-interaction factorization.
  std::vector<int> rep;
  {
    std::unordered_map<TranslationKey, int, TranslationKeyHash> seen;
    far_key_.resize(blocks_.far.size());
    for (std::size_t i = 0; i < blocks_.far.size(); ++i) {
      const TranslationKey key = translation_key(t, blocks_.far[i]);
      auto [it, fresh] = seen.emplace(key, static_cast<int>(rep.size()));
      if (fresh) rep.push_back(static_cast<int>(i));
      far_key_[i] = it->second;
    }
  }

  std::vector<std::shared_ptr<const LowRankFactors>> built(rep.size());
  parallel_for(
      static_cast<Index>(rep.size()),
      [&](Index c) {
        const Block b = blocks_.far[rep[c]];
        const ClusterNode& sn = t.node(b.sigma);
        const ClusterNode& tn = t.node(b.tau);
        std::array<double, kMaxDim> box_delta{};
        std::vector<std::vector<double>> offsets;
        for (int k = 0; k < d; ++k) {
          const double side = t.level_side(sn.level, k);
          box_delta[k] = static_cast<double>(sn.coords[k] - tn.coords[k]) * side;
          std::vector<double> u(p_s);
          for (int j = 0; j < p_s; ++j) {
            const double cs = std::cos((2.0 * j + 1.0) * std::numbers::pi / (2.0 * p_s));
            u[p_s - 1 - j] = 0.5 * (cs + 1.0) * side;
          }
          offsets.push_back(std::move(u));
        }
        auto entry = [&](Index r, Index cidx) {
          double r2 = 0.0;
          Index ri = r, ci = cidx;
          for (int k = 0; k < d; ++k) {
            const double delta = box_delta[k] + offsets[k][ri % p_s] - offsets[k][ci % p_s];
            r2 += delta * delta;
            ri /= p_s;
            ci /= p_s;
          }
          if (counter) counter->add();
          return kernel_value(spec, std::sqrt(r2), th.data());
        };
        const TranslationKey key = translation_key(t, b);
        std::uint64_t s = mix_seed(0x68636121ULL, static_cast<std::uint64_t>(key.level));
        for (int k = 0; k < kMaxDim; ++k)
          s = mix_seed(s, static_cast<std::uint64_t>(key.offset[k]));
        Rng rng(s);
        built[c] = std::make_shared<const LowRankFactors>(
            factors_from(detail::aca_engine(entry, rows, rows, eps, r_max, rng), rows, rows));
      },
      threads);

  far_.resize(blocks_.far.size());
  for (std::size_t i = 0; i < blocks_.far.size(); ++i) far_[i] = built[far_key_[i]];
  far_seconds_ = now_seconds() - t0;

  const double t1 = now_seconds();
  near_.resize(blocks_.near.size());
  parallel_for(
      static_cast<Index>(blocks_.near.size()),
      [&](Index i) {
        near_[i] = dense_kernel_block(t, blocks_.near[i], spec, theta, counter);
      },
      threads);
  near_seconds_ = now_seconds() - t1;
}

Index H2HcaMatrix::rows() const { return tree_->n_points(); }

Eigen::VectorXd H2HcaMatrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != rows()) throw std::invalid_argument("mvm: length mismatch");
  const ClusterTree& t = *tree_;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
  std::vector<Eigen::VectorXd> xhat = basis_.forward(t, x);
  std::vector<Eigen::VectorXd> yhat(t.node_count());
  for (std::size_t i = 0; i < blocks_.far.size(); ++i) {
    const Block b = blocks_.far[i];
    Eigen::VectorXd z = far_[i]->v * (far_[i]->y.transpose() * xhat[b.tau]);
    if (yhat[b.sigma].size() == 0)
      yhat[b.sigma] = std::move(z);
    else
      yhat[b.sigma] += z;
  }
  for (std::size_t i = 0; i < blocks_.near.size(); ++i) {
    const Block b = blocks_.near[i];
    const Eigen::VectorXd xt = gather(x, t.node(b.tau).indices);
    scatter_add(y, t.node(b.sigma).indices, near_[i] * xt);
  }
  basis_.backward(t, yhat, y);
  return y;
}

Eigen::MatrixXd H2HcaMatrix::to_dense(Index guard) const {
  if (rows() > guard) throw std::runtime_error("to_dense: matrix exceeds the size guard");
  const ClusterTree& t = *tree_;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(rows(), rows());
  auto put = [&](const Block& b, const Eigen::MatrixXd& block) {
    const auto& ri = t.node(b.sigma).indices;
    const auto& ci = t.node(b.tau).indices;
    for (std::size_t cc = 0; cc < ci.size(); ++cc)
      for (std::size_t rr = 0; rr < ri.size(); ++rr) k(ri[rr], ci[cc]) = block(rr, cc);
  };
  for (std::size_t i = 0; i < blocks_.far.size(); ++i) {
    const Block b = blocks_.far[i];
    const Eigen::MatrixXd us = assemble_cluster_basis(cluster_basis_factors(t, b.sigma, p_s_));
    const Eigen::MatrixXd ut = assemble_cluster_basis(cluster_basis_factors(t, b.tau, p_s_));
    put(b, us * far_[i]->v * (ut * far_[i]->y).transpose());
  }
  for (std::size_t i = 0; i < blocks_.near.size(); ++i) put(blocks_.near[i], near_[i]);
  return k;
}

double H2HcaMatrix::mean_far_rank() const {
  if (far_.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : far_) s += static_cast<double>(f->rank());
  return s / static_cast<double>(far_.size());
}

double H2HcaMatrix::coupling_ratio() const {
  const double n2 = static_cast<double>(rows()) * static_cast<double>(rows());
  Index p_d = 1;
  for (int k = 0; k < tree_->dim(); ++k) p_d *= p_s_;
  double s = 0.0;
  for (const auto& f : far_) s += static_cast<double>(p_d * f->rank());
  return 2.0 * s / n2;
}

}  // namespace phmat

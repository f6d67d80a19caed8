#include "phmat/phmatrix.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

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

// Groups far blocks into translation classes. Returns the class id per block
// and the representative (first-encountered) block per class.
std::pair<std::vector<int>, std::vector<int>> translation_classes(const ClusterTree& tree,
                                                                  const BlockClusterTree& blocks) {
  std::vector<int> key_of(blocks.far.size());
  std::vector<int> rep;
  std::unordered_map<TranslationKey, int, TranslationKeyHash> seen;
  for (std::size_t i = 0; i < blocks.far.size(); ++i) {
    const TranslationKey key = translation_key(tree, blocks.far[i]);
    auto [it, fresh] = seen.emplace(key, static_cast<int>(rep.size()));
    if (fresh) rep.push_back(static_cast<int>(i));
    key_of[i] = it->second;
  }
  return {std::move(key_of), std::move(rep)};
}

std::uint64_t near_seed(const PHConfig& config, Index block_index) {
  return mix_seed(mix_seed(config.seed, 0x6e656172ULL), static_cast<std::uint64_t>(block_index));
}

}  // namespace

double PHConfig::resolved_eta(int d) const { return eta > 0.0 ? eta : std::sqrt(double(d)); }

template <typename Parametric>
static void build_common(Parametric& pm, std::shared_ptr<const ClusterTree> tree,
                         const PHConfig& config, StageCounters& counters, bool h2_form) {
  config.spec.validate();
  pm.config = config;
  pm.tree = std::move(tree);
  const double t0 = now_seconds();
  pm.blocks = build_block_cluster_tree(*pm.tree, config.resolved_eta(pm.tree->dim()));
  pm.theta_grids = make_theta_grids(config.spec, config.p_theta);
  pm.stats.tree_seconds = now_seconds() - t0;

  // Far field: one TT-cross per translation class when the cache is on, one
  // per block otherwise. Cross seeds derive from the translation key either
  // way, so both modes produce bitwise-identical cores.
  const double t1 = now_seconds();
  auto [key_of, rep] = translation_classes(*pm.tree, pm.blocks);
  pm.far_key = std::move(key_of);

  FarCrossOptions fopt;
  fopt.eps = config.eps;
  fopt.r_max = config.r_max_far;
  fopt.seed = config.seed;

  const Index n_builds =
      config.translation_cache ? static_cast<Index>(rep.size()) : static_cast<Index>(pm.blocks.far.size());
  std::vector<std::shared_ptr<const CouplingTT>> built(n_builds);
  parallel_for(
      n_builds,
      [&](Index i) {
        const Block b = config.translation_cache ? pm.blocks.far[rep[i]] : pm.blocks.far[i];
        built[i] = std::make_shared<CouplingTT>(build_coupling(*pm.tree, b, config.spec,
                                                               config.p_s, pm.theta_grids, fopt,
                                                               &counters.offline, &counters.audit));
      },
      config.threads);
  pm.couplings = std::move(built);

  auto coupling_of = [&](Index block_index) {
    return config.translation_cache ? pm.couplings[pm.far_key[block_index]]
                                    : pm.couplings[block_index];
  };

  pm.far.resize(pm.blocks.far.size());
  if constexpr (std::is_same_v<Parametric, ParametricHMatrix>) {
    parallel_for(
        static_cast<Index>(pm.blocks.far.size()),
        [&](Index i) {
          pm.far[i] = pttk_offline(*pm.tree, pm.blocks.far[i], pm.config.p_s, coupling_of(i));
        },
        config.threads);
  } else {
    for (std::size_t i = 0; i < pm.blocks.far.size(); ++i) pm.far[i] = {coupling_of(i)};
  }
  for (const auto& c : pm.couplings) {
    pm.stats.ff_kernel_evals += c->evals;
    pm.stats.any_rank_capped = pm.stats.any_rank_capped || c->rank_capped;
  }
  pm.stats.ff_seconds = now_seconds() - t1;

  // Near field.
  const double t2 = now_seconds();
  if (config.near_mode == NearMode::TT) {
    NearCrossOptions nopt;
    nopt.eps = config.eps;
    nopt.r_max = config.r_max_near;
    pm.near.resize(pm.blocks.near.size());
    parallel_for(
        static_cast<Index>(pm.blocks.near.size()),
        [&](Index i) {
          NearCrossOptions local = nopt;
          local.seed = near_seed(config, i);
          pm.near[i] = nearfield_offline(*pm.tree, pm.blocks.near[i], config.spec, pm.theta_grids,
                                         local, &counters.offline, &counters.audit);
        },
        config.threads);
    for (const auto& nb : pm.near) {
      pm.stats.nf_kernel_evals += nb.evals;
      pm.stats.any_rank_capped = pm.stats.any_rank_capped || nb.rank_capped;
    }
  }
  pm.stats.nf_seconds = now_seconds() - t2;
  (void)h2_form;
}

ParametricHMatrix offline_h(std::shared_ptr<const ClusterTree> tree, const PHConfig& config,
                            StageCounters& counters) {
  ParametricHMatrix pm;
  build_common(pm, std::move(tree), config, counters, false);
  return pm;
}

ParametricH2Matrix offline_h2(std::shared_ptr<const ClusterTree> tree, const PHConfig& config,
                              StageCounters& counters) {
  ParametricH2Matrix pm;
  build_common(pm, std::move(tree), config, counters, true);
  const double t0 = now_seconds();
  pm.basis = NestedClusterBasis(*pm.tree, config.p_s);
  pm.stats.ff_seconds += now_seconds() - t0;
  return pm;
}

ParametricHMatrix offline_h(const Eigen::MatrixXd& points, const PHConfig& config,
                            StageCounters& counters) {
  auto tree = std::make_shared<ClusterTree>(points, unit_box(static_cast<int>(points.cols())),
                                            config.l_max);
  return offline_h(std::move(tree), config, counters);
}

ParametricH2Matrix offline_h2(const Eigen::MatrixXd& points, const PHConfig& config,
                              StageCounters& counters) {
  auto tree = std::make_shared<ClusterTree>(points, unit_box(static_cast<int>(points.cols())),
                                            config.l_max);
  return offline_h2(std::move(tree), config, counters);
}

namespace {

template <typename Parametric, typename Instantiated>
void instantiate_common(Instantiated& inst, std::shared_ptr<const Parametric> pm,
                        std::span<const double> theta, KernelEvalCounter* counter) {
  const auto& config = pm->config;
  const std::vector<Eigen::VectorXd> v = parametric_vectors(pm->theta_grids, theta);
  inst.parent = pm;
  inst.theta.assign(theta.begin(), theta.end());

  // One H per translation class; blocks of a class share it.
  std::vector<Eigen::MatrixXd> class_h;
  if (config.translation_cache) {
    class_h.resize(pm->couplings.size());
    parallel_for(
        static_cast<Index>(pm->couplings.size()),
        [&](Index i) { class_h[i] = pttk_online(*pm->couplings[i], v); }, config.threads);
  }
  inst.far_h.resize(pm->far.size());
  parallel_for(
      static_cast<Index>(pm->far.size()),
      [&](Index i) {
        if (config.translation_cache)
          inst.far_h[i] = class_h[pm->far_key[i]];
        else
          inst.far_h[i] = pttk_online(*pm->couplings[i], v);
      },
      config.threads);

  inst.near_d.resize(pm->blocks.near.size());
  if (config.near_mode == NearMode::TT) {
    parallel_for(
        static_cast<Index>(pm->blocks.near.size()),
        [&](Index i) { inst.near_d[i] = nearfield_online(pm->near[i], v); }, config.threads);
  } else {
    parallel_for(
        static_cast<Index>(pm->blocks.near.size()),
        [&](Index i) {
          inst.near_d[i] =
              dense_kernel_block(*pm->tree, pm->blocks.near[i], config.spec, theta, counter);
        },
        config.threads);
  }
}

}  // namespace

InstantiatedHMatrix instantiate(std::shared_ptr<const ParametricHMatrix> pm,
                                std::span<const double> theta, KernelEvalCounter* counter) {
  InstantiatedHMatrix inst;
  instantiate_common(inst, std::move(pm), theta, counter);
  return inst;
}

InstantiatedH2Matrix instantiate(std::shared_ptr<const ParametricH2Matrix> pm,
                                 std::span<const double> theta, KernelEvalCounter* counter) {
  InstantiatedH2Matrix inst;
  instantiate_common(inst, std::move(pm), theta, counter);
  return inst;
}

Eigen::VectorXd InstantiatedHMatrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != rows()) throw std::invalid_argument("mvm: length mismatch");
  const ClusterTree& tree = *parent->tree;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
  for (std::size_t i = 0; i < parent->blocks.far.size(); ++i) {
    const Block b = parent->blocks.far[i];
    const FarBlockH& fb = parent->far[i];
    const Eigen::VectorXd xt = gather(x, tree.node(b.tau).indices);
    const Eigen::VectorXd z = fb.s * (far_h[i] * (fb.t.transpose() * xt));
    scatter_add(y, tree.node(b.sigma).indices, z);
  }
  for (std::size_t i = 0; i < parent->blocks.near.size(); ++i) {
    const Block b = parent->blocks.near[i];
    const Eigen::VectorXd xt = gather(x, tree.node(b.tau).indices);
    scatter_add(y, tree.node(b.sigma).indices, near_d[i] * xt);
  }
  return y;
}

Eigen::VectorXd InstantiatedH2Matrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != rows()) throw std::invalid_argument("mvm: length mismatch");
  const ClusterTree& tree = *parent->tree;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());

  std::vector<Eigen::VectorXd> xhat = parent->basis.forward(tree, x);
  std::vector<Eigen::VectorXd> yhat(tree.node_count());

  for (std::size_t i = 0; i < parent->blocks.far.size(); ++i) {
    const Block b = parent->blocks.far[i];
    Eigen::VectorXd z = coupling_apply(*parent->far[i].coupling, far_h[i], xhat[b.tau]);
    if (yhat[b.sigma].size() == 0)
      yhat[b.sigma] = std::move(z);
    else
      yhat[b.sigma] += z;
  }
  for (std::size_t i = 0; i < parent->blocks.near.size(); ++i) {
    const Block b = parent->blocks.near[i];
    const Eigen::VectorXd xt = gather(x, tree.node(b.tau).indices);
    scatter_add(y, tree.node(b.sigma).indices, near_d[i] * xt);
  }
  parent->basis.backward(tree, yhat, y);
  return y;
}

namespace {

template <typename Inst>
Eigen::MatrixXd dense_common(const Inst& inst, Index guard,
                             const std::function<Eigen::MatrixXd(std::size_t)>& far_block) {
  const auto& pm = *inst.parent;
  const ClusterTree& tree = *pm.tree;
  if (pm.n() > guard) throw std::runtime_error("to_dense: matrix exceeds the size guard");
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(pm.n(), pm.n());
  for (std::size_t i = 0; i < pm.blocks.far.size(); ++i) {
    const Block b = pm.blocks.far[i];
    const Eigen::MatrixXd block = far_block(i);
    const auto& ri = tree.node(b.sigma).indices;
    const auto& ci = tree.node(b.tau).indices;
    for (std::size_t cc = 0; cc < ci.size(); ++cc)
      for (std::size_t rr = 0; rr < ri.size(); ++rr) k(ri[rr], ci[cc]) = block(rr, cc);
  }
  for (std::size_t i = 0; i < pm.blocks.near.size(); ++i) {
    const Block b = pm.blocks.near[i];
    const auto& ri = tree.node(b.sigma).indices;
    const auto& ci = tree.node(b.tau).indices;
    for (std::size_t cc = 0; cc < ci.size(); ++cc)
      for (std::size_t rr = 0; rr < ri.size(); ++rr) k(ri[rr], ci[cc]) = inst.near_d[i](rr, cc);
  }
  return k;
}

}  // namespace

Eigen::MatrixXd InstantiatedHMatrix::to_dense(Index guard) const {
  return dense_common(*this, guard, [&](std::size_t i) -> Eigen::MatrixXd {
    const FarBlockH& fb = parent->far[i];
    return fb.s * far_h[i] * fb.t.transpose();
  });
}

Eigen::MatrixXd InstantiatedH2Matrix::to_dense(Index guard) const {
  return dense_common(*this, guard, [&](std::size_t i) -> Eigen::MatrixXd {
    const Block b = parent->blocks.far[i];
    const auto [l, r] = assemble_L_R(*parent->far[i].coupling);
    const Eigen::MatrixXd us =
        assemble_cluster_basis(cluster_basis_factors(*parent->tree, b.sigma, parent->config.p_s));
    const Eigen::MatrixXd ut =
        assemble_cluster_basis(cluster_basis_factors(*parent->tree, b.tau, parent->config.p_s));
    return us * (l * far_h[i] * r.transpose()) * ut.transpose();
  });
}

Index InstantiatedHMatrix::online_entries_far() const {
  Index total = 0;
  for (std::size_t i = 0; i < parent->far.size(); ++i)
    total += parent->far[i].s.size() + far_h[i].size() + parent->far[i].t.size();
  return total;
}

Index InstantiatedHMatrix::online_entries_near() const {
  Index total = 0;
  for (const auto& d : near_d) total += d.size();
  return total;
}

namespace {

// Online storage of one far block's coupling data in TT form: spatial cores
// plus the instantiated middle matrix H_b(theta).
Index coupling_online_entries(const CouplingTT& c) {
  const int d = c.d;
  const int delta = c.tt.order();
  Index p_left = 0, p_right = 0;
  for (int i = 1; i <= d; ++i) p_left += c.tt.rank(i - 1) * c.tt.rank(i);
  for (int i = d + c.d_theta + 1; i <= delta - 1; ++i) p_right += c.tt.rank(i) * c.tt.rank(i + 1);
  const Index p_s = c.tt.cores[0].m;
  return p_s * (p_left + p_right) + c.rank_left() * c.rank_right();
}

}  // namespace

Index InstantiatedH2Matrix::online_entries_far() const {
  Index total = parent->basis.storage_entries();
  for (const auto& fb : parent->far) total += coupling_online_entries(*fb.coupling);
  return total;
}

Index InstantiatedH2Matrix::online_entries_near() const {
  Index total = 0;
  for (const auto& d : near_d) total += d.size();
  return total;
}

namespace {

template <typename Parametric>
StructureMetrics metrics_common(const Parametric& pm, bool h2_form) {
  StructureMetrics m;
  m.n = pm.n();
  m.c_sp = pm.blocks.c_sp;
  m.n_far = static_cast<Index>(pm.blocks.far.size());
  m.n_near = static_cast<Index>(pm.blocks.near.size());

  std::unordered_map<int, char> distinct;
  for (int k : pm.far_key) distinct.emplace(k, 1);
  m.m_a = static_cast<Index>(distinct.size());

  const double n2 = static_cast<double>(m.n) * static_cast<double>(m.n);
  Index near_dense = 0;
  for (const Block& b : pm.blocks.near)
    near_dense += pm.tree->node(b.sigma).size() * pm.tree->node(b.tau).size();
  m.nf_ratio = near_dense / n2;

  double rank_sum = 0.0;
  Index ff_online = 0;
  double coupling_sum = 0.0;
  for (std::size_t i = 0; i < pm.far.size(); ++i) {
    const CouplingTT& c = *pm.far[i].coupling;
    rank_sum += static_cast<double>(std::max(c.rank_left(), c.rank_right()));
    if constexpr (std::is_same_v<Parametric, ParametricHMatrix>) {
      const Block b = pm.blocks.far[i];
      ff_online += pm.tree->node(b.sigma).size() * c.rank_left() +
                   c.rank_left() * c.rank_right() +
                   pm.tree->node(b.tau).size() * c.rank_right();
    } else {
      ff_online += coupling_online_entries(c);
      coupling_sum += static_cast<double>(coupling_online_entries(c));
    }
  }
  m.rank = pm.far.empty() ? 0.0 : rank_sum / static_cast<double>(pm.far.size());

  // Offline parametric payload.
  Index storage = 0;
  for (const auto& nb : pm.near) storage += nb.tt.storage_entries();
  if constexpr (std::is_same_v<Parametric, ParametricHMatrix>) {
    for (const auto& fb : pm.far) storage += fb.s.size() + fb.t.size();
    for (const auto& c : pm.couplings)
      for (int i = c->d; i < c->d + c->d_theta; ++i) storage += c->tt.cores[i].size();
  } else {
    for (const auto& c : pm.couplings) storage += c->tt.storage_entries();
    storage += pm.basis.storage_entries();
    ff_online += pm.basis.storage_entries();
    m.coupling_ratio = coupling_sum / n2;
  }
  (void)h2_form;
  m.ff_ratio = static_cast<double>(ff_online) / n2;
  m.storage_entries = storage;
  m.storage_gb = static_cast<double>(storage) * 8.0 / 1e9;
  return m;
}

}  // namespace

StructureMetrics metrics(const ParametricHMatrix& pm) { return metrics_common(pm, false); }

StructureMetrics metrics(const ParametricH2Matrix& pm) { return metrics_common(pm, true); }

}  // namespace phmat

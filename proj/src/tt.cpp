#include "phmat/tt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <cstdio>
#include <cstdlib>

#include "aca_impl.hpp"

namespace phmat {

TTCore TTCore::zeros(Index r0, Index m, Index r1) {
  TTCore c;
  c.r0 = r0;
  c.m = m;
  c.r1 = r1;
  c.data = Eigen::VectorXd::Zero(r0 * m * r1);
  return c;
}

Eigen::MatrixXd TTCore::slice(Index j) const {
  return Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>(
      data.data() + j * r0, r0, r1, Eigen::OuterStride<>(r0 * m));
}

Eigen::MatrixXd TTCore::contract_mode2(const Eigen::VectorXd& v) const {
  PHMAT_CHECK(v.size() == m, "contract_mode2: length mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r0, r1);
  for (Index j = 0; j < m; ++j)
    if (v[j] != 0.0) out += v[j] * slice(j);
  return out;
}

Index TTTensor::rank(int i) const {
  PHMAT_CHECK(i >= 0 && i <= order(), "rank: index out of range");
  return i == 0 ? cores.front().r0 : cores[i - 1].r1;
}

Index TTTensor::max_rank() const {
  Index r = 1;
  for (const TTCore& c : cores) r = std::max({r, c.r0, c.r1});
  return r;
}

std::vector<Index> TTTensor::mode_sizes() const {
  std::vector<Index> m(order());
  for (int i = 0; i < order(); ++i) m[i] = cores[i].m;
  return m;
}

Index TTTensor::storage_entries() const {
  Index total = 0;
  for (const TTCore& c : cores) total += c.size();
  return total;
}

double TTTensor::entry(std::span<const Index> idx) const {
  PHMAT_CHECK(static_cast<int>(idx.size()) == order(), "entry: order mismatch");
  for (int k = 0; k < order(); ++k)
    if (idx[k] < 0 || idx[k] >= cores[k].m)
      throw std::invalid_argument("TTTensor::entry: index out of range");
  Eigen::VectorXd w = cores[0].slice(idx[0]).transpose().col(0);  // r1 vector (r0 = 1)
  for (int k = 1; k < order(); ++k) {
    const TTCore& c = cores[k];
    Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>> s(
        c.data.data() + idx[k] * c.r0, c.r0, c.r1, Eigen::OuterStride<>(c.r0 * c.m));
    w = (s.transpose() * w).eval();
  }
  return w[0];
}

void TTTensor::validate() const {
  PHMAT_CHECK(!cores.empty(), "TTTensor: no cores");
  PHMAT_CHECK(cores.front().r0 == 1 && cores.back().r1 == 1, "TTTensor: boundary ranks must be 1");
  for (int k = 0; k + 1 < order(); ++k)
    PHMAT_CHECK(cores[k].r1 == cores[k + 1].r0, "TTTensor: rank chain mismatch");
  for (const TTCore& c : cores)
    PHMAT_CHECK(c.data.size() == c.size(), "TTTensor: core size mismatch");
}

DenseTensor DenseTensor::zeros(std::vector<Index> dims) {
  DenseTensor t;
  t.dims = std::move(dims);
  Index total = 1;
  for (Index m : t.dims) total *= m;
  t.data = Eigen::VectorXd::Zero(total);
  return t;
}

Index DenseTensor::flat(std::span<const Index> idx) const {
  PHMAT_CHECK(idx.size() == dims.size(), "DenseTensor: order mismatch");
  Index f = 0, stride = 1;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    PHMAT_CHECK(idx[k] >= 0 && idx[k] < dims[k], "DenseTensor: index out of range");
    f += idx[k] * stride;
    stride *= dims[k];
  }
  return f;
}

DenseTensor mode_k_product(const DenseTensor& x, int k, const Eigen::MatrixXd& m) {
  PHMAT_CHECK(k >= 0 && k < static_cast<int>(x.dims.size()), "mode_k_product: bad mode");
  if (m.cols() != x.dims[k]) throw std::invalid_argument("mode_k_product: size mismatch");
  Index lead = 1, trail = 1;
  for (int i = 0; i < k; ++i) lead *= x.dims[i];
  for (std::size_t i = k + 1; i < x.dims.size(); ++i) trail *= x.dims[i];

  std::vector<Index> dims = x.dims;
  dims[k] = m.rows();
  DenseTensor out = DenseTensor::zeros(std::move(dims));
  for (Index t = 0; t < trail; ++t) {
    Eigen::Map<const Eigen::MatrixXd> in(x.data.data() + t * lead * x.dims[k], lead, x.dims[k]);
    Eigen::Map<Eigen::MatrixXd> dst(out.data.data() + t * lead * m.rows(), lead, m.rows());
    dst.noalias() = in * m.transpose();
  }
  return out;
}

Index EntryOracle::size() const {
  Index total = 1;
  for (Index m : dims_) total *= m;
  return total;
}

EntryOracle dense_oracle(const DenseTensor& x) {
  const DenseTensor* ptr = &x;
  return EntryOracle(x.dims, [ptr](const Index* idx) {
    return ptr->at(std::span<const Index>(idx, ptr->dims.size()));
  });
}

DenseTensor tt_full(const TTTensor& tt, Index guard) {
  tt.validate();
  Index total = 1;
  for (Index m : tt.mode_sizes()) {
    total *= m;
    if (total > guard) throw std::runtime_error("tt_full: tensor exceeds the size guard");
  }
  Eigen::MatrixXd cur = tt.cores[0].right();  // m_0 x r_1
  for (int k = 1; k < tt.order(); ++k) {
    Eigen::MatrixXd tmp = cur * tt.cores[k].left();  // M x (m_k r_{k+1})
    cur = Eigen::Map<const Eigen::MatrixXd>(tmp.data(), tmp.rows() * tt.cores[k].m,
                                            tt.cores[k].r1);
  }
  DenseTensor out;
  out.dims = tt.mode_sizes();
  out.data = cur.col(0);
  return out;
}

namespace {

// budget < 0 selects the relative form: delta = eps * ||X||_F / sqrt(q-1).
TTTensor tt_rounding_impl(const TTTensor& in, double eps, double budget) {
  in.validate();
  TTTensor tt = in;
  const int q = tt.order();
  if (q == 1) return tt;

  // Right-to-left orthogonalization. After this loop every core k >= 1 has
  // orthonormal rows in its left unfolding and the norm sits in core 0.
  for (int k = q - 1; k >= 1; --k) {
    TTCore& c = tt.cores[k];
    Eigen::MatrixXd at = c.left().transpose();  // (m r1) x r0
    const Index t = std::min<Index>(at.rows(), at.cols());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(at);
    Eigen::MatrixXd thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(at.rows(), t);
    Eigen::MatrixXd r =
        qr.matrixQR().topRows(t).template triangularView<Eigen::Upper>();  // t x r0

    TTCore fresh = TTCore::zeros(t, c.m, c.r1);
    Eigen::Map<Eigen::MatrixXd>(fresh.data.data(), t, c.m * c.r1) = thin_q.transpose();
    TTCore& prev = tt.cores[k - 1];
    Eigen::MatrixXd carried = prev.right() * r.transpose();  // (r0 m) x t
    TTCore prev_fresh = TTCore::zeros(prev.r0, prev.m, t);
    prev_fresh.right_mut() = carried;
    tt.cores[k] = std::move(fresh);
    tt.cores[k - 1] = std::move(prev_fresh);
  }

  const double norm = tt.cores[0].data.norm();
  const double total = budget >= 0.0 ? budget : (norm == 0.0 ? 0.0 : eps * norm);
  const double delta = total / std::sqrt(static_cast<double>(q - 1));

  // Left-to-right SVD truncation with the distributed budget delta.
  for (int k = 0; k + 1 < q; ++k) {
    TTCore& c = tt.cores[k];
    Eigen::BDCSVD<Eigen::MatrixXd> svd(c.right(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    Index r = s.size();
    double tail = 0.0;
    while (r > 1 && tail + s[r - 1] * s[r - 1] <= delta * delta) {
      tail += s[r - 1] * s[r - 1];
      --r;
    }
    TTCore fresh = TTCore::zeros(c.r0, c.m, r);
    fresh.right_mut() = svd.matrixU().leftCols(r);
    Eigen::MatrixXd carry = s.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();

    TTCore& next = tt.cores[k + 1];
    TTCore next_fresh = TTCore::zeros(r, next.m, next.r1);
    Eigen::Map<Eigen::MatrixXd>(next_fresh.data.data(), r, next.m * next.r1) = carry * next.left();
    tt.cores[k] = std::move(fresh);
    tt.cores[k + 1] = std::move(next_fresh);
  }
  return tt;
}

}  // namespace

TTTensor tt_rounding(const TTTensor& in, double eps) {
  PHMAT_CHECK(eps >= 0.0, "tt_rounding: eps must be >= 0");
  return tt_rounding_impl(in, eps, -1.0);
}

TTTensor tt_rounding_absolute(const TTTensor& in, double budget) {
  PHMAT_CHECK(budget >= 0.0, "tt_rounding_absolute: budget must be >= 0");
  return tt_rounding_impl(in, 0.0, budget);
}

namespace {

// Memoized, counted access into an entry oracle during one tt_cross call.
class MemoOracle {
 public:
  explicit MemoOracle(const EntryOracle& oracle) : oracle_(oracle) {
    strides_.resize(oracle.dims().size());
    Index s = 1;
    for (std::size_t k = 0; k < strides_.size(); ++k) {
      strides_[k] = s;
      s *= oracle.dims()[k];
    }
  }

  double entry(const Index* idx) {
    Index key = 0;
    for (std::size_t k = 0; k < strides_.size(); ++k) key += idx[k] * strides_[k];
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const double v = oracle_(idx);
    ++fresh_;
    memo_.emplace(key, v);
    return v;
  }

  std::uint64_t fresh_evals() const { return fresh_; }

 private:
  const EntryOracle& oracle_;
  std::vector<Index> strides_;
  std::unordered_map<Index, double> memo_;
  std::uint64_t fresh_ = 0;
};

using IndexList = std::vector<std::vector<Index>>;

struct CrossState {
  std::vector<IndexList> left;   // left[k]: prefixes of length k, k in [0, q)
  std::vector<IndexList> right;  // right[k]: suffixes starting at mode k, k in [1, q]
};

}  // namespace

TTCrossResult tt_cross(const EntryOracle& oracle, const TTCrossOptions& opt) {
  PHMAT_CHECK(opt.eps > 0.0, "tt_cross: eps must be positive");
  PHMAT_CHECK(opt.r_max >= 1, "tt_cross: r_max must be >= 1");
  const int q = oracle.order();
  const std::vector<Index>& dims = oracle.dims();
  PHMAT_CHECK(q >= 1, "tt_cross: empty shape");

  MemoOracle memo(oracle);
  Rng rng(opt.seed);
  TTCrossResult result;

  if (q == 1) {
    TTCore core = TTCore::zeros(1, dims[0], 1);
    Index idx[1];
    for (Index j = 0; j < dims[0]; ++j) {
      idx[0] = j;
      core.data[j] = memo.entry(idx);
    }
    result.tt.cores.push_back(std::move(core));
    result.evals = memo.fresh_evals();
    result.sweeps_run = 0;
    return result;
  }

  // Single random multi-index seeds every prefix/suffix set at rank one.
  std::vector<Index> z(q);
  for (int k = 0; k < q; ++k) z[k] = static_cast<Index>(rng.integer(dims[k]));
  CrossState st;
  st.left.resize(q);
  st.right.resize(q + 1);
  st.left[0] = {{}};
  st.right[q] = {{}};
  for (int k = 1; k < q; ++k) {
    st.left[k] = {std::vector<Index>(z.begin(), z.begin() + k)};
    st.right[k] = {std::vector<Index>(z.begin() + k, z.end())};
  }

  std::vector<double> bond_ratio(q - 1, 1.0);
  std::vector<Index> scratch(q);

  auto supercore_entry = [&](int k, Index row, Index col) {
    const IndexList& lk = st.left[k];
    const IndexList& rk2 = st.right[k + 2];
    const Index nl = static_cast<Index>(lk.size());
    const Index alpha = row % nl;
    const Index ik = row / nl;
    const Index ik1 = col % dims[k + 1];
    const Index beta = col / dims[k + 1];
    int pos = 0;
    for (Index v : lk[alpha]) scratch[pos++] = v;
    scratch[pos++] = ik;
    scratch[pos++] = ik1;
    for (Index v : rk2[beta]) scratch[pos++] = v;
    return memo.entry(scratch.data());
  };

  // The ACA stopping rule is Frobenius-relative; the Chebyshev-norm target
  // is checked by sampling and the local tolerance tightens when it misses.
  double eps_aca = 0.5 * opt.eps;

  // Each supercore visit warm-starts from the bond's current pivot pairs:
  // live directions persist, stale ones are dropped, and fresh pivots chosen
  // against the replayed residual stay well separated from the old ones.
  auto run_supercore = [&](int k) {
    const Index nl = static_cast<Index>(st.left[k].size());
    const Index nr = static_cast<Index>(st.right[k + 2].size());
    const Index m = nl * dims[k];
    const Index n = dims[k + 1] * nr;

    detail::AcaSeed seed;
    {
      std::map<std::vector<Index>, Index> left_pos, right_pos;
      for (Index a = 0; a < nl; ++a) left_pos.emplace(st.left[k][a], a);
      for (Index b = 0; b < nr; ++b) right_pos.emplace(st.right[k + 2][b], b);
      const IndexList& lk1 = st.left[k + 1];
      const IndexList& rk1 = st.right[k + 1];
      for (std::size_t t = 0; t < lk1.size() && t < rk1.size(); ++t) {
        std::vector<Index> prefix(lk1[t].begin(), lk1[t].end() - 1);
        std::vector<Index> suffix(rk1[t].begin() + 1, rk1[t].end());
        const auto lp = left_pos.find(prefix);
        const auto rp = right_pos.find(suffix);
        if (lp == left_pos.end() || rp == right_pos.end()) continue;
        seed.rows.push_back(lp->second + lk1[t].back() * nl);
        seed.cols.push_back(rk1[t].front() + rp->second * dims[k + 1]);
      }
    }

    detail::AcaResult aca =
        detail::aca_engine([&](Index i, Index j) { return supercore_entry(k, i, j); }, m, n,
                           eps_aca, opt.r_max, rng, &seed);
    if (aca.rows.empty()) return;  // keep the previous cross for this bond
    IndexList new_left(aca.rows.size()), new_right(aca.cols.size());
    for (std::size_t t = 0; t < aca.rows.size(); ++t) {
      const Index alpha = aca.rows[t] % nl;
      const Index ik = aca.rows[t] / nl;
      new_left[t] = st.left[k][alpha];
      new_left[t].push_back(ik);
      const Index ik1 = aca.cols[t] % dims[k + 1];
      const Index beta = aca.cols[t] / dims[k + 1];
      new_right[t] = {ik1};
      new_right[t].insert(new_right[t].end(), st.right[k + 2][beta].begin(),
                          st.right[k + 2][beta].end());
    }
    st.left[k + 1] = std::move(new_left);
    st.right[k + 1] = std::move(new_right);
    bond_ratio[k] = aca.final_ratio;
    result.rank_capped = result.rank_capped || aca.capped;
  };

  auto assemble = [&]() {
    TTTensor tt;
    tt.cores.reserve(q);
    for (int k = 0; k < q; ++k) {
      const IndexList& lk = st.left[k];
      const IndexList& rk1 = st.right[k + 1];
      const Index rl = static_cast<Index>(lk.size());
      const Index rr = static_cast<Index>(rk1.size());
      Eigen::MatrixXd a(rl * dims[k], rr);
      for (Index beta = 0; beta < rr; ++beta)
        for (Index j = 0; j < dims[k]; ++j)
          for (Index alpha = 0; alpha < rl; ++alpha) {
            int pos = 0;
            for (Index v : lk[alpha]) scratch[pos++] = v;
            scratch[pos++] = j;
            for (Index v : rk1[beta]) scratch[pos++] = v;
            a(alpha + j * rl, beta) = memo.entry(scratch.data());
          }
      if (k + 1 < q) {
        // Interpolation form: fold the inverse cross matrix into the core.
        // Accumulated pivot sets can make the cross matrix near-singular;
        // the minimum-norm rank-revealing solve keeps the cores bounded.
        const IndexList& lk1 = st.left[k + 1];
        const Index r = static_cast<Index>(lk1.size());
        Eigen::MatrixXd cross(r, r);
        for (Index alpha = 0; alpha < r; ++alpha)
          for (Index beta = 0; beta < r; ++beta) {
            int pos = 0;
            for (Index v : lk1[alpha]) scratch[pos++] = v;
            for (Index v : rk1[beta]) scratch[pos++] = v;
            cross(alpha, beta) = memo.entry(scratch.data());
          }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cross.transpose());
        cod.setThreshold(1e-13);
        a = cod.solve(a.transpose()).transpose().eval();
      }
      TTCore core = TTCore::zeros(rl, dims[k], static_cast<Index>(a.cols()));
      core.right_mut() = a;
      tt.cores.push_back(std::move(core));
    }
    return tt;
  };

  double max_abs_seen = 0.0;
  auto estimate = [&](const TTTensor& tt, int samples) {
    double max_diff = 0.0;
    std::vector<Index> idx(q);
    for (int s = 0; s < samples; ++s) {
      for (int k = 0; k < q; ++k) idx[k] = static_cast<Index>(rng.integer(dims[k]));
      const double exact = oracle.audit_entry(idx.data());
      const double approx = tt.entry(idx);
      max_abs_seen = std::max(max_abs_seen, std::abs(exact));
      max_diff = std::max(max_diff, std::abs(exact - approx));
    }
    return max_abs_seen > 0.0 ? max_diff / max_abs_seen : max_diff;
  };

  // One pass over a two-mode tensor already updates both pivot sets.
  const int min_sweeps = q == 2 ? 1 : opt.min_sweeps;

  TTTensor tt;
  double best_est = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    if (sweep % 2 == 0)
      for (int k = 0; k <= q - 2; ++k) run_supercore(k);
    else
      for (int k = q - 2; k >= 0; --k) run_supercore(k);
    result.sweeps_run = sweep + 1;
    if (sweep + 1 >= min_sweeps) {
      TTTensor candidate = assemble();
      const double est = estimate(candidate, opt.error_samples);
      if (std::getenv("PHMAT_CROSS_DEBUG")) {
        std::fprintf(stderr, "[cross] sweep=%d eps_aca=%.2e est=%.2e ranks:", sweep + 1, eps_aca,
                     est);
        for (int i = 0; i <= candidate.order(); ++i)
          std::fprintf(stderr, " %lld", static_cast<long long>(candidate.rank(i)));
        std::fprintf(stderr, "\n");
      }
      if (est < best_est) {  // keep the best candidate seen
        best_est = est;
        result.est_rel_error = est;
        tt = std::move(candidate);
      }
      if (best_est <= 0.9 * opt.eps || result.rank_capped) break;
      // Tighten by about half the indicated gap; hard floor keeps the rank
      // growth bounded when the estimate stalls.
      const double factor = std::clamp(0.45 * opt.eps / best_est, 0.05, 0.8);
      eps_aca = std::max(eps_aca * factor, 0.005 * opt.eps);
    }
  }
  if (tt.cores.empty()) tt = assemble();
  if (opt.round_after) {
    // Absolute budget tied to the sampled max entry: rounding then cannot
    // spend more than a tenth of the Chebyshev-norm tolerance.
    tt = tt_rounding_absolute(tt, 0.1 * opt.eps * max_abs_seen);
    result.est_rel_error = estimate(tt, opt.error_samples);
  }
  result.converged = result.est_rel_error <= opt.eps;
  result.tt = std::move(tt);
  result.max_aca_resid = *std::max_element(bond_ratio.begin(), bond_ratio.end());
  result.evals = memo.fresh_evals();
  return result;
}

}  // namespace phmat

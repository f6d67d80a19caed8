#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "phmat/common.hpp"

namespace phmat::detail {

struct AcaResult {
  std::vector<Index> rows;  // pivot rows, in selection order
  std::vector<Index> cols;
  std::vector<Eigen::VectorXd> us;  // rank-1 terms: A ~ sum us[l] vs[l]^T
  std::vector<Eigen::VectorXd> vs;
  double final_ratio = 0.0;  // last ||u|| ||v|| / ||A_t||_F estimate
  bool capped = false;

  Index rank() const { return static_cast<Index>(us.size()); }
};

// Pivot pairs replayed ahead of the adaptive search (warm start from an
// existing cross).
struct AcaSeed {
  std::vector<Index> rows;
  std::vector<Index> cols;
};

// Partially pivoted ACA on an implicitly given m x n matrix. Row pivoting by
// max |residual|; stops when ||u_t|| ||v_t|| <= eps * ||A_t||_F (running
// estimate), at the rank cap, or at full rank.
inline AcaResult aca_engine(const std::function<double(Index, Index)>& entry, Index m, Index n,
                            double eps, Index r_max, Rng& rng,
                            const AcaSeed* seed = nullptr) {
  AcaResult out;
  std::vector<char> row_used(m, 0), col_used(n, 0);
  std::vector<double> ratios;
  double frob2 = 0.0;

  std::size_t replay = 0;  // next seed pair to replay
  Index i_star = seed && !seed->rows.empty()
                     ? seed->rows[0]
                     : static_cast<Index>(rng.integer(static_cast<std::uint64_t>(m)));
  const Index t_limit = std::min({m, n, r_max});
  int dead_rows = 0;
  int hits = 0;      // consecutive terms satisfying the stopping rule
  int restarts = 0;  // probe-triggered continuations

  while (out.rank() < t_limit) {
    const bool replaying = seed && replay < seed->rows.size();
    if (replaying) i_star = seed->rows[replay];

    Eigen::VectorXd rho(n);
    for (Index j = 0; j < n; ++j) rho[j] = entry(i_star, j);
    for (std::size_t l = 0; l < out.us.size(); ++l) rho -= out.us[l][i_star] * out.vs[l];
    row_used[i_star] = 1;

    Index j_star = -1;
    double best = -1.0;
    if (replaying) {
      j_star = seed->cols[replay];
      ++replay;
      best = std::abs(rho[j_star]);
      if (col_used[j_star] || best <= 1e-15 * std::sqrt(std::max(frob2, 1.0))) {
        // stale seed direction, already represented; drop it
        if (replay >= seed->rows.size() && out.rank() == 0)
          i_star = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(m)));
        continue;
      }
    } else {
      for (Index j = 0; j < n; ++j)
        if (!col_used[j] && std::abs(rho[j]) > best) {
          best = std::abs(rho[j]);
          j_star = j;
        }
      if (j_star < 0) break;

      if (best == 0.0) {
        // Row already reproduced exactly; probe a few other rows, then stop.
        if (++dead_rows > 3) break;
        Index next = -1;
        for (Index i = 0; i < m; ++i)
          if (!row_used[i]) {
            next = i;
            break;
          }
        if (next < 0) break;
        i_star = next;
        continue;
      }
      dead_rows = 0;
    }

    Eigen::VectorXd gamma(m);
    for (Index i = 0; i < m; ++i) gamma[i] = entry(i, j_star);
    for (std::size_t l = 0; l < out.us.size(); ++l) gamma -= out.vs[l][j_star] * out.us[l];
    col_used[j_star] = 1;

    Eigen::VectorXd u = std::move(gamma);
    Eigen::VectorXd v = rho / rho[j_star];
    double cross = 0.0;
    for (std::size_t l = 0; l < out.us.size(); ++l) cross += out.us[l].dot(u) * out.vs[l].dot(v);
    frob2 += u.squaredNorm() * v.squaredNorm() + 2.0 * cross;
    frob2 = std::max(frob2, 0.0);

    out.rows.push_back(i_star);
    out.cols.push_back(j_star);
    out.us.push_back(std::move(u));
    out.vs.push_back(std::move(v));

    const double term = out.us.back().norm() * out.vs.back().norm();
    out.final_ratio = frob2 > 0.0 ? term / std::sqrt(frob2) : 0.0;
    ratios.push_back(out.final_ratio);
    // A single small term can be a fluke of the sampled row; stop only on
    // two consecutive hits, and then only if randomly probed residual
    // entries agree (partial pivoting can park in a subspace and leave
    // untouched mass elsewhere). On disagreement, restart from the row of
    // the worst probe. Replayed seed terms never count towards stopping.
    hits = !replaying && out.final_ratio <= eps ? hits + 1 : 0;
    if (hits >= 2) {
      const double frob = std::sqrt(frob2);
      double worst = 0.0;
      Index worst_row = -1;
      const int probes = static_cast<int>(std::min<Index>(64, m));
      for (int s = 0; s < probes; ++s) {
        const Index i = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(m)));
        const Index j = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(n)));
        double res = entry(i, j);
        for (std::size_t l = 0; l < out.us.size(); ++l) res -= out.us[l][i] * out.vs[l][j];
        if (std::abs(res) > worst) {
          worst = std::abs(res);
          worst_row = i;
        }
      }
      if (worst > eps * frob && restarts < 4) {
        ++restarts;
        hits = 0;
        i_star = worst_row;
        row_used[i_star] = 0;
        continue;
      }
      while (out.rank() > 1 && ratios.back() <= 1e-3 * eps) {
        out.rows.pop_back();
        out.cols.pop_back();
        out.us.pop_back();
        out.vs.pop_back();
        ratios.pop_back();
      }
      return out;
    }

    if (out.rank() >= t_limit) {
      if (out.rank() >= std::min(m, n))
        out.final_ratio = 0.0;  // full-rank cross reproduces the matrix
      else if (hits == 0)
        out.capped = true;
      return out;
    }

    Index next = -1;
    best = -1.0;
    for (Index i = 0; i < m; ++i)
      if (!row_used[i] && std::abs(out.us.back()[i]) > best) {
        best = std::abs(out.us.back()[i]);
        next = i;
      }
    if (next < 0) break;
    i_star = next;
  }
  return out;
}

}  // namespace phmat::detail

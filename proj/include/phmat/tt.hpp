#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "phmat/common.hpp"
#include "phmat/kernels.hpp"

namespace phmat {

// Order-3 TT-core of shape (r0, m, r1), stored flat in column-major order so
// both unfoldings are zero-copy views:
//   left()  = reshape(G, [r0, m*r1])
//   right() = reshape(G, [r0*m, r1])
struct TTCore {
  Index r0 = 1, m = 1, r1 = 1;
  Eigen::VectorXd data;

  static TTCore zeros(Index r0, Index m, Index r1);

  Index size() const { return r0 * m * r1; }
  double& at(Index a, Index j, Index c) { return data[a + j * r0 + c * r0 * m]; }
  double at(Index a, Index j, Index c) const { return data[a + j * r0 + c * r0 * m]; }

  Eigen::Map<const Eigen::MatrixXd> left() const {
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), r0, m * r1);
  }
  Eigen::Map<const Eigen::MatrixXd> right() const {
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), r0 * m, r1);
  }
  Eigen::Map<Eigen::MatrixXd> right_mut() {
    return Eigen::Map<Eigen::MatrixXd>(data.data(), r0 * m, r1);
  }

  Eigen::MatrixXd slice(Index j) const;  // lateral slice G(:, j, :), r0 x r1

  // Mode-2 contraction sum_j v_j G(:, j, :).
  Eigen::MatrixXd contract_mode2(const Eigen::VectorXd& v) const;
};

struct TTTensor {
  std::vector<TTCore> cores;

  int order() const { return static_cast<int>(cores.size()); }
  Index mode(int i) const { return cores[i].m; }
  Index rank(int i) const;  // r_i for i in [0, order()]
  Index max_rank() const;
  std::vector<Index> mode_sizes() const;
  Index storage_entries() const;
  double entry(std::span<const Index> idx) const;
  void validate() const;  // rank chain consistency, r_0 = r_q = 1
};

// Dense tensor in little-endian (first index fastest) flat layout; the test
// oracle companion of TTTensor.
struct DenseTensor {
  std::vector<Index> dims;
  Eigen::VectorXd data;

  static DenseTensor zeros(std::vector<Index> dims);

  Index size() const { return data.size(); }
  Index flat(std::span<const Index> idx) const;
  double& at(std::span<const Index> idx) { return data[flat(idx)]; }
  double at(std::span<const Index> idx) const { return data[flat(idx)]; }
};

// Mode-k contraction with a matrix M (m_new x dims[k]).
DenseTensor mode_k_product(const DenseTensor& x, int k, const Eigen::MatrixXd& m);

// Entry function over a tensor shape. Calls are deterministic; counted calls
// tally kernel work on `counter`, audit calls (error probes) on `audit`.
class EntryOracle {
 public:
  using Fn = std::function<double(const Index*)>;

  EntryOracle(std::vector<Index> dims, Fn fn, KernelEvalCounter* counter = nullptr,
              KernelEvalCounter* audit = nullptr)
      : dims_(std::move(dims)), fn_(std::move(fn)), counter_(counter), audit_(audit) {}

  int order() const { return static_cast<int>(dims_.size()); }
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const;

  double operator()(const Index* idx) const {
    if (counter_) counter_->add();
    return fn_(idx);
  }
  double audit_entry(const Index* idx) const {
    if (audit_) audit_->add();
    return fn_(idx);
  }

 private:
  std::vector<Index> dims_;
  Fn fn_;
  KernelEvalCounter* counter_;
  KernelEvalCounter* audit_;
};

EntryOracle dense_oracle(const DenseTensor& x);  // test helper; x must outlive it

struct TTCrossOptions {
  double eps = 1e-5;
  Index r_max = 120;
  int min_sweeps = 2;  // full sweeps before the first convergence check
  int max_sweeps = 12;
  int error_samples = 1000;  // audit-path samples for the Chebyshev-norm estimate
  std::uint64_t seed = 0;
  bool round_after = true;
};

struct TTCrossResult {
  TTTensor tt;
  bool rank_capped = false;
  bool converged = true;        // heuristic estimate met eps
  double est_rel_error = 0.0;   // sampled max|error| / max|entry|
  double max_aca_resid = 0.0;   // worst final ACA stopping ratio over supercores
  std::uint64_t evals = 0;      // unique counted entry evaluations
  int sweeps_run = 0;
};

// TT-cross: alternating left/right sweeps of partially pivoted ACA over the
// supercores, initialized from a single random multi-index, followed by a
// TT-rounding pass at eps. Entries are memoized, so repeated requests cost
// one evaluation.
TTCrossResult tt_cross(const EntryOracle& oracle, const TTCrossOptions& opt);

// TT-rounding (orthogonalize right-to-left, truncate by SVD left-to-right);
// relative Frobenius error bounded by eps.
TTTensor tt_rounding(const TTTensor& tt, double eps);

// Same sweep with an absolute Frobenius budget. tt_cross uses this with a
// budget of eps times the sampled max entry, which keeps rounding from
// spoiling the Chebyshev-norm target on tensors whose Frobenius norm is far
// above their max entry.
TTTensor tt_rounding_absolute(const TTTensor& tt, double budget);

// Dense reconstruction; refuses tensors above the size guard.
DenseTensor tt_full(const TTTensor& tt, Index guard = 10'000'000);

}  // namespace phmat

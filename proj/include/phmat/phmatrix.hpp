#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phmat/chebyshev.hpp"
#include "phmat/farfield.hpp"
#include "phmat/geometry.hpp"
#include "phmat/kernels.hpp"
#include "phmat/nearfield.hpp"

namespace phmat {

enum class NearMode { TT, Direct };

struct PHConfig {
  KernelSpec spec;
  int l_max = 2;
  int p_s = 15;
  int p_theta = 27;
  double eps = 1e-5;
  double eta = 0.0;  // <= 0 selects the default sqrt(d)
  Index r_max_far = 120;
  Index r_max_near = 150;
  std::uint64_t seed = 0;
  NearMode near_mode = NearMode::TT;
  bool translation_cache = true;
  int threads = 0;  // 0 = PHMAT_THREADS / hardware

  double resolved_eta(int d) const;
};

struct BuildStats {
  std::uint64_t ff_kernel_evals = 0;
  std::uint64_t nf_kernel_evals = 0;
  double ff_seconds = 0.0;
  double nf_seconds = 0.0;
  double tree_seconds = 0.0;
  bool any_rank_capped = false;
};

// Parametric H-matrix: per far block S_b, T_b plus shared middle TT cores;
// per near block the TT-compressed parameter slab (or nothing in Direct
// near mode, where the online stage evaluates the kernel).
struct ParametricHMatrix {
  PHConfig config;
  std::shared_ptr<const ClusterTree> tree;
  BlockClusterTree blocks;
  ThetaGrids theta_grids;
  std::vector<FarBlockH> far;                           // parallel to blocks.far
  std::vector<int> far_key;                             // key id per far block
  std::vector<std::shared_ptr<const CouplingTT>> couplings;  // per key
  std::vector<NearBlockTT> near;                        // parallel to blocks.near (TT mode)
  BuildStats stats;

  Index n() const { return tree->n_points(); }
  int d() const { return tree->dim(); }
};

// Parametric H^2-matrix: nested cluster basis (leaf factors + transfers),
// full coupling TT per translation class, near blocks as in the H form.
struct ParametricH2Matrix {
  PHConfig config;
  std::shared_ptr<const ClusterTree> tree;
  BlockClusterTree blocks;
  ThetaGrids theta_grids;
  NestedClusterBasis basis;
  std::vector<FarBlockH2> far;
  std::vector<int> far_key;
  std::vector<std::shared_ptr<const CouplingTT>> couplings;
  std::vector<NearBlockTT> near;
  BuildStats stats;

  Index n() const { return tree->n_points(); }
  int d() const { return tree->dim(); }
};

ParametricHMatrix offline_h(std::shared_ptr<const ClusterTree> tree, const PHConfig& config,
                            StageCounters& counters);
ParametricH2Matrix offline_h2(std::shared_ptr<const ClusterTree> tree, const PHConfig& config,
                              StageCounters& counters);

// Convenience overloads that build the cluster tree over the unit box.
ParametricHMatrix offline_h(const Eigen::MatrixXd& points, const PHConfig& config,
                            StageCounters& counters);
ParametricH2Matrix offline_h2(const Eigen::MatrixXd& points, const PHConfig& config,
                              StageCounters& counters);

// Minimal MVM interface shared by instantiated matrices and baselines, so one
// error/timing protocol covers every method.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index rows() const = 0;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& x) const = 0;
};

struct InstantiatedHMatrix : LinearOperator {
  std::shared_ptr<const ParametricHMatrix> parent;
  std::vector<double> theta;
  std::vector<Eigen::MatrixXd> far_h;   // H_b(theta) per far block
  std::vector<Eigen::MatrixXd> near_d;  // dense D_b(theta) per near block

  Index rows() const override { return parent->n(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;  // mvm_h
  Eigen::MatrixXd to_dense(Index guard = 8192) const;

  Index online_entries_far() const;
  Index online_entries_near() const;
};

struct InstantiatedH2Matrix : LinearOperator {
  std::shared_ptr<const ParametricH2Matrix> parent;
  std::vector<double> theta;
  std::vector<Eigen::MatrixXd> far_h;
  std::vector<Eigen::MatrixXd> near_d;

  Index rows() const override { return parent->n(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;  // mvm_h2 (3 stages)
  Eigen::MatrixXd to_dense(Index guard = 8192) const;

  Index online_entries_far() const;
  Index online_entries_near() const;
};

// Online stage: instantiates every H_b(theta) and every dense near block.
// Zero kernel evaluations in TT near mode; Direct near mode evaluates the
// kernel once per near entry and charges `counter`.
InstantiatedHMatrix instantiate(std::shared_ptr<const ParametricHMatrix> pm,
                                std::span<const double> theta,
                                KernelEvalCounter* counter = nullptr);
InstantiatedH2Matrix instantiate(std::shared_ptr<const ParametricH2Matrix> pm,
                                 std::span<const double> theta,
                                 KernelEvalCounter* counter = nullptr);

// Structure metrics shared by the parametric and instantiated views.
struct StructureMetrics {
  Index n = 0;
  Index storage_entries = 0;  // offline parametric payload
  double storage_gb = 0.0;    // at 8 bytes per entry
  double nf_ratio = 0.0;      // online near entries / n^2
  double ff_ratio = 0.0;      // online far entries / n^2
  double coupling_ratio = 0.0;  // H^2 only
  double rank = 0.0;          // mean over far blocks of max(r_d, r_{d+dt})
  Index c_sp = 0;
  Index m_a = 0;  // unique coupling tensors
  Index n_far = 0;
  Index n_near = 0;
};

StructureMetrics metrics(const ParametricHMatrix& pm);
StructureMetrics metrics(const ParametricH2Matrix& pm);

// Versioned binary artifact: header (config, grids, leaf partition), then
// per-block payloads, all little-endian 64-bit floats.
void save_parametric(const ParametricHMatrix& pm, const std::string& path);
void save_parametric(const ParametricH2Matrix& pm, const std::string& path);
ParametricHMatrix load_parametric_h(const std::string& path);
ParametricH2Matrix load_parametric_h2(const std::string& path);
bool artifact_is_h2(const std::string& path);

}  // namespace phmat

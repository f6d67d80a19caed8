#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "phmat/chebyshev.hpp"
#include "phmat/geometry.hpp"
#include "phmat/kernels.hpp"
#include "phmat/tt.hpp"

namespace phmat {

// One Chebyshev grid per parameter dimension, shared by the whole matrix
// (the parameter box is global).
struct ThetaGrids {
  std::vector<ChebGrid1D> grids;

  int d_theta() const { return static_cast<int>(grids.size()); }
  int p_theta() const { return grids.empty() ? 0 : grids[0].p; }
};

ThetaGrids make_theta_grids(const KernelSpec& spec, int p_theta);

// Cardinal-value vectors v_k(theta_k), each of length p_theta and summing
// to one. theta outside the box -> std::domain_error.
std::vector<Eigen::VectorXd> parametric_vectors(const ThetaGrids& grids,
                                                std::span<const double> theta);

// TT approximation of the coupling tensor M_b (order 2d + d_theta) plus
// build metadata.
struct CouplingTT {
  TTTensor tt;
  int d = 0;
  int d_theta = 0;
  bool rank_capped = false;
  double est_rel_error = 0.0;
  std::uint64_t evals = 0;  // kernel evaluations spent by TT-cross

  Index rank_left() const { return tt.rank(d); }                // r_{b,d}
  Index rank_right() const { return tt.rank(d + d_theta); }     // r_{b,d+d_theta}
};

// Same-level far blocks whose boxes differ by a pure translation share one
// coupling tensor; the key is the integer grid offset between box corners.
struct TranslationKey {
  int level = 0;
  std::array<std::int64_t, kMaxDim> offset{};

  bool operator==(const TranslationKey&) const = default;
};

struct TranslationKeyHash {
  std::size_t operator()(const TranslationKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.level);
    for (int i = 0; i < kMaxDim; ++i) h = mix_seed(h, static_cast<std::uint64_t>(k.offset[i]));
    return static_cast<std::size_t>(h);
  }
};

TranslationKey translation_key(const ClusterTree& tree, Block b);

// Entry oracle for M_b: the kernel at Chebyshev node triples over
// B_sigma x B_theta x B_tau. Coordinate differences are computed from the
// integer box offset plus in-box node offsets, so entries are bitwise equal
// across a translation class.
EntryOracle coupling_oracle(const ClusterTree& tree, Block b, const KernelSpec& spec, int p_s,
                            const ThetaGrids& grids, KernelEvalCounter* counter,
                            KernelEvalCounter* audit = nullptr);

struct FarCrossOptions {
  double eps = 1e-5;
  Index r_max = 120;
  std::uint64_t seed = 0;
};

// TT-cross on M_b. The cross seed derives from the translation key, so every
// block of a class reproduces the representative's cores bit for bit.
CouplingTT build_coupling(const ClusterTree& tree, Block b, const KernelSpec& spec, int p_s,
                          const ThetaGrids& grids, const FarCrossOptions& opt,
                          KernelEvalCounter* counter, KernelEvalCounter* audit = nullptr);

// Far block in parametric H form: S_b = U_sigma L_b and T_b = U_tau R_b, with
// the middle cores referenced from the shared coupling.
struct FarBlockH {
  Eigen::MatrixXd s;  // n_sigma x r_{b,d}
  Eigen::MatrixXd t;  // n_tau x r_{b,d+d_theta}
  std::shared_ptr<const CouplingTT> coupling;
};

// Far block in parametric H^2 form: the full coupling TT, nothing else.
struct FarBlockH2 {
  std::shared_ptr<const CouplingTT> coupling;
};

// Offline phase 3: assembles S_b and T_b through interleaved face-splitting
// products and core contractions, never forming U_sigma or L_b densely.
FarBlockH pttk_offline(const ClusterTree& tree, Block b, int p_s,
                       std::shared_ptr<const CouplingTT> coupling);

// Online stage: H_b(theta) as the product of mode-2 contracted middle cores.
// Zero kernel evaluations.
Eigen::MatrixXd pttk_online(const CouplingTT& coupling, const std::vector<Eigen::VectorXd>& v);

// Explicit L_b (p_s^d x r_{b,d}) and R_b (p_s^d x r_{b,d+d_theta}); test
// oracle and H^2 multiplication-stage reference.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_L_R(const CouplingTT& coupling,
                                                         Index guard = 2'000'000);

// Multiplication stage of the modified H^2 MVM for one far block: applies
// C_b(theta) = L_b H_b(theta) R_b^T to xhat via reshapes against the stored
// TT cores (vec-kron identity), never materializing L_b or R_b.
Eigen::VectorXd coupling_apply(const CouplingTT& coupling, const Eigen::MatrixXd& h,
                               const Eigen::VectorXd& xhat);

}  // namespace phmat

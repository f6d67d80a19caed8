#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phmat/baselines.hpp"
#include "phmat/phmatrix.hpp"

namespace phmat {

enum class Method { ParamH, ParamH2, HAca, H2Hca };

Method method_from_id(std::string_view id);  // "param-h","param-h2","h-aca","h2-hca"
std::string method_id(Method m);

struct ExperimentConfig {
  std::string kernel = "se";
  Index n = 4096;
  int d = 3;
  int l_max = 2;
  int p_s = 15;
  int p_theta = 27;
  double eps = 1e-5;
  double eta = 0.0;  // <= 0 selects sqrt(d)
  std::vector<Interval> theta_box;  // empty selects the kernel default
  Method method = Method::ParamH;
  std::uint64_t seed = 0;
  NearMode near_mode = NearMode::TT;
  bool translation_cache = true;
  Index r_max_far = 120;
  Index r_max_near = 150;
  int theta_samples = 30;
  int probe_rows = 200;
  int online_reps = 3;  // online stage timed as the median of this many runs
  int threads = 0;
  bool serial = false;
  bool dry_run = false;
  std::string out_csv;
  std::string out_json;

  KernelSpec resolved_spec() const;
  PHConfig ph_config() const;
  void validate() const;  // reports offending field names
  std::string describe() const;
};

// key = value lines, '#' comments. Unknown keys are an error.
ExperimentConfig config_from_file(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct MetricsRecord {
  std::string kernel;
  Index n = 0;
  std::string method;
  StructureMetrics structure;
  double offline_seconds = 0.0;
  double nf_seconds = 0.0;      // mean online near-field time per theta
  double ff_seconds = 0.0;      // mean online far-field time per theta
  double online_seconds = 0.0;  // nf + ff
  double mvm_seconds = 0.0;     // mean MVM time over the theta samples
  double error = 0.0;
  std::uint64_t ker_offline = 0;
  std::uint64_t ker_online = 0;
  std::uint64_t ker_baseline = 0;
  std::uint64_t ker_audit = 0;

  static std::string csv_header();
  std::string csv_row() const;
  std::string json() const;
};

// n points uniform in [0,1]^d, deterministic under seed.
Eigen::MatrixXd generate_points(Index n, int d, std::uint64_t seed);

// Mean over the sampled thetas of || [K x]_J - [K~ x]_J || / || [K x]_J ||,
// with |J| = min(probe_rows, n) rows sampled without replacement and one
// fixed x. Exact rows are evaluated densely and charged to the audit counter.
double estimate_error(const KernelSpec& spec, const Eigen::MatrixXd& points,
                      const std::vector<std::vector<double>>& thetas,
                      const std::function<const LinearOperator&(std::size_t)>& op_for_theta,
                      Index probe_rows, std::uint64_t seed, KernelEvalCounter& audit,
                      int threads = 0);

MetricsRecord run_experiment(const ExperimentConfig& cfg);

void append_csv(const std::string& path, const MetricsRecord& rec);
void append_json(const std::string& path, const MetricsRecord& rec);

}  // namespace phmat

#include "phmat/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace phmat {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

Method method_from_id(std::string_view id) {
  if (id == "param-h") return Method::ParamH;
  if (id == "param-h2") return Method::ParamH2;
  if (id == "h-aca") return Method::HAca;
  if (id == "h2-hca") return Method::H2Hca;
  throw std::invalid_argument("unknown method: " + std::string(id));
}

std::string method_id(Method m) {
  switch (m) {
    case Method::ParamH: return "param-h";
    case Method::ParamH2: return "param-h2";
    case Method::HAca: return "h-aca";
    case Method::H2Hca: return "h2-hca";
  }
  return "?";
}

KernelSpec ExperimentConfig::resolved_spec() const {
  KernelSpec spec = default_kernel_spec(kernel_family_from_id(kernel));
  if (!theta_box.empty()) spec.theta_box = theta_box;
  spec.validate();
  return spec;
}

PHConfig ExperimentConfig::ph_config() const {
  PHConfig c;
  c.spec = resolved_spec();
  c.l_max = l_max;
  c.p_s = p_s;
  c.p_theta = p_theta;
  c.eps = eps;
  c.eta = eta;
  c.r_max_far = r_max_far;
  c.r_max_near = r_max_near;
  c.seed = seed;
  c.near_mode = near_mode;
  c.translation_cache = translation_cache;
  c.threads = serial ? 1 : threads;
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config field '" + field + "': " + why);
  };
  resolved_spec();  // validates kernel + theta_box
  if (n < 1) fail("n", "must be >= 1");
  if (d < 1 || d > kMaxDim) fail("d", "must be 1..3");
  if (l_max < 0) fail("lmax", "must be >= 0");
  if (p_s < 1) fail("ps", "must be >= 1");
  if (p_theta < 1) fail("ptheta", "must be >= 1");
  if (!(eps > 0.0)) fail("eps", "must be positive");
  if (r_max_far < 1) fail("rmax_far", "must be >= 1");
  if (r_max_near < 1) fail("rmax_near", "must be >= 1");
  if (theta_samples < 1) fail("theta_samples", "must be >= 1");
  if (probe_rows < 1) fail("probe_rows", "must be >= 1");
  if (online_reps < 1) fail("online_reps", "must be >= 1");
}

std::string ExperimentConfig::describe() const {
  std::ostringstream os;
  const KernelSpec spec = resolved_spec();
  os << "kernel=" << kernel << " method=" << method_id(method) << " n=" << n << " d=" << d
     << " lmax=" << l_max << " ps=" << p_s << " ptheta=" << p_theta << " eps=" << eps
     << " eta=" << (eta > 0 ? eta : std::sqrt(double(d))) << " seed=" << seed
     << " near_mode=" << (near_mode == NearMode::TT ? "tt" : "direct")
     << " cache=" << (translation_cache ? "on" : "off") << " theta_box=";
  for (std::size_t i = 0; i < spec.theta_box.size(); ++i) {
    if (i) os << ";";
    os << spec.theta_box[i].lo << "," << spec.theta_box[i].hi;
  }
  return os.str();
}

void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto as_ll = [&] { return std::stoll(value); };
  auto as_d = [&] { return std::stod(value); };
  auto as_b = [&] {
    if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "off" || value == "no") return false;
    throw std::invalid_argument("config field '" + key + "': expected a boolean, got " + value);
  };
  if (key == "kernel") cfg.kernel = value;
  else if (key == "n") cfg.n = as_ll();
  else if (key == "d") cfg.d = static_cast<int>(as_ll());
  else if (key == "lmax") cfg.l_max = static_cast<int>(as_ll());
  else if (key == "ps") cfg.p_s = static_cast<int>(as_ll());
  else if (key == "ptheta") cfg.p_theta = static_cast<int>(as_ll());
  else if (key == "eps") cfg.eps = as_d();
  else if (key == "eta") cfg.eta = as_d();
  else if (key == "method") cfg.method = method_from_id(value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_ll());
  else if (key == "near_mode") {
    if (value == "tt") cfg.near_mode = NearMode::TT;
    else if (value == "direct") cfg.near_mode = NearMode::Direct;
    else throw std::invalid_argument("config field 'near_mode': expected tt or direct");
  } else if (key == "cache") cfg.translation_cache = as_b();
  else if (key == "rmax_far") cfg.r_max_far = as_ll();
  else if (key == "rmax_near") cfg.r_max_near = as_ll();
  else if (key == "theta_samples") cfg.theta_samples = static_cast<int>(as_ll());
  else if (key == "probe_rows") cfg.probe_rows = static_cast<int>(as_ll());
  else if (key == "online_reps") cfg.online_reps = static_cast<int>(as_ll());
  else if (key == "threads") cfg.threads = static_cast<int>(as_ll());
  else if (key == "serial") cfg.serial = as_b();
  else if (key == "out") cfg.out_csv = value;
  else if (key == "json") cfg.out_json = value;
  else if (key == "theta_box") {
    // "lo,hi" pairs separated by ';'
    cfg.theta_box.clear();
    std::stringstream ss(value);
    std::string pair;
    while (std::getline(ss, pair, ';')) {
      const auto comma = pair.find(',');
      if (comma == std::string::npos)
        throw std::invalid_argument("config field 'theta_box': expected lo,hi pairs");
      cfg.theta_box.push_back(
          {std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1))});
    }
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

ExperimentConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  ExperimentConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error("malformed config line: " + line);
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

Eigen::MatrixXd generate_points(Index n, int d, std::uint64_t seed) {
  PHMAT_CHECK(n >= 1, "generate_points: n must be >= 1");
  Rng rng(mix_seed(seed, 0x706f696eULL));
  Eigen::MatrixXd points(n, d);
  for (Index i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) points(i, k) = rng.uniform();
  return points;
}

double estimate_error(const KernelSpec& spec, const Eigen::MatrixXd& points,
                      const std::vector<std::vector<double>>& thetas,
                      const std::function<const LinearOperator&(std::size_t)>& op_for_theta,
                      Index probe_rows, std::uint64_t seed, KernelEvalCounter& audit,
                      int threads) {
  const Index n = points.rows();
  const int d = static_cast<int>(points.cols());

  // J: probe rows without replacement; x: one fixed vector per (n, seed).
  Rng rng(mix_seed(seed, 0x6572726fULL));
  std::vector<Index> all(n);
  for (Index i = 0; i < n; ++i) all[i] = i;
  const Index m = std::min<Index>(probe_rows, n);
  for (Index i = 0; i < m; ++i)
    std::swap(all[i], all[i + static_cast<Index>(rng.integer(n - i))]);
  all.resize(m);
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.uniform();

  double total = 0.0;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    const std::vector<double>& theta = thetas[s];
    const LinearOperator& op = op_for_theta(s);
    const Eigen::VectorXd approx = op.apply(x);

    Eigen::VectorXd exact_rows(m);
    parallel_for(
        m,
        [&](Index j) {
          const Index row = all[j];
          double acc = 0.0;
          for (Index l = 0; l < n; ++l) {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) {
              const double delta = points(row, k) - points(l, k);
              r2 += delta * delta;
            }
            acc += kernel_value(spec, std::sqrt(r2), theta.data()) * x[l];
          }
          audit.add(static_cast<std::uint64_t>(n));
          exact_rows[j] = acc;
        },
        threads);

    double num = 0.0, den = 0.0;
    for (Index j = 0; j < m; ++j) {
      const double diff = exact_rows[j] - approx[all[j]];
      num += diff * diff;
      den += exact_rows[j] * exact_rows[j];
    }
    total += den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  return total / static_cast<double>(thetas.size());
}

MetricsRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const KernelSpec spec = cfg.resolved_spec();
  const int threads = cfg.serial ? 1 : cfg.threads;

  MetricsRecord rec;
  rec.kernel = cfg.kernel;
  rec.n = cfg.n;
  rec.method = method_id(cfg.method);

  StageCounters counters;
  const Eigen::MatrixXd points = generate_points(cfg.n, cfg.d, cfg.seed);
  auto tree = std::make_shared<ClusterTree>(points, unit_box(cfg.d), cfg.l_max);

  // Shared theta samples: the same draws feed the error estimate and the
  // MVM timing for every method.
  Rng trng(mix_seed(cfg.seed, 0x74686574ULL));
  std::vector<std::vector<double>> thetas(cfg.theta_samples);
  for (auto& th : thetas) {
    th.resize(spec.d_theta());
    for (int k = 0; k < spec.d_theta(); ++k)
      th[k] = trng.uniform(spec.theta_box[k].lo, spec.theta_box[k].hi);
  }

  const double eta = cfg.eta > 0 ? cfg.eta : std::sqrt(double(cfg.d));

  std::shared_ptr<const ParametricHMatrix> ph;
  std::shared_ptr<const ParametricH2Matrix> ph2;
  if (cfg.method == Method::ParamH || cfg.method == Method::ParamH2) {
    const double t0 = now_seconds();
    if (cfg.method == Method::ParamH)
      ph = std::make_shared<ParametricHMatrix>(offline_h(tree, cfg.ph_config(), counters));
    else
      ph2 = std::make_shared<ParametricH2Matrix>(offline_h2(tree, cfg.ph_config(), counters));
    rec.offline_seconds = now_seconds() - t0;
    rec.structure = ph ? metrics(*ph) : metrics(*ph2);
  }

  // One pass per sampled theta: instantiate (timed), one timed MVM, one
  // error-probe contribution, then the operator is dropped. Parametric
  // instantiation is timed as the median of online_reps repetitions; the
  // far split is re-timed alone because instantiation runs both parts in
  // one call. Baselines charge their whole per-theta build as online work.
  Rng xrng(mix_seed(cfg.seed, 0x6d766d78ULL));
  Eigen::VectorXd xt(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) xt[i] = xrng.uniform(-1.0, 1.0);

  double nf_total = 0.0, ff_total = 0.0, mvm_total = 0.0, err_total = 0.0;
  double sink = 0.0;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    const std::vector<double>& th = thetas[s];
    std::unique_ptr<LinearOperator> op;
    switch (cfg.method) {
      case Method::ParamH:
      case Method::ParamH2: {
        const int reps = std::min(cfg.online_reps, 3);
        std::array<double, 3> nf{}, ff{};
        for (int rep = 0; rep < reps; ++rep) {
          const double t0 = now_seconds();
          if (cfg.method == Method::ParamH)
            op = std::make_unique<InstantiatedHMatrix>(instantiate(ph, th, &counters.online));
          else
            op = std::make_unique<InstantiatedH2Matrix>(instantiate(ph2, th, &counters.online));
          const double t1 = now_seconds();
          const auto& grids = ph ? ph->theta_grids : ph2->theta_grids;
          const auto& couplings = ph ? ph->couplings : ph2->couplings;
          const std::vector<Eigen::VectorXd> v = parametric_vectors(grids, th);
          const double t2 = now_seconds();
          for (const auto& c : couplings) sink += pttk_online(*c, v).sum();
          const double t3 = now_seconds();
          ff[rep] = t3 - t2;
          nf[rep] = std::max(0.0, (t1 - t0) - ff[rep]);
        }
        nf_total += reps >= 3 ? median3(nf[0], nf[1], nf[2]) : nf[reps - 1];
        ff_total += reps >= 3 ? median3(ff[0], ff[1], ff[2]) : ff[reps - 1];
        break;
      }
      case Method::HAca: {
        auto ha = std::make_unique<HAcaMatrix>(tree, build_block_cluster_tree(*tree, eta), spec,
                                               th, cfg.eps, cfg.r_max_far, &counters.baseline,
                                               threads);
        nf_total += ha->near_build_seconds();
        ff_total += ha->far_build_seconds();
        if (s + 1 == thetas.size()) {
          rec.structure.n = cfg.n;
          rec.structure.rank = ha->mean_far_rank();
          rec.structure.c_sp = ha->blocks().c_sp;
          rec.structure.n_far = static_cast<Index>(ha->blocks().far.size());
          rec.structure.n_near = static_cast<Index>(ha->blocks().near.size());
        }
        op = std::move(ha);
        break;
      }
      case Method::H2Hca: {
        auto hc = std::make_unique<H2HcaMatrix>(tree, build_block_cluster_tree(*tree, eta), spec,
                                                th, cfg.p_s, cfg.eps, cfg.r_max_far,
                                                &counters.baseline, threads);
        nf_total += hc->near_build_seconds();
        ff_total += hc->far_build_seconds();
        if (s + 1 == thetas.size()) {
          rec.structure.n = cfg.n;
          rec.structure.rank = hc->mean_far_rank();
          rec.structure.coupling_ratio = hc->coupling_ratio();
          rec.structure.c_sp = hc->blocks().c_sp;
          rec.structure.n_far = static_cast<Index>(hc->blocks().far.size());
          rec.structure.n_near = static_cast<Index>(hc->blocks().near.size());
        }
        op = std::move(hc);
        break;
      }
    }

    const double tm0 = now_seconds();
    sink += op->apply(xt).sum();
    mvm_total += now_seconds() - tm0;

    const std::vector<std::vector<double>> one_theta{th};
    err_total += estimate_error(
        spec, points, one_theta, [&](std::size_t) -> const LinearOperator& { return *op; },
        cfg.probe_rows, cfg.seed, counters.audit, threads);
  }
  if (!std::isfinite(sink)) throw std::runtime_error("run_experiment: non-finite MVM output");
  rec.nf_seconds = nf_total / static_cast<double>(thetas.size());
  rec.ff_seconds = ff_total / static_cast<double>(thetas.size());
  rec.online_seconds = rec.nf_seconds + rec.ff_seconds;
  rec.mvm_seconds = mvm_total / static_cast<double>(thetas.size());
  rec.error = err_total / static_cast<double>(thetas.size());

  rec.ker_offline = counters.offline.value();
  rec.ker_online = counters.online.value();
  rec.ker_baseline = counters.baseline.value();
  rec.ker_audit = counters.audit.value();

  if (!cfg.out_csv.empty()) append_csv(cfg.out_csv, rec);
  if (!cfg.out_json.empty()) append_json(cfg.out_json, rec);
  return rec;
}

std::string MetricsRecord::csv_header() {
  return "Kernel,n,Method,Storage (GB),Storage (entries),Offline Time (s),NF Time (s),"
         "FF Time (s),Online Time (s),NF Ratio,FF Ratio,Coupling Ratio,Rank,MVM Time (s),"
         "Error,C_sp,M_A,Far Blocks,Near Blocks,Kernel Evals Offline,Kernel Evals Online,"
         "Kernel Evals Baseline,Kernel Evals Audit";
}

std::string MetricsRecord::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << kernel << ',' << n << ',' << method << ',' << structure.storage_gb << ','
     << structure.storage_entries << ',' << offline_seconds << ',' << nf_seconds << ','
     << ff_seconds << ',' << online_seconds << ',' << structure.nf_ratio << ','
     << structure.ff_ratio << ',' << structure.coupling_ratio << ',' << structure.rank << ','
     << mvm_seconds << ',' << error << ',' << structure.c_sp << ',' << structure.m_a << ','
     << structure.n_far << ',' << structure.n_near << ',' << ker_offline << ',' << ker_online
     << ',' << ker_baseline << ',' << ker_audit;
  return os.str();
}

std::string MetricsRecord::json() const {
  nlohmann::json j;
  j["kernel"] = kernel;
  j["n"] = n;
  j["method"] = method;
  j["storage_gb"] = structure.storage_gb;
  j["storage_entries"] = structure.storage_entries;
  j["offline_time_s"] = offline_seconds;
  j["online"] = {{"nf_time_s", nf_seconds},
                 {"ff_time_s", ff_seconds},
                 {"online_time_s", online_seconds},
                 {"mvm_time_s", mvm_seconds}};
  j["ratios"] = {{"nf_ratio", structure.nf_ratio},
                 {"ff_ratio", structure.ff_ratio},
                 {"coupling_ratio", structure.coupling_ratio}};
  j["rank"] = structure.rank;
  j["error"] = error;
  j["tree"] = {{"c_sp", structure.c_sp},
               {"m_a", structure.m_a},
               {"far_blocks", structure.n_far},
               {"near_blocks", structure.n_near}};
  j["kernel_evals"] = {{"offline", ker_offline},
                       {"online", ker_online},
                       {"baseline", ker_baseline},
                       {"audit", ker_audit}};
  return j.dump(2);
}

void append_csv(const std::string& path, const MetricsRecord& rec) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open CSV output: " + path);
  if (fresh) out << MetricsRecord::csv_header() << '\n';
  out << rec.csv_row() << '\n';
}

void append_json(const std::string& path, const MetricsRecord& rec) {
  nlohmann::json arr = nlohmann::json::array();
  {
    std::ifstream in(path);
    if (in.good()) {
      try {
        in >> arr;
        if (!arr.is_array()) arr = nlohmann::json::array();
      } catch (...) {
        arr = nlohmann::json::array();
      }
    }
  }
  arr.push_back(nlohmann::json::parse(rec.json()));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open JSON output: " + path);
  out << arr.dump(2) << '\n';
}

}  // namespace phmat

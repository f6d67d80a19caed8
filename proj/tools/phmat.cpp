#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phmat/harness.hpp"

namespace {

using phmat::ExperimentConfig;

// Wires the experiment-config keys as CLI flags; values route through
// apply_config_line so the file format and the flags stay in sync.
struct ConfigCli {
  std::string config_path;

  void attach(CLI::App* app, ExperimentConfig& cfg) {
    app->add_option("--config", config_path, "key = value config file");
    auto opt = [app, &cfg](const char* flag, const char* key, const char* help) {
      app->add_option_function<std::string>(
          flag, [&cfg, key](const std::string& v) { phmat::apply_config_line(cfg, key, v); },
          help);
    };
    opt("--kernel", "kernel", "kernel id: e, tps, se, mc, mn");
    opt("--n", "n", "number of points");
    opt("--d", "d", "spatial dimension (1-3)");
    opt("--lmax", "lmax", "cluster tree depth");
    opt("--ps", "ps", "spatial Chebyshev nodes");
    opt("--ptheta", "ptheta", "parameter Chebyshev nodes");
    opt("--eps", "eps", "TT-cross/ACA tolerance");
    opt("--eta", "eta", "admissibility parameter (default sqrt(d))");
    opt("--method", "method", "param-h, param-h2, h-aca, h2-hca");
    opt("--seed", "seed", "experiment seed");
    opt("--near-mode", "near_mode", "near-field online path: tt or direct");
    opt("--cache", "cache", "translation cache on/off");
    opt("--rmax-far", "rmax_far", "far-field TT rank cap");
    opt("--rmax-near", "rmax_near", "near-field TT rank cap");
    opt("--theta-samples", "theta_samples", "number of sampled parameters");
    opt("--probe-rows", "probe_rows", "rows probed by the error estimate");
    opt("--threads", "threads", "worker cap (0 = PHMAT_THREADS or hardware)");
    opt("--serial", "serial", "force single-threaded deterministic run");
    opt("--theta-box", "theta_box", "parameter box, lo,hi pairs joined by ';'");
    opt("--out", "out", "CSV output path (appended)");
    opt("--json", "json", "JSON output path");
  }
};

// Applies command-line flags on top of a file-loaded config by re-parsing
// the raw arguments against it.
void reapply_flags(ExperimentConfig& cfg, int argc, char** argv, bool* dry_run,
                   std::string* artifact) {
  CLI::App reparse{"phmat"};
  reparse.allow_extras();
  ConfigCli cli;
  cli.attach(&reparse, cfg);
  if (dry_run) reparse.add_flag("--dry-run", *dry_run);
  if (artifact) reparse.add_option("--artifact", *artifact);
  std::vector<std::string> args(argv + 2, argv + argc);
  std::reverse(args.begin(), args.end());
  reparse.parse(args);
}

std::vector<double> parse_theta(const std::string& arg) {
  std::vector<double> theta;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) theta.push_back(std::stod(tok));
  if (theta.empty()) throw std::invalid_argument("--theta: no values given");
  return theta;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parametric hierarchical kernel matrix toolkit"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  ConfigCli run_cli, build_cli;
  std::string artifact_path, theta_arg, matvec_in, matvec_out, metrics_out;
  bool dry_run = false;

  CLI::App* run = app.add_subcommand("run", "offline build + online loop + metrics row");
  run_cli.attach(run, cfg);
  run->add_flag("--dry-run", dry_run, "print the resolved config and exit");

  ExperimentConfig bcfg;
  CLI::App* build = app.add_subcommand("build", "offline stage only; writes a binary artifact");
  build_cli.attach(build, bcfg);
  build->add_option("--artifact", artifact_path, "output artifact path");

  CLI::App* inst = app.add_subcommand("instantiate", "online stage from a stored artifact");
  inst->add_option("--artifact", artifact_path, "artifact written by `phmat build`")->required();
  inst->add_option("--theta", theta_arg, "parameter value(s), comma separated")->required();
  inst->add_option("--matvec-in", matvec_in, "optional input vector (one value per line)");
  inst->add_option("--matvec-out", matvec_out, "output path for the product");
  inst->add_option("--metrics", metrics_out, "write online metrics JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) {
      if (!run_cli.config_path.empty()) {
        cfg = phmat::config_from_file(run_cli.config_path);
        reapply_flags(cfg, argc, argv, &dry_run, nullptr);
      }
      cfg.validate();
      if (dry_run) {
        std::cout << cfg.describe() << "\n";
        return 0;
      }
      const phmat::MetricsRecord rec = phmat::run_experiment(cfg);
      std::cout << phmat::MetricsRecord::csv_header() << "\n" << rec.csv_row() << "\n";
      return 0;
    }

    if (build->parsed()) {
      if (!build_cli.config_path.empty()) {
        bcfg = phmat::config_from_file(build_cli.config_path);
        reapply_flags(bcfg, argc, argv, nullptr, &artifact_path);
      }
      bcfg.validate();
      if (artifact_path.empty())
        throw std::invalid_argument("phmat build requires --artifact <path>");
      if (bcfg.method != phmat::Method::ParamH && bcfg.method != phmat::Method::ParamH2)
        throw std::invalid_argument(
            "phmat build stores parametric formats only (method = param-h or param-h2)");
      phmat::StageCounters counters;
      const Eigen::MatrixXd points = phmat::generate_points(bcfg.n, bcfg.d, bcfg.seed);
      phmat::StructureMetrics m;
      if (bcfg.method == phmat::Method::ParamH) {
        const auto pm = phmat::offline_h(points, bcfg.ph_config(), counters);
        phmat::save_parametric(pm, artifact_path);
        m = phmat::metrics(pm);
      } else {
        const auto pm = phmat::offline_h2(points, bcfg.ph_config(), counters);
        phmat::save_parametric(pm, artifact_path);
        m = phmat::metrics(pm);
      }
      std::cout << "wrote " << artifact_path << ": n=" << m.n
                << " storage_entries=" << m.storage_entries << " rank=" << m.rank
                << " offline_kernel_evals=" << counters.offline.value() << "\n";
      return 0;
    }

    if (inst->parsed()) {
      const std::vector<double> theta = parse_theta(theta_arg);
      phmat::KernelEvalCounter online;
      auto do_matvec = [&](const phmat::LinearOperator& op) {
        if (matvec_in.empty()) return;
        std::ifstream in(matvec_in);
        if (!in) throw std::runtime_error("cannot open " + matvec_in);
        std::vector<double> vals;
        double v;
        while (in >> v) vals.push_back(v);
        const Eigen::VectorXd x =
            Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        const Eigen::VectorXd y = op.apply(x);
        std::ofstream out(matvec_out.empty() ? matvec_in + ".out" : matvec_out);
        out.precision(17);
        for (Eigen::Index i = 0; i < y.size(); ++i) out << y[i] << "\n";
      };

      double online_seconds = 0.0;
      phmat::StructureMetrics sm;
      if (!phmat::artifact_is_h2(artifact_path)) {
        auto pm =
            std::make_shared<phmat::ParametricHMatrix>(phmat::load_parametric_h(artifact_path));
        const auto t0 = std::chrono::steady_clock::now();
        const auto im = phmat::instantiate(pm, theta, &online);
        online_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        sm = phmat::metrics(*pm);
        do_matvec(im);
      } else {
        auto pm =
            std::make_shared<phmat::ParametricH2Matrix>(phmat::load_parametric_h2(artifact_path));
        const auto t0 = std::chrono::steady_clock::now();
        const auto im = phmat::instantiate(pm, theta, &online);
        online_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        sm = phmat::metrics(*pm);
        do_matvec(im);
      }
      std::cout << "online_time_s=" << online_seconds
                << " online_kernel_evals=" << online.value() << " rank=" << sm.rank
                << " nf_ratio=" << sm.nf_ratio << " ff_ratio=" << sm.ff_ratio << "\n";
      if (!metrics_out.empty()) {
        std::ofstream out(metrics_out);
        out << "{\n  \"online_time_s\": " << online_seconds
            << ",\n  \"online_kernel_evals\": " << online.value()
            << ",\n  \"nf_ratio\": " << sm.nf_ratio << ",\n  \"ff_ratio\": " << sm.ff_ratio
            << ",\n  \"rank\": " << sm.rank << "\n}\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "phmat: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <bit>
#include <cstring>
#include <fstream>

#include "phmat/phmatrix.hpp"

static_assert(std::endian::native == std::endian::little,
              "artifact format is little-endian; big-endian hosts are unsupported");

namespace phmat {

namespace {

constexpr std::uint32_t kMagic = 0x54414d48;  // "HMAT"
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot open artifact for writing: " + path);
  }
  template <typename T>
  void pod(const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void doubles(const double* p, Index n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
};

struct Reader {
  std::ifstream in;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw std::runtime_error("cannot open artifact: " + path);
  }
  template <typename T>
  T pod() {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated artifact");
    return v;
  }
  void doubles(double* p, Index n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated artifact");
  }
};

void write_tt(Writer& w, const TTTensor& tt) {
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(tt.order()));
  for (const TTCore& c : tt.cores) {
    w.pod<Index>(c.r0);
    w.pod<Index>(c.m);
    w.pod<Index>(c.r1);
    w.doubles(c.data.data(), c.data.size());
  }
}

TTTensor read_tt(Reader& r) {
  TTTensor tt;
  const int q = r.pod<std::uint8_t>();
  tt.cores.resize(q);
  for (TTCore& c : tt.cores) {
    c.r0 = r.pod<Index>();
    c.m = r.pod<Index>();
    c.r1 = r.pod<Index>();
    c.data.resize(c.size());
    r.doubles(c.data.data(), c.data.size());
  }
  tt.validate();
  return tt;
}

void write_matrix(Writer& w, const Eigen::MatrixXd& m) {
  w.pod<Index>(m.rows());
  w.pod<Index>(m.cols());
  w.doubles(m.data(), m.size());
}

Eigen::MatrixXd read_matrix(Reader& r) {
  const Index rows = r.pod<Index>();
  const Index cols = r.pod<Index>();
  Eigen::MatrixXd m(rows, cols);
  r.doubles(m.data(), m.size());
  return m;
}

void write_coupling(Writer& w, const CouplingTT& c) {
  w.pod<std::int32_t>(c.d);
  w.pod<std::int32_t>(c.d_theta);
  w.pod<std::uint8_t>(c.rank_capped ? 1 : 0);
  w.pod<double>(c.est_rel_error);
  w.pod<std::uint64_t>(c.evals);
  write_tt(w, c.tt);
}

CouplingTT read_coupling(Reader& r) {
  CouplingTT c;
  c.d = r.pod<std::int32_t>();
  c.d_theta = r.pod<std::int32_t>();
  c.rank_capped = r.pod<std::uint8_t>() != 0;
  c.est_rel_error = r.pod<double>();
  c.evals = r.pod<std::uint64_t>();
  c.tt = read_tt(r);
  return c;
}

template <typename Parametric>
void write_artifact(const Parametric& pm, const std::string& path, bool h2_form) {
  Writer w(path);
  w.pod(kMagic);
  w.pod(kVersion);
  w.pod<std::uint8_t>(h2_form ? 1 : 0);

  const PHConfig& cfg = pm.config;
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(cfg.spec.family));
  w.pod<std::int32_t>(cfg.spec.d_theta());
  for (const Interval& iv : cfg.spec.theta_box) {
    w.pod<double>(iv.lo);
    w.pod<double>(iv.hi);
  }
  w.pod<std::int32_t>(cfg.l_max);
  w.pod<std::int32_t>(cfg.p_s);
  w.pod<std::int32_t>(cfg.p_theta);
  w.pod<double>(cfg.eps);
  w.pod<double>(cfg.eta);
  w.pod<Index>(cfg.r_max_far);
  w.pod<Index>(cfg.r_max_near);
  w.pod<std::uint64_t>(cfg.seed);
  w.pod<std::uint8_t>(cfg.near_mode == NearMode::TT ? 0 : 1);
  w.pod<std::uint8_t>(cfg.translation_cache ? 1 : 0);

  const ClusterTree& tree = *pm.tree;
  w.pod<std::int32_t>(tree.dim());
  w.pod<Index>(tree.n_points());
  for (int k = 0; k < tree.dim(); ++k) {
    w.pod<double>(tree.root_box().lo[k]);
    w.pod<double>(tree.root_box().hi[k]);
  }
  w.doubles(tree.points().data(), tree.points().size());

  // Leaf partition of the block tree, for validation against the rebuild.
  w.pod<Index>(static_cast<Index>(pm.blocks.far.size()));
  for (const Block& b : pm.blocks.far) {
    w.pod<std::int32_t>(b.sigma);
    w.pod<std::int32_t>(b.tau);
  }
  w.pod<Index>(static_cast<Index>(pm.blocks.near.size()));
  for (const Block& b : pm.blocks.near) {
    w.pod<std::int32_t>(b.sigma);
    w.pod<std::int32_t>(b.tau);
  }

  w.pod<Index>(static_cast<Index>(pm.far_key.size()));
  for (int k : pm.far_key) w.pod<std::int32_t>(k);
  w.pod<Index>(static_cast<Index>(pm.couplings.size()));
  for (const auto& c : pm.couplings) write_coupling(w, *c);

  if constexpr (std::is_same_v<Parametric, ParametricHMatrix>) {
    for (const FarBlockH& fb : pm.far) {
      write_matrix(w, fb.s);
      write_matrix(w, fb.t);
    }
  }

  w.pod<Index>(static_cast<Index>(pm.near.size()));
  for (const NearBlockTT& nb : pm.near) {
    w.pod<Index>(nb.n_rows);
    w.pod<Index>(nb.n_cols);
    w.pod<std::uint8_t>(nb.rank_capped ? 1 : 0);
    w.pod<double>(nb.est_rel_error);
    w.pod<std::uint64_t>(nb.evals);
    write_tt(w, nb.tt);
  }
  if (!w.out) throw std::runtime_error("failed writing artifact: " + path);
}

template <typename Parametric>
Parametric read_artifact(const std::string& path, bool expect_h2) {
  Reader r(path);
  if (r.pod<std::uint32_t>() != kMagic) throw std::runtime_error("not a phmat artifact: " + path);
  if (r.pod<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported artifact version");
  const bool h2 = r.pod<std::uint8_t>() != 0;
  if (h2 != expect_h2) throw std::runtime_error("artifact holds the other matrix format");

  Parametric pm;
  PHConfig cfg;
  cfg.spec.family = static_cast<KernelFamily>(r.pod<std::uint8_t>());
  const int d_theta = r.pod<std::int32_t>();
  cfg.spec.theta_box.resize(d_theta);
  for (Interval& iv : cfg.spec.theta_box) {
    iv.lo = r.pod<double>();
    iv.hi = r.pod<double>();
  }
  cfg.l_max = r.pod<std::int32_t>();
  cfg.p_s = r.pod<std::int32_t>();
  cfg.p_theta = r.pod<std::int32_t>();
  cfg.eps = r.pod<double>();
  cfg.eta = r.pod<double>();
  cfg.r_max_far = r.pod<Index>();
  cfg.r_max_near = r.pod<Index>();
  cfg.seed = r.pod<std::uint64_t>();
  cfg.near_mode = r.pod<std::uint8_t>() == 0 ? NearMode::TT : NearMode::Direct;
  cfg.translation_cache = r.pod<std::uint8_t>() != 0;
  pm.config = cfg;

  const int d = r.pod<std::int32_t>();
  const Index n = r.pod<Index>();
  Hypercube root;
  root.d = d;
  for (int k = 0; k < d; ++k) {
    root.lo[k] = r.pod<double>();
    root.hi[k] = r.pod<double>();
  }
  Eigen::MatrixXd points(n, d);
  r.doubles(points.data(), points.size());

  pm.tree = std::make_shared<ClusterTree>(std::move(points), root, cfg.l_max);
  pm.blocks = build_block_cluster_tree(*pm.tree, cfg.resolved_eta(d));
  pm.theta_grids = make_theta_grids(cfg.spec, cfg.p_theta);

  auto check_blocks = [&](const std::vector<Block>& rebuilt) {
    const Index count = r.pod<Index>();
    if (count != static_cast<Index>(rebuilt.size()))
      throw std::runtime_error("artifact block topology does not match the rebuilt tree");
    for (const Block& b : rebuilt) {
      if (r.pod<std::int32_t>() != b.sigma || r.pod<std::int32_t>() != b.tau)
        throw std::runtime_error("artifact block topology does not match the rebuilt tree");
    }
  };
  check_blocks(pm.blocks.far);
  check_blocks(pm.blocks.near);

  const Index n_keys = r.pod<Index>();
  pm.far_key.resize(n_keys);
  for (Index i = 0; i < n_keys; ++i) pm.far_key[i] = r.pod<std::int32_t>();
  const Index n_couplings = r.pod<Index>();
  pm.couplings.resize(n_couplings);
  for (Index i = 0; i < n_couplings; ++i)
    pm.couplings[i] = std::make_shared<CouplingTT>(read_coupling(r));

  pm.far.resize(pm.blocks.far.size());
  for (std::size_t i = 0; i < pm.far.size(); ++i) {
    auto coupling = cfg.translation_cache ? pm.couplings[pm.far_key[i]] : pm.couplings[i];
    if constexpr (std::is_same_v<Parametric, ParametricHMatrix>) {
      pm.far[i].s = read_matrix(r);
      pm.far[i].t = read_matrix(r);
      pm.far[i].coupling = std::move(coupling);
    } else {
      pm.far[i].coupling = std::move(coupling);
    }
  }

  const Index n_near = r.pod<Index>();
  pm.near.resize(n_near);
  for (Index i = 0; i < n_near; ++i) {
    NearBlockTT& nb = pm.near[i];
    nb.n_rows = r.pod<Index>();
    nb.n_cols = r.pod<Index>();
    nb.rank_capped = r.pod<std::uint8_t>() != 0;
    nb.est_rel_error = r.pod<double>();
    nb.evals = r.pod<std::uint64_t>();
    nb.tt = read_tt(r);
  }

  if constexpr (std::is_same_v<Parametric, ParametricH2Matrix>)
    pm.basis = NestedClusterBasis(*pm.tree, cfg.p_s);
  return pm;
}

}  // namespace

void save_parametric(const ParametricHMatrix& pm, const std::string& path) {
  write_artifact(pm, path, false);
}

void save_parametric(const ParametricH2Matrix& pm, const std::string& path) {
  write_artifact(pm, path, true);
}

ParametricHMatrix load_parametric_h(const std::string& path) {
  return read_artifact<ParametricHMatrix>(path, false);
}

ParametricH2Matrix load_parametric_h2(const std::string& path) {
  return read_artifact<ParametricH2Matrix>(path, true);
}

bool artifact_is_h2(const std::string& path) {
  Reader r(path);
  if (r.pod<std::uint32_t>() != kMagic) throw std::runtime_error("not a phmat artifact: " + path);
  if (r.pod<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported artifact version");
  return r.pod<std::uint8_t>() != 0;
}

}  // namespace phmat

#include "ssnls/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "ssnls/baselines.hpp"
#include "ssnls/io.hpp"

namespace ssnls::experiment {

namespace fs = std::filesystem;

const char* to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::DoasAlign: return "doas_align";
    case ExperimentKind::DoasBackground: return "doas_background";
    case ExperimentKind::HsiInter: return "hsi_inter";
    case ExperimentKind::HsiStructured: return "hsi_structured";
    case ExperimentKind::Bench: return "bench";
  }
  return "unknown";
}

ExperimentKind parse_experiment(const std::string& name) {
  for (auto k : {ExperimentKind::DoasAlign, ExperimentKind::DoasBackground, ExperimentKind::HsiInter,
                 ExperimentKind::HsiStructured, ExperimentKind::Bench})
    if (name == to_string(k)) return k;
  fail(ErrorKind::Config, "unknown experiment '" + name + "'");
}

void SgpOverrides::apply(SgpParams& p) const {
  if (sigma) p.sigma = *sigma;
  if (xi1) p.xi1 = *xi1;
  if (xi2) p.xi2 = *xi2;
  if (c_matrix_scale) p.c_matrix_scale = *c_matrix_scale;
  if (tol_energy) p.tol_energy = *tol_energy;
  if (tol_step) p.tol_step = *tol_step;
  if (max_outer) p.max_outer = *max_outer;
  if (admm_delta) p.admm.delta = *admm_delta;
  if (admm_tol) p.admm.tol_primal_rel = p.admm.tol_dual_rel = *admm_tol;
  if (admm_max_iters) p.admm.max_iters = *admm_max_iters;
}

void SparsityOverrides::apply(SparsityConfig& s) const {
  if (gamma_intra) s.gamma_intra.setConstant(*gamma_intra);
  if (eps_intra) s.eps_intra.setConstant(*eps_intra);
  if (gamma_inter) s.gamma_inter = *gamma_inter;
  if (eps_inter) s.eps_inter = *eps_inter;
  if (min_active) s.min_active_groups = *min_active;
}

std::vector<std::string> default_solvers(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::DoasAlign: return {"nnls", "l1", "l0_pd", "l1_over_l2", "l1_minus_l2"};
    case ExperimentKind::DoasBackground: return {"least_squares", "l0_pd", "l1_over_l2", "l1_minus_l2"};
    case ExperimentKind::HsiInter:
    case ExperimentKind::HsiStructured: return {"nnls", "l1", "l1_over_l2", "l1_minus_l2"};
    case ExperimentKind::Bench: return {"nnls", "l0_pd", "l1_over_l2", "l1_minus_l2"};
  }
  return {};
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  // splitmix64 of (seed, stage)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- config JSON

namespace {

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    require(allowed.count(k) > 0, ErrorKind::Config, "unknown key '" + k + "' in " + where);
}

template <class T>
void write_opt(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

std::vector<hsi::SparsityLevel> scaled_profile(const std::vector<std::pair<Index, Index>>& base, int scale) {
  std::vector<hsi::SparsityLevel> out;
  for (auto [k, n] : base) out.push_back({k, std::max<Index>(1, (n + scale - 1) / scale)});
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  try {
    check_keys(j, {"experiment", "seed", "output_dir", "scale", "threads", "solvers", "doas", "hsi", "bench", "sgp",
                   "sparsity"},
               "config");
    ExperimentConfig c;
    if (j.contains("experiment")) c.kind = parse_experiment(j.at("experiment").get<std::string>());
    read(j, "seed", c.seed);
    read(j, "output_dir", c.output_dir);
    read(j, "scale", c.scale);
    read(j, "threads", c.threads);
    read(j, "solvers", c.solvers);
    if (j.contains("doas")) {
      const json& d = j.at("doas");
      check_keys(d, {"bands", "grid", "slopes", "offsets", "references", "dictionary_cache", "noise_sd", "means",
                     "planted_deformations", "planted_magnitudes", "alpha", "background_exponent", "oracle_draws"},
                 "doas");
      read(d, "bands", c.doas.bands);
      read(d, "grid", c.doas.grid);
      read(d, "slopes", c.doas.slopes);
      read(d, "offsets", c.doas.offsets);
      read(d, "references", c.doas.references);
      read(d, "dictionary_cache", c.doas.dictionary_cache);
      read(d, "noise_sd", c.doas.noise_sd);
      read(d, "means", c.doas.means);
      read(d, "planted_deformations", c.doas.planted_deformations);
      read(d, "planted_magnitudes", c.doas.planted_magnitudes);
      read(d, "alpha", c.doas.alpha);
      read(d, "background_exponent", c.doas.background_exponent);
      read(d, "oracle_draws", c.doas.oracle_draws);
    }
    if (j.contains("hsi")) {
      const json& h = j.at("hsi");
      check_keys(h, {"bands", "samples_per_material", "per_group", "profile", "noise_sd", "side", "scene", "endmembers"},
                 "hsi");
      read(h, "bands", c.hsi.bands);
      read(h, "samples_per_material", c.hsi.samples_per_material);
      read(h, "per_group", c.hsi.per_group);
      if (h.contains("profile"))
        for (const auto& [k, n] : h.at("profile").get<std::vector<std::pair<Index, Index>>>())
          c.hsi.profile.push_back({k, n});
      read(h, "noise_sd", c.hsi.noise_sd);
      read(h, "side", c.hsi.side);
      read(h, "scene", c.hsi.scene);
      read(h, "endmembers", c.hsi.endmembers);
    }
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      check_keys(b, {"rows", "groups", "group_size", "problems"}, "bench");
      read(b, "rows", c.bench.rows);
      read(b, "groups", c.bench.groups);
      read(b, "group_size", c.bench.group_size);
      read(b, "problems", c.bench.problems);
    }
    if (j.contains("sgp")) {
      const json& s = j.at("sgp");
      check_keys(s, {"sigma", "xi1", "xi2", "c_matrix_scale", "tol_energy", "tol_step", "max_outer", "admm_delta",
                     "admm_tol", "admm_max_iters"},
                 "sgp");
      read_opt(s, "sigma", c.sgp.sigma);
      read_opt(s, "xi1", c.sgp.xi1);
      read_opt(s, "xi2", c.sgp.xi2);
      read_opt(s, "c_matrix_scale", c.sgp.c_matrix_scale);
      read_opt(s, "tol_energy", c.sgp.tol_energy);
      read_opt(s, "tol_step", c.sgp.tol_step);
      read_opt(s, "max_outer", c.sgp.max_outer);
      read_opt(s, "admm_delta", c.sgp.admm_delta);
      read_opt(s, "admm_tol", c.sgp.admm_tol);
      read_opt(s, "admm_max_iters", c.sgp.admm_max_iters);
    }
    if (j.contains("sparsity")) {
      const json& s = j.at("sparsity");
      check_keys(s, {"gamma_intra", "eps_intra", "gamma_inter", "eps_inter", "min_active"}, "sparsity");
      read_opt(s, "gamma_intra", c.sparsity.gamma_intra);
      read_opt(s, "eps_intra", c.sparsity.eps_intra);
      read_opt(s, "gamma_inter", c.sparsity.gamma_inter);
      read_opt(s, "eps_inter", c.sparsity.eps_inter);
      read_opt(s, "min_active", c.sparsity.min_active);
    }
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  require(c.scale >= 1, ErrorKind::Config, "scale must be at least 1");
  if (c.solvers.empty()) c.solvers = default_solvers(c.kind);
  const bool background = c.kind == ExperimentKind::DoasBackground;
  if (c.doas.bands == 0) c.doas.bands = background ? 1024 : std::max<Index>(16, 1024 / c.scale);
  if (c.doas.grid.empty()) c.doas.grid = c.scale == 1 || background ? "full" : "desk";
  if (c.doas.noise_sd < 0.0) c.doas.noise_sd = background ? 5.58e-5 : 0.0;
  const bool inter = c.kind == ExperimentKind::HsiInter;
  if (c.hsi.bands == 0) c.hsi.bands = inter ? 187 : 204;
  if (c.hsi.per_group == 0) c.hsi.per_group = std::max<Index>(1, 100 / c.scale);
  if (c.hsi.side == 0) c.hsi.side = std::max<Index>(2, 307 / c.scale);
  if (c.hsi.profile.empty()) {
    if (inter) {
      const Index p = c.hsi.side * c.hsi.side;
      const Index n1 = 3 * p / 10, n2 = 4 * p / 10, n3 = p / 4;
      c.hsi.profile = {{1, n1}, {2, n2}, {3, n3}, {4, p - n1 - n2 - n3}};
    } else {
      c.hsi.profile = scaled_profile({{1, 1000}, {2, 500}, {3, 50}, {4, 10}}, c.scale);
    }
  }
  return c;
}

void ExperimentConfig::validate() const {
  require(scale >= 1, ErrorKind::Config, "scale must be at least 1");
  require(threads >= 0, ErrorKind::Config, "threads must be non-negative");
  require(!output_dir.empty(), ErrorKind::Config, "output_dir must not be empty");
  const auto known = default_solvers(kind);
  std::vector<std::string> allowed = known;
  if (kind == ExperimentKind::DoasAlign || kind == ExperimentKind::DoasBackground)
    allowed = {"nnls", "l1", "l0_pd", "least_squares", "l1_over_l2", "l1_minus_l2"};
  for (const auto& s : solvers)
    require(std::find(allowed.begin(), allowed.end(), s) != allowed.end(), ErrorKind::Config,
            "solver '" + s + "' is not available for experiment " + to_string(kind));
  if (kind == ExperimentKind::DoasBackground && !solvers.empty())
    for (const auto& s : solvers)
      require(s != "l1", ErrorKind::Config, "the l1 baseline has no background variant");
  require(doas.grid.empty() || doas.grid == "full" || doas.grid == "desk" || doas.grid == "custom",
          ErrorKind::Config, "doas.grid must be full, desk or custom");
  if (doas.grid == "custom")
    require(!doas.slopes.empty() && !doas.offsets.empty(), ErrorKind::Config,
            "a custom grid needs doas.slopes and doas.offsets");
  require(doas.bands == 0 || doas.bands >= 16, ErrorKind::Config, "doas.bands must be at least 16");
  require(doas.alpha > 0.0, ErrorKind::Config, "doas.alpha must be positive");
  require(doas.oracle_draws >= 1, ErrorKind::Config, "doas.oracle_draws must be positive");
  const size_t groups = doas.references.empty() ? 3 : doas.references.size();
  if (kind == ExperimentKind::DoasAlign)
    require(doas.means.size() == groups, ErrorKind::Config, "doas.means needs one entry per reference");
  if (kind == ExperimentKind::DoasBackground) {
    require(doas.planted_deformations.size() == groups && doas.planted_magnitudes.size() == groups,
            ErrorKind::Config, "doas.planted_deformations and planted_magnitudes need one entry per reference");
  }
  require(hsi.noise_sd >= 0.0, ErrorKind::Config, "hsi.noise_sd must be non-negative");
  require(hsi.samples_per_material >= 1, ErrorKind::Config, "hsi.samples_per_material must be positive");
  require(bench.rows >= 2 && bench.groups >= 1 && bench.group_size >= 1 && bench.problems >= 1, ErrorKind::Config,
          "bench sizes must be positive");
  if (!hsi.endmembers.empty() || !hsi.scene.empty())
    require(kind != ExperimentKind::HsiStructured, ErrorKind::Config,
            "hsi.scene and hsi.endmembers apply to hsi_inter only");
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = to_string(kind);
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["scale"] = scale;
  j["threads"] = threads;
  j["solvers"] = solvers;
  json d;
  d["bands"] = doas.bands;
  d["grid"] = doas.grid;
  d["slopes"] = doas.slopes;
  d["offsets"] = doas.offsets;
  d["references"] = doas.references;
  d["dictionary_cache"] = doas.dictionary_cache;
  d["noise_sd"] = doas.noise_sd;
  d["means"] = doas.means;
  d["planted_deformations"] = doas.planted_deformations;
  d["planted_magnitudes"] = doas.planted_magnitudes;
  d["alpha"] = doas.alpha;
  d["background_exponent"] = doas.background_exponent;
  d["oracle_draws"] = doas.oracle_draws;
  j["doas"] = d;
  json h;
  h["bands"] = hsi.bands;
  h["samples_per_material"] = hsi.samples_per_material;
  h["per_group"] = hsi.per_group;
  json prof = json::array();
  for (const auto& l : hsi.profile) prof.push_back({l.k, l.count});
  h["profile"] = prof;
  h["noise_sd"] = hsi.noise_sd;
  h["side"] = hsi.side;
  h["scene"] = hsi.scene;
  h["endmembers"] = hsi.endmembers;
  j["hsi"] = h;
  j["bench"] = {{"rows", bench.rows}, {"groups", bench.groups}, {"group_size", bench.group_size},
                {"problems", bench.problems}};
  json s;
  write_opt(s, "sigma", sgp.sigma);
  write_opt(s, "xi1", sgp.xi1);
  write_opt(s, "xi2", sgp.xi2);
  write_opt(s, "c_matrix_scale", sgp.c_matrix_scale);
  write_opt(s, "tol_energy", sgp.tol_energy);
  write_opt(s, "tol_step", sgp.tol_step);
  write_opt(s, "max_outer", sgp.max_outer);
  write_opt(s, "admm_delta", sgp.admm_delta);
  write_opt(s, "admm_tol", sgp.admm_tol);
  write_opt(s, "admm_max_iters", sgp.admm_max_iters);
  j["sgp"] = s;
  json sp;
  write_opt(sp, "gamma_intra", sparsity.gamma_intra);
  write_opt(sp, "eps_intra", sparsity.eps_intra);
  write_opt(sp, "gamma_inter", sparsity.gamma_inter);
  write_opt(sp, "eps_inter", sparsity.eps_inter);
  write_opt(sp, "min_active", sparsity.min_active);
  j["sparsity"] = sp;
  return j;
}

std::string MetricsTable::to_csv() const {
  std::string out;
  for (size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += '\n';
  }
  return out;
}

json RunRecord::to_json() const {
  json j;
  j["config"] = config;
  j["seed"] = seed;
  j["solvers"] = solvers;
  j["metrics"] = {{"columns", metrics.columns}, {"rows", metrics.rows}};
  j["wall_seconds"] = wall_seconds;
  return j;
}

// ---------------------------------------------------------------- pipelines

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) { return io::format_double(v); }
std::string num(Index v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

struct Run {
  ExperimentConfig cfg;
  std::optional<fs::path> dir;  // no files when empty
  RunRecord rec;

  void csv(const std::string& name, const Mat& m, const std::vector<std::string>& header = {}) {
    if (dir) io::write_csv(*dir / name, m, header);
  }
  void text(const std::string& name, const std::string& t) {
    if (dir) io::write_text(*dir / name, t);
  }

  template <class F>
  auto stage(const std::string& name, F&& f) -> decltype(f()) {
    const auto t0 = Clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        rec.wall_seconds[name] = std::chrono::duration<double>(Clock::now() - t0).count();
      } else {
        auto r = f();
        rec.wall_seconds[name] = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Io, "stage " + name + ": " + e.what());
    }
  }
};

json report_json(const std::string& label, const SolveReport& r) {
  return {{"label", label},
          {"outer_iters", r.outer_iters},
          {"inner_iters_total", r.inner_iters_total},
          {"rejections", r.rejections},
          {"termination", to_string(r.termination)},
          {"final_objective", r.objective_trace.empty() ? 0.0 : r.objective_trace.back()}};
}

Mat trace_matrix(const SolveReport& r) {
  const Index n = static_cast<Index>(r.objective_trace.size());
  Mat m = Mat::Constant(n, 4, std::numeric_limits<double>::quiet_NaN());
  for (Index i = 0; i < n; ++i) {
    m(i, 0) = static_cast<double>(i);
    m(i, 1) = r.objective_trace[static_cast<size_t>(i)];
    if (i > 0 && static_cast<size_t>(i - 1) < r.c_trace.size()) m(i, 2) = r.c_trace[static_cast<size_t>(i - 1)];
    if (i > 0 && static_cast<size_t>(i - 1) < r.step_trace.size()) m(i, 3) = r.step_trace[static_cast<size_t>(i - 1)];
  }
  return m;
}

const std::vector<std::string> kTraceHeader{"iteration", "objective", "c", "step_inf"};

Index nearest(const Vec& v, double x) {
  Index best = 0;
  (v.array() - x).abs().minCoeff(&best);
  return best;
}

doas::DeformationDictionary make_dictionary(const ExperimentConfig& c) {
  const auto& d = c.doas;
  if (!d.dictionary_cache.empty() && fs::exists(fs::path(d.dictionary_cache + ".json"))) {
    auto dd = io::load_dictionary_cache(d.dictionary_cache);
    require(dd.dict.rows() == d.bands, ErrorKind::Config, "cached dictionary has a different band count");
    return dd;
  }
  const Vec lam = doas::instrument_wavelengths(d.bands);
  std::vector<doas::ReferenceSpectrum> refs;
  if (d.references.empty()) {
    refs = doas::synthetic_references(lam);
  } else {
    for (const auto& path : d.references) {
      const auto raw = io::read_reference_csv(path);
      doas::ReferenceSpectrum r{lam, Vec(lam.size()), raw.name};
      for (Index i = 0; i < lam.size(); ++i) r.values(i) = doas::sample_reference(raw, lam(i));
      refs.push_back(std::move(r));
    }
  }
  doas::DeformationGrid grid = d.grid == "desk"   ? doas::DeformationGrid::desk()
                               : d.grid == "full" ? doas::DeformationGrid::full()
                                                  : doas::DeformationGrid{Eigen::Map<const Vec>(d.slopes.data(), static_cast<Index>(d.slopes.size())),
                                                                          Eigen::Map<const Vec>(d.offsets.data(), static_cast<Index>(d.offsets.size()))};
  auto dd = doas::build_deformation_dictionary(refs, grid);
  if (!d.dictionary_cache.empty()) io::save_dictionary_cache(d.dictionary_cache, dd);
  return dd;
}

doas::DoasFitConfig doas_solver_config(const Run& run, doas::DoasSolver s, Index groups, Index w, double noise,
                                       bool background, size_t index) {
  doas::DoasFitConfig cfg = background ? doas::background_defaults(s, groups)
                                       : doas::alignment_defaults(s, groups, w, noise);
  if (background) {
    cfg.alpha = run.cfg.doas.alpha;
    cfg.background_exponent = run.cfg.doas.background_exponent;
  }
  run.cfg.sgp.apply(cfg.sgp);
  run.cfg.sparsity.apply(cfg.sparsity);
  cfg.oracle_draws = run.cfg.doas.oracle_draws;
  cfg.seed = stage_seed(run.cfg.seed, 100 + index);
  return cfg;
}

void run_doas(Run& run, bool background) {
  const auto& c = run.cfg;
  const auto dd = run.stage("dictionary", [&] { return make_dictionary(c); });
  const GroupLayout& layout = dd.dict.layout();
  const Index m = layout.num_groups();
  const Index w = dd.dict.rows();
  const double noise = c.doas.noise_sd;

  Vec truth = Vec::Zero(dd.dict.cols());  // normalized-dictionary units
  std::vector<Index> planted_col(static_cast<size_t>(m));
  const Vec j = run.stage("data", [&] {
    require(static_cast<Index>(background ? c.doas.planted_magnitudes.size() : c.doas.means.size()) == m,
            ErrorKind::Config, "one planted value per reference group is required");
    Vec data;
    if (background) {
      for (Index g = 0; g < m; ++g) {
        const auto [p, q] = c.doas.planted_deformations[static_cast<size_t>(g)];
        const Index col = dd.grid.column(nearest(dd.grid.slopes, p), nearest(dd.grid.offsets, q));
        truth(layout.begin(g) + col) = c.doas.planted_magnitudes[static_cast<size_t>(g)] * dd.dict.scales()(layout.begin(g) + col);
      }
      data = dd.dict.entries() * truth + doas::default_background(dd.wavelengths);
      std::mt19937_64 rng(stage_seed(c.seed, 2));
      std::normal_distribution<double> eta(0.0, noise);
      if (noise > 0.0)
        for (Index i = 0; i < w; ++i) data(i) += eta(rng);
    } else {
      truth = doas::plant_one_per_group(layout, c.doas.means, stage_seed(c.seed, 1)).x;
      data = doas::synthesize_doas_data(dd.dict, {truth, std::nullopt}, noise, stage_seed(c.seed, 2));
    }
    for (Index g = 0; g < m; ++g) truth.segment(layout.begin(g), layout.size(g)).maxCoeff(&planted_col[static_cast<size_t>(g)]);
    Mat out(w, 2);
    out << dd.wavelengths, data;
    run.csv("data.csv", out, {"wavelength_nm", "J"});
    Mat t(truth.size(), 2);
    t << truth, dd.dict.denormalize(truth);
    run.csv("truth.csv", t, {"x", "x_original_units"});
    return data;
  });

  auto& table = run.rec.metrics;
  table.columns = {"solver"};
  for (Index g = 0; g < m; ++g) {
    const std::string& n = dd.names[static_cast<size_t>(g)];
    for (const char* f : {"_column", "_slope", "_offset", "_coefficient", "_correct", "_mae"}) table.columns.push_back(n + f);
  }
  table.columns.insert(table.columns.end(), {"support_accuracy", "fraction_nonzero", "objective", "outer_iters"});
  if (background) table.columns.insert(table.columns.end(), {"background_rmse"});

  for (size_t si = 0; si < c.solvers.size(); ++si) {
    const std::string& label = c.solvers[si];
    const auto solver = doas::parse_doas_solver(label);
    const auto fit = run.stage("solve:" + label, [&] {
      return doas::fit_doas(j, dd, doas_solver_config(run, solver, m, w, noise, background, si));
    });
    const bool oracle = solver == doas::DoasSolver::LeastSquaresOracle;
    std::vector<std::string> row{label};
    Index correct = 0;
    for (Index g = 0; g < m; ++g) {
      const auto& a = fit.atoms[static_cast<size_t>(g)];
      const bool ok = !oracle && a.column == planted_col[static_cast<size_t>(g)];
      correct += ok;
      const auto xs = fit.x.segment(layout.begin(g), layout.size(g));
      const auto xo = fit.x_original_units.segment(layout.begin(g), layout.size(g));
      const double coeff = oracle ? xo.sum() : xo(a.column);
      row.push_back(oracle ? "na" : num(a.column));
      row.push_back(oracle ? "na" : num(a.slope));
      row.push_back(oracle ? "na" : num(a.offset));
      row.push_back(num(coeff));
      row.push_back(oracle ? "na" : (ok ? "1" : "0"));
      row.push_back(num((xs - truth.segment(layout.begin(g), layout.size(g))).cwiseAbs().mean()));
    }
    const double mx = fit.x.maxCoeff();
    const Index nnz = mx > 0.0 ? (fit.x.array() > 1e-6 * mx).count() : 0;
    row.push_back(oracle ? "na" : num(static_cast<double>(correct) / static_cast<double>(m)));
    row.push_back(num(static_cast<double>(nnz) / static_cast<double>(fit.x.size())));
    row.push_back(num(fit.objective));
    row.push_back(num(fit.iterations));
    if (background)
      row.push_back(num(std::sqrt((fit.background - doas::default_background(dd.wavelengths)).squaredNorm() /
                                  static_cast<double>(w))));
    table.rows.push_back(row);

    Mat coeffs(fit.x.size(), 2);
    coeffs << fit.x, fit.x_original_units;
    run.csv("coefficients_" + label + ".csv", coeffs, {"x", "x_original_units"});
    if (background) run.csv("background_" + label + ".csv", fit.background, {"background"});
    json rj = {{"label", label}, {"iterations", fit.iterations}, {"objective", fit.objective}};
    if (fit.report) {
      rj = report_json(label, *fit.report);
      run.csv("trace_" + label + ".csv", trace_matrix(*fit.report), kTraceHeader);
    }
    run.rec.solvers.push_back(rj);
  }
}

struct HsiRunSpec {
  std::string dictionary;  // label
  const GroupedDictionary* dict;
  bool intra;
};

void append_hsi_rows(Run& run, const hsi::HsiScene& scene, const std::optional<Mat>& sbar, const HsiRunSpec& spec,
                     bool with_dictionary_column) {
  const auto& c = run.cfg;
  const GroupedDictionary& d = *spec.dict;
  const Index m = d.num_groups();
  std::optional<hsi::GroupCollapser> collapse;
  if (d.cols() != m) collapse.emplace(d.layout());
  for (size_t si = 0; si < c.solvers.size(); ++si) {
    const std::string& label = c.solvers[si];
    const auto solver = hsi::parse_hsi_solver(label);
    hsi::DemixParams p = spec.intra ? hsi::structured_defaults(solver, m)
                                    : hsi::inter_defaults(solver, m);
    c.sgp.apply(p.sgp);
    c.sparsity.apply(p.sparsity);
    p.threads = c.threads;
    const std::string tag = with_dictionary_column ? spec.dictionary + ":" + label : label;
    const auto res = run.stage("solve:" + tag, [&] { return hsi::demix_scene(scene, d, p); });

    const Mat zeros = Mat::Zero(collapse ? m : d.cols(), scene.pixels());
    const auto met = hsi::compute_metrics(res.abundances, sbar ? *sbar : zeros, collapse ? &*collapse : nullptr, -1.0,
                                          &scene.data, &d.entries());
    int max_outer = 0;
    double mean_outer = 0.0;
    for (int o : res.outer_iters) {
      max_outer = std::max(max_outer, o);
      mean_outer += o;
    }
    mean_outer /= static_cast<double>(std::max<Index>(1, scene.pixels()));

    std::vector<std::string> row;
    if (with_dictionary_column) row.push_back(spec.dictionary);
    row.push_back(label);
    row.push_back(num(met.fraction_nonzero));
    row.push_back(num(*met.sse));
    row.push_back(sbar ? num(met.support_mismatch) : "na");
    for (Index g = 0; g < m; ++g) row.push_back(sbar ? num(met.group_mae(g)) : "na");
    row.push_back(num(met.fraction_group_one_sparse));
    row.push_back(num(max_outer));
    row.push_back(num(mean_outer));
    row.push_back(num(static_cast<Index>(res.failures.size())));
    run.rec.metrics.rows.push_back(row);

    const std::string stem = with_dictionary_column ? spec.dictionary + "_" + label : label;
    run.csv("abundances_" + stem + ".csv", res.abundances.values);
    json rj = {{"label", tag},
               {"max_outer_iters", max_outer},
               {"mean_outer_iters", mean_outer},
               {"inner_iters_total", res.inner_iters_total},
               {"failed_pixels", json::array()}};
    for (const auto& f : res.failures) rj["failed_pixels"].push_back({{"pixel", f.pixel}, {"message", f.message}});
    run.rec.solvers.push_back(rj);
  }
}

std::vector<std::string> hsi_columns(bool with_dictionary, const std::vector<std::string>& names) {
  std::vector<std::string> cols;
  if (with_dictionary) cols.push_back("dictionary");
  cols.insert(cols.end(), {"solver", "fraction_nonzero", "sse", "support_mismatch"});
  for (const auto& n : names) cols.push_back("mae_" + n);
  cols.insert(cols.end(), {"group_one_sparse_fraction", "max_outer_iters", "mean_outer_iters", "failed_pixels"});
  return cols;
}

void run_hsi_inter(Run& run) {
  const auto& c = run.cfg;
  std::vector<std::string> names;
  const GroupedDictionary dict = run.stage("dictionary", [&] {
    Mat e;
    if (!c.hsi.endmembers.empty()) {
      e = io::read_csv(c.hsi.endmembers).values;
      for (Index i = 0; i < e.cols(); ++i) names.push_back("e" + std::to_string(i + 1));
    } else {
      e = hsi::synthetic_urban_endmembers(c.hsi.bands, &names);
    }
    return normalize_columns(e, GroupLayout::uniform(e.cols(), 1));
  });
  std::optional<Mat> truth;
  const hsi::HsiScene scene = run.stage("data", [&] {
    hsi::HsiScene s;
    if (!c.hsi.scene.empty()) {
      s = io::load_scene(c.hsi.scene);
    } else {
      auto syn = hsi::synthesize_grouped_scene(dict, c.hsi.profile, c.hsi.noise_sd, stage_seed(c.seed, 3));
      s = std::move(syn.scene);
      truth = std::move(syn.truth);
      run.csv("truth.csv", *truth);
    }
    if (!s.normalized) s.normalize();
    require(s.bands() == dict.rows(), ErrorKind::Shape, "scene bands do not match the endmembers");
    return s;
  });
  run.rec.metrics.columns = hsi_columns(false, names);
  append_hsi_rows(run, scene, truth, {"endmembers", &dict, false}, false);
}

void run_hsi_structured(Run& run) {
  const auto& c = run.cfg;
  const auto lib = run.stage("dictionary", [&] {
    const auto mats = hsi::synthetic_materials(c.hsi.bands, c.hsi.samples_per_material, stage_seed(c.seed, 4));
    return hsi::build_endmember_library(mats, c.hsi.per_group, stage_seed(c.seed, 5));
  });
  const auto syn = run.stage("data", [&] {
    auto s = hsi::synthesize_grouped_scene(lib.group, c.hsi.profile, c.hsi.noise_sd, stage_seed(c.seed, 3));
    run.csv("scene.csv", s.scene.data);
    run.csv("truth.csv", s.truth);
    return s;
  });
  const Mat sbar = hsi::GroupCollapser(lib.group.layout()).apply(syn.truth);
  run.csv("truth_grouped.csv", sbar);
  run.rec.metrics.columns = hsi_columns(true, lib.names);
  append_hsi_rows(run, syn.scene, sbar, {"mean", &lib.mean, false}, true);
  append_hsi_rows(run, syn.scene, sbar, {"group", &lib.group, true}, true);
  append_hsi_rows(run, syn.scene, sbar, {"bad", &lib.bad, false}, true);
}

void run_bench(Run& run) {
  const auto& c = run.cfg;
  const auto& b = c.bench;
  const Index n = b.groups * b.group_size;
  auto& table = run.rec.metrics;
  table.columns = {"problem", "solver", "support_accuracy", "objective", "outer_iters"};
  Mat timing(static_cast<Index>(b.problems) * static_cast<Index>(c.solvers.size()), 3);
  Index trow = 0;
  for (int pi = 0; pi < b.problems; ++pi) {
    std::mt19937_64 rng(stage_seed(c.seed, 200 + static_cast<std::uint64_t>(pi)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat a(b.rows, n);
    for (Index col = 0; col < n; ++col)
      for (Index r = 0; r < b.rows; ++r) a(r, col) = gauss(rng);
    const GroupedDictionary dict = normalize_columns(a, GroupLayout::uniform(b.groups, b.group_size));
    const std::vector<double> means(static_cast<size_t>(b.groups), 1.0);
    const auto planted = doas::plant_one_per_group(dict.layout(), means, stage_seed(c.seed, 300 + pi));
    const Vec data = doas::synthesize_doas_data(dict, planted, 0.01, stage_seed(c.seed, 400 + pi));
    for (size_t si = 0; si < c.solvers.size(); ++si) {
      const std::string& label = c.solvers[si];
      const auto t0 = Clock::now();
      Vec x;
      int iters = 0;
      run.stage("solve:" + std::to_string(pi) + ":" + label, [&] {
        if (label == "nnls") {
          x = nnls(dict.entries(), data);
        } else if (label == "l0_pd") {
          const auto r = penalty_decomposition_l0(dict, data);
          x = r.coeffs.x;
          iters = r.outer_iters;
        } else {
          const bool ratio = label == "l1_over_l2";
          SparsityConfig sc = SparsityConfig::uniform(ratio ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2,
                                                      b.groups, 0.05, 0.05, 0.0, 1.0, ratio ? 1 : 0);
          c.sparsity.apply(sc);
          SgpParams sp;
          c.sgp.apply(sp);
          const auto r = solve_sparse(dict, data, sc, sp);
          x = r.final.x;
          iters = r.outer_iters;
        }
      });
      const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
      Index correct = 0;
      for (Index g = 0; g < b.groups; ++g) {
        Index est = 0, tru = 0;
        x.segment(dict.layout().begin(g), b.group_size).maxCoeff(&est);
        planted.x.segment(dict.layout().begin(g), b.group_size).maxCoeff(&tru);
        correct += est == tru;
      }
      const double obj = 0.5 * (dict.entries() * x - data).squaredNorm();
      table.rows.push_back({num(pi), label, num(static_cast<double>(correct) / static_cast<double>(b.groups)), num(obj),
                            num(iters)});
      timing.row(trow++) << pi, static_cast<double>(si), secs;
      run.rec.solvers.push_back({{"label", label}, {"problem", pi}, {"outer_iters", iters}, {"seconds", secs}});
    }
  }
  // wall times are not reproducible, so they live outside metrics.csv
  run.csv("bench_timing.csv", timing, {"problem", "solver_index", "seconds"});
}

RunRecord execute(const ExperimentConfig& input, bool write_files) {
  Run run;
  run.cfg = input.resolved();
  run.cfg.validate();
  run.rec.config = run.cfg.to_json();
  run.rec.seed = run.cfg.seed;
  if (write_files) run.dir = fs::path(run.cfg.output_dir);
  run.text("config.json", run.rec.config.dump(2) + "\n");

  auto finish = [&] {
    if (!run.rec.metrics.columns.empty()) run.text("metrics.csv", run.rec.metrics.to_csv());
    run.text("run_record.json", run.rec.to_json().dump(2) + "\n");
  };
  try {
    switch (run.cfg.kind) {
      case ExperimentKind::DoasAlign: run_doas(run, false); break;
      case ExperimentKind::DoasBackground: run_doas(run, true); break;
      case ExperimentKind::HsiInter: run_hsi_inter(run); break;
      case ExperimentKind::HsiStructured: run_hsi_structured(run); break;
      case ExperimentKind::Bench: run_bench(run); break;
    }
  } catch (const Error&) {
    try {
      finish();
    } catch (...) {
    }
    throw;
  }
  finish();
  return std::move(run.rec);
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg) { return execute(cfg, true); }

MetricsTable compare_solvers(const ExperimentConfig& cfg, const std::vector<std::string>& solvers) {
  require(!solvers.empty(), ErrorKind::Config, "at least one solver is required");
  ExperimentConfig c = cfg;
  c.solvers = solvers;
  return execute(c, false).metrics;
}

}  // namespace ssnls::experiment

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssnls/doas.hpp"
#include "ssnls/hsi.hpp"
#include "ssnls/sgp.hpp"

namespace ssnls::experiment {

using nlohmann::json;

enum class ExperimentKind { DoasAlign, DoasBackground, HsiInter, HsiStructured, Bench };

const char* to_string(ExperimentKind k) noexcept;
ExperimentKind parse_experiment(const std::string& name);

/// Optional replacements for the per-experiment solver defaults.
struct SgpOverrides {
  std::optional<double> sigma, xi1, xi2, c_matrix_scale, tol_energy, tol_step;
  std::optional<int> max_outer;
  std::optional<double> admm_delta, admm_tol;
  std::optional<int> admm_max_iters;

  void apply(SgpParams& p) const;
};

struct SparsityOverrides {
  std::optional<double> gamma_intra, eps_intra, gamma_inter, eps_inter;
  std::optional<Index> min_active;

  void apply(SparsityConfig& s) const;
};

struct DoasSettings {
  Index bands = 0;       // 0: 1024 / scale for alignment, 1024 for background
  std::string grid;      // "full", "desk" or "custom"; empty picks by scale
  std::vector<double> slopes, offsets;  // custom grid
  std::vector<std::string> references;  // CSV paths; empty uses synthetic references
  std::string dictionary_cache;         // stem; loaded when present, written otherwise
  double noise_sd = -1.0;               // < 0: 0 for alignment, 5.58e-5 for background
  std::vector<double> means{1.0, 0.1, 1.5};  // alignment magnitude means per group
  std::vector<std::pair<double, double>> planted_deformations{{0.01, -0.2}, {-0.01, 0.1}, {0.0, 0.0}};
  std::vector<double> planted_magnitudes{0.01206, 0.00112, 0.01589};  // background, original units
  double alpha = 1e-5;
  double background_exponent = 2.0;
  int oracle_draws = 1000;
};

struct HsiSettings {
  Index bands = 0;  // 0: 187 (inter) or 204 (structured)
  Index samples_per_material = 300;
  Index per_group = 0;  // 0: 100 / scale
  std::vector<hsi::SparsityLevel> profile;  // empty: experiment default divided by scale
  double noise_sd = 0.005;
  Index side = 0;  // inter: image side, 0 gives 307 / scale
  std::string scene;       // inter: scene stem to load instead of synthesizing
  std::string endmembers;  // inter: CSV with one endmember per column
};

struct BenchSettings {
  Index rows = 120;
  Index groups = 3;
  Index group_size = 20;
  int problems = 5;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::DoasAlign;
  std::uint64_t seed = 1;
  std::string output_dir = "ssnls_out";
  int scale = 1;  // desk-scale divisor
  int threads = 0;
  std::vector<std::string> solvers;  // empty: every solver of the experiment
  DoasSettings doas;
  HsiSettings hsi;
  BenchSettings bench;
  SgpOverrides sgp;
  SparsityOverrides sparsity;

  static ExperimentConfig from_json(const json& j);
  /// Fills every scale-dependent default; idempotent.
  ExperimentConfig resolved() const;
  json to_json() const;
  void validate() const;
};

std::vector<std::string> default_solvers(ExperimentKind k);

/// Rows of formatted cells under fixed column names.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
};

struct RunRecord {
  json config;  // fully resolved
  json solvers = json::array();
  MetricsTable metrics;
  std::map<std::string, double> wall_seconds;  // per phase
  std::uint64_t seed = 0;

  json to_json() const;
};

/// Runs the configured pipeline and writes config.json, metrics.csv,
/// coefficient and trace CSVs and run_record.json into cfg.output_dir. A
/// failing stage rethrows with the stage name after persisting what exists.
RunRecord run_experiment(const ExperimentConfig& cfg);

/// Same pipeline restricted to `solvers`, without writing files.
MetricsTable compare_solvers(const ExperimentConfig& cfg, const std::vector<std::string>& solvers);

/// Independent generator seed for one pipeline stage.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

}  // namespace ssnls::experiment

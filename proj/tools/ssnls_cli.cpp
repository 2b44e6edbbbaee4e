#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssnls/ssnls.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitIo = 4;

int exit_code(ssnls_status s) {
  switch (s) {
    case SSNLS_OK: return 0;
    case SSNLS_ERR_NONCONVERGENCE:
    case SSNLS_ERR_STALL: return kExitNonConvergence;
    case SSNLS_ERR_IO: return kExitIo;
    case SSNLS_ERR_CONFIG:
    case SSNLS_ERR_SHAPE:
    case SSNLS_ERR_DOMAIN:
    case SSNLS_ERR_DEGENERATE: return kExitConfig;
    case SSNLS_ERR_INTERNAL: return 1;
  }
  return 1;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_table(const nlohmann::json& metrics) {
  const auto cols = metrics.at("columns").get<std::vector<std::string>>();
  const auto rows = metrics.at("rows").get<std::vector<std::vector<std::string>>>();
  std::vector<size_t> width(cols.size());
  for (size_t i = 0; i < cols.size(); ++i) width[i] = cols[i].size();
  for (const auto& r : rows)
    for (size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      std::cout << (i ? "  " : "") << cells[i] << std::string(width[i] - cells[i].size(), ' ');
    }
    std::cout << '\n';
  };
  line(cols);
  for (const auto& r : rows) line(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured sparse non-negative least squares experiments"};
  std::string experiment, config_path, solvers, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> scale, threads;
  bool print_config = false;
  bool quiet = false;
  app.add_option("--experiment", experiment,
                 "doas_align, doas_background, hsi_inter, hsi_structured or bench");
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--solver", solvers, "comma-separated solver names");
  app.add_option("--seed", seed, "experiment seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--scale", scale, "desk-scale divisor for the experiment sizes")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "worker threads for pixel loops (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--print-config", print_config, "print the resolved config and exit");
  app.add_flag("--quiet", quiet, "do not print the metrics table");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  nlohmann::json cfg = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot read " << config_path << '\n';
      return kExitIo;
    }
    try {
      cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: " << config_path << ": " << e.what() << '\n';
      return kExitConfig;
    }
  }
  if (!experiment.empty()) cfg["experiment"] = experiment;
  if (!solvers.empty()) cfg["solvers"] = split_list(solvers);
  if (seed) cfg["seed"] = *seed;
  if (!out_dir.empty()) cfg["output_dir"] = out_dir;
  if (scale) cfg["scale"] = *scale;
  if (threads) cfg["threads"] = *threads;
  if (!cfg.contains("experiment")) {
    std::cerr << "error: --experiment or a config with \"experiment\" is required\n";
    return kExitConfig;
  }
  const std::string text = cfg.dump();

  if (print_config) {
    char* resolved = nullptr;
    const ssnls_status s = ssnls_resolve_config(text.c_str(), &resolved);
    if (s != SSNLS_OK) {
      std::cerr << "error: " << ssnls_last_error() << '\n';
      return exit_code(s);
    }
    std::cout << resolved << '\n';
    ssnls_string_free(resolved);
    return 0;
  }

  char* record = nullptr;
  const ssnls_status s = ssnls_run_experiment(text.c_str(), nullptr, &record);
  if (s != SSNLS_OK) {
    std::cerr << "error: " << ssnls_last_error() << '\n';
    return exit_code(s);
  }
  const auto rec = nlohmann::json::parse(record);
  ssnls_string_free(record);
  if (!quiet) print_table(rec.at("metrics"));
  std::cout << "results written to " << rec.at("config").at("output_dir").get<std::string>() << '\n';
  return 0;
}

#include "ssnls/ssnls.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "ssnls/baselines.hpp"
#include "ssnls/experiment.hpp"
#include "ssnls/sgp.hpp"

struct ssnls_dictionary {
  ssnls::GroupedDictionary dict;
};

struct ssnls_result {
  ssnls::SolveReport report;
};

namespace {

thread_local std::string last_error;

ssnls_status status_of(ssnls::ErrorKind k) {
  switch (k) {
    case ssnls::ErrorKind::Shape: return SSNLS_ERR_SHAPE;
    case ssnls::ErrorKind::Domain: return SSNLS_ERR_DOMAIN;
    case ssnls::ErrorKind::Config: return SSNLS_ERR_CONFIG;
    case ssnls::ErrorKind::Degenerate: return SSNLS_ERR_DEGENERATE;
    case ssnls::ErrorKind::NonConvergence: return SSNLS_ERR_NONCONVERGENCE;
    case ssnls::ErrorKind::Stall: return SSNLS_ERR_STALL;
    case ssnls::ErrorKind::Io: return SSNLS_ERR_IO;
  }
  return SSNLS_ERR_INTERNAL;
}

template <class F>
ssnls_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return SSNLS_OK;
  } catch (const ssnls::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SSNLS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SSNLS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return SSNLS_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  ssnls::require(p != nullptr, ssnls::ErrorKind::Config, std::string(what) + " must not be NULL");
}

ssnls::Vec data_vector(const ssnls_dictionary* dict, const double* b, int64_t len) {
  need(dict, "dictionary");
  need(b, "data");
  ssnls::require(len == dict->dict.rows(), ssnls::ErrorKind::Shape, "data length does not match dictionary rows");
  return Eigen::Map<const ssnls::Vec>(b, len);
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* ssnls_last_error(void) { return last_error.c_str(); }

const char* ssnls_version(void) { return "0.1.0"; }

ssnls_status ssnls_dictionary_create(const double* entries, int64_t rows, int64_t cols, const int64_t* group_offsets,
                                     int64_t n_groups, const int* free_groups, int normalize, ssnls_dictionary** out) {
  return guarded([&] {
    need(entries, "entries");
    need(out, "out");
    *out = nullptr;
    ssnls::require(rows > 0 && cols > 0, ssnls::ErrorKind::Shape, "dictionary dimensions must be positive");
    ssnls::GroupLayout layout;
    if (group_offsets) {
      ssnls::require(n_groups >= 1, ssnls::ErrorKind::Shape, "n_groups must be positive");
      layout.offsets.assign(group_offsets, group_offsets + n_groups + 1);
      ssnls::require(layout.offsets.back() == cols, ssnls::ErrorKind::Shape, "group offsets must end at cols");
    } else {
      layout = ssnls::GroupLayout::single(cols);
    }
    if (free_groups) {
      layout.free.resize(static_cast<size_t>(layout.num_groups()));
      for (size_t j = 0; j < layout.free.size(); ++j) layout.free[j] = free_groups[j] != 0;
    }
    const ssnls::Mat a = Eigen::Map<const ssnls::Mat>(entries, rows, cols);
    auto d = normalize ? ssnls::normalize_columns(a, layout) : ssnls::GroupedDictionary(a, layout);
    *out = new ssnls_dictionary{std::move(d)};
  });
}

void ssnls_dictionary_destroy(ssnls_dictionary* dict) { delete dict; }

int64_t ssnls_dictionary_rows(const ssnls_dictionary* dict) { return dict ? dict->dict.rows() : 0; }
int64_t ssnls_dictionary_cols(const ssnls_dictionary* dict) { return dict ? dict->dict.cols() : 0; }
int64_t ssnls_dictionary_groups(const ssnls_dictionary* dict) { return dict ? dict->dict.num_groups() : 0; }

ssnls_status ssnls_dictionary_scales(const ssnls_dictionary* dict, double* out) {
  return guarded([&] {
    need(dict, "dictionary");
    need(out, "out");
    ssnls::Vec::Map(out, dict->dict.cols()) = dict->dict.scales();
  });
}

void ssnls_options_default(ssnls_family family, ssnls_options* out) {
  if (!out) return;
  const ssnls::SgpParams p;
  *out = ssnls_options{family, 0.05, 0.05, 0.0, 1.0, family == SSNLS_HOYER_RATIO ? 1 : 0,
                       p.sigma, p.xi1, p.xi2, p.c_matrix_scale, p.tol_energy, p.tol_step, p.max_outer,
                       p.admm.delta, p.admm.tol_primal_rel, p.admm.max_iters};
}

ssnls_status ssnls_solve(const ssnls_dictionary* dict, const double* b, int64_t len, const ssnls_options* options,
                         ssnls_result** out) {
  return guarded([&] {
    need(options, "options");
    need(out, "out");
    *out = nullptr;
    const ssnls::Vec data = data_vector(dict, b, len);
    const auto family =
        options->family == SSNLS_HOYER_RATIO ? ssnls::PenaltyFamily::HoyerRatio : ssnls::PenaltyFamily::DiffL1L2;
    ssnls::require(options->family == SSNLS_HOYER_RATIO || options->family == SSNLS_DIFF_L1_L2,
                   ssnls::ErrorKind::Config, "unknown penalty family");
    ssnls::SparsityConfig sc = ssnls::SparsityConfig::uniform(
        family, dict->dict.num_groups(), options->gamma_intra, options->eps_intra, options->gamma_inter,
        options->eps_inter, options->min_active_groups);
    ssnls::SgpParams p;
    p.sigma = options->sigma;
    p.xi1 = options->xi1;
    p.xi2 = options->xi2;
    p.c_matrix_scale = options->c_matrix_scale;
    p.tol_energy = options->tol_energy;
    p.tol_step = options->tol_step;
    p.max_outer = options->max_outer;
    p.admm.delta = options->admm_delta;
    p.admm.tol_primal_rel = p.admm.tol_dual_rel = options->admm_tol;
    p.admm.max_iters = options->admm_max_iters;
    *out = new ssnls_result{ssnls::solve_sparse(dict->dict, data, sc, p)};
  });
}

void ssnls_result_destroy(ssnls_result* result) { delete result; }

int64_t ssnls_result_size(const ssnls_result* result) { return result ? result->report.final.x.size() : 0; }

ssnls_status ssnls_result_coeffs(const ssnls_result* result, double* out, int64_t len) {
  return guarded([&] {
    need(result, "result");
    need(out, "out");
    ssnls::require(len == result->report.final.x.size(), ssnls::ErrorKind::Shape, "output length mismatch");
    ssnls::Vec::Map(out, len) = result->report.final.x;
  });
}

int ssnls_result_outer_iters(const ssnls_result* result) { return result ? result->report.outer_iters : 0; }
int ssnls_result_inner_iters(const ssnls_result* result) { return result ? result->report.inner_iters_total : 0; }

const char* ssnls_result_termination(const ssnls_result* result) {
  return result ? ssnls::to_string(result->report.termination) : "";
}

int64_t ssnls_result_trace_length(const ssnls_result* result) {
  return result ? static_cast<int64_t>(result->report.objective_trace.size()) : 0;
}

ssnls_status ssnls_result_trace(const ssnls_result* result, double* out, int64_t len) {
  return guarded([&] {
    need(result, "result");
    need(out, "out");
    const auto& t = result->report.objective_trace;
    ssnls::require(len == static_cast<int64_t>(t.size()), ssnls::ErrorKind::Shape, "output length mismatch");
    std::copy(t.begin(), t.end(), out);
  });
}

ssnls_status ssnls_nnls(const ssnls_dictionary* dict, const double* b, int64_t len, double* x) {
  return guarded([&] {
    const ssnls::Vec data = data_vector(dict, b, len);
    need(x, "x");
    ssnls::Vec::Map(x, dict->dict.cols()) = ssnls::nnls(dict->dict.entries(), data);
  });
}

ssnls_status ssnls_l1_penalized(const ssnls_dictionary* dict, const double* b, int64_t len, double gamma, double* x) {
  return guarded([&] {
    const ssnls::Vec data = data_vector(dict, b, len);
    need(x, "x");
    ssnls::require(gamma >= 0.0, ssnls::ErrorKind::Config, "gamma must be non-negative");
    ssnls::Vec::Map(x, dict->dict.cols()) =
        ssnls::l1_penalized(dict->dict.entries(), data, ssnls::Vec::Constant(dict->dict.cols(), gamma));
  });
}

ssnls_status ssnls_l1_constrained(const ssnls_dictionary* dict, const double* b, int64_t len, double tau, double* x) {
  return guarded([&] {
    const ssnls::Vec data = data_vector(dict, b, len);
    need(x, "x");
    ssnls::Vec::Map(x, dict->dict.cols()) = ssnls::l1_bregman(dict->dict.entries(), data, tau).x;
  });
}

ssnls_status ssnls_l0_penalty_decomposition(const ssnls_dictionary* dict, const double* b, int64_t len, double* x) {
  return guarded([&] {
    const ssnls::Vec data = data_vector(dict, b, len);
    need(x, "x");
    ssnls::Vec::Map(x, dict->dict.cols()) = ssnls::penalty_decomposition_l0(dict->dict, data).coeffs.x;
  });
}

ssnls_status ssnls_run_experiment(const char* config_json, const char* output_dir, char** record_json) {
  return guarded([&] {
    need(config_json, "config_json");
    if (record_json) *record_json = nullptr;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
      ssnls::fail(ssnls::ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    auto cfg = ssnls::experiment::ExperimentConfig::from_json(j);
    if (output_dir) cfg.output_dir = output_dir;
    const auto rec = ssnls::experiment::run_experiment(cfg);
    if (record_json) *record_json = copy_string(rec.to_json().dump(2));
  });
}

ssnls_status ssnls_resolve_config(const char* config_json, char** resolved_json) {
  return guarded([&] {
    need(config_json, "config_json");
    need(resolved_json, "resolved_json");
    *resolved_json = nullptr;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
      ssnls::fail(ssnls::ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    const auto cfg = ssnls::experiment::ExperimentConfig::from_json(j).resolved();
    cfg.validate();
    *resolved_json = copy_string(cfg.to_json().dump(2));
  });
}

void ssnls_string_free(char* s) { std::free(s); }

}  // extern "C"

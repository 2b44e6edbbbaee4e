#include "ssnls/core.hpp"

#include <cmath>
#include <string>

#include "ssnls/penalties.hpp"

namespace ssnls {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::Stall: return "stall";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// GroupLayout

GroupLayout GroupLayout::single(Index n) { return GroupLayout{{0, n}, {}}; }

GroupLayout GroupLayout::uniform(Index groups, Index size) {
  GroupLayout layout;
  for (Index j = 0; j <= groups; ++j) layout.offsets.push_back(j * size);
  return layout;
}

Index GroupLayout::num_constrained_groups() const {
  Index count = 0;
  for (Index j = 0; j < num_groups(); ++j) count += is_free(j) ? 0 : 1;
  return count;
}

Index GroupLayout::group_of(Index col) const {
  require(col >= 0 && col < num_coeffs(), ErrorKind::Shape, "group_of: column out of range");
  Index j = 0;
  while (offsets[static_cast<size_t>(j) + 1] <= col) ++j;
  return j;
}

Vec GroupLayout::constrained_mask() const {
  Vec mask = Vec::Ones(num_coeffs());
  for (Index j = 0; j < num_groups(); ++j)
    if (is_free(j)) mask.segment(begin(j), size(j)).setZero();
  return mask;
}

void GroupLayout::validate() const {
  require(offsets.size() >= 2, ErrorKind::Shape, "group layout needs at least one group");
  require(offsets.front() == 0, ErrorKind::Shape, "group offsets must start at 0");
  for (size_t i = 1; i < offsets.size(); ++i)
    require(offsets[i] > offsets[i - 1], ErrorKind::Shape,
            "group offsets must be strictly increasing");
  require(free.empty() || free.size() + 1 == offsets.size(), ErrorKind::Shape,
          "free-group flags must have one entry per group");
}

// ---------------------------------------------------------------------------
// GroupedDictionary

GroupedDictionary::GroupedDictionary(Mat entries, GroupLayout layout, Vec scales,
                                     std::vector<bool> padding)
    : entries_(std::move(entries)), layout_(std::move(layout)), scales_(std::move(scales)) {
  if (layout_.offsets.empty()) layout_ = GroupLayout::single(entries_.cols());
  layout_.validate();
  require(layout_.num_coeffs() == entries_.cols(), ErrorKind::Shape,
          "group offsets must end at the number of dictionary columns");
  if (scales_.size() == 0) scales_ = Vec::Ones(entries_.cols());
  require(scales_.size() == entries_.cols(), ErrorKind::Shape, "one scale per column required");
  require(padding.empty() || static_cast<Index>(padding.size()) == entries_.cols(),
          ErrorKind::Shape, "padding flags must have one entry per column");

  for (Index j = 0; j < layout_.num_groups(); ++j) {
    if (layout_.is_free(j)) continue;
    for (Index c = layout_.begin(j); c < layout_.begin(j) + layout_.size(j); ++c) {
      const bool pad = !padding.empty() && padding[static_cast<size_t>(c)];
      const double norm = entries_.col(c).norm();
      if (pad && norm == 0.0) continue;
      require(std::abs(norm - 1.0) <= 1e-12, ErrorKind::Degenerate,
              "dictionary column " + std::to_string(c) + " is not unit norm");
    }
  }
}

Vec GroupedDictionary::denormalize(const Vec& x) const {
  require(x.size() == cols(), ErrorKind::Shape, "denormalize: length mismatch");
  return x.cwiseQuotient(scales_);
}

GroupedDictionary normalize_columns(const Mat& raw, GroupLayout layout,
                                    const std::vector<bool>& padding) {
  if (layout.offsets.empty()) layout = GroupLayout::single(raw.cols());
  require(padding.empty() || static_cast<Index>(padding.size()) == raw.cols(), ErrorKind::Shape,
          "padding flags must have one entry per column");
  Mat out = raw;
  Vec scales = Vec::Ones(raw.cols());
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    for (Index c = layout.begin(j); c < layout.begin(j) + layout.size(j); ++c) {
      const double norm = raw.col(c).norm();
      if (norm == 0.0) {
        require(!padding.empty() && padding[static_cast<size_t>(c)], ErrorKind::Degenerate,
                "column " + std::to_string(c) + " is identically zero");
        continue;
      }
      out.col(c) /= norm;
      scales(c) = norm;
    }
  }
  return GroupedDictionary(std::move(out), std::move(layout), std::move(scales), padding);
}

// ---------------------------------------------------------------------------
// SparsityConfig

SparsityConfig SparsityConfig::uniform(PenaltyFamily family, Index groups, double gamma,
                                       double eps, double gamma_inter, double eps_inter,
                                       Index min_active) {
  SparsityConfig cfg;
  cfg.family = family;
  cfg.gamma_intra = Vec::Constant(groups, gamma);
  cfg.eps_intra = Vec::Constant(groups, eps);
  cfg.gamma_inter = gamma_inter;
  cfg.eps_inter = eps_inter;
  cfg.min_active_groups = min_active;
  return cfg;
}

void SparsityConfig::validate(const GroupLayout& layout) const {
  const Index m = layout.num_groups();
  require(gamma_intra.size() == m, ErrorKind::Config, "gamma_intra needs one entry per group");
  require(eps_intra.size() == m, ErrorKind::Config, "eps_intra needs one entry per group");
  require((gamma_intra.array() >= 0.0).all() && gamma_inter >= 0.0, ErrorKind::Config,
          "sparsity weights must be non-negative");
  require((eps_intra.array() > 0.0).all() && eps_inter > 0.0, ErrorKind::Config,
          "smoothing levels eps must be positive");
  require(min_active_groups >= 0 && min_active_groups <= layout.num_constrained_groups(),
          ErrorKind::Config, "min_active_groups must lie in [0, M]");
}

// ---------------------------------------------------------------------------
// Objectives

Vec constrained_part(const GroupLayout& layout, const Vec& x) {
  if (layout.free.empty()) return x;
  Vec out(x.size());
  Index k = 0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    out.segment(k, layout.size(j)) = x.segment(layout.begin(j), layout.size(j));
    k += layout.size(j);
  }
  out.conservativeResize(k);
  return out;
}

namespace {

void scatter_constrained(const GroupLayout& layout, const Vec& packed, double weight, Vec& into) {
  Index k = 0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    into.segment(layout.begin(j), layout.size(j)) += weight * packed.segment(k, layout.size(j));
    k += layout.size(j);
  }
}

ObjectiveEval data_term(const GroupedDictionary& dict, const Vec& b, const Vec& x) {
  require(b.size() == dict.rows(), ErrorKind::Shape, "data vector length does not match dictionary rows");
  require(x.size() == dict.cols(), ErrorKind::Shape, "coefficient length does not match dictionary columns");
  ObjectiveEval out;
  out.residual = dict.entries() * x - b;
  out.data_term = 0.5 * out.residual.squaredNorm();
  out.grad_x = dict.entries().transpose() * out.residual;
  return out;
}

}  // namespace

ObjectiveEval eval_objective_p2(const GroupedDictionary& dict, const Vec& b,
                                const GroupedCoeffs& coeffs, const SparsityConfig& cfg) {
  require(cfg.family == PenaltyFamily::DiffL1L2, ErrorKind::Config,
          "eval_objective_p2 requires the DiffL1L2 family");
  require(!coeffs.d, ErrorKind::Shape, "eval_objective_p2 takes no dummy variables");
  const GroupLayout& layout = dict.layout();
  cfg.validate(layout);
  ObjectiveEval out = data_term(dict, b, coeffs.x);

  double penalty = 0.0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    const double gamma = cfg.gamma_intra(j);
    if (layout.is_free(j) || gamma == 0.0) continue;
    const PenaltyEval s = diff_l1_l2(coeffs.x.segment(layout.begin(j), layout.size(j)), cfg.eps_intra(j));
    penalty += gamma * s.value;
    out.grad_x.segment(layout.begin(j), layout.size(j)) += gamma * s.grad;
  }
  if (cfg.gamma_inter > 0.0) {
    const PenaltyEval s = diff_l1_l2(constrained_part(layout, coeffs.x), cfg.eps_inter);
    penalty += cfg.gamma_inter * s.value;
    scatter_constrained(layout, s.grad, cfg.gamma_inter, out.grad_x);
  }
  out.penalty_term = penalty;
  out.value = out.data_term + penalty;
  return out;
}

ObjectiveEval eval_objective_p1(const GroupedDictionary& dict, const Vec& b,
                                const GroupedCoeffs& coeffs, const SparsityConfig& cfg) {
  require(cfg.family == PenaltyFamily::HoyerRatio, ErrorKind::Config,
          "eval_objective_p1 requires the HoyerRatio family");
  const GroupLayout& layout = dict.layout();
  require(coeffs.d && coeffs.d->size() == layout.num_groups(), ErrorKind::Shape,
          "eval_objective_p1 needs one dummy variable per group");
  cfg.validate(layout);
  ObjectiveEval out = data_term(dict, b, coeffs.x);
  const Vec& d = *coeffs.d;
  Vec grad_d = Vec::Zero(d.size());

  double penalty = 0.0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    const Index m = layout.size(j);
    Vec stacked(m + 1);
    stacked << coeffs.x.segment(layout.begin(j), m), d(j);
    require(stacked.squaredNorm() > 0.0, ErrorKind::Domain,
            "group " + std::to_string(j) + " stacked with its dummy is identically zero");
    const double gamma = cfg.gamma_intra(j);
    if (gamma == 0.0) continue;
    const PenaltyEval h = hoyer_ratio(stacked);
    penalty += gamma * h.value;
    out.grad_x.segment(layout.begin(j), m) += gamma * h.grad.head(m);
    grad_d(j) = gamma * h.grad(m);
  }
  if (cfg.gamma_inter > 0.0) {
    const PenaltyEval h = hoyer_ratio(constrained_part(layout, coeffs.x));
    penalty += cfg.gamma_inter * h.value;
    scatter_constrained(layout, h.grad, cfg.gamma_inter, out.grad_x);
  }
  out.grad_d = std::move(grad_d);
  out.penalty_term = penalty;
  out.value = out.data_term + penalty;
  return out;
}

ObjectiveEval eval_objective(const GroupedDictionary& dict, const Vec& b,
                             const GroupedCoeffs& coeffs, const SparsityConfig& cfg) {
  return cfg.family == PenaltyFamily::HoyerRatio ? eval_objective_p1(dict, b, coeffs, cfg)
                                                 : eval_objective_p2(dict, b, coeffs, cfg);
}

bool is_feasible_p1(const GroupLayout& layout, const SparsityConfig& cfg,
                    const GroupedCoeffs& coeffs, double tol) {
  if (!coeffs.d || coeffs.d->size() != layout.num_groups()) return false;
  const Vec& d = *coeffs.d;
  double budget_used = 0.0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    const auto xj = coeffs.x.segment(layout.begin(j), layout.size(j));
    if (xj.minCoeff() < -tol || d(j) < -tol) return false;
    if (xj.sum() + d(j) < cfg.eps_intra(j) - tol) return false;
    budget_used += d(j) / cfg.eps_intra(j);
  }
  const double budget =
      static_cast<double>(layout.num_constrained_groups() - cfg.min_active_groups);
  return budget_used <= budget + tol;
}

}  // namespace ssnls

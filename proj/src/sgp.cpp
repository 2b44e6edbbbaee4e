#include "ssnls/sgp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace ssnls {

const char* to_string(Termination t) noexcept {
  switch (t) {
    case Termination::StepTol: return "step_tol";
    case Termination::EnergyTol: return "energy_tol";
    case Termination::MaxIters: return "max_iters";
  }
  return "unknown";
}

void SgpParams::validate() const {
  require(c0 > 0.0, ErrorKind::Config, "c0 must be positive");
  require(sigma > 0.0 && sigma <= 1.0, ErrorKind::Config, "sigma must lie in (0, 1]");
  require(xi1 > 1.0 && xi2 > 1.0, ErrorKind::Config, "xi1 and xi2 must exceed 1");
  require(rho > 0.0, ErrorKind::Config, "rho must be positive");
  require(tol_step >= 0.0 && tol_energy >= 0.0, ErrorKind::Config, "tolerances must be non-negative");
  require(max_outer >= 1, ErrorKind::Config, "max_outer must be at least 1");
  require(c_matrix_scale > 0.0, ErrorKind::Config, "c_matrix_scale must be positive");
  require(admm.tol_primal_rel > 0.0 && admm.tol_dual_rel > 0.0, ErrorKind::Config,
          "ADMM tolerances must be positive");
  require(admm.max_iters >= 1, ErrorKind::Config, "ADMM max_iters must be at least 1");
}

namespace {

SparsityConfig ramped(const SparsityConfig& cfg, const SgpParams& params, int n) {
  if (!params.ramp) return cfg;
  const double f = std::min(1.0, params.ramp->start * std::pow(params.ramp->growth, n));
  SparsityConfig out = cfg;
  out.gamma_intra *= f;
  out.gamma_inter *= f;
  return out;
}

void check_inputs(const GroupedDictionary& dict, const Vec& b, const GroupedCoeffs& init) {
  require(b.size() == dict.rows(), ErrorKind::Shape, "data length does not match dictionary rows");
  require(init.x.size() == dict.cols(), ErrorKind::Shape,
          "initial coefficients do not match dictionary columns");
}

Vec clip_constrained(const GroupLayout& layout, Vec x) {
  for (Index j = 0; j < layout.num_groups(); ++j)
    if (!layout.is_free(j)) x.segment(layout.begin(j), layout.size(j)) = x.segment(layout.begin(j), layout.size(j)).cwiseMax(0.0);
  return x;
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

[[noreturn]] void inner_failure(const QpSolution& sol, int outer) {
  fail(ErrorKind::NonConvergence,
       "ADMM subproblem did not converge at outer iteration " + std::to_string(outer) +
           " (iters=" + std::to_string(sol.iters) + ", primal=" + std::to_string(sol.primal_res) +
           ", dual=" + std::to_string(sol.dual_res) + ")");
}

}  // namespace

GroupedCoeffs make_feasible_p1(const GroupLayout& layout, const SparsityConfig& cfg,
                               GroupedCoeffs coeffs) {
  const Index m = layout.num_groups();
  coeffs.x = clip_constrained(layout, std::move(coeffs.x));
  Vec d = coeffs.d && coeffs.d->size() == m ? coeffs.d->cwiseMax(0.0) : Vec(Vec::Zero(m));
  for (Index j = 0; j < m; ++j) {
    if (layout.is_free(j)) {
      d(j) = 0.0;
      continue;
    }
    const double mass = coeffs.x.segment(layout.begin(j), layout.size(j)).sum() + d(j);
    if (mass < cfg.eps_intra(j)) d(j) += cfg.eps_intra(j) - mass;
  }

  const double budget = static_cast<double>(layout.num_constrained_groups() - cfg.min_active_groups);
  auto used = [&] {
    double s = 0.0;
    for (Index j = 0; j < m; ++j)
      if (!layout.is_free(j)) s += d(j) / cfg.eps_intra(j);
    return s;
  };
  if (used() > budget) {
    // Move dummy mass into x, largest relative dummies first, until the budget holds.
    std::vector<Index> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return d(a) / cfg.eps_intra(a) > d(b) / cfg.eps_intra(b);
    });
    for (Index j : order) {
      if (used() <= budget) break;
      if (layout.is_free(j) || d(j) == 0.0) continue;
      coeffs.x.segment(layout.begin(j), layout.size(j)).array() += d(j) / static_cast<double>(layout.size(j));
      d(j) = 0.0;
    }
  }
  coeffs.d = std::move(d);
  return coeffs;
}

GroupedCoeffs default_initialization(const GroupedDictionary& dict, const Vec& b,
                                     const SparsityConfig& cfg) {
  const GroupLayout& layout = dict.layout();
  const Vec mask = layout.constrained_mask();
  const Vec column_sum = dict.entries() * mask;
  const double denom = column_sum.squaredNorm();
  double level = denom > 0.0 ? column_sum.dot(b) / denom : 0.0;
  if (!(level > 0.0)) level = 1e-6;

  GroupedCoeffs init;
  init.x = level * mask;
  if (cfg.family == PenaltyFamily::HoyerRatio) init = make_feasible_p1(layout, cfg, std::move(init));
  return init;
}

SolveReport solve_problem2(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                           const SgpParams& params, const GroupedCoeffs& init) {
  require(cfg.family == PenaltyFamily::DiffL1L2, ErrorKind::Config,
          "solve_problem2 requires the DiffL1L2 family");
  params.validate();
  cfg.validate(dict.layout());
  check_inputs(dict, b, init);

  const GroupLayout& layout = dict.layout();
  const auto gram = std::make_shared<const Mat>(dict.entries().transpose() * dict.entries());
  const Index n = dict.cols();

  SolveReport report;
  GroupedCoeffs x{clip_constrained(layout, init.x), std::nullopt};
  SparsityConfig active = ramped(cfg, params, 0);
  ObjectiveEval fx = eval_objective_p2(dict, b, x, active);
  report.objective_trace.push_back(fx.value);

  AdmmQpSolver solver;
  QpSubproblem qp;
  qp.gram = gram;
  qp.layout = layout;
  qp.shift_x = Vec::Constant(n, params.c_matrix_scale);
  qp.feasible_set = FeasibleSetKind::NonnegOrthant;

  for (int outer = 0; outer < params.max_outer; ++outer) {
    if (params.ramp && outer > 0) {
      active = ramped(cfg, params, outer);
      fx = eval_objective_p2(dict, b, x, active);
    }
    qp.lin_x = fx.grad_x;
    qp.anchor_x = x.x;

    AdmmParams admm = params.admm;
    QpSolution sol = solver.solve(qp, admm);
    report.inner_iters_total += sol.iters;
    if (!sol.converged) inner_failure(sol, outer);
    GroupedCoeffs y{sol.x, std::nullopt};
    ObjectiveEval fy = eval_objective_p2(dict, b, y, active);

    // The descent estimate holds for the exact QP minimizer; an inexact ADMM
    // solution may miss it by rounding. Tighten the inner solve before giving up.
    for (int refine = 0; refine < 3 && fy.value > fx.value; ++refine) {
      admm.tol_primal_rel *= 0.01;
      admm.tol_dual_rel *= 0.01;
      sol = solver.solve(qp, admm);
      report.inner_iters_total += sol.iters;
      y.x = sol.x;
      fy = eval_objective_p2(dict, b, y, active);
    }
    if (fy.value > fx.value) {
      report.termination = Termination::EnergyTol;
      break;
    }

    const double step = inf_norm(y.x - x.x);
    const double decrease = fx.value - fy.value;
    x = std::move(y);
    fx = std::move(fy);
    report.objective_trace.push_back(fx.value);
    report.c_trace.push_back(1.0);
    report.step_trace.push_back(step);
    ++report.outer_iters;

    if (step <= params.tol_step) {
      report.termination = Termination::StepTol;
      break;
    }
    if (decrease < params.tol_energy) {
      report.termination = Termination::EnergyTol;
      break;
    }
  }
  report.final = std::move(x);
  return report;
}

SolveReport solve_problem1(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                           const SgpParams& params, const GroupedCoeffs& init) {
  require(cfg.family == PenaltyFamily::HoyerRatio, ErrorKind::Config,
          "solve_problem1 requires the HoyerRatio family");
  params.validate();
  cfg.validate(dict.layout());
  check_inputs(dict, b, init);

  const GroupLayout& layout = dict.layout();
  const Index n = dict.cols();
  const Index m = layout.num_groups();
  const auto gram = std::make_shared<const Mat>(dict.entries().transpose() * dict.entries());

  SolveReport report;
  GroupedCoeffs x = make_feasible_p1(layout, cfg, init);
  SparsityConfig active = ramped(cfg, params, 0);
  ObjectiveEval fx = eval_objective_p1(dict, b, x, active);
  report.objective_trace.push_back(fx.value);

  AdmmQpSolver solver;
  QpSubproblem qp;
  qp.gram = gram;
  qp.layout = layout;
  qp.feasible_set = FeasibleSetKind::GroupFloorPlusBudget;
  qp.eps = cfg.eps_intra;
  qp.budget = static_cast<double>(layout.num_constrained_groups() - cfg.min_active_groups);

  double c = params.c0;
  int consecutive_rejections = 0;
  while (report.outer_iters < params.max_outer) {
    if (params.ramp && report.outer_iters > 0 && consecutive_rejections == 0) {
      active = ramped(cfg, params, report.outer_iters);
      fx = eval_objective_p1(dict, b, x, active);
    }
    const double shift = c * params.c_matrix_scale;
    qp.shift_x = Vec::Constant(n, shift);
    qp.shift_d = Vec::Constant(m, shift);
    qp.lin_x = fx.grad_x;
    qp.lin_d = *fx.grad_d;
    qp.anchor_x = x.x;
    qp.anchor_d = *x.d;

    const QpSolution sol = solver.solve(qp, params.admm);
    report.inner_iters_total += sol.iters;
    if (!sol.converged) {
      // A tiny c_n leaves the model nearly flat along null directions of A;
      // more curvature makes the subproblem well posed.
      ++report.rejections;
      if (++consecutive_rejections > params.max_rejections) inner_failure(sol, report.outer_iters);
      c *= params.xi2;
      continue;
    }
    GroupedCoeffs y{sol.x, sol.d};
    const double model = qp.model_value(y.x, &*y.d);
    ObjectiveEval fy = eval_objective_p1(dict, b, y, active);

    if (fy.value - fx.value > params.sigma * model) {
      ++report.rejections;
      // The model predicts no decrease worth resolving: x^n is stationary to tolerance.
      if (-model < params.tol_energy && std::abs(fy.value - fx.value) < params.tol_energy) {
        report.termination = Termination::EnergyTol;
        break;
      }
      if (++consecutive_rejections > params.max_rejections)
        fail(ErrorKind::Stall, "no acceptable c_n after " + std::to_string(params.max_rejections) +
                                   " increases (c_n = " + std::to_string(c) + ")");
      c *= params.xi2;
      continue;
    }
    consecutive_rejections = 0;

    const double step = std::max(inf_norm(y.x - x.x), inf_norm(*y.d - *x.d));
    const double decrease = fx.value - fy.value;
    x = std::move(y);
    fx = std::move(fy);
    report.objective_trace.push_back(fx.value);
    report.c_trace.push_back(c);
    report.step_trace.push_back(step);
    ++report.outer_iters;

    // Conservative eigenvalue floor: lambda_min(A^TA/2) >= 0.
    if ((c / params.xi1) * params.c_matrix_scale >= params.rho) c /= params.xi1;

    if (step <= params.tol_step) {
      report.termination = Termination::StepTol;
      break;
    }
    if (decrease < params.tol_energy) {
      report.termination = Termination::EnergyTol;
      break;
    }
  }
  report.final = std::move(x);
  return report;
}

SolveReport solve_sparse(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                         const SgpParams& params) {
  const GroupedCoeffs init = default_initialization(dict, b, cfg);
  return cfg.family == PenaltyFamily::HoyerRatio ? solve_problem1(dict, b, cfg, params, init)
                                                 : solve_problem2(dict, b, cfg, params, init);
}

bool check_descent_estimate(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                            const GroupedCoeffs& x, const GroupedCoeffs& y, double lambda_r,
                            double lambda_R, double c_scale, double slack) {
  const ObjectiveEval fx = eval_objective(dict, b, x, cfg);
  const ObjectiveEval fy = eval_objective(dict, b, y, cfg);
  const Vec hx = y.x - x.x;
  double h_sq = hx.squaredNorm();
  double linear = hx.dot(fx.grad_x);
  if (x.d && y.d) {
    const Vec hd = *y.d - *x.d;
    h_sq += hd.squaredNorm();
    linear += hd.dot(*fx.grad_d);
  }
  const double data_curv = 0.5 * (dict.entries() * hx).squaredNorm();
  const double rhs = (lambda_R - 0.5 * lambda_r - c_scale) * h_sq + data_curv + c_scale * h_sq + linear;
  return fy.value - fx.value <= rhs + slack * (1.0 + std::abs(fx.value));
}

}  // namespace ssnls

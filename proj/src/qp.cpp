#include "ssnls/qp.hpp"

#include <algorithm>
#include <cmath>

#include "ssnls/prox.hpp"

namespace ssnls {

double QpSubproblem::model_value(const Vec& x, const Vec* d) const {
  const Vec h = x - anchor_x;
  double value = 0.5 * h.dot(*gram * h) + h.dot(shift_x.cwiseProduct(h)) + h.dot(lin_x);
  if (has_dummies() && d) {
    const Vec hd = *d - anchor_d;
    value += hd.dot(shift_d.cwiseProduct(hd)) + hd.dot(lin_d);
  }
  return value;
}

void QpSubproblem::validate() const {
  require(gram != nullptr, ErrorKind::Config, "QP subproblem has no Gram matrix");
  const Index n = gram->rows();
  require(gram->cols() == n && layout.num_coeffs() == n, ErrorKind::Shape, "QP Gram shape mismatch");
  require(shift_x.size() == n && lin_x.size() == n && anchor_x.size() == n, ErrorKind::Shape,
          "QP x-block vectors must match the Gram size");
  require((shift_x.array() >= 0.0).all(), ErrorKind::Config, "QP shift must be non-negative");
  if (has_dummies()) {
    const Index m = layout.num_groups();
    require(shift_d.size() == m && lin_d.size() == m && anchor_d.size() == m && eps.size() == m,
            ErrorKind::Shape, "QP d-block vectors need one entry per group");
    require((shift_d.array() >= 0.0).all(), ErrorKind::Config, "QP d shift must be non-negative");
    require(budget >= 0.0, ErrorKind::Config, "QP dummy budget must be non-negative");
  }
}

double default_admm_delta(const Mat& gram, const GroupLayout& layout) {
  double trace = 0.0;
  Index count = 0;
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    trace += gram.diagonal().segment(layout.begin(j), layout.size(j)).sum();
    count += layout.size(j);
  }
  if (count == 0 || trace <= 0.0) return 1.0;
  return trace / static_cast<double>(count);
}

void AdmmQpSolver::factorize(const QpSubproblem& qp, const Vec& diag) {
  if (gram_ == qp.gram && diag_.size() == diag.size() && diag_ == diag) return;
  Mat k = *qp.gram;
  k.diagonal() += diag;
  llt_.compute(k);
  require(llt_.info() == Eigen::Success, ErrorKind::Domain,
          "shifted Gram matrix is not positive definite");
  gram_ = qp.gram;
  diag_ = diag;
  ++factorizations_;
}

namespace {

// The ADMM iterate v satisfies the group floors exactly but the dummy budget
// only up to the primal residual. Lower dummies toward their floors, then move
// what is left into the largest coefficient of the group.
void restore_budget(const QpSubproblem& qp, Vec& x, Vec& d) {
  const GroupLayout& layout = qp.layout;
  const Index m = layout.num_groups();
  Vec lower = Vec::Zero(m);
  double used = 0.0, slack = 0.0;
  for (Index j = 0; j < m; ++j) {
    if (layout.is_free(j)) continue;
    lower(j) = std::max(0.0, qp.eps(j) - x.segment(layout.begin(j), layout.size(j)).sum());
    d(j) = std::max(d(j), lower(j));
    used += d(j) / qp.eps(j);
    slack += (d(j) - lower(j)) / qp.eps(j);
  }
  double excess = used - qp.budget;
  if (excess <= 0.0) return;
  const double t = slack > 0.0 ? std::min(1.0, excess / slack) : 0.0;
  for (Index j = 0; j < m; ++j)
    if (!layout.is_free(j)) d(j) -= t * (d(j) - lower(j));
  excess -= t * slack;
  for (Index j = 0; j < m && excess > 0.0; ++j) {
    if (layout.is_free(j) || d(j) == 0.0) continue;
    // shifting mass from d_j to x_j keeps the group floor
    const double move = std::min(d(j), excess * qp.eps(j));
    Index best = 0;
    x.segment(layout.begin(j), layout.size(j)).maxCoeff(&best);
    x(layout.begin(j) + best) += move;
    d(j) -= move;
    excess -= move / qp.eps(j);
  }
}

}  // namespace

QpSolution AdmmQpSolver::solve(const QpSubproblem& qp, const AdmmParams& params) {
  qp.validate();
  const GroupLayout& layout = qp.layout;
  const Index n = qp.anchor_x.size();
  const Index groups = layout.num_groups();
  const bool dummies = qp.has_dummies();
  const Vec mask = layout.constrained_mask();
  const double delta = params.delta > 0.0 ? params.delta : default_admm_delta(*qp.gram, layout);

  // d-block: D = 2 C_d + delta I, diagonal. Budget weights in the scaled
  // variable z = D^{1/2} w are beta_j = eps_j sqrt(D_j).
  Vec dd, dd_sqrt, beta;
  std::vector<Index> constrained_groups;
  if (dummies)
    for (Index j = 0; j < groups; ++j)
      if (!layout.is_free(j)) constrained_groups.push_back(j);
  auto setup = [&] {
    factorize(qp, 2.0 * qp.shift_x + delta * mask);
    if (!dummies) return;
    dd = 2.0 * qp.shift_d + Vec::Constant(groups, delta);
    dd_sqrt = dd.cwiseSqrt();
    beta.resize(static_cast<Index>(constrained_groups.size()));
    for (size_t i = 0; i < constrained_groups.size(); ++i) {
      const Index j = constrained_groups[i];
      beta(static_cast<Index>(i)) = qp.eps(j) * dd_sqrt(j);
    }
  };
  setup();

  const bool reuse = warm_ && v_x_.size() == n && (!dummies || v_d_.size() == groups) &&
                     (dummies || v_d_.size() == 0);
  if (!reuse) {
    v_x_ = qp.anchor_x;
    p_x_ = Vec::Zero(n);
    if (dummies) {
      v_d_ = qp.anchor_d;
      p_d_ = Vec::Zero(groups);
    } else {
      v_d_.resize(0);
      p_d_.resize(0);
    }
  }
  warm_ = true;

  Vec u(n), w, v_x_new(n), v_d_new;
  if (dummies) {
    w = Vec::Zero(groups);
    v_d_new = Vec::Zero(groups);
  }

  QpSolution sol;
  for (int k = 1; k <= params.max_iters; ++k) {
    // u-step: (G + 2C + delta M)(u - x^n) = delta M (v - x^n) - p - g
    Vec rhs = delta * mask.cwiseProduct(v_x_ - qp.anchor_x) - p_x_ - qp.lin_x;
    u = qp.anchor_x + llt_.solve(rhs);

    if (dummies) {
      Vec target(static_cast<Index>(constrained_groups.size()));
      for (size_t i = 0; i < constrained_groups.size(); ++i) {
        const Index j = constrained_groups[i];
        const double r = delta * v_d_(j) - p_d_(j) - qp.lin_d(j) + 2.0 * qp.shift_d(j) * qp.anchor_d(j);
        target(static_cast<Index>(i)) = r / dd_sqrt(j);
      }
      const Vec z = project_dummy_budget(target, beta, qp.budget);
      w.setZero();
      for (size_t i = 0; i < constrained_groups.size(); ++i) {
        const Index j = constrained_groups[i];
        w(j) = z(static_cast<Index>(i)) / dd_sqrt(j);
      }
    }

    // v-step: projection of u + p / delta onto the constraint set.
    for (Index j = 0; j < groups; ++j) {
      const Index b = layout.begin(j);
      const Index m = layout.size(j);
      if (layout.is_free(j)) {
        v_x_new.segment(b, m) = u.segment(b, m);
        if (dummies) v_d_new(j) = 0.0;
        continue;
      }
      const Vec shifted = u.segment(b, m) + p_x_.segment(b, m) / delta;
      if (dummies) {
        const FloorPoint fp = project_group_floor(shifted, w(j) + p_d_(j) / delta, qp.eps(j));
        v_x_new.segment(b, m) = fp.x;
        v_d_new(j) = fp.d;
      } else {
        v_x_new.segment(b, m) = project_nonneg(shifted);
      }
    }

    const Vec primal_x = mask.cwiseProduct(u - v_x_new);
    p_x_ += delta * primal_x;
    double primal_sq = primal_x.squaredNorm();
    double dual_sq = mask.cwiseProduct(v_x_new - v_x_).squaredNorm();
    double u_sq = mask.cwiseProduct(u).squaredNorm();
    double v_sq = mask.cwiseProduct(v_x_new).squaredNorm();
    if (dummies) {
      const Vec primal_d = w - v_d_new;
      p_d_ += delta * primal_d;
      primal_sq += primal_d.squaredNorm();
      dual_sq += (v_d_new - v_d_).squaredNorm();
      u_sq += w.squaredNorm();
      v_sq += v_d_new.squaredNorm();
      v_d_ = v_d_new;
    }
    v_x_ = v_x_new;

    const double primal = std::sqrt(primal_sq);
    const double dual = std::sqrt(dual_sq);
    sol.iters = k;
    sol.primal_res = primal;
    sol.dual_res = delta * dual;
    const double scale_p = std::sqrt(std::max(u_sq, v_sq));
    if (primal <= params.tol_primal_rel * scale_p + params.tol_abs &&
        dual <= params.tol_dual_rel * std::sqrt(v_sq) + params.tol_abs) {
      sol.converged = true;
      break;
    }

  }
  sol.delta = delta;

  sol.x = v_x_;
  if (dummies) {
    Vec d = v_d_;
    restore_budget(qp, sol.x, d);
    sol.d = std::move(d);
  }
  return sol;
}

QpSolution solve_qp_p2(const QpSubproblem& qp, const AdmmParams& params) {
  require(qp.feasible_set == FeasibleSetKind::NonnegOrthant, ErrorKind::Config,
          "solve_qp_p2 expects the non-negative orthant");
  AdmmQpSolver solver;
  return solver.solve(qp, params);
}

QpSolution solve_qp_p1(const QpSubproblem& qp, const AdmmParams& params) {
  require(qp.feasible_set == FeasibleSetKind::GroupFloorPlusBudget, ErrorKind::Config,
          "solve_qp_p1 expects the group-floor-plus-budget set");
  AdmmQpSolver solver;
  return solver.solve(qp, params);
}

}  // namespace ssnls

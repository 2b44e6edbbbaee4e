#pragma once

#include <Eigen/Cholesky>

#include <memory>

#include "ssnls/core.hpp"

namespace ssnls {

enum class FeasibleSetKind {
  NonnegOrthant,         // x >= 0 on constrained groups
  GroupFloorPlusBudget,  // x, d >= 0, sum(x_j) + d_j >= eps_j, sum_j d_j / eps_j <= budget
};

/// Strongly convex model minimized once per outer iteration:
///
///   q(x, d) = (x - x^n)^T (G/2 + C_x) (x - x^n) + (x - x^n)^T g_x
///           + (d - d^n)^T C_d (d - d^n) + (d - d^n)^T g_d
///
/// with G = A^T A and diagonal C. Free groups are left unconstrained.
struct QpSubproblem {
  std::shared_ptr<const Mat> gram;
  GroupLayout layout;
  Vec shift_x;
  Vec lin_x;
  Vec anchor_x;
  FeasibleSetKind feasible_set = FeasibleSetKind::NonnegOrthant;

  // GroupFloorPlusBudget only.
  Vec shift_d;
  Vec lin_d;
  Vec anchor_d;
  Vec eps;
  double budget = 0.0;

  bool has_dummies() const { return feasible_set == FeasibleSetKind::GroupFloorPlusBudget; }
  double model_value(const Vec& x, const Vec* d = nullptr) const;
  void validate() const;
};

struct AdmmParams {
  double delta = 0.0;  // <= 0 selects trace(G)/N over constrained coordinates
  double tol_primal_rel = 1e-4;
  double tol_dual_rel = 1e-4;
  double tol_abs = 1e-13;
  int max_iters = 20000;

};

struct QpSolution {
  Vec x;
  std::optional<Vec> d;
  int iters = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double delta = 0.0;  // penalty in use at exit
  bool converged = false;
};

/// ADMM for QpSubproblem. Keeps the Cholesky factor of G + 2C + delta*I and the
/// (v, p) iterates between calls: consecutive solves with the same Gram and
/// shift reuse the factorization and start from the previous ADMM state.
class AdmmQpSolver {
 public:
  QpSolution solve(const QpSubproblem& qp, const AdmmParams& params);

  void reset_warm_start() { warm_ = false; }
  int factorizations() const { return factorizations_; }

 private:
  void factorize(const QpSubproblem& qp, const Vec& diag);

  std::shared_ptr<const Mat> gram_;
  Vec diag_;
  Eigen::LLT<Mat> llt_;
  int factorizations_ = 0;

  bool warm_ = false;
  Vec v_x_, p_x_, v_d_, p_d_;
};

double default_admm_delta(const Mat& gram, const GroupLayout& layout);

/// One cold ADMM solve over the non-negative orthant.
QpSolution solve_qp_p2(const QpSubproblem& qp, const AdmmParams& params);

/// One cold ADMM solve over the group-floor-plus-budget set.
QpSolution solve_qp_p1(const QpSubproblem& qp, const AdmmParams& params);

}  // namespace ssnls

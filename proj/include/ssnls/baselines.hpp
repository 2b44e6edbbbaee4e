#pragma once

#include <vector>

#include "ssnls/core.hpp"

namespace ssnls {

struct ActiveSetParams {
  int max_iters = 0;  // 0 selects 3 * N
  double tol = 0.0;   // 0 selects a scale-aware default
};

/// min 1/2 ||Ax - b||^2 over x >= 0 (Lawson-Hanson active set).
Vec nnls(const Mat& a, const Vec& b, const ActiveSetParams& params = {});

/// min 1/2 x^T G x - h^T x over x >= 0 for symmetric positive semidefinite G,
/// by the same active-set iteration with least-norm solves on the passive set.
/// Coordinates flagged in `free` carry no sign constraint.
Vec nonneg_qp(const Mat& gram, const Vec& h, const ActiveSetParams& params = {},
              const std::vector<bool>& free = {});

/// min 1/2 ||Ax - b||^2 + gamma^T x over x >= 0 (penalized l1 demixing).
Vec l1_penalized(const Mat& a, const Vec& b, const Vec& gamma);

struct BregmanParams {
  int max_outer = 100;
  double feasibility_slack = 1e-3;  // accept ||Ax - b|| <= tau (1 + slack)
  int bisection_steps = 100;
  double stall_ratio = 1e-3;  // add-back stops when the residual drops by less
};

struct BregmanResult {
  Vec x;
  std::vector<double> residual_trace;  // ||Ax - b|| after every add-back step
  int outer_iters = 0;
};

/// min ||x||_1 over x >= 0 subject to ||Ax - b|| <= tau.
///
/// Bregman iteration on the penalized form with weight 1/mu = max(A^T b)_+
/// adds the residual back until the tau-ball is reached or progress stalls.
/// The point is then refined by a root find on the penalty weight for the
/// original data, which lands on the ball boundary (the constrained minimizer
/// when tau < ||b||). Fails when tau is below the NNLS residual.
BregmanResult l1_bregman(const Mat& a, const Vec& b, double tau, const BregmanParams& params = {});

enum class PdInit { Zero, LeastSquares, Nnls };

struct PdParams {
  double rho0 = 0.05;
  double sigma_growth = 1.2;
  double tol_inner = 1e-4;
  double tol_outer = 1e-5;
  PdInit init = PdInit::Nnls;
  int max_inner = 10000;
  int max_outer = 1000;

  void validate() const;
};

struct PdResult {
  GroupedCoeffs coeffs;  // y: at most one non-zero per constrained group
  int outer_iters = 0;
  int inner_iters_total = 0;
};

/// Penalty decomposition for l0-constrained least squares with at most one
/// non-zero (non-negative) coefficient per group. Free groups pass through.
PdResult penalty_decomposition_l0(const GroupedDictionary& dict, const Vec& b,
                                  const PdParams& params = {});

/// Minimum-norm least-squares solution.
Vec least_squares_min_norm(const Mat& a, const Vec& b);

}  // namespace ssnls

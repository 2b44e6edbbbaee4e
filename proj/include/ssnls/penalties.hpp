#pragma once

#include "ssnls/core.hpp"

namespace ssnls {

struct PenaltyEval {
  double value = 0.0;
  Vec grad;
};

/// Huber smoothing of the Euclidean norm:
///   ||x||^2 / (2 eps)   if ||x|| <= eps
///   ||x|| - eps / 2     otherwise.
PenaltyEval huber(const VecRef& x, double eps);

/// Hoyer ratio ||x||_1 / ||x||_2 for x >= 0, x != 0. Throws a domain error at 0.
PenaltyEval hoyer_ratio(const VecRef& x);

/// Smoothed difference ||x||_1 - huber(x, eps) for x >= 0.
PenaltyEval diff_l1_l2(const VecRef& x, double eps);

}  // namespace ssnls

#include "ssnls/penalties.hpp"

#include <cmath>

namespace ssnls {

PenaltyEval huber(const VecRef& x, double eps) {
  require(eps > 0.0, ErrorKind::Config, "huber: eps must be positive");
  PenaltyEval out;
  const double norm = x.norm();
  if (norm < eps) {
    out.value = x.squaredNorm() / (2.0 * eps);
    out.grad = x / eps;
  } else {
    // seam uses the outer branch; both agree there
    out.value = norm - 0.5 * eps;
    out.grad = x / norm;
  }
  return out;
}

PenaltyEval hoyer_ratio(const VecRef& x) {
  const double norm = x.norm();
  require(norm > 0.0, ErrorKind::Domain, "hoyer_ratio: undefined at the origin");
  const double l1 = x.sum();
  PenaltyEval out;
  out.value = l1 / norm;
  out.grad = Vec::Constant(x.size(), 1.0 / norm) - (l1 / (norm * norm * norm)) * x;
  return out;
}

PenaltyEval diff_l1_l2(const VecRef& x, double eps) {
  PenaltyEval h = huber(x, eps);
  PenaltyEval out;
  out.value = x.sum() - h.value;
  out.grad = Vec::Ones(x.size()) - h.grad;
  return out;
}

}  // namespace ssnls

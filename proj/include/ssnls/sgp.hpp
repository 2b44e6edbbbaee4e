#pragma once

#include <optional>
#include <vector>

#include "ssnls/core.hpp"
#include "ssnls/qp.hpp"

namespace ssnls {

/// Optional geometric ramp of the sparsity weights: iteration n uses
/// gamma * min(1, start * growth^n).
struct GammaRamp {
  double start = 0.1;
  double growth = 1.5;
};

struct SgpParams {
  double c0 = 1.0;       // initial multiplier c_n (dynamic loop only)
  double sigma = 0.1;    // sufficient-decrease fraction
  double xi1 = 2.0;      // c_n decrease factor after an accepted step
  double xi2 = 10.0;     // c_n increase factor after a rejected step
  double rho = 1e-10;    // floor on the smallest eigenvalue of A^TA/2 + c_n C
  double tol_step = 0.0;      // stop when ||x^n - x^{n-1}||_inf <= tol_step
  double tol_energy = 1e-8;   // stop when F(x^{n-1}) - F(x^n) < tol_energy
  int max_outer = 200;
  double c_matrix_scale = 1e-9;  // C = c_matrix_scale * I
  int max_rejections = 60;
  AdmmParams admm;
  std::optional<GammaRamp> ramp;

  void validate() const;
};

enum class Termination { StepTol, EnergyTol, MaxIters };

const char* to_string(Termination t) noexcept;

struct SolveReport {
  GroupedCoeffs final;
  std::vector<double> objective_trace;  // F at x^0 and every accepted iterate
  std::vector<double> c_trace;          // c_n used for every accepted step
  std::vector<double> step_trace;       // ||x^{n+1} - x^n||_inf per accepted step
  int outer_iters = 0;
  int inner_iters_total = 0;
  int rejections = 0;
  Termination termination = Termination::MaxIters;
};

/// Constant initial point: every coefficient equals the least-squares optimal
/// constant for A * 1 (positive), free groups start at zero. For the ratio
/// formulation dummies are set to close the group floors and the result is
/// made feasible.
GroupedCoeffs default_initialization(const GroupedDictionary& dict, const Vec& b,
                                     const SparsityConfig& cfg);

/// Makes (x, d) feasible for the ratio formulation's constraint set.
GroupedCoeffs make_feasible_p1(const GroupLayout& layout, const SparsityConfig& cfg,
                               GroupedCoeffs coeffs);

/// Scaled gradient projection with dynamic c_n and a sufficient-decrease test
/// (ratio penalties with dummy variables).
SolveReport solve_problem1(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                           const SgpParams& params, const GroupedCoeffs& init);

/// Scaled gradient projection with fixed C (concave smoothed l1 - l2 penalty).
/// Monotone without line search.
SolveReport solve_problem2(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                           const SgpParams& params, const GroupedCoeffs& init);

/// Dispatches on cfg.family, starting from default_initialization.
SolveReport solve_sparse(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                         const SgpParams& params);

/// Checks the quadratic upper bound
///   F(y) - F(x) <= h^T((lR - lr/2) I - C) h + h^T (A^TA/2 + C) h + h^T grad F(x),
/// h = y - x, C = c_scale * I. Used to validate the descent estimate numerically.
bool check_descent_estimate(const GroupedDictionary& dict, const Vec& b, const SparsityConfig& cfg,
                            const GroupedCoeffs& x, const GroupedCoeffs& y, double lambda_r,
                            double lambda_R, double c_scale, double slack = 1e-12);

}  // namespace ssnls

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "ssnls/error.hpp"

namespace ssnls {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Vec>;

/// Column partition shared by a dictionary and its coefficient vectors.
///
/// `offsets` has M+1 entries, starts at 0 and ends at N. A group marked free
/// carries sign-unconstrained, unpenalized coefficients (the DOAS background);
/// its columns are exempt from the unit-norm requirement.
struct GroupLayout {
  std::vector<Index> offsets;
  std::vector<bool> free;

  static GroupLayout single(Index n);
  static GroupLayout uniform(Index groups, Index size);

  Index num_groups() const { return static_cast<Index>(offsets.size()) - 1; }
  Index num_coeffs() const { return offsets.back(); }
  Index begin(Index j) const { return offsets[static_cast<size_t>(j)]; }
  Index size(Index j) const { return offsets[static_cast<size_t>(j) + 1] - offsets[static_cast<size_t>(j)]; }
  bool is_free(Index j) const { return !free.empty() && free[static_cast<size_t>(j)]; }
  Index num_constrained_groups() const;
  Index group_of(Index col) const;

  /// 1.0 on coordinates of constrained groups, 0.0 on free ones.
  Vec constrained_mask() const;

  void validate() const;
};

/// Dense dictionary A (W x N) with l2-normalized columns partitioned into groups.
class GroupedDictionary {
 public:
  /// `scales` are the original column norms when the dictionary was produced by
  /// normalize_columns; they default to one. Columns listed in `padding` may be
  /// identically zero.
  GroupedDictionary(Mat entries, GroupLayout layout, Vec scales = Vec(),
                    std::vector<bool> padding = {});

  const Mat& entries() const { return entries_; }
  const GroupLayout& layout() const { return layout_; }
  const Vec& scales() const { return scales_; }

  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  Index num_groups() const { return layout_.num_groups(); }

  auto group(Index j) const { return entries_.middleCols(layout_.begin(j), layout_.size(j)); }

  /// Coefficients for the unnormalized columns: raw * denormalize(x) == A * x.
  Vec denormalize(const Vec& x) const;

 private:
  Mat entries_;
  GroupLayout layout_;
  Vec scales_;
};

/// Scale every column to unit norm. Zero columns are an error unless flagged
/// as padding, in which case they are left at zero with scale 1.
GroupedDictionary normalize_columns(const Mat& raw, GroupLayout layout = {},
                                    const std::vector<bool>& padding = {});

/// Coefficients x partitioned like the dictionary, plus the dummy variables d
/// used by the ratio formulation.
struct GroupedCoeffs {
  Vec x;
  std::optional<Vec> d;
};

enum class PenaltyFamily {
  HoyerRatio,  // l1/l2 on (x_j, d_j) with dummy variables
  DiffL1L2,    // smoothed l1 - l2
};

struct SparsityConfig {
  PenaltyFamily family = PenaltyFamily::DiffL1L2;
  Vec gamma_intra;          // one weight per group; ignored on free groups
  double gamma_inter = 0.0;
  Vec eps_intra;            // one per group, > 0
  double eps_inter = 1.0;   // > 0
  Index min_active_groups = 0;

  /// Fills a config with the same gamma and eps for every group.
  static SparsityConfig uniform(PenaltyFamily family, Index groups, double gamma,
                                double eps, double gamma_inter = 0.0,
                                double eps_inter = 1.0, Index min_active = 0);

  void validate(const GroupLayout& layout) const;
};

struct ObjectiveEval {
  double value = 0.0;
  double data_term = 0.0;
  double penalty_term = 0.0;
  Vec grad_x;
  std::optional<Vec> grad_d;
  Vec residual;  // A x - b
};

/// F_S(x) = 1/2 ||Ax - b||^2 + sum_j gamma_j S^eps(x_j) + gamma_0 S^eps0(x).
ObjectiveEval eval_objective_p2(const GroupedDictionary& dict, const Vec& b,
                                const GroupedCoeffs& coeffs, const SparsityConfig& cfg);

/// F_H(x, d) = 1/2 ||Ax - b||^2 + sum_j gamma_j H(x_j, d_j) + gamma_0 H(x).
ObjectiveEval eval_objective_p1(const GroupedDictionary& dict, const Vec& b,
                                const GroupedCoeffs& coeffs, const SparsityConfig& cfg);

/// Dispatches on cfg.family.
ObjectiveEval eval_objective(const GroupedDictionary& dict, const Vec& b,
                             const GroupedCoeffs& coeffs, const SparsityConfig& cfg);

/// Concatenation of the constrained coordinates of x (the vector the inter
/// group penalty acts on).
Vec constrained_part(const GroupLayout& layout, const Vec& x);

/// Feasibility of (x, d) for the ratio formulation's constraint set, with
/// slack `tol`.
bool is_feasible_p1(const GroupLayout& layout, const SparsityConfig& cfg,
                    const GroupedCoeffs& coeffs, double tol = 1e-10);

}  // namespace ssnls

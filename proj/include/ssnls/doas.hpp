#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssnls/baselines.hpp"
#include "ssnls/core.hpp"
#include "ssnls/sgp.hpp"

namespace ssnls::doas {

struct ReferenceSpectrum {
  Vec wavelengths;  // nm, uniform and strictly increasing
  Vec values;
  std::string name;

  void validate() const;
};

/// Wavelength samples 340 + 0.04038 * (1024 / W) * w for w = 0..W-1: the
/// 1024-channel instrument grid, subsampled when W < 1024.
Vec instrument_wavelengths(Index w);

/// Smooth synthetic stand-ins for the HONO, NO2 and O3 differential cross
/// sections (narrow bands, dense fine bands, broad slope with weak bands).
std::vector<ReferenceSpectrum> synthetic_references(const Vec& wavelengths);

/// Affine wavelength deformations lambda -> lambda + P_k lambda + Q_l.
struct DeformationGrid {
  Vec slopes;   // P_k
  Vec offsets;  // Q_l

  Index num_slopes() const { return slopes.size(); }
  Index num_offsets() const { return offsets.size(); }
  Index size() const { return slopes.size() * offsets.size(); }

  /// Column within a group: offset index major, slope index fastest.
  Index column(Index k, Index l) const { return l * num_slopes() + k; }
  Index slope_index(Index col) const { return col % num_slopes(); }
  Index offset_index(Index col) const { return col / num_slopes(); }

  /// 21 x 21 grid: slopes -0.1..0.1 and offsets -1..1.
  static DeformationGrid full();
  /// 5 x 5 grid: slopes -0.02..0.02 and offsets -0.2..0.2.
  static DeformationGrid desk();
  static DeformationGrid identity();
  static DeformationGrid uniform(double slope_min, double slope_step, Index k, double offset_min,
                                 double offset_step, Index l);

  void validate() const;
};

struct DeformationDictionary {
  GroupedDictionary dict;
  DeformationGrid grid;
  Vec wavelengths;
  std::vector<std::string> names;
};

/// Reference value at an arbitrary wavelength: linear interpolation on the
/// grid, odd reflection about the end value and position outside it.
double sample_reference(const ReferenceSpectrum& ref, double lambda);

/// M groups of K*L normalized columns y_j(lambda + P_k lambda + Q_l).
DeformationDictionary build_deformation_dictionary(const std::vector<ReferenceSpectrum>& refs,
                                                   const DeformationGrid& grid);

/// One random atom per group; magnitude mean_j * (0.5 + U[0,1)).
GroupedCoeffs plant_one_per_group(const GroupLayout& layout, const std::vector<double>& means,
                                  std::uint64_t seed);

/// J = A x + eta, eta iid N(0, noise_sd^2).
Vec synthesize_doas_data(const GroupedDictionary& dict, const GroupedCoeffs& planted, double noise_sd,
                         std::uint64_t seed);

/// Smooth background penalty Q = W_B * Gamma * L: L removes the line through
/// the endpoints, Gamma is the orthonormal DST-I of the W-2 interior samples
/// (placed at frequency indices 1..W-2, indices 0 and W-1 are zero) and
/// W_B = diag(i^exponent), i = 0..W-1.
class BackgroundOperator {
 public:
  BackgroundOperator(Index w, double weight_exponent = 2.0);

  Index size() const { return size_; }
  const Vec& dst_weights() const { return weights_; }

  Vec apply(const Vec& b) const;          // Q b
  Vec apply_normal(const Vec& b) const;   // Q^T Q b
  Vec remove_line(const Vec& b) const;    // L b
  Vec dst(const Vec& v) const;            // Gamma v
  const Mat& matrix() const { return q_; }

 private:
  Index size_;
  Vec weights_;
  Mat q_;
};

/// 2 / (lambda - 334)^4.
Vec default_background(const Vec& wavelengths);

enum class DoasSolver { HoyerP1, DiffL1L2P2, PenaltyDecompL0, LeastSquaresOracle, Nnls, L1 };

const char* to_string(DoasSolver s) noexcept;
DoasSolver parse_doas_solver(const std::string& name);

struct DoasFitConfig {
  double alpha = 0.0;  // background smoothness weight; 0 disables the background
  double background_exponent = 2.0;
  DoasSolver solver = DoasSolver::DiffL1L2P2;
  SparsityConfig sparsity;  // per reference group; the background group is appended
  SgpParams sgp;
  PdParams pd;
  double tau = 0.0;         // L1: residual bound
  int oracle_draws = 1000;  // LeastSquaresOracle
  std::uint64_t seed = 0;
  double interior_fraction = 1.0;  // fit only the middle fraction of wavelengths

  void validate() const;
};

struct SelectedAtom {
  Index group = 0;
  Index column = 0;   // within the group
  double magnitude = 0.0;  // normalized-dictionary units
  double slope = 0.0;
  double offset = 0.0;
};

struct DoasFit {
  Vec x;                  // reference coefficients, normalized-dictionary units
  Vec x_original_units;   // x divided by the stored column scales
  Vec background;         // zero when alpha == 0
  std::vector<SelectedAtom> atoms;  // largest coefficient of every group
  std::optional<SolveReport> report;
  int iterations = 0;
  double objective = 0.0;  // 1/2 ||Ax + B - J||^2 + alpha/2 ||QB||^2
};

DoasFit fit_doas(const Vec& j, const DeformationDictionary& dd, const DoasFitConfig& cfg);

/// Default solver settings for the alignment experiment (noiseless to
/// noisy data) and for the background experiment.
DoasFitConfig alignment_defaults(DoasSolver solver, Index groups, Index w, double noise_sd);
DoasFitConfig background_defaults(DoasSolver solver, Index groups);

}  // namespace ssnls::doas

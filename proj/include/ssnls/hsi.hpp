#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssnls/core.hpp"
#include "ssnls/sgp.hpp"

namespace ssnls::hsi {

struct HsiScene {
  Mat data;                        // W x P, one pixel spectrum per column
  std::optional<Vec> wavelengths;  // length W when present
  bool normalized = false;

  Index bands() const { return data.rows(); }
  Index pixels() const { return data.cols(); }

  /// Scales every non-zero column to unit norm and sets `normalized`.
  void normalize();
  void validate() const;
};

struct AbundanceMatrix {
  Mat values;  // N x P, non-negative
  GroupLayout layout;

  void validate() const;
};

/// T (M x N): row j sums the abundances of group j.
class GroupCollapser {
 public:
  explicit GroupCollapser(GroupLayout layout);

  const Mat& matrix() const { return t_; }
  Mat apply(const Mat& s) const;

 private:
  GroupLayout layout_;
  Mat t_;
};

enum class HsiSolver { Nnls, L1, HoyerP1, DiffL1L2P2 };

const char* to_string(HsiSolver s) noexcept;
HsiSolver parse_hsi_solver(const std::string& name);

struct DemixParams {
  HsiSolver solver = HsiSolver::DiffL1L2P2;
  SparsityConfig sparsity;  // HoyerP1 / DiffL1L2P2
  SgpParams sgp;
  double l1_gamma = 0.0;    // L1: weight of ||x||_1
  int threads = 0;          // 0 selects the available parallelism

  void validate(const GroupLayout& layout) const;
};

struct PixelFailure {
  Index pixel = 0;
  std::string message;
};

struct DemixResult {
  AbundanceMatrix abundances;
  std::vector<int> outer_iters;  // per pixel, 0 for the direct solvers
  long long inner_iters_total = 0;
  std::vector<PixelFailure> failures;  // failed pixels keep zero abundances
};

/// Worker count after applying the SSNLS_THREADS cap; `requested` 0 means
/// hardware concurrency.
int resolve_threads(int requested);

/// Independent per-pixel solves distributed over a worker pool. Results do not
/// depend on the number of workers.
DemixResult demix_scene(const HsiScene& scene, const GroupedDictionary& dict, const DemixParams& params);

/// Solves one pixel; used by demix_scene.
Vec demix_pixel(const Vec& b, const GroupedDictionary& dict, const DemixParams& params, int* outer_iters = nullptr,
                long long* inner_iters = nullptr);

struct SparsityLevel {
  Index k = 1;      // active groups per column
  Index count = 0;  // number of such columns
};

struct SyntheticScene {
  HsiScene scene;
  Mat truth;  // N x P abundances in the (normalized) dictionary's units
};

/// Columns with k distinct active groups, one uniformly drawn atom per group
/// and magnitudes U[0,1], rescaled so noise-free pixels have unit norm, plus
/// N(0, noise_sd^2) noise.
SyntheticScene synthesize_grouped_scene(const GroupedDictionary& dict, const std::vector<SparsityLevel>& profile,
                                        double noise_sd, std::uint64_t seed);

/// Every column of every group 1-sparse at threshold `zero_tol`.
bool group_one_sparse(const GroupLayout& layout, const Eigen::Ref<const Vec>& x, double zero_tol);

struct MetricsReport {
  double zero_tol = 0.0;
  double fraction_nonzero = 0.0;
  std::optional<double> sse;          // ||Y - AS||_F^2 when data are supplied
  Index support_mismatch = 0;         // entries where (TS) and Sbar disagree on being non-zero
  Vec group_mae;                      // mean over pixels of |(TS)_jp - Sbar_jp|
  double fraction_group_one_sparse = 0.0;  // columns 1-sparse within every group of S
};

/// `zero_tol` < 0 selects 1e-6 times the largest entry of S. Sbar is compared
/// against S, or against TS when a collapser is given. Y and A enable the SSE.
MetricsReport compute_metrics(const AbundanceMatrix& s, const Mat& sbar, const GroupCollapser* collapser = nullptr,
                              double zero_tol = -1.0, const Mat* y = nullptr, const Mat* a = nullptr);

/// Labeled candidate signatures of one material.
struct MaterialSamples {
  std::string name;
  Mat signatures;  // W x n
};

/// Smooth vegetation-like signatures at four growth stages with per-sample
/// gain, smooth distortion and band noise; a few samples are gross outliers.
std::vector<MaterialSamples> synthetic_materials(Index bands, Index samples_per_material, std::uint64_t seed);

/// Indices of signatures kept after outlier removal: a signature is dropped
/// when its median over bands of |x - median| / (1.4826 MAD) exceeds
/// `threshold`, the median and MAD being taken per band.
std::vector<Index> mad_inliers(const Mat& signatures, double threshold = 3.0);

/// Six smooth urban-like endmember spectra (asphalt, grass, tree, roof, soil,
/// concrete) over 400..2500 nm, unnormalized.
Mat synthetic_urban_endmembers(Index bands, std::vector<std::string>* names = nullptr);

struct EndmemberLibrary {
  GroupedDictionary group;  // representatives of every material, one group each
  GroupedDictionary mean;   // normalized average of every material
  GroupedDictionary bad;    // representative farthest from its average
  std::vector<std::string> names;
};

/// Outlier removal on unit-norm signatures, then `per_group` representatives
/// drawn uniformly without replacement from each material's inliers.
EndmemberLibrary build_endmember_library(const std::vector<MaterialSamples>& materials, Index per_group,
                                         std::uint64_t seed);

/// Solver settings for the structured experiment (intra + inter penalties on
/// grouped libraries) and for inter-only demixing.
DemixParams structured_defaults(HsiSolver solver, Index groups);
DemixParams inter_defaults(HsiSolver solver, Index groups, bool grouped_dictionary = false);

}  // namespace ssnls::hsi

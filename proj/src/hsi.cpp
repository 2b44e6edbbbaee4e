#include "ssnls/hsi.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "ssnls/baselines.hpp"

namespace ssnls::hsi {

void HsiScene::normalize() {
  for (Index p = 0; p < data.cols(); ++p) {
    const double n = data.col(p).norm();
    if (n > 0.0) data.col(p) /= n;
  }
  normalized = true;
}

void HsiScene::validate() const {
  require(data.rows() > 0 && data.cols() > 0, ErrorKind::Shape, "scene must be non-empty");
  require(data.allFinite(), ErrorKind::Domain, "scene contains non-finite values");
  if (wavelengths)
    require(wavelengths->size() == data.rows(), ErrorKind::Shape, "wavelength count does not match bands");
}

void AbundanceMatrix::validate() const {
  layout.validate();
  require(values.rows() == layout.num_coeffs(), ErrorKind::Shape, "abundance rows do not match the layout");
  require((values.array() >= 0.0).all(), ErrorKind::Domain, "abundances must be non-negative");
}

GroupCollapser::GroupCollapser(GroupLayout layout) : layout_(std::move(layout)) {
  layout_.validate();
  t_ = Mat::Zero(layout_.num_groups(), layout_.num_coeffs());
  for (Index j = 0; j < layout_.num_groups(); ++j) t_.row(j).segment(layout_.begin(j), layout_.size(j)).setOnes();
}

Mat GroupCollapser::apply(const Mat& s) const {
  require(s.rows() == layout_.num_coeffs(), ErrorKind::Shape, "abundance rows do not match the collapser");
  Mat out(layout_.num_groups(), s.cols());
  for (Index j = 0; j < layout_.num_groups(); ++j)
    out.row(j) = s.middleRows(layout_.begin(j), layout_.size(j)).colwise().sum();
  return out;
}

const char* to_string(HsiSolver s) noexcept {
  switch (s) {
    case HsiSolver::Nnls: return "nnls";
    case HsiSolver::L1: return "l1";
    case HsiSolver::HoyerP1: return "l1_over_l2";
    case HsiSolver::DiffL1L2P2: return "l1_minus_l2";
  }
  return "unknown";
}

HsiSolver parse_hsi_solver(const std::string& name) {
  for (HsiSolver s : {HsiSolver::Nnls, HsiSolver::L1, HsiSolver::HoyerP1, HsiSolver::DiffL1L2P2})
    if (name == to_string(s)) return s;
  fail(ErrorKind::Config, "unknown HSI solver '" + name + "'");
}

void DemixParams::validate(const GroupLayout& layout) const {
  require(threads >= 0, ErrorKind::Config, "threads must be non-negative");
  if (solver == HsiSolver::L1) require(l1_gamma >= 0.0, ErrorKind::Config, "l1_gamma must be non-negative");
  if (solver == HsiSolver::HoyerP1 || solver == HsiSolver::DiffL1L2P2) {
    sparsity.validate(layout);
    sgp.validate();
  }
}

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* cap = std::getenv("SSNLS_THREADS")) {
    const int c = std::atoi(cap);
    if (c > 0) n = std::min(n, c);
  }
  return n;
}

Vec demix_pixel(const Vec& b, const GroupedDictionary& dict, const DemixParams& params, int* outer_iters,
                long long* inner_iters) {
  if (outer_iters) *outer_iters = 0;
  switch (params.solver) {
    case HsiSolver::Nnls: return nnls(dict.entries(), b);
    case HsiSolver::L1: return l1_penalized(dict.entries(), b, Vec::Constant(dict.cols(), params.l1_gamma));
    case HsiSolver::HoyerP1:
    case HsiSolver::DiffL1L2P2: {
      SparsityConfig sc = params.sparsity;
      sc.family = params.solver == HsiSolver::HoyerP1 ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2;
      const SolveReport rep = solve_sparse(dict, b, sc, params.sgp);
      if (outer_iters) *outer_iters = rep.outer_iters;
      if (inner_iters) *inner_iters += rep.inner_iters_total;
      return rep.final.x.cwiseMax(0.0);
    }
  }
  return Vec();
}

DemixResult demix_scene(const HsiScene& scene, const GroupedDictionary& dict, const DemixParams& params) {
  scene.validate();
  require(scene.bands() == dict.rows(), ErrorKind::Shape, "dictionary rows do not match scene bands");
  params.validate(dict.layout());

  const Index pixels = scene.pixels();
  DemixResult out;
  out.abundances.values = Mat::Zero(dict.cols(), pixels);
  out.abundances.layout = dict.layout();
  out.outer_iters.assign(static_cast<size_t>(pixels), 0);

  const int workers = static_cast<int>(std::min<Index>(resolve_threads(params.threads), pixels));
  constexpr Index chunk = 8;
  std::atomic<Index> next{0};
  std::atomic<long long> inner{0};
  std::mutex failure_mutex;

  auto work = [&] {
    long long local_inner = 0;
    for (;;) {
      const Index start = next.fetch_add(chunk);
      if (start >= pixels) break;
      const Index stop = std::min(pixels, start + chunk);
      for (Index p = start; p < stop; ++p) {
        try {
          int outer = 0;
          out.abundances.values.col(p) = demix_pixel(scene.data.col(p), dict, params, &outer, &local_inner);
          out.outer_iters[static_cast<size_t>(p)] = outer;
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          out.failures.push_back({p, e.what()});
        }
      }
    }
    inner += local_inner;
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  std::sort(out.failures.begin(), out.failures.end(),
            [](const PixelFailure& a, const PixelFailure& b) { return a.pixel < b.pixel; });
  out.inner_iters_total = inner.load();
  return out;
}

SyntheticScene synthesize_grouped_scene(const GroupedDictionary& dict, const std::vector<SparsityLevel>& profile,
                                        double noise_sd, std::uint64_t seed) {
  require(noise_sd >= 0.0, ErrorKind::Config, "noise_sd must be non-negative");
  const GroupLayout& layout = dict.layout();
  const Index m = layout.num_groups();
  Index pixels = 0;
  for (const auto& level : profile) {
    require(level.k >= 1 && level.k <= m, ErrorKind::Config, "sparsity level must lie in [1, M]");
    require(level.count >= 0, ErrorKind::Config, "column count must be non-negative");
    pixels += level.count;
  }
  require(pixels > 0, ErrorKind::Config, "profile must produce at least one column");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticScene out;
  out.truth = Mat::Zero(dict.cols(), pixels);
  std::vector<Index> groups(static_cast<size_t>(m));
  Index p = 0;
  for (const auto& level : profile) {
    for (Index c = 0; c < level.count; ++c, ++p) {
      std::iota(groups.begin(), groups.end(), Index{0});
      std::shuffle(groups.begin(), groups.end(), rng);
      for (Index i = 0; i < level.k; ++i) {
        const Index g = groups[static_cast<size_t>(i)];
        std::uniform_int_distribution<Index> pick(0, layout.size(g) - 1);
        const Index col = layout.begin(g) + pick(rng);
        // a zero draw would make the column sparser than requested
        double mag = 0.0;
        while (mag == 0.0) mag = unit(rng);
        out.truth(col, p) = mag;
      }
      const double n = (dict.entries() * out.truth.col(p)).norm();
      require(n > 0.0, ErrorKind::Degenerate, "synthetic column has a zero noise-free spectrum");
      out.truth.col(p) /= n;
    }
  }
  out.scene.data = dict.entries() * out.truth;
  if (noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (Index q = 0; q < pixels; ++q)
      for (Index w = 0; w < out.scene.data.rows(); ++w) out.scene.data(w, q) += noise(rng);
  }
  return out;
}

bool group_one_sparse(const GroupLayout& layout, const Eigen::Ref<const Vec>& x, double zero_tol) {
  for (Index j = 0; j < layout.num_groups(); ++j) {
    if (layout.is_free(j)) continue;
    Index count = 0;
    for (Index i = layout.begin(j); i < layout.begin(j) + layout.size(j); ++i)
      if (x(i) > zero_tol) ++count;
    if (count > 1) return false;
  }
  return true;
}

MetricsReport compute_metrics(const AbundanceMatrix& s, const Mat& sbar, const GroupCollapser* collapser,
                              double zero_tol, const Mat* y, const Mat* a) {
  require(s.values.size() > 0, ErrorKind::Shape, "abundance matrix is empty");
  const Mat compared = collapser ? collapser->apply(s.values) : s.values;
  require(compared.rows() == sbar.rows() && compared.cols() == sbar.cols(), ErrorKind::Shape,
          "abundances and ground truth have different shapes");

  MetricsReport r;
  r.zero_tol = zero_tol >= 0.0 ? zero_tol : 1e-6 * s.values.maxCoeff();
  const double tol = r.zero_tol;
  r.fraction_nonzero = static_cast<double>((s.values.array() > tol).count()) / static_cast<double>(s.values.size());
  r.support_mismatch = ((compared.array() > tol) != (sbar.array() > tol)).count();
  r.group_mae = (compared - sbar).cwiseAbs().rowwise().mean();

  Index sparse_cols = 0;
  for (Index p = 0; p < s.values.cols(); ++p)
    if (group_one_sparse(s.layout, s.values.col(p), tol)) ++sparse_cols;
  r.fraction_group_one_sparse = static_cast<double>(sparse_cols) / static_cast<double>(s.values.cols());

  if (y && a) {
    require(a->cols() == s.values.rows() && a->rows() == y->rows() && y->cols() == s.values.cols(),
            ErrorKind::Shape, "data and dictionary do not match the abundances");
    r.sse = (*y - *a * s.values).squaredNorm();
  }
  return r;
}

std::vector<MaterialSamples> synthetic_materials(Index bands, Index samples_per_material, std::uint64_t seed) {
  require(bands >= 16, ErrorKind::Config, "at least 16 bands are required");
  require(samples_per_material >= 1, ErrorKind::Config, "samples_per_material must be positive");
  const Vec lam = Vec::LinSpaced(bands, 400.0, 2500.0);
  auto gauss = [&](double c, double w) { return Vec(((lam.array() - c) / w).square().unaryExpr([](double v) { return std::exp(-v); })); };
  auto sigmoid = [&](double c, double w) { return Vec(((c - lam.array()) / w).exp().unaryExpr([](double v) { return 1.0 / (1.0 + v); })); };
  const Vec t = Vec::LinSpaced(bands, 0.0, 1.0);
  const Vec soil = (0.12 + 0.18 * t.array()).matrix();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> band_noise(0.0, 0.002);
  std::vector<MaterialSamples> out;
  for (int stage = 0; stage < 4; ++stage) {
    const double s = stage;
    Vec leaf = (0.04 + 0.05 * gauss(550.0, 35.0).array() + (0.30 + 0.08 * s) * sigmoid(700.0 + 10.0 * s, 18.0).array() *
                                                                (1.0 - 0.25 * t.array()))
                   .matrix();
    leaf.array() *= (1.0 - (0.45 + 0.08 * s) * gauss(1450.0, 60.0).array()) *
                    (1.0 - (0.55 + 0.08 * s) * gauss(1940.0, 70.0).array());
    const double cover = 0.25 + 0.22 * s;
    const Vec proto = cover * leaf + (1.0 - cover) * soil;

    MaterialSamples m;
    m.name = "lettuce_week_" + std::to_string(stage + 4);
    m.signatures.resize(bands, samples_per_material);
    for (Index i = 0; i < samples_per_material; ++i) {
      const double gain = 0.85 + 0.3 * unit(rng);
      Vec warp = Vec::Ones(bands);
      for (int f = 1; f <= 3; ++f) {
        const double amp = 0.015 * (2.0 * unit(rng) - 1.0);
        const double phase = 2.0 * std::numbers::pi * unit(rng);
        warp.array() += amp * (std::numbers::pi * f * t.array() + phase).sin();
      }
      Vec sig = gain * proto.cwiseProduct(warp);
      for (Index w = 0; w < bands; ++w) sig(w) += band_noise(rng);
      if (unit(rng) < 0.05) sig = 0.2 * sig + 0.8 * (0.5 + unit(rng)) * soil;  // mislabeled or mixed pixel
      m.signatures.col(i) = sig;
    }
    out.push_back(std::move(m));
  }
  return out;
}

Mat synthetic_urban_endmembers(Index bands, std::vector<std::string>* names) {
  require(bands >= 16, ErrorKind::Config, "at least 16 bands are required");
  const Vec lam = Vec::LinSpaced(bands, 400.0, 2500.0);
  const Vec t = Vec::LinSpaced(bands, 0.0, 1.0);
  auto gauss = [&](double c, double w) { return Vec(((lam.array() - c) / w).square().unaryExpr([](double v) { return std::exp(-v); })); };
  auto sigmoid = [&](double c, double w) { return Vec(((c - lam.array()) / w).exp().unaryExpr([](double v) { return 1.0 / (1.0 + v); })); };
  auto water = [&](double depth) {
    return Vec((1.0 - depth * gauss(1450.0, 60.0).array()) * (1.0 - 1.2 * depth * gauss(1940.0, 70.0).array()));
  };
  Mat e(bands, 6);
  e.col(0) = (0.06 + 0.05 * t.array()).matrix();                                               // asphalt
  e.col(1) = ((0.05 + 0.06 * gauss(550.0, 30.0).array() + 0.45 * sigmoid(715.0, 15.0).array() *
                                                              (1.0 - 0.45 * t.array())) * water(0.6).array()).matrix();  // grass
  e.col(2) = ((0.03 + 0.03 * gauss(550.0, 30.0).array() + 0.30 * sigmoid(725.0, 15.0).array() *
                                                              (1.0 - 0.6 * t.array())) * water(0.75).array()).matrix();  // tree
  e.col(3) = (0.18 + 0.08 * (6.0 * t.array()).sin() + 0.1 * t.array()).matrix();               // roof
  e.col(4) = ((0.10 + 0.30 * t.array() - 0.12 * t.array().square()) * water(0.25).array()).matrix();  // soil
  e.col(5) = (0.28 + 0.04 * t.array() - 0.08 * gauss(2200.0, 80.0).array()).matrix();           // concrete
  if (names) *names = {"asphalt", "grass", "tree", "roof", "soil", "concrete"};
  return e;
}

namespace {

double median(std::vector<double> v) {
  const size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  const double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h)));
}

}  // namespace

std::vector<Index> mad_inliers(const Mat& signatures, double threshold) {
  require(signatures.cols() > 0, ErrorKind::Shape, "no signatures");
  require(threshold > 0.0, ErrorKind::Config, "threshold must be positive");
  const Index w = signatures.rows();
  const Index n = signatures.cols();
  Mat z(w, n);
  std::vector<double> row(static_cast<size_t>(n));
  for (Index b = 0; b < w; ++b) {
    for (Index i = 0; i < n; ++i) row[static_cast<size_t>(i)] = signatures(b, i);
    const double med = median(row);
    for (Index i = 0; i < n; ++i) row[static_cast<size_t>(i)] = std::abs(signatures(b, i) - med);
    const double mad = std::max(1.4826 * median(row), 1e-12 * (std::abs(med) + 1.0));
    for (Index i = 0; i < n; ++i) z(b, i) = std::abs(signatures(b, i) - med) / mad;
  }
  std::vector<Index> keep;
  std::vector<double> col(static_cast<size_t>(w));
  for (Index i = 0; i < n; ++i) {
    for (Index b = 0; b < w; ++b) col[static_cast<size_t>(b)] = z(b, i);
    if (median(col) <= threshold) keep.push_back(i);
  }
  return keep;
}

EndmemberLibrary build_endmember_library(const std::vector<MaterialSamples>& materials, Index per_group,
                                         std::uint64_t seed) {
  require(!materials.empty(), ErrorKind::Config, "no materials");
  require(per_group >= 1, ErrorKind::Config, "per_group must be positive");
  const Index w = materials.front().signatures.rows();
  const Index m = static_cast<Index>(materials.size());
  std::mt19937_64 rng(seed);
  Mat group(w, m * per_group);
  Mat mean(w, m);
  Mat bad(w, m);
  std::vector<std::string> names;
  for (Index j = 0; j < m; ++j) {
    const auto& mat = materials[static_cast<size_t>(j)];
    require(mat.signatures.rows() == w, ErrorKind::Shape, "materials have different band counts");
    // outliers are judged on spectral shape, so illumination gain does not count
    std::vector<Index> keep = mad_inliers(mat.signatures.colwise().normalized());
    require(static_cast<Index>(keep.size()) >= per_group, ErrorKind::Config,
            "material '" + mat.name + "' has fewer inliers than requested representatives");
    std::shuffle(keep.begin(), keep.end(), rng);
    Mat reps(w, per_group);
    for (Index i = 0; i < per_group; ++i) {
      reps.col(i) = mat.signatures.col(keep[static_cast<size_t>(i)]);
      reps.col(i).normalize();
    }
    group.middleCols(j * per_group, per_group) = reps;
    const Vec avg = reps.rowwise().mean().normalized();
    mean.col(j) = avg;
    Index far = 0;
    (reps.colwise() - avg).colwise().norm().maxCoeff(&far);
    bad.col(j) = reps.col(far);
    names.push_back(mat.name);
  }
  return EndmemberLibrary{normalize_columns(group, GroupLayout::uniform(m, per_group)),
                          normalize_columns(mean, GroupLayout::uniform(m, 1)),
                          normalize_columns(bad, GroupLayout::uniform(m, 1)), std::move(names)};
}

namespace {

SgpParams hsi_sgp() {
  SgpParams p;
  p.sigma = 0.1;
  p.xi1 = 2.0;
  p.xi2 = 10.0;
  p.c_matrix_scale = 1e-9;
  // Looser per-pixel stops halt the l1 - l2 iteration at saddles between near-duplicate atoms.
  p.tol_energy = 1e-8;
  return p;
}

DemixParams sgp_defaults(HsiSolver solver, Index groups, double gamma_intra) {
  DemixParams p;
  p.solver = solver;
  const bool ratio = solver == HsiSolver::HoyerP1;
  p.sparsity = SparsityConfig::uniform(ratio ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2, groups,
                                       gamma_intra, 0.01, 0.01, 0.01, ratio ? 1 : 0);
  p.sgp = hsi_sgp();
  return p;
}

}  // namespace

DemixParams structured_defaults(HsiSolver solver, Index groups) {
  DemixParams p = sgp_defaults(solver, groups, 1e-4);
  p.l1_gamma = 0.001;
  return p;
}

DemixParams inter_defaults(HsiSolver solver, Index groups, bool grouped_dictionary) {
  DemixParams p = sgp_defaults(solver, groups, 0.0);
  p.l1_gamma = grouped_dictionary ? 0.001 : 0.1;
  return p;
}

}  // namespace ssnls::hsi

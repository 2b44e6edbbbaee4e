#include "ssnls/doas.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ssnls::doas {

void ReferenceSpectrum::validate() const {
  require(wavelengths.size() == values.size(), ErrorKind::Shape,
          "reference '" + name + "': wavelength and value lengths differ");
  require(wavelengths.size() >= 2, ErrorKind::Shape, "reference '" + name + "' needs two samples");
  const double h = (wavelengths(wavelengths.size() - 1) - wavelengths(0)) / static_cast<double>(wavelengths.size() - 1);
  require(h > 0.0, ErrorKind::Domain, "reference '" + name + "': wavelengths must increase");
  for (Index i = 1; i < wavelengths.size(); ++i) {
    const double step = wavelengths(i) - wavelengths(i - 1);
    require(std::abs(step - h) <= 1e-9 * std::max(1.0, std::abs(wavelengths(i))), ErrorKind::Domain,
            "reference '" + name + "': wavelengths must be uniformly spaced");
  }
}

Vec instrument_wavelengths(Index w) {
  require(w >= 2, ErrorKind::Config, "wavelength grid needs at least two channels");
  const double step = 0.04038 * 1024.0 / static_cast<double>(w);
  Vec out(w);
  for (Index i = 0; i < w; ++i) out(i) = 340.0 + step * static_cast<double>(i);
  return out;
}

namespace {

double gauss(double x, double c, double s) {
  const double t = (x - c) / s;
  return std::exp(-0.5 * t * t);
}

}  // namespace

std::vector<ReferenceSpectrum> synthetic_references(const Vec& wavelengths) {
  const Index w = wavelengths.size();
  ReferenceSpectrum hono{wavelengths, Vec::Zero(w), "HONO"};
  ReferenceSpectrum no2{wavelengths, Vec::Zero(w), "NO2"};
  ReferenceSpectrum o3{wavelengths, Vec::Zero(w), "O3"};

  // HONO: a progression of distinct vibronic bands.
  const double hono_centers[] = {341.2, 343.9, 347.1, 351.3, 354.6, 358.8, 363.4, 368.2, 371.9, 376.5};
  const double hono_heights[] = {0.35, 0.55, 0.7, 0.5, 1.0, 0.45, 0.8, 0.6, 0.4, 0.3};
  // NO2: dense fine structure on a weak continuum.
  std::mt19937_64 rng(20240915);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> no2_centers, no2_heights, no2_widths;
  for (int i = 0; i < 48; ++i) {
    no2_centers.push_back(339.0 + 44.0 * unit(rng));
    no2_heights.push_back(0.2 + 0.8 * unit(rng));
    no2_widths.push_back(0.2 + 0.2 * unit(rng));
  }
  for (Index i = 0; i < w; ++i) {
    const double lam = wavelengths(i);
    double v = 0.0;
    for (int k = 0; k < 10; ++k) v += hono_heights[k] * gauss(lam, hono_centers[k], 0.45);
    hono.values(i) = v;

    v = 0.15 * gauss(lam, 362.0, 15.0);
    for (size_t k = 0; k < no2_centers.size(); ++k) v += no2_heights[k] * gauss(lam, no2_centers[k], no2_widths[k]);
    no2.values(i) = v;

    // O3: wide bands of decreasing strength on a sloped continuum.
    v = 0.25 * (381.5 - lam) / 41.5;
    for (int k = 0; k < 8; ++k) v += 0.9 * std::pow(0.82, k) * gauss(lam, 341.0 + 4.6 * k, 0.8);
    o3.values(i) = v;
  }
  return {hono, no2, o3};
}

void DeformationGrid::validate() const {
  require(slopes.size() >= 1 && offsets.size() >= 1, ErrorKind::Config,
          "deformation grid needs at least one slope and one offset");
}

DeformationGrid DeformationGrid::uniform(double slope_min, double slope_step, Index k, double offset_min,
                                         double offset_step, Index l) {
  DeformationGrid g;
  g.slopes.resize(k);
  g.offsets.resize(l);
  for (Index i = 0; i < k; ++i) g.slopes(i) = slope_min + slope_step * static_cast<double>(i);
  for (Index i = 0; i < l; ++i) g.offsets(i) = offset_min + offset_step * static_cast<double>(i);
  return g;
}

DeformationGrid DeformationGrid::full() { return uniform(-0.1, 0.01, 21, -1.0, 0.1, 21); }
DeformationGrid DeformationGrid::desk() { return uniform(-0.02, 0.01, 5, -0.2, 0.1, 5); }
DeformationGrid DeformationGrid::identity() { return uniform(0.0, 0.0, 1, 0.0, 0.0, 1); }

namespace {

double interpolate(const ReferenceSpectrum& ref, double lambda) {
  const Index n = ref.wavelengths.size();
  const double lo = ref.wavelengths(0);
  const double h = (ref.wavelengths(n - 1) - lo) / static_cast<double>(n - 1);
  const double t = std::clamp((lambda - lo) / h, 0.0, static_cast<double>(n - 1));
  const Index i = std::min(static_cast<Index>(t), n - 2);
  const double f = t - static_cast<double>(i);
  return (1.0 - f) * ref.values(i) + f * ref.values(i + 1);
}

}  // namespace

double sample_reference(const ReferenceSpectrum& ref, double lambda) {
  const double lo = ref.wavelengths(0);
  const double hi = ref.wavelengths(ref.wavelengths.size() - 1);
  if (lambda > hi) return 2.0 * ref.values(ref.values.size() - 1) - interpolate(ref, 2.0 * hi - lambda);
  if (lambda < lo) return 2.0 * ref.values(0) - interpolate(ref, 2.0 * lo - lambda);
  return interpolate(ref, lambda);
}

DeformationDictionary build_deformation_dictionary(const std::vector<ReferenceSpectrum>& refs,
                                                   const DeformationGrid& grid) {
  require(!refs.empty(), ErrorKind::Config, "at least one reference spectrum is required");
  grid.validate();
  for (const auto& r : refs) r.validate();
  const Vec& lam = refs.front().wavelengths;
  const Index w = lam.size();
  for (const auto& r : refs)
    require(r.wavelengths.size() == w && (r.wavelengths - lam).cwiseAbs().maxCoeff() <= 1e-9 * lam.cwiseAbs().maxCoeff(),
            ErrorKind::Shape, "references must share one wavelength grid");

  const double lo = lam(0);
  const double hi = lam(w - 1);
  const double span = hi - lo;
  const Index m = static_cast<Index>(refs.size());
  const Index per = grid.size();
  Mat raw(w, m * per);
  for (Index j = 0; j < m; ++j) {
    for (Index col = 0; col < per; ++col) {
      const double p = grid.slopes(grid.slope_index(col));
      const double q = grid.offsets(grid.offset_index(col));
      bool inside = false;
      for (Index i = 0; i < w; ++i) {
        const double t = lam(i) + p * lam(i) + q;
        if (t >= lo - span && t <= hi + span) inside = true;
        raw(i, j * per + col) = sample_reference(refs[static_cast<size_t>(j)], t);
      }
      require(inside, ErrorKind::Degenerate,
              "deformation (" + std::to_string(p) + ", " + std::to_string(q) +
                  ") moves every sample outside the reflected domain");
    }
  }

  DeformationDictionary out{normalize_columns(raw, GroupLayout::uniform(m, per)), grid, lam, {}};
  for (const auto& r : refs) out.names.push_back(r.name);
  return out;
}

GroupedCoeffs plant_one_per_group(const GroupLayout& layout, const std::vector<double>& means,
                                  std::uint64_t seed) {
  require(static_cast<Index>(means.size()) == layout.num_groups(), ErrorKind::Shape,
          "one magnitude mean per group is required");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GroupedCoeffs out{Vec::Zero(layout.num_coeffs()), std::nullopt};
  for (Index j = 0; j < layout.num_groups(); ++j) {
    std::uniform_int_distribution<Index> pick(0, layout.size(j) - 1);
    const Index col = pick(rng);
    out.x(layout.begin(j) + col) = means[static_cast<size_t>(j)] * (0.5 + unit(rng));
  }
  return out;
}

Vec synthesize_doas_data(const GroupedDictionary& dict, const GroupedCoeffs& planted, double noise_sd,
                         std::uint64_t seed) {
  require(planted.x.size() == dict.cols(), ErrorKind::Shape, "planted coefficients do not match the dictionary");
  require(noise_sd >= 0.0, ErrorKind::Config, "noise standard deviation must be non-negative");
  Vec j = dict.entries() * planted.x;
  if (noise_sd > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (Index i = 0; i < j.size(); ++i) j(i) += noise(rng);
  }
  return j;
}

BackgroundOperator::BackgroundOperator(Index w, double weight_exponent) : size_(w), weights_(w) {
  require(w >= 4, ErrorKind::Config, "background operator needs at least 4 samples");
  for (Index i = 0; i < w; ++i) weights_(i) = std::pow(static_cast<double>(i), weight_exponent);

  // Gamma restricted to the interior, then L folded in as a rank-two correction.
  const double denom = static_cast<double>(w - 1);
  const double norm = std::sqrt(2.0 / denom);
  Mat gamma = Mat::Zero(w, w);
  for (Index f = 1; f < w - 1; ++f)
    for (Index n = 1; n < w - 1; ++n)
      gamma(f, n) = norm * std::sin(std::numbers::pi * static_cast<double>(f * n) / denom);
  Vec u0(w), u1(w);
  for (Index n = 0; n < w; ++n) {
    u1(n) = static_cast<double>(n) / denom;
    u0(n) = 1.0 - u1(n);
  }
  q_ = gamma;
  q_.col(0) -= gamma * u0;
  q_.col(w - 1) -= gamma * u1;
  q_ = weights_.asDiagonal() * q_;
}

Vec BackgroundOperator::remove_line(const Vec& b) const {
  require(b.size() == size_, ErrorKind::Shape, "background length mismatch");
  const double denom = static_cast<double>(size_ - 1);
  Vec out(size_);
  for (Index n = 0; n < size_; ++n) {
    const double t = static_cast<double>(n) / denom;
    out(n) = b(n) - ((1.0 - t) * b(0) + t * b(size_ - 1));
  }
  return out;
}

Vec BackgroundOperator::dst(const Vec& v) const {
  require(v.size() == size_, ErrorKind::Shape, "background length mismatch");
  const double denom = static_cast<double>(size_ - 1);
  const double norm = std::sqrt(2.0 / denom);
  Vec out = Vec::Zero(size_);
  for (Index f = 1; f < size_ - 1; ++f) {
    double s = 0.0;
    for (Index n = 1; n < size_ - 1; ++n) s += v(n) * std::sin(std::numbers::pi * static_cast<double>(f * n) / denom);
    out(f) = norm * s;
  }
  return out;
}

Vec BackgroundOperator::apply(const Vec& b) const {
  require(b.size() == size_, ErrorKind::Shape, "background length mismatch");
  return q_ * b;
}

Vec BackgroundOperator::apply_normal(const Vec& b) const { return q_.transpose() * apply(b); }

Vec default_background(const Vec& wavelengths) {
  return (2.0 / (wavelengths.array() - 334.0).pow(4.0)).matrix();
}

const char* to_string(DoasSolver s) noexcept {
  switch (s) {
    case DoasSolver::HoyerP1: return "l1_over_l2";
    case DoasSolver::DiffL1L2P2: return "l1_minus_l2";
    case DoasSolver::PenaltyDecompL0: return "l0_pd";
    case DoasSolver::LeastSquaresOracle: return "least_squares";
    case DoasSolver::Nnls: return "nnls";
    case DoasSolver::L1: return "l1";
  }
  return "unknown";
}

DoasSolver parse_doas_solver(const std::string& name) {
  for (DoasSolver s : {DoasSolver::HoyerP1, DoasSolver::DiffL1L2P2, DoasSolver::PenaltyDecompL0,
                       DoasSolver::LeastSquaresOracle, DoasSolver::Nnls, DoasSolver::L1})
    if (name == to_string(s)) return s;
  fail(ErrorKind::Config, "unknown DOAS solver '" + name + "'");
}

void DoasFitConfig::validate() const {
  require(alpha >= 0.0, ErrorKind::Config, "alpha must be non-negative");
  require(interior_fraction > 0.0 && interior_fraction <= 1.0, ErrorKind::Config,
          "interior_fraction must lie in (0, 1]");
  if (solver == DoasSolver::HoyerP1 || solver == DoasSolver::DiffL1L2P2) sgp.validate();
  if (solver == DoasSolver::PenaltyDecompL0) pd.validate();
  if (solver == DoasSolver::L1) {
    require(tau > 0.0, ErrorKind::Config, "the l1 solver needs a positive tau");
    require(alpha == 0.0, ErrorKind::Config, "the l1 solver does not support background estimation");
  }
  if (solver == DoasSolver::LeastSquaresOracle)
    require(oracle_draws >= 1, ErrorKind::Config, "oracle_draws must be positive");
}

namespace {

struct FitSystem {
  std::optional<GroupedDictionary> dict;  // reference groups (+ background group)
  Vec b;
  Vec extra_scales;   // column norms after row restriction
  Index first_row = 0;
  Index rows = 0;
  Index refs = 0;     // number of reference columns
  Index w = 0;
};

FitSystem build_system(const Vec& j, const DeformationDictionary& dd, const DoasFitConfig& cfg) {
  const Mat& a = dd.dict.entries();
  FitSystem s;
  s.w = a.rows();
  s.refs = a.cols();
  const Index trim = static_cast<Index>(std::floor(0.5 * (1.0 - cfg.interior_fraction) * static_cast<double>(s.w)));
  s.first_row = trim;
  s.rows = s.w - 2 * trim;
  require(s.rows >= 2, ErrorKind::Config, "interior_fraction leaves too few wavelengths");

  Mat ar = a.middleRows(s.first_row, s.rows);
  s.extra_scales = ar.colwise().norm().transpose();
  require((s.extra_scales.array() > 0.0).all(), ErrorKind::Degenerate,
          "a dictionary column vanishes on the fitted wavelength range");
  ar = ar * s.extra_scales.cwiseInverse().asDiagonal();

  GroupLayout layout = dd.dict.layout();
  const bool background = cfg.alpha > 0.0;
  if (!background) {
    s.dict.emplace(std::move(ar), std::move(layout));
    s.b = j.segment(s.first_row, s.rows);
    return s;
  }
  const BackgroundOperator q(s.w, cfg.background_exponent);
  Mat stacked = Mat::Zero(s.rows + s.w, s.refs + s.w);
  stacked.topLeftCorner(s.rows, s.refs) = ar;
  for (Index r = 0; r < s.rows; ++r) stacked(r, s.refs + s.first_row + r) = 1.0;
  stacked.bottomRightCorner(s.w, s.w) = std::sqrt(cfg.alpha) * q.matrix();
  layout.offsets.push_back(s.refs + s.w);
  layout.free.assign(static_cast<size_t>(layout.num_groups()), false);
  layout.free.back() = true;
  s.dict.emplace(std::move(stacked), std::move(layout));
  s.b = Vec::Zero(s.rows + s.w);
  s.b.head(s.rows) = j.segment(s.first_row, s.rows);
  return s;
}

SparsityConfig extend_for_background(const SparsityConfig& cfg, const GroupLayout& layout) {
  SparsityConfig out = cfg;
  const Index m = layout.num_groups();
  if (cfg.gamma_intra.size() == m) return out;
  require(cfg.gamma_intra.size() == m - 1 && cfg.eps_intra.size() == m - 1, ErrorKind::Config,
          "sparsity config must have one entry per reference group");
  out.gamma_intra.conservativeResize(m);
  out.eps_intra.conservativeResize(m);
  out.gamma_intra(m - 1) = 0.0;
  out.eps_intra(m - 1) = 1.0;
  return out;
}

// Least squares on one random atom per group, averaged over draws. The
// background is eliminated: the data term becomes (Ax - J)^T P (Ax - J) with
// P = I - S (S^T S + alpha Q^T Q)^{-1} S^T.
Vec least_squares_oracle(const FitSystem& s, const DeformationDictionary& dd, const DoasFitConfig& cfg,
                         Vec& background) {
  const GroupLayout& layout = dd.dict.layout();
  const Index m = layout.num_groups();
  const Mat& ar = s.dict->entries().topLeftCorner(s.rows, s.refs);
  const Vec jr = s.b.head(s.rows);

  Mat pa;
  Vec pj;
  Mat h;  // S^T S + alpha Q^T Q
  if (cfg.alpha > 0.0) {
    const BackgroundOperator q(s.w, cfg.background_exponent);
    h = cfg.alpha * q.matrix().transpose() * q.matrix();
    for (Index r = 0; r < s.rows; ++r) h(s.first_row + r, s.first_row + r) += 1.0;
    const Eigen::LDLT<Mat> hf(h);
    Mat st = Mat::Zero(s.w, s.rows);
    for (Index r = 0; r < s.rows; ++r) st(s.first_row + r, r) = 1.0;
    const Mat k = hf.solve(st).middleRows(s.first_row, s.rows);
    const Mat p = Mat::Identity(s.rows, s.rows) - k;
    pa = p * ar;
    pj = p * jr;
  } else {
    pa = ar;
    pj = jr;
  }

  std::mt19937_64 rng(cfg.seed);
  Vec sum = Vec::Zero(s.refs);
  background = Vec::Zero(s.w);
  std::vector<Index> cols(static_cast<size_t>(m));
  for (int draw = 0; draw < cfg.oracle_draws; ++draw) {
    for (Index g = 0; g < m; ++g) {
      std::uniform_int_distribution<Index> pick(0, layout.size(g) - 1);
      cols[static_cast<size_t>(g)] = layout.begin(g) + pick(rng);
    }
    Mat a3(s.rows, m), pa3(s.rows, m);
    for (Index g = 0; g < m; ++g) {
      a3.col(g) = ar.col(cols[static_cast<size_t>(g)]);
      pa3.col(g) = pa.col(cols[static_cast<size_t>(g)]);
    }
    const Vec c = (a3.transpose() * pa3).ldlt().solve(pa3.transpose() * jr);
    for (Index g = 0; g < m; ++g) sum(cols[static_cast<size_t>(g)]) += c(g);
    if (cfg.alpha > 0.0) {
      Vec rhs = Vec::Zero(s.w);
      rhs.segment(s.first_row, s.rows) = jr - a3 * c;
      background += h.ldlt().solve(rhs);
    }
  }
  background /= static_cast<double>(cfg.oracle_draws);
  return sum / static_cast<double>(cfg.oracle_draws);
}

}  // namespace

DoasFit fit_doas(const Vec& j, const DeformationDictionary& dd, const DoasFitConfig& cfg) {
  cfg.validate();
  require(j.size() == dd.dict.rows(), ErrorKind::Shape, "data length does not match the dictionary");
  const FitSystem s = build_system(j, dd, cfg);
  const GroupedDictionary& fd = *s.dict;
  const bool background = cfg.alpha > 0.0;

  DoasFit fit;
  Vec sol;  // fit-system coefficients
  std::vector<bool> free(static_cast<size_t>(fd.cols()), false);
  for (Index c = s.refs; c < fd.cols(); ++c) free[static_cast<size_t>(c)] = true;

  switch (cfg.solver) {
    case DoasSolver::HoyerP1:
    case DoasSolver::DiffL1L2P2: {
      SparsityConfig sc = extend_for_background(cfg.sparsity, fd.layout());
      sc.family = cfg.solver == DoasSolver::HoyerP1 ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2;
      SolveReport rep = solve_sparse(fd, s.b, sc, cfg.sgp);
      sol = rep.final.x;
      fit.iterations = rep.outer_iters;
      fit.report = std::move(rep);
      break;
    }
    case DoasSolver::PenaltyDecompL0: {
      const PdResult r = penalty_decomposition_l0(fd, s.b, cfg.pd);
      sol = r.coeffs.x;
      fit.iterations = r.outer_iters;
      break;
    }
    case DoasSolver::Nnls:
      sol = background ? nonneg_qp(fd.entries().transpose() * fd.entries(), fd.entries().transpose() * s.b, {}, free)
                       : nnls(fd.entries(), s.b);
      break;
    case DoasSolver::L1: {
      const BregmanResult r = l1_bregman(fd.entries(), s.b, cfg.tau);
      sol = r.x;
      fit.iterations = r.outer_iters;
      break;
    }
    case DoasSolver::LeastSquaresOracle: {
      Vec bg;
      const Vec x = least_squares_oracle(s, dd, cfg, bg);
      sol = Vec::Zero(fd.cols());
      sol.head(s.refs) = x;
      if (background) sol.tail(s.w) = bg;
      fit.iterations = cfg.oracle_draws;
      break;
    }
  }

  fit.x = sol.head(s.refs).cwiseQuotient(s.extra_scales);
  fit.x_original_units = dd.dict.denormalize(fit.x);
  fit.background = background ? Vec(sol.tail(s.w)) : Vec(Vec::Zero(s.w));

  const Vec model = (dd.dict.entries() * fit.x + fit.background).segment(s.first_row, s.rows);
  fit.objective = 0.5 * (model - j.segment(s.first_row, s.rows)).squaredNorm();
  if (background) fit.objective += 0.5 * cfg.alpha * BackgroundOperator(s.w, cfg.background_exponent).apply(fit.background).squaredNorm();

  const GroupLayout& layout = dd.dict.layout();
  for (Index g = 0; g < layout.num_groups(); ++g) {
    SelectedAtom atom;
    atom.group = g;
    const auto xs = fit.x.segment(layout.begin(g), layout.size(g));
    for (Index c = 1; c < xs.size(); ++c)
      if (xs(c) > xs(atom.column)) atom.column = c;
    atom.magnitude = cfg.solver == DoasSolver::LeastSquaresOracle ? xs.sum() : xs(atom.column);
    if (cfg.solver == DoasSolver::LeastSquaresOracle) {
      atom.slope = std::numeric_limits<double>::quiet_NaN();
      atom.offset = std::numeric_limits<double>::quiet_NaN();
    } else {
      atom.slope = dd.grid.slopes(dd.grid.slope_index(atom.column));
      atom.offset = dd.grid.offsets(dd.grid.offset_index(atom.column));
    }
    fit.atoms.push_back(atom);
  }
  return fit;
}

namespace {

SgpParams base_sgp(double c_scale, double admm_tol) {
  SgpParams p;
  p.sigma = 0.1;
  p.xi1 = 2.0;
  p.xi2 = 10.0;
  p.c_matrix_scale = c_scale;
  p.tol_energy = 1e-8;
  p.admm.tol_primal_rel = admm_tol;
  p.admm.tol_dual_rel = admm_tol;
  return p;
}

}  // namespace

DoasFitConfig alignment_defaults(DoasSolver solver, Index groups, Index w, double noise_sd) {
  DoasFitConfig cfg;
  cfg.solver = solver;
  const bool ratio = solver == DoasSolver::HoyerP1;
  cfg.sparsity = SparsityConfig::uniform(ratio ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2, groups,
                                         ratio ? 0.1 : 0.05, 0.05, 0.0, 1.0, ratio ? 1 : 0);
  cfg.sgp = base_sgp(1e-9, 1e-4);
  // the trace-based ADMM step is far too large for this ill-conditioned dictionary
  cfg.sgp.admm.delta = 0.03;
  cfg.pd = PdParams{};
  cfg.pd.init = PdInit::Nnls;
  cfg.tau = std::sqrt(static_cast<double>(w)) * std::max(noise_sd, 0.001);
  return cfg;
}

DoasFitConfig background_defaults(DoasSolver solver, Index groups) {
  DoasFitConfig cfg;
  cfg.solver = solver;
  cfg.alpha = 1e-5;
  const bool ratio = solver == DoasSolver::HoyerP1;
  cfg.sparsity = SparsityConfig::uniform(ratio ? PenaltyFamily::HoyerRatio : PenaltyFamily::DiffL1L2, groups,
                                         0.001, 0.001, 0.0, 1.0, ratio ? 1 : 0);
  cfg.sgp = base_sgp(ratio ? 1e-4 : 1e-7, 1e-5);
  cfg.pd.rho0 = 1e-6;
  cfg.pd.sigma_growth = 1.1;
  cfg.pd.tol_inner = 1e-4;
  cfg.pd.tol_outer = 1e-6;
  cfg.pd.init = PdInit::Zero;
  return cfg;
}

}  // namespace ssnls::doas

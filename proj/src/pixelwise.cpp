#include "sketchlidar/pixelwise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_fit_input(SketchView z, const SketchModel& model) {
  if (z.empty()) throw Error(Errc::EmptySketch, "sketch has no photons");
  if (z.size() != model.m()) throw Error(Errc::SchemeMismatch, "sketch size differs from model m");
}

// Wraps, sorts and drops depths that crowd an earlier (kept) depth.
std::vector<double> sanitize_depths(std::vector<double> depths, double period, double sep) {
  for (auto& t : depths) t = wrap_depth(t, period);
  std::vector<double> kept;
  for (double t : depths) {
    const bool crowded = std::any_of(kept.begin(), kept.end(), [&](double k) {
      return circular_distance(k, t, period) < sep;
    });
    if (!crowded) kept.push_back(t);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

bool separated(const std::vector<double>& depths, double period, double sep) {
  for (std::size_t i = 0; i < depths.size(); ++i) {
    for (std::size_t j = i + 1; j < depths.size(); ++j) {
      if (circular_distance(depths[i], depths[j], period) < sep) return false;
    }
  }
  return true;
}

// Atoms minus the background term, since alpha_0 = 1 - sum(alpha) ties the
// background weight to the surface weights.
std::vector<Complex> shifted_atoms(std::span<const double> depths, const SketchModel& model) {
  const std::size_t m = model.m();
  const auto bg = model.background();
  std::vector<Complex> atoms(depths.size() * m);
  for (std::size_t k = 0; k < depths.size(); ++k) {
    std::span<Complex> a(atoms.data() + k * m, m);
    model.atom(depths[k], a);
    for (std::size_t l = 0; l < m; ++l) a[l] -= bg[l];
  }
  return atoms;
}

double residual_loss(SketchView z, const SketchModel& model, std::span<const Complex> atoms,
                     std::span<const double> alpha, std::vector<Complex>* residual = nullptr) {
  const std::size_t m = model.m();
  const auto bg = model.background();
  double acc = 0.0;
  if (residual) residual->resize(m);
  for (std::size_t l = 0; l < m; ++l) {
    Complex r = z.values[l] - bg[l];
    for (std::size_t k = 0; k < alpha.size(); ++k) r -= alpha[k] * atoms[k * m + l];
    acc += std::norm(r);
    if (residual) (*residual)[l] = r;
  }
  return static_cast<double>(z.count) * acc;
}

// Minimizes a^T G a - 2 b^T a over {a >= 0, sum(a) <= 1} by enumerating the
// faces of the feasible polytope; K is small.
std::vector<double> constrained_least_squares(const Eigen::MatrixXd& G, const Eigen::VectorXd& b) {
  const auto K = static_cast<std::size_t>(G.rows());
  constexpr double kSlack = 1e-12;
  std::vector<double> best(K, 0.0);
  double best_value = 0.0;
  auto objective = [&](const std::vector<double>& a) {
    double v = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      v -= 2.0 * b[static_cast<Eigen::Index>(i)] * a[i];
      for (std::size_t j = 0; j < K; ++j) {
        v += a[i] * G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * a[j];
      }
    }
    return v;
  };
  auto consider = [&](std::vector<double> a) {
    double total = 0.0;
    for (auto& v : a) {
      if (v < -kSlack) return;
      v = std::max(v, 0.0);
      total += v;
    }
    if (total > 1.0 + kSlack) return;
    if (total > 1.0) for (auto& v : a) v /= total;
    const double value = objective(a);
    if (value < best_value) {
      best_value = value;
      best = std::move(a);
    }
  };

  for (std::size_t mask = 1; mask < (std::size_t{1} << K); ++mask) {
    std::vector<Eigen::Index> free;
    for (std::size_t k = 0; k < K; ++k) {
      if (mask & (std::size_t{1} << k)) free.push_back(static_cast<Eigen::Index>(k));
    }
    const auto F = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Gs(F, F);
    Eigen::VectorXd bs(F);
    for (Eigen::Index i = 0; i < F; ++i) {
      bs[i] = b[free[i]];
      for (Eigen::Index j = 0; j < F; ++j) Gs(i, j) = G(free[i], free[j]);
    }
    auto expand = [&](const Eigen::VectorXd& x) {
      std::vector<double> a(K, 0.0);
      for (Eigen::Index i = 0; i < F; ++i) a[static_cast<std::size_t>(free[i])] = x[i];
      return a;
    };

    const Eigen::VectorXd interior = Gs.ldlt().solve(bs);
    if (interior.allFinite()) consider(expand(interior));

    // Same face restricted to the hyperplane sum(a) = 1.
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(F + 1, F + 1);
    kkt.topLeftCorner(F, F) = Gs;
    kkt.block(0, F, F, 1).setOnes();
    kkt.block(F, 0, 1, F).setOnes();
    Eigen::VectorXd rhs(F + 1);
    rhs << bs, 1.0;
    const Eigen::VectorXd on_simplex = kkt.fullPivLu().solve(rhs);
    if (on_simplex.allFinite()) consider(expand(on_simplex.head(F)));
  }
  return best;
}

struct Candidate {
  std::vector<double> depths;
  std::vector<double> alpha;
  double loss = std::numeric_limits<double>::infinity();
};

std::optional<Candidate> evaluate_depths(SketchView z, const SketchModel& model,
                                         std::vector<double> depths, double coherence) {
  Candidate c;
  try {
    c.alpha = solve_alpha(z, depths, model, coherence);
  } catch (const Error& e) {
    if (e.code() == Errc::IllConditioned) return std::nullopt;
    throw;
  }
  const auto atoms = shifted_atoms(depths, model);
  c.loss = residual_loss(z, model, atoms, c.alpha);
  c.depths = std::move(depths);
  return c;
}

PixelFit to_fit(const Candidate& c, std::size_t iterations) {
  std::vector<Surface> surfaces;
  for (std::size_t k = 0; k < c.depths.size(); ++k) surfaces.push_back({c.depths[k], c.alpha[k]});
  PixelFit fit;
  fit.params = PixelParams::from_surfaces(std::move(surfaces));
  fit.loss = c.loss;
  fit.iterations = iterations;
  return fit;
}

}  // namespace

double grid_step(const FitOptions& opts, const SketchModel& model) {
  const double limit = model.period() / (2.0 * static_cast<double>(model.m()));
  if (opts.grid_step <= 0.0) return 0.5 * limit;
  if (opts.grid_step > limit * (1.0 + 1e-12)) {
    throw Error(Errc::InvalidArgument, "grid step exceeds T / (2m)");
  }
  return opts.grid_step;
}

double min_separation(const FitOptions& opts, const SketchModel& model) {
  return opts.min_separation > 0.0 ? opts.min_separation : model.default_min_separation();
}

std::vector<double> depth_grid(const SketchModel& model, double step) {
  if (!(step > 0.0)) throw Error(Errc::InvalidArgument, "grid step must be positive");
  const auto points = static_cast<std::size_t>(std::ceil(model.period() / step - 1e-9));
  std::vector<double> grid(std::max<std::size_t>(points, 1));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = model.period() * static_cast<double>(i) / static_cast<double>(grid.size());
  }
  return grid;
}

std::vector<double> backproject(SketchView z, const SketchModel& model,
                                std::span<const double> grid) {
  require_fit_input(z, model);
  const std::size_t m = model.m();
  std::vector<Complex> weights(m);
  const auto g = model.response();
  for (std::size_t l = 0; l < m; ++l) weights[l] = z.values[l] * std::conj(g[l]);

  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Complex step = std::polar(1.0, -model.frequency(0) * grid[i]);
    Complex phase = step;
    double acc = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      acc += std::real(weights[l] * phase);
      phase *= step;
    }
    out[i] = acc;
  }
  return out;
}

std::vector<double> init_depths(SketchView z, const SketchModel& model, std::size_t K,
                                const FitOptions& opts) {
  require_fit_input(z, model);
  if (K == 0) throw Error(Errc::InvalidArgument, "K must be at least 1");
  const auto grid = depth_grid(model, grid_step(opts, model));
  const auto g = backproject(z, model, grid);
  const std::size_t G = grid.size();

  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < G; ++i) {
    const double left = g[(i + G - 1) % G];
    const double right = g[(i + 1) % G];
    if (g[i] > 0.0 && g[i] > left && g[i] >= right) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });

  const double sep = min_separation(opts, model);
  std::vector<double> chosen;
  for (auto i : peaks) {
    if (chosen.size() == K) break;
    const bool crowded = std::any_of(chosen.begin(), chosen.end(), [&](double t) {
      return circular_distance(t, grid[i], model.period()) < sep;
    });
    if (!crowded) chosen.push_back(grid[i]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<double> spectral_depths(SketchView z, const SketchModel& model, std::size_t K,
                                    double min_sep) {
  require_fit_input(z, model);
  if (K == 0) return {};
  const auto g = model.response();
  std::size_t usable = 0;
  while (usable < model.m() && std::abs(g[usable]) > 1e-6) ++usable;
  if (usable < 2 * K) return {};

  // w_l = sum_k alpha_k u_k^l with u_k = exp(i 2 pi t_k / T).
  std::vector<Complex> w(usable);
  for (std::size_t l = 0; l < usable; ++l) w[l] = z.values[l] / g[l];

  const auto L = static_cast<Eigen::Index>(usable / 2);
  const auto rows = static_cast<Eigen::Index>(usable) - L;
  Eigen::MatrixXcd hankel(rows, L + 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j <= L; ++j) hankel(i, j) = w[static_cast<std::size_t>(i + j)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(hankel, Eigen::ComputeThinV);
  const auto Kc = static_cast<Eigen::Index>(K);
  if (svd.matrixV().cols() < Kc) return {};
  // Rows of the Hankel matrix live in the span of conj(V).
  const Eigen::MatrixXcd basis = svd.matrixV().leftCols(Kc).conjugate();
  const Eigen::MatrixXcd upper = basis.topRows(L);
  const Eigen::MatrixXcd lower = basis.bottomRows(L);
  const Eigen::MatrixXcd pencil = upper.completeOrthogonalDecomposition().solve(lower);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(pencil, false);
  if (eig.info() != Eigen::Success) return {};

  std::vector<double> depths;
  for (Eigen::Index k = 0; k < Kc; ++k) {
    const Complex root = eig.eigenvalues()[k];
    if (!std::isfinite(root.real()) || !std::isfinite(root.imag()) || std::abs(root) == 0.0) continue;
    depths.push_back(std::arg(root) * model.period() / kTwoPi);
  }
  return sanitize_depths(std::move(depths), model.period(), min_sep);
}

std::vector<double> solve_alpha(SketchView z, std::span<const double> depths,
                                const SketchModel& model, double coherence_limit) {
  require_fit_input(z, model);
  const std::size_t K = depths.size();
  const std::size_t m = model.m();
  if (K == 0) return {};
  const auto atoms = shifted_atoms(depths, model);
  const auto bg = model.background();

  Eigen::MatrixXd G(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  Eigen::VectorXd b(static_cast<Eigen::Index>(K));
  for (std::size_t j = 0; j < K; ++j) {
    Complex bj{0.0, 0.0};
    for (std::size_t l = 0; l < m; ++l) bj += std::conj(atoms[j * m + l]) * (z.values[l] - bg[l]);
    b[static_cast<Eigen::Index>(j)] = bj.real();
    for (std::size_t k = j; k < K; ++k) {
      Complex gjk{0.0, 0.0};
      for (std::size_t l = 0; l < m; ++l) gjk += std::conj(atoms[j * m + l]) * atoms[k * m + l];
      const auto jj = static_cast<Eigen::Index>(j);
      const auto kk = static_cast<Eigen::Index>(k);
      G(jj, kk) = gjk.real();
      G(kk, jj) = gjk.real();
    }
  }
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t k = j + 1; k < K; ++k) {
      Complex gjk{0.0, 0.0};
      double nk = 0.0;
      for (std::size_t l = 0; l < m; ++l) {
        gjk += std::conj(atoms[j * m + l]) * atoms[k * m + l];
        nk += std::norm(atoms[k * m + l]);
      }
      double nj = 0.0;
      for (std::size_t l = 0; l < m; ++l) nj += std::norm(atoms[j * m + l]);
      if (std::abs(gjk) > coherence_limit * std::sqrt(nj * nk)) {
        throw Error(Errc::IllConditioned, "surface atoms are nearly collinear");
      }
    }
  }
  if (K == 1) {
    if (!(G(0, 0) > 0.0)) return {0.0};
    return {std::clamp(b[0] / G(0, 0), 0.0, 1.0)};
  }
  return constrained_least_squares(G, b);
}

PixelFit refine_pixel(SketchView z, const SketchModel& model, std::vector<double> depths,
                      const FitOptions& opts, std::vector<double>* loss_trace) {
  require_fit_input(z, model);
  const std::size_t m = model.m();
  const double period = model.period();
  const double sep = min_separation(opts, model);
  const double max_move = period / (4.0 * static_cast<double>(m));
  const double n = static_cast<double>(z.count);
  const double floor_loss = 1e-28 * n;

  auto start = evaluate_depths(z, model, sanitize_depths(std::move(depths), period, sep), opts.coherence_limit);
  if (!start) throw Error(Errc::IllConditioned, "initial depths are not separable");
  Candidate cur = std::move(*start);
  if (loss_trace) loss_trace->assign(1, cur.loss);

  const std::size_t K = cur.depths.size();
  std::size_t iterations = 0;
  double damping = 1e-3;
  std::vector<Complex> residual;
  std::vector<Complex> jac(K * m);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  Eigen::VectorXd grad(static_cast<Eigen::Index>(K));

  while (K > 0 && iterations < opts.max_iterations && cur.loss > floor_loss) {
    ++iterations;
    const auto atoms = shifted_atoms(cur.depths, model);
    residual_loss(z, model, atoms, cur.alpha, &residual);
    for (std::size_t k = 0; k < K; ++k) {
      const auto bg = model.background();
      for (std::size_t l = 0; l < m; ++l) {
        jac[k * m + l] = -cur.alpha[k] * kI * model.frequency(l) * (atoms[k * m + l] + bg[l]);
      }
    }
    for (std::size_t j = 0; j < K; ++j) {
      Complex gj{0.0, 0.0};
      for (std::size_t l = 0; l < m; ++l) gj += std::conj(jac[j * m + l]) * residual[l];
      grad[static_cast<Eigen::Index>(j)] = gj.real();
      for (std::size_t k = 0; k < K; ++k) {
        Complex a{0.0, 0.0};
        for (std::size_t l = 0; l < m; ++l) a += std::conj(jac[j * m + l]) * jac[k * m + l];
        A(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = a.real();
      }
    }
    Eigen::MatrixXd damped = A;
    const double scale = A.diagonal().maxCoeff();
    if (!(scale > 0.0)) break;
    for (Eigen::Index k = 0; k < damped.rows(); ++k) {
      damped(k, k) += damping * A(k, k) + 1e-12 * scale;
    }
    Eigen::VectorXd step = damped.ldlt().solve(-grad);
    if (!step.allFinite()) break;
    const double largest = step.cwiseAbs().maxCoeff();
    if (largest > max_move) step *= max_move / largest;

    std::vector<double> trial_depths(K);
    for (std::size_t k = 0; k < K; ++k) {
      trial_depths[k] = wrap_depth(cur.depths[k] + step[static_cast<Eigen::Index>(k)], period);
    }
    std::sort(trial_depths.begin(), trial_depths.end());
    std::optional<Candidate> trial;
    if (separated(trial_depths, period, sep)) {
      trial = evaluate_depths(z, model, trial_depths, opts.coherence_limit);
    }
    if (trial && trial->loss < cur.loss) {
      const double decrease = cur.loss - trial->loss;
      const double before = cur.loss;
      cur = std::move(*trial);
      if (loss_trace) loss_trace->push_back(cur.loss);
      damping = std::max(damping / 3.0, 1e-9);
      if (decrease <= opts.tolerance * before) break;
    } else {
      damping = std::min(damping * 4.0, 1e12);
      if (damping > 1e10 && opts.tolerance > 0.0) break;
    }
  }
  return to_fit(cur, iterations);
}

PixelFit fit_pixel(SketchView z, const SketchModel& model, const FitOptions& opts) {
  require_fit_input(z, model);
  const std::size_t K = opts.max_surfaces;
  if (K == 0) throw Error(Errc::InvalidArgument, "max_surfaces must be at least 1");
  if (2 * K > model.m()) {
    throw Error(Errc::InvalidArgument, "sketch size m=" + std::to_string(model.m()) +
                                           " cannot identify " + std::to_string(K) + " surfaces");
  }
  const double sep = min_separation(opts, model);

  std::vector<std::vector<double>> starts;
  starts.push_back(init_depths(z, model, K, opts));
  auto spectral = spectral_depths(z, model, K, sep);
  if (!spectral.empty() && spectral != starts.front()) starts.push_back(std::move(spectral));

  std::optional<PixelFit> best;
  for (auto& s : starts) {
    if (s.empty()) continue;
    auto fit = refine_pixel(z, model, s, opts);
    if (!best || fit.loss < best->loss) best = std::move(fit);
  }
  if (!best) throw Error(Errc::NoSurfaceFound, "no positive backprojection peak");

  std::size_t iterations = best->iterations;
  for (;;) {
    std::vector<double> kept;
    for (const auto& s : best->params.surfaces) {
      if (s.intensity >= opts.prune_threshold && s.intensity > 0.0) kept.push_back(s.depth);
    }
    if (kept.empty()) throw Error(Errc::NoSurfaceFound, "all surfaces fell below the prune threshold");
    if (kept.size() == best->params.size()) break;
    best = refine_pixel(z, model, std::move(kept), opts);
    iterations += best->iterations;
  }
  best->iterations = iterations;
  return *best;
}

double closed_form_depth_k1(SketchView z, const SketchModel& model) {
  require_fit_input(z, model);
  if (std::abs(z.values[0]) < 1e-12) throw Error(Errc::ZeroMagnitude, "first sketch entry vanishes");
  const Complex v = z.values[0] * std::conj(model.response()[0]);
  return wrap_depth(std::arg(v) / model.frequency(0), model.period());
}

PointCloudEstimate fit_frame(const SketchFrame& frame, const SketchModel& model,
                             const FitOptions& opts) {
  if (!(frame.scheme() == model.scheme())) {
    throw Error(Errc::SchemeMismatch, "frame scheme differs from model scheme");
  }
  PointCloudEstimate est(frame.rows(), frame.cols(), model.T());
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    const auto z = frame.view(p);
    est.counts[p] = z.count;
    if (z.empty()) continue;
    try {
      est.pixels[p] = fit_pixel(z, model, opts).params.surfaces;
    } catch (const Error& e) {
      if (e.code() != Errc::NoSurfaceFound) throw;
    }
  }
  return est;
}

}  // namespace sketchlidar

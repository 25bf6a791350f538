#include "mslab/ideal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mslab {

namespace {

double ascent_step(const DensityModel& model, const IdealConfig& cfg) {
  const double s = model.length_scale();
  return cfg.step_factor * s * s;
}

// Hessian of f at x by central differences of the gradient.
Matrix density_hessian(const DensityModel& model, const Vector& x) {
  const int d = model.dim();
  const double h = 1e-4 * model.length_scale();
  Matrix out(d, d);
  for (int k = 0; k < d; ++k) {
    Vector up = x, down = x;
    up(k) += h;
    down(k) -= h;
    out.col(k) = (model.gradient(up) - model.gradient(down)) / (2.0 * h);
  }
  return 0.5 * (out + out.transpose());
}

}  // namespace

AscentOutcome ideal_ascent(const DensityModel& model, const Vector& start, const IdealConfig& cfg) {
  require_dim(start, model.dim(), "ideal_ascent");
  const double base = ascent_step(model, cfg);
  const double unit = std::sqrt(base);
  AscentOutcome out;
  Vector y = start;
  double f = model.density(y);
  if (!(f > 0.0)) {
    out.below_floor = true;
    out.end = y;
    out.log_density = -std::numeric_limits<double>::infinity();
    return out;
  }
  // Step multiplier grows while moves are accepted and halves on rejection,
  // which speeds up the crawl along nearly flat ridges.
  double boost = 1.0;
  constexpr double kMaxBoost = 1024.0;
  Vector last_move = Vector::Zero(start.size());
  for (int it = 0; it < cfg.max_iterations; ++it) {
    ++out.iterations;
    const Vector drift = base * model.gradient(y) / f;
    if (drift.norm() / unit < cfg.step_tol) {
      out.converged = true;
      break;
    }
    // the last move overshot the crest along its direction
    if (drift.dot(last_move) < 0.0) boost = std::max(1.0, boost / 4.0);
    Vector move = boost * drift;
    // never move further than one unit at a time
    const double len = move.norm() / unit;
    if (len > 1.0) move /= len;
    Vector next = y + move;
    double fnext = model.density(next);
    int halvings = 0;
    for (; !(fnext >= f) && halvings < 40; ++halvings) {
      move *= 0.5;
      next = y + move;
      fnext = model.density(next);
    }
    if (!(fnext >= f)) {
      out.converged = true;  // no uphill move at any resolution
      break;
    }
    boost = halvings > 0 ? std::max(1.0, boost / 2.0) : std::min(kMaxBoost, boost * 2.0);
    last_move = move;
    y = next;
    f = fnext;
  }
  out.end = y;
  out.log_density = std::log(f);
  return out;
}

IdealClustering ideal_clustering(const DensityModel& model, const GridSpec& grid,
                                 const IdealConfig& cfg, int threads) {
  if (grid.dim() != model.dim()) throw std::invalid_argument("grid and model dimensions differ");
  const int d = model.dim();
  const double unit = std::sqrt(ascent_step(model, cfg));

  ModalProblem problem;
  problem.ascend = [&](const Vector& y0) { return ideal_ascent(model, y0, cfg); };
  problem.whitening = Matrix::Identity(d, d) / unit;
  problem.merge_tol = cfg.merge_tol;
  problem.escape_step = 0.1;
  problem.unstable_direction = [&](const Vector& y) -> std::optional<Vector> {
    const double f = model.density(y);
    if (!(f > 0.0)) return std::nullopt;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(density_hessian(model, y) * (unit * unit / f));
    if (eig.eigenvalues()(d - 1) <= 1e-4) return std::nullopt;
    return Vector(unit * eig.eigenvectors().col(d - 1));
  };
  problem.connect_radius = cfg.connect_radius;
  problem.connected = [&](const Vector& a, const Vector& b) {
    const double floor = (1.0 - cfg.ridge_dip) * std::min(model.density(a), model.density(b));
    constexpr int kProbes = 16;
    for (int k = 1; k < kProbes; ++k) {
      const double t = static_cast<double>(k) / kProbes;
      if (model.density(a + t * (b - a)) < floor) return false;
    }
    return true;
  };

  const ModalResult modal = modal_cluster(grid.points(), problem, threads);
  const int n = static_cast<int>(modal.labels.size());

  // Modes are the groups reached by at least one converged ascent; cells whose
  // ascent did not converge take the nearest such mode.
  std::vector<char> settled(modal.modes.rows(), 0);
  for (int i = 0; i < n; ++i) {
    if (modal.outcomes[i].converged) settled[modal.labels[i]] = 1;
  }
  std::vector<int> labels = modal.labels;
  IdealClustering out;
  if (std::find(settled.begin(), settled.end(), 1) != settled.end()) {
    for (int i = 0; i < n; ++i) {
      if (modal.outcomes[i].converged) continue;
      ++out.nonconverged;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index g = 0; g < modal.modes.rows(); ++g) {
        if (!settled[g]) continue;
        const double dist = (modal.modes.row(g).transpose() - modal.outcomes[i].end).squaredNorm();
        if (dist < best) {
          best = dist;
          labels[i] = static_cast<int>(g);
        }
      }
    }
  }
  out.partition = SpacePartition(grid, labels, cell_masses(model, grid, threads));
  // canonical relabeling keeps first-occurrence order, so modes follow suit
  std::vector<int> first_of(out.partition.cluster_count(), -1);
  for (int i = 0; i < n; ++i) {
    if (first_of[out.partition.labels[i]] < 0) first_of[out.partition.labels[i]] = labels[i];
  }
  out.modes.resize(static_cast<Eigen::Index>(first_of.size()), d);
  for (std::size_t k = 0; k < first_of.size(); ++k) {
    out.modes.row(static_cast<Eigen::Index>(k)) = modal.modes.row(first_of[k]);
  }
  out.model_name = model.info().name;
  out.saddle_restarts = modal.saddle_restarts;
  out.matches_declared = out.partition.cluster_count() == model.info().true_clusters;
  return out;
}

}  // namespace mslab

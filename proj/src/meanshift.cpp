#include "mslab/meanshift.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mslab {

DataSet::DataSet(Matrix points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw std::invalid_argument("data set needs at least one point of positive dimension");
  }
  if (!points_.allFinite()) throw std::invalid_argument("data set contains non-finite entries");
}

Vector DataSet::mean() const { return points_.colwise().mean().transpose(); }

Matrix DataSet::covariance() const {
  if (size() < 2) throw std::invalid_argument("covariance needs at least two points");
  const Matrix centered = points_.rowwise() - points_.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(size() - 1);
}

DataSet DataSet::transformed(const Matrix& linear, const Vector& shift) const {
  Matrix out = points_ * linear.transpose();
  out.rowwise() += shift.transpose();
  return DataSet(std::move(out));
}

void MeanShiftConfig::validate() const {
  if (!(step_tol > 0.0)) throw std::invalid_argument("step tolerance must be positive");
  if (!(merge_tol > 0.0)) throw std::invalid_argument("merge tolerance must be positive");
  if (!(step_tol < merge_tol)) {
    throw std::invalid_argument("step tolerance must be smaller than merge tolerance");
  }
  if (max_iterations < 1) throw std::invalid_argument("max iterations must be at least 1");
  if (!(density_floor >= 0.0)) throw std::invalid_argument("density floor must be non-negative");
}

KdeEvaluator::KdeEvaluator(const DataSet& data, const BandwidthMatrix& H)
    : n_(data.size()), d_(data.dim()), H_(H) {
  if (data.dim() != H.dim()) throw std::invalid_argument("data and bandwidth dimensions differ");
  const Matrix white = H.cholesky().triangularView<Eigen::Lower>().solve(data.points().transpose());
  white_ = white.array();
  log_norm_ = -std::log(static_cast<double>(n_)) - 0.5 * H.log_determinant() -
              0.5 * d_ * std::log(2.0 * std::numbers::pi);
}

Eigen::ArrayXd KdeEvaluator::distances(const Vector& z) const {
  Eigen::ArrayXd sq = Eigen::ArrayXd::Zero(n_);
  for (int k = 0; k < d_; ++k) sq += (white_.row(k).transpose() - z(k)).square();
  return sq;
}

double KdeEvaluator::log_density(const Vector& y) const {
  require_dim(y, d_, "kde");
  const Vector z = H_.cholesky().triangularView<Eigen::Lower>().solve(y);
  const Eigen::ArrayXd sq = distances(z);
  const double shift = sq.minCoeff();
  return log_norm_ - 0.5 * shift + std::log((-0.5 * (sq - shift)).exp().sum());
}

double KdeEvaluator::density(const Vector& y) const { return std::exp(log_density(y)); }

Vector KdeEvaluator::gradient(const Vector& y) const {
  require_dim(y, d_, "kde_gradient");
  const Vector z = H_.cholesky().triangularView<Eigen::Lower>().solve(y);
  const Eigen::ArrayXd sq = distances(z);
  const double shift = sq.minCoeff();
  const Eigen::ArrayXd w = (-0.5 * (sq - shift)).exp();
  const double total = w.sum();
  Vector pull(d_);
  for (int k = 0; k < d_; ++k) pull(k) = (white_.row(k).transpose() * w).sum() / total - z(k);
  const double f = std::exp(log_norm_ - 0.5 * shift + std::log(total));
  return f * H_.cholesky().transpose().triangularView<Eigen::Upper>().solve(pull);
}

KdeEvaluator::Step KdeEvaluator::step(const Vector& y) const {
  require_dim(y, d_, "mean_shift_step");
  const Vector z = H_.cholesky().triangularView<Eigen::Lower>().solve(y);
  const Eigen::ArrayXd sq = distances(z);
  const double shift = sq.minCoeff();
  const Eigen::ArrayXd w = (-0.5 * (sq - shift)).exp();
  const double total = w.sum();
  Vector znext(d_);
  for (int k = 0; k < d_; ++k) znext(k) = (white_.row(k).transpose() * w).sum() / total;
  return {H_.cholesky() * znext, log_norm_ - 0.5 * shift + std::log(total)};
}

Matrix KdeEvaluator::normalized_hessian(const Vector& y) const {
  require_dim(y, d_, "normalized_hessian");
  const Vector z = H_.cholesky().triangularView<Eigen::Lower>().solve(y);
  const Eigen::ArrayXd sq = distances(z);
  const Eigen::ArrayXd w = (-0.5 * (sq - sq.minCoeff())).exp();
  const Eigen::ArrayXd p = w / w.sum();
  Matrix hw = -Matrix::Identity(d_, d_);
  for (int a = 0; a < d_; ++a) {
    const Eigen::ArrayXd ua = white_.row(a).transpose() - z(a);
    for (int b = 0; b <= a; ++b) {
      const Eigen::ArrayXd ub = white_.row(b).transpose() - z(b);
      const double v = (p * ua * ub).sum();
      hw(a, b) += v;
      if (a != b) hw(b, a) += v;
    }
  }
  const Matrix linv = H_.cholesky().triangularView<Eigen::Lower>().solve(Matrix::Identity(d_, d_));
  return linv.transpose() * hw * linv;
}

double KdeEvaluator::max_density_at_data() const {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_; ++i) {
    const Eigen::ArrayXd sq = distances(white_.col(i).matrix());
    const double shift = sq.minCoeff();
    best = std::max(best, log_norm_ - 0.5 * shift + std::log((-0.5 * (sq - shift)).exp().sum()));
  }
  return std::exp(best);
}

AscentOutcome KdeEvaluator::ascend(const Vector& start, const MeanShiftConfig& cfg,
                                   double log_floor, std::vector<double>* log_trajectory) const {
  require_dim(start, d_, "converge");
  const double slack = std::log1p(-1e-10);
  AscentOutcome out;
  Vector z = H_.cholesky().triangularView<Eigen::Lower>().solve(start);
  Vector znext(d_);
  double prev = 0.0;

  auto evaluate = [&](const Vector& at, Vector* next) {
    const Eigen::ArrayXd sq = distances(at);
    const double shift = sq.minCoeff();
    const Eigen::ArrayXd w = (-0.5 * (sq - shift)).exp();
    const double total = w.sum();
    if (next) {
      for (int k = 0; k < d_; ++k) (*next)(k) = (white_.row(k).transpose() * w).sum() / total;
    }
    return log_norm_ - 0.5 * shift + std::log(total);
  };
  auto record = [&](double logf, bool first) {
    if (log_trajectory) log_trajectory->push_back(logf);
    if (!first && logf < prev + slack) out.ascent = false;
    prev = logf;
  };

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const double logf = evaluate(z, &znext);
    if (it == 0 && logf < log_floor) out.below_floor = true;
    record(logf, it == 0);
    const double move = (znext - z).norm();
    z = znext;
    ++out.iterations;
    if (move < cfg.step_tol) {
      out.converged = true;
      break;
    }
  }
  out.log_density = evaluate(z, nullptr);
  record(out.log_density, false);
  out.end = H_.cholesky() * z;
  return out;
}

double kde(const Vector& x, const DataSet& data, const BandwidthMatrix& H) {
  require_dim(x, H.dim(), "kde");
  if (data.dim() != H.dim()) throw std::invalid_argument("kde: data and bandwidth dimensions differ");
  double sum = 0.0;
  for (int i = 0; i < data.size(); ++i) sum += rescaled_kernel(x - data.point(i), H);
  return sum / data.size();
}

Vector kde_gradient(const Vector& x, const DataSet& data, const BandwidthMatrix& H) {
  require_dim(x, H.dim(), "kde_gradient");
  if (data.dim() != H.dim()) {
    throw std::invalid_argument("kde_gradient: data and bandwidth dimensions differ");
  }
  Vector sum = Vector::Zero(H.dim());
  for (int i = 0; i < data.size(); ++i) sum += kernel_gradient(x - data.point(i), H);
  return sum / data.size();
}

Vector mean_shift_weights(const Vector& y, const DataSet& data, const BandwidthMatrix& H) {
  require_dim(y, H.dim(), "mean_shift_weights");
  Vector m(data.size());
  for (int i = 0; i < data.size(); ++i) m(i) = mahalanobis(y, data.point(i), H);
  const Vector w = (-0.5 * (m.array() - m.minCoeff())).exp().matrix();
  return w / w.sum();
}

Vector mean_shift_step(const Vector& y, const DataSet& data, const BandwidthMatrix& H,
                       double floor) {
  const KdeEvaluator eval(data, H);
  const auto s = eval.step(y);
  const double f = std::exp(s.log_density);
  if (!(f > floor)) {
    std::string where;
    for (int k = 0; k < y.size(); ++k) where += (k ? ", " : "") + std::to_string(y(k));
    throw NumericalError("mean shift: density at (" + where + ") is below the floor " +
                         std::to_string(floor));
  }
  return s.next;
}

std::vector<double> Convergence::densities() const {
  std::vector<double> out;
  out.reserve(log_densities.size());
  for (double v : log_densities) out.push_back(std::exp(v));
  return out;
}

Convergence converge(const Vector& start, const DataSet& data, const BandwidthMatrix& H,
                     const MeanShiftConfig& cfg) {
  cfg.validate();
  const KdeEvaluator eval(data, H);
  const double log_floor = cfg.density_floor > 0.0
                               ? std::log(cfg.density_floor * eval.max_density_at_data())
                               : -std::numeric_limits<double>::infinity();
  Convergence out;
  const AscentOutcome a = eval.ascend(start, cfg, log_floor, &out.log_densities);
  out.mode = a.end;
  out.iterations = a.iterations;
  out.converged = a.converged;
  out.ascent = a.ascent;
  out.below_floor = a.below_floor;
  return out;
}

ClusterResult cluster(const Matrix& query, const DataSet& data, const BandwidthMatrix& H,
                      const MeanShiftConfig& cfg, int threads) {
  cfg.validate();
  if (query.rows() == 0) throw std::invalid_argument("cluster: empty query set");
  if (query.cols() != H.dim()) throw std::invalid_argument("cluster: query dimension mismatch");
  const KdeEvaluator eval(data, H);
  const double log_floor = cfg.density_floor > 0.0
                               ? std::log(cfg.density_floor * eval.max_density_at_data())
                               : -std::numeric_limits<double>::infinity();
  const int d = H.dim();
  const Matrix linv = H.cholesky().triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));

  ModalProblem problem;
  problem.ascend = [&](const Vector& y0) { return eval.ascend(y0, cfg, log_floor); };
  problem.whitening = linv;
  problem.merge_tol = cfg.merge_tol;
  problem.escape_step = 10.0 * cfg.merge_tol;
  problem.unstable_direction = [&](const Vector& y) -> std::optional<Vector> {
    const Matrix white_hess = H.cholesky().transpose() * eval.normalized_hessian(y) * H.cholesky();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(white_hess);
    if (eig.eigenvalues()(d - 1) <= 1e-6) return std::nullopt;
    return Vector(H.cholesky() * eig.eigenvectors().col(d - 1));
  };

  const ModalResult modal = modal_cluster(query, problem, threads);
  ClusterResult out;
  out.modes = modal.modes;
  out.labels = modal.labels;
  out.saddle_restarts = modal.saddle_restarts;
  const auto n = modal.outcomes.size();
  out.iterations.resize(n);
  out.ascent.resize(n);
  out.converged.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = modal.outcomes[i];
    out.iterations[i] = o.iterations;
    out.ascent[i] = o.ascent;
    out.converged[i] = o.converged;
    if (!o.converged) ++out.nonconverged;
    if (o.below_floor) ++out.below_floor;
  }
  return out;
}

}  // namespace mslab

#include "mslab/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mslab {

namespace {

void check_weights(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0 && w <= 1.0)) throw std::invalid_argument("component weights must lie in (0, 1]");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("component weights sum to " + std::to_string(total) + ", not 1");
  }
}

Matrix checked_cholesky(const Matrix& cov, int d) {
  if (cov.rows() != d || cov.cols() != d) throw std::invalid_argument("covariance has wrong shape");
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw std::invalid_argument("covariance is not symmetric");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success || (Matrix(llt.matrixL()).diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument("covariance is not positive definite");
  }
  return llt.matrixL();
}

Vector standard_normal(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(d);
  for (int k = 0; k < d; ++k) e(k) = normal(rng);
  return e;
}

// 8-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 8> kNodes = {-0.9602898564975363, -0.7966664774136267,
                                          -0.5255324099163290, -0.1834346424956498,
                                          0.1834346424956498,  0.5255324099163290,
                                          0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kWeights = {0.1012285362903763, 0.2223810344533745,
                                            0.3137066458778873, 0.3626837833783620,
                                            0.3626837833783620, 0.3137066458778873,
                                            0.2223810344533745, 0.1012285362903763};

void widen(Vector& lo, Vector& hi, const Vector& point, const Vector& pad) {
  lo = lo.cwiseMin(point - pad);
  hi = hi.cwiseMax(point + pad);
}

}  // namespace

namespace detail {

NormalTerm::NormalTerm(const NormalComponent& c)
    : weight(c.weight), mean(c.mean), lower(checked_cholesky(c.covariance, static_cast<int>(c.mean.size()))) {
  const auto d = static_cast<int>(mean.size());
  inverse = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  inverse = inverse.transpose() * inverse;
  log_norm = std::log(weight) - lower.diagonal().array().log().sum() -
             0.5 * d * std::log(2.0 * std::numbers::pi);
}

double NormalTerm::value(const Vector& x) const {
  const Vector w = lower.triangularView<Eigen::Lower>().solve(x - mean);
  return std::exp(log_norm - 0.5 * w.squaredNorm());
}

}  // namespace detail

MixtureModel::MixtureModel(std::vector<NormalComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
  dim_ = static_cast<int>(components_.front().mean.size());
  if (dim_ < 1) throw std::invalid_argument("mixture component has empty mean");
  std::vector<double> weights;
  for (const auto& c : components_) {
    if (c.mean.size() != dim_) throw std::invalid_argument("mixture components differ in dimension");
    weights.push_back(c.weight);
    terms_.emplace_back(c);
  }
  check_weights(weights);
}

double MixtureModel::density(const Vector& x) const {
  require_dim(x, dim_, "mixture density");
  double f = 0.0;
  for (const auto& t : terms_) f += t.value(x);
  return f;
}

Vector MixtureModel::gradient(const Vector& x) const {
  require_dim(x, dim_, "mixture gradient");
  Vector g = Vector::Zero(dim_);
  for (const auto& t : terms_) g -= t.value(x) * (t.inverse * (x - t.mean));
  return g;
}

std::pair<DataSet, std::vector<int>> MixtureModel::sample_components(int n,
                                                                     std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("sample size must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  Matrix points(n, dim_);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    labels[i] = k;
    points.row(i) = (terms_[k].mean + terms_[k].lower * standard_normal(rng, dim_)).transpose();
  }
  return {DataSet(std::move(points)), std::move(labels)};
}

std::pair<Vector, Vector> MixtureModel::extent(double k_sd) const {
  Vector lo = Vector::Constant(dim_, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const auto& c : components_) {
    widen(lo, hi, c.mean, k_sd * c.covariance.diagonal().cwiseSqrt());
  }
  return {lo, hi};
}

double MixtureModel::length_scale() const {
  double s = std::numeric_limits<double>::infinity();
  for (const auto& c : components_) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c.covariance, Eigen::EigenvaluesOnly);
    s = std::min(s, std::sqrt(eig.eigenvalues()(0)));
  }
  return s;
}

RingSegmentModel::RingSegmentModel(std::vector<RingSegment> segments,
                                   std::vector<NormalComponent> blobs)
    : segments_(std::move(segments)), blobs_(std::move(blobs)) {
  if (segments_.empty() && blobs_.empty()) throw std::invalid_argument("ring model has no components");
  std::vector<double> weights;
  for (const auto& s : segments_) {
    if (s.center.size() != 2) throw std::invalid_argument("ring segment centre must be 2-D");
    if (!(s.sigma > 0.0)) throw std::invalid_argument("ring segment sigma must be positive");
    if (!(s.radius > 3.0 * s.sigma)) {
      throw std::invalid_argument("ring segment radius must exceed three times its sigma");
    }
    if (!(s.theta_to > s.theta_from) || s.theta_to - s.theta_from > 2.0 * std::numbers::pi + 1e-12) {
      throw std::invalid_argument("ring segment angle interval is invalid");
    }
    weights.push_back(s.weight);

    const double span = s.theta_to - s.theta_from;
    // panels no wider than sigma / radius in angle
    const int panels = std::max(1, static_cast<int>(std::ceil(span * s.radius / s.sigma)));
    const double width = span / panels;
    Quadrature rule;
    for (int p = 0; p < panels; ++p) {
      const double mid = s.theta_from + (p + 0.5) * width;
      for (std::size_t q = 0; q < kNodes.size(); ++q) {
        const double t = mid + 0.5 * width * kNodes[q];
        rule.cos_t.push_back(std::cos(t));
        rule.sin_t.push_back(std::sin(t));
        rule.weight.push_back(0.5 * width * kWeights[q] / span);
      }
    }
    rules_.push_back(std::move(rule));
  }
  for (const auto& b : blobs_) {
    if (b.mean.size() != 2) throw std::invalid_argument("ring model blobs must be 2-D");
    weights.push_back(b.weight);
    blob_terms_.emplace_back(b);
  }
  check_weights(weights);
}

void RingSegmentModel::accumulate_segment(std::size_t s, const Vector& x, double& f, Vector* grad) const {
  const auto& seg = segments_[s];
  const auto& rule = rules_[s];
  const double dx = x(0) - seg.center(0);
  const double dy = x(1) - seg.center(1);
  const double inv2 = 1.0 / (2.0 * seg.sigma * seg.sigma);
  const std::size_t nodes = rule.weight.size();

  // Nodes whose squared distance exceeds the nearest one by more than
  // 80 sigma^2 contribute below exp(-40) relative and are skipped.
  thread_local std::vector<double> dist2;
  dist2.resize(nodes);
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < nodes; ++q) {
    const double ex = dx - seg.radius * rule.cos_t[q];
    const double ey = dy - seg.radius * rule.sin_t[q];
    dist2[q] = ex * ex + ey * ey;
    nearest = std::min(nearest, dist2[q]);
  }
  const double cutoff = nearest + 80.0 * seg.sigma * seg.sigma;
  // factor exp(-nearest * inv2) out to keep far-field values representable
  double sum = 0.0, gx = 0.0, gy = 0.0;
  for (std::size_t q = 0; q < nodes; ++q) {
    if (dist2[q] > cutoff) continue;
    const double w = rule.weight[q] * std::exp(-(dist2[q] - nearest) * inv2);
    sum += w;
    if (grad) {
      gx += w * (dx - seg.radius * rule.cos_t[q]);
      gy += w * (dy - seg.radius * rule.sin_t[q]);
    }
  }
  const double scale = seg.weight * std::exp(-nearest * inv2) / (2.0 * std::numbers::pi * seg.sigma * seg.sigma);
  f += scale * sum;
  if (grad) {
    const double g = -scale / (seg.sigma * seg.sigma);
    (*grad)(0) += g * gx;
    (*grad)(1) += g * gy;
  }
}

double RingSegmentModel::segment_density(std::size_t s, const Vector& x) const {
  require_dim(x, 2, "ring segment density");
  double f = 0.0;
  accumulate_segment(s, x, f, nullptr);
  return segments_[s].weight > 0.0 ? f / segments_[s].weight : 0.0;
}

double RingSegmentModel::density(const Vector& x) const {
  require_dim(x, 2, "ring density");
  double f = 0.0;
  for (std::size_t s = 0; s < segments_.size(); ++s) accumulate_segment(s, x, f, nullptr);
  for (const auto& t : blob_terms_) f += t.value(x);
  return f;
}

Vector RingSegmentModel::gradient(const Vector& x) const {
  require_dim(x, 2, "ring gradient");
  double f = 0.0;
  Vector g = Vector::Zero(2);
  for (std::size_t s = 0; s < segments_.size(); ++s) accumulate_segment(s, x, f, &g);
  for (const auto& t : blob_terms_) g -= t.value(x) * (t.inverse * (x - t.mean));
  return g;
}

std::pair<DataSet, std::vector<int>> RingSegmentModel::sample_components(int n,
                                                                         std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("sample size must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (const auto& s : segments_) weights.push_back(s.weight);
  for (const auto& b : blobs_) weights.push_back(b.weight);
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  const int nseg = static_cast<int>(segments_.size());
  Matrix points(n, 2);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    labels[i] = k;
    if (k < nseg) {
      const auto& s = segments_[k];
      std::uniform_real_distribution<double> angle(s.theta_from, s.theta_to);
      const double t = angle(rng);
      const Vector noise = standard_normal(rng, 2);
      points(i, 0) = s.center(0) + s.radius * std::cos(t) + s.sigma * noise(0);
      points(i, 1) = s.center(1) + s.radius * std::sin(t) + s.sigma * noise(1);
    } else {
      const auto& b = blob_terms_[k - nseg];
      points.row(i) = (b.mean + b.lower * standard_normal(rng, 2)).transpose();
    }
  }
  return {DataSet(std::move(points)), std::move(labels)};
}

std::pair<Vector, Vector> RingSegmentModel::extent(double k_sd) const {
  Vector lo = Vector::Constant(2, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  for (const auto& s : segments_) {
    const Vector pad = Vector::Constant(2, k_sd * s.sigma);
    const int steps = 720;
    for (int q = 0; q <= steps; ++q) {
      const double t = s.theta_from + (s.theta_to - s.theta_from) * q / steps;
      Vector p(2);
      p << s.center(0) + s.radius * std::cos(t), s.center(1) + s.radius * std::sin(t);
      widen(lo, hi, p, pad);
    }
  }
  for (const auto& b : blobs_) widen(lo, hi, b.mean, k_sd * b.covariance.diagonal().cwiseSqrt());
  return {lo, hi};
}

double RingSegmentModel::length_scale() const {
  double s = std::numeric_limits<double>::infinity();
  for (const auto& seg : segments_) s = std::min(s, seg.sigma);
  for (const auto& b : blobs_) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(b.covariance, Eigen::EigenvaluesOnly);
    s = std::min(s, std::sqrt(eig.eigenvalues()(0)));
  }
  return s;
}

}  // namespace mslab

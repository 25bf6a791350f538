#pragma once

// Data-based mean shift with an unconstrained bandwidth matrix.

#include "mslab/kernels.hpp"
#include "mslab/modal.hpp"
#include "mslab/types.hpp"

#include <vector>

namespace mslab {

struct MeanShiftConfig {
  double step_tol = 1e-6;       // Mahalanobis units under H
  double merge_tol = 1e-2;      // Mahalanobis units under H
  int max_iterations = 500;
  double density_floor = 1e-12;  // relative to max f_hat over the data points

  void validate() const;
};

// Kernel density estimate and its mean shift update, evaluated in the
// coordinates whitened by the Cholesky factor of H. One instance per (data, H).
class KdeEvaluator {
 public:
  KdeEvaluator(const DataSet& data, const BandwidthMatrix& H);

  int dim() const { return d_; }
  int size() const { return n_; }
  const BandwidthMatrix& bandwidth() const { return H_; }

  double log_density(const Vector& y) const;
  double density(const Vector& y) const;
  Vector gradient(const Vector& y) const;

  struct Step {
    Vector next;
    double log_density;  // at the input point
  };
  // One update of the weighted-mean iteration. Weights are normalised after
  // shifting the exponents by their maximum, so they never all vanish.
  Step step(const Vector& y) const;

  // Hessian of f_hat at y divided by f_hat(y).
  Matrix normalized_hessian(const Vector& y) const;

  // max_i f_hat(X_i)
  double max_density_at_data() const;

  AscentOutcome ascend(const Vector& start, const MeanShiftConfig& cfg, double log_floor,
                       std::vector<double>* log_trajectory = nullptr) const;

 private:
  // Squared whitened distances from z to every data point.
  Eigen::ArrayXd distances(const Vector& z) const;

  int n_;
  int d_;
  BandwidthMatrix H_;
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> white_;  // d x n
  double log_norm_;  // -log n - log|H|/2 - (d/2) log 2 pi
};

double kde(const Vector& x, const DataSet& data, const BandwidthMatrix& H);
Vector kde_gradient(const Vector& x, const DataSet& data, const BandwidthMatrix& H);

// Weights omega_{i,H}(y); non-negative and summing to one.
Vector mean_shift_weights(const Vector& y, const DataSet& data, const BandwidthMatrix& H);

// sum_i omega_{i,H}(y) X_i. Throws NumericalError when f_hat(y) is not above
// `floor` (default: exact underflow only).
Vector mean_shift_step(const Vector& y, const DataSet& data, const BandwidthMatrix& H,
                       double floor = 0.0);

struct Convergence {
  Vector mode;
  int iterations = 0;
  bool converged = false;
  bool ascent = true;
  bool below_floor = false;
  std::vector<double> log_densities;  // log f_hat(y_0), log f_hat(y_1), ...

  std::vector<double> densities() const;
};

Convergence converge(const Vector& start, const DataSet& data, const BandwidthMatrix& H,
                     const MeanShiftConfig& cfg = {});

struct ClusterResult {
  Matrix modes;  // m x d
  std::vector<int> labels;
  std::vector<int> iterations;
  std::vector<bool> ascent;
  std::vector<bool> converged;
  int nonconverged = 0;
  int below_floor = 0;
  int saddle_restarts = 0;

  int cluster_count() const { return static_cast<int>(modes.rows()); }
};

// Clusters the rows of `query` by the mode their mean shift sequence reaches.
// Labels do not depend on `threads`.
ClusterResult cluster(const Matrix& query, const DataSet& data, const BandwidthMatrix& H,
                      const MeanShiftConfig& cfg = {}, int threads = 1);

}  // namespace mslab

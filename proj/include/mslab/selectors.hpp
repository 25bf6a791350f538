#pragma once

// Bandwidth matrix selectors for kernel density gradient estimation:
// normal scale (NS), the shrunken diagonal rule AT, and cross validation (CV),
// plug-in (PI), smoothed cross validation (SCV) and the iterative equation (IT)
// over unconstrained or diagonal matrices.

#include "mslab/kernels.hpp"
#include "mslab/optimizer.hpp"
#include "mslab/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mslab {

enum class SelectorMethod { NS, AT, CV, PI, SCV, IT };
enum class SearchClass { Unconstrained, Diagonal };

struct PilotRule {
  enum class Kind { NormalScale, Fixed };
  Kind kind = Kind::NormalScale;
  Matrix fixed;  // used when kind == Fixed

  static PilotRule parse(const std::string& text);  // "normal-scale" | "fixed:a,b;c,d"
  std::string describe() const;
};

struct SelectorSpec {
  SelectorMethod method = SelectorMethod::NS;
  SearchClass search = SearchClass::Unconstrained;
  PilotRule pilot;
  SimplexSettings optimizer;

  // ns, at, cvu, cvd, piu, pid, scvu, scvd, itu, itd
  static SelectorSpec parse(const std::string& name);
  std::string name() const;
  bool needs_pilot() const;
};

const std::vector<std::string>& selector_names();

struct SelectionResult {
  BandwidthMatrix H;
  double value = 0.0;  // criterion value, or IT residual at H
  int evaluations = 0;
  bool converged = true;
  std::optional<Matrix> pilot;
  std::string note;
};

// c(d, n) S with c = (4 / (d + 4))^{2 / (d + 6)} n^{-2 / (d + 6)}
BandwidthMatrix ns_bandwidth(const DataSet& data);
// diag(h_i^2), h_i = 3/4 (4 / (d + 2))^{1 / (d + 4)} n^{-1 / (d + 4)} s_i
BandwidthMatrix at_bandwidth(const DataSet& data);
// (4 / (d + 2))^{2 / (d + 4)} n^{-2 / (d + 4)} S
BandwidthMatrix normal_scale_pilot(const DataSet& data);

double ns_constant(int d, int n);

// Precomputed pairwise differences of a data set. Sums over all ordered pairs
// (i, j), including i = j, are assembled from the n(n-1)/2 pairs i < j.
class PairwiseDifferences {
 public:
  explicit PairwiseDifferences(const DataSet& data);

  int size() const { return n_; }
  int dim() const { return d_; }
  long pair_count() const { return static_cast<long>(moments_.cols()); }

  // sum_{i<j} of the Laplacian of K_Sigma at X_i - X_j.
  double laplacian_sum_upper(const BandwidthMatrix& sigma) const;
  // sum_{i,j} (all ordered pairs including the diagonal).
  double laplacian_sum_all(const BandwidthMatrix& sigma) const;

  // n^{-2} sum_{i,j} D^{(x)order} K_G(X_i - X_j), length d^order.
  Vector derivative_tensor_mean(const BandwidthMatrix& G, int order) const;

 private:
  int n_;
  int d_;
  Matrix moments_;  // packed upper-triangle products of each difference, p x pairs
  Matrix diffs_;    // d x pairs
};

// n^{-1} |H|^{-1/2} tr(H^{-1} R(DK))
double variance_term(const BandwidthMatrix& H, int n);

double cv_criterion(const BandwidthMatrix& H, const PairwiseDifferences& pairs);
double cv_criterion(const BandwidthMatrix& H, const DataSet& data);

// psi6 = n^{-2} sum_{i,j} D^{(x)6} K_G(X_i - X_j)
double pi_bias_term(const BandwidthMatrix& H, const Vector& psi6);
double pi_criterion(const BandwidthMatrix& H, int n, const Vector& psi6);
double pi_criterion(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G);

// -n^{-2} sum_{i,j} Laplacian{K_{2H+2G} - 2 K_{H+2G} + K_{2G}}(X_i - X_j)
double scv_bias_term(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                     const BandwidthMatrix& G);
double scv_criterion(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                     const BandwidthMatrix& G);
double scv_criterion(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G);

double it_residual(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                   const BandwidthMatrix& G);
double it_residual(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G);

// Criterion (or IT residual) of `spec` at H, using the pilot the spec implies.
double evaluate_criterion(const SelectorSpec& spec, const DataSet& data, const BandwidthMatrix& H);

SelectionResult select_bandwidth(const SelectorSpec& spec, const DataSet& data);

// Maps between bandwidth matrices and the unconstrained search coordinates.
// Unconstrained class: H = L L^T with theta = log L_ii on the diagonal and
// L_ij / L_ii below it, so rescaling H only shifts the log terms. Diagonal
// class: log-variances.
Vector to_search_coordinates(const BandwidthMatrix& H, SearchClass search);
BandwidthMatrix from_search_coordinates(const Vector& theta, int d, SearchClass search);

}  // namespace mslab

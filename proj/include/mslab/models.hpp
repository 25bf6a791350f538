#pragma once

// Generative density models with exact sampling and density/gradient
// evaluation: finite normal mixtures and ring-segment models.

#include "mslab/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace mslab {

struct ModelInfo {
  std::string name;
  int true_clusters = 0;
  bool reconstruction = false;
};

class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual int dim() const = 0;
  virtual double density(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;

  // n i.i.d. draws plus the index of the component each draw came from.
  virtual std::pair<DataSet, std::vector<int>> sample_components(int n,
                                                                 std::uint64_t seed) const = 0;
  DataSet sample(int n, std::uint64_t seed) const { return sample_components(n, seed).first; }

  // Axis-aligned box holding every component's centre region widened by
  // `k_sd` standard deviations.
  virtual std::pair<Vector, Vector> extent(double k_sd) const = 0;

  // Smallest standard deviation among the components; sets ascent and
  // finite-difference step sizes.
  virtual double length_scale() const = 0;

  const ModelInfo& info() const { return info_; }
  void set_info(ModelInfo info) { info_ = std::move(info); }

 private:
  ModelInfo info_;
};

struct NormalComponent {
  double weight;
  Vector mean;
  Matrix covariance;
};

namespace detail {
// Weighted normal density with its factorization cached.
struct NormalTerm {
  explicit NormalTerm(const NormalComponent& c);
  double weight;
  Vector mean;
  Matrix lower;
  Matrix inverse;
  double log_norm;
  double value(const Vector& x) const;  // weight * N(x; mean, cov)
};
}  // namespace detail

class MixtureModel : public DensityModel {
 public:
  explicit MixtureModel(std::vector<NormalComponent> components);

  int dim() const override { return dim_; }
  double density(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  std::pair<DataSet, std::vector<int>> sample_components(int n, std::uint64_t seed) const override;
  std::pair<Vector, Vector> extent(double k_sd) const override;
  double length_scale() const override;

  const std::vector<NormalComponent>& components() const { return components_; }

 private:
  std::vector<NormalComponent> components_;
  std::vector<detail::NormalTerm> terms_;
  int dim_;
};

// Points spread uniformly in angle over an arc of a circle, blurred by
// isotropic normal noise with standard deviation sigma.
struct RingSegment {
  double weight;
  Vector center;
  double radius;
  double theta_from;  // radians
  double theta_to;    // radians, > theta_from
  double sigma;
};

class RingSegmentModel : public DensityModel {
 public:
  RingSegmentModel(std::vector<RingSegment> segments, std::vector<NormalComponent> blobs = {});

  int dim() const override { return 2; }
  double density(const Vector& x) const override;
  // Exact gradient of the quadrature density.
  Vector gradient(const Vector& x) const override;
  std::pair<DataSet, std::vector<int>> sample_components(int n, std::uint64_t seed) const override;
  std::pair<Vector, Vector> extent(double k_sd) const override;
  double length_scale() const override;

  const std::vector<RingSegment>& segments() const { return segments_; }
  const std::vector<NormalComponent>& blobs() const { return blobs_; }

  double segment_density(std::size_t s, const Vector& x) const;

 private:
  struct Quadrature {
    std::vector<double> cos_t, sin_t, weight;  // weights include the 1/(theta range) factor
  };
  // Adds weight * segment density (and its gradient) at x.
  void accumulate_segment(std::size_t s, const Vector& x, double& f, Vector* grad) const;

  std::vector<RingSegment> segments_;
  std::vector<Quadrature> rules_;
  std::vector<NormalComponent> blobs_;
  std::vector<detail::NormalTerm> blob_terms_;
};

}  // namespace mslab

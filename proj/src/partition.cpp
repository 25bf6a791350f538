#include "mslab/partition.hpp"

#include "mslab/assignment.hpp"
#include "mslab/parallel.hpp"

#include <cmath>
#include <map>

namespace mslab {

GridSpec::GridSpec(Vector lo_in, Vector hi_in, int res)
    : lo(std::move(lo_in)), hi(std::move(hi_in)), resolution(res) {
  if (lo.size() == 0 || lo.size() != hi.size()) throw std::invalid_argument("grid bounds have mismatched dimensions");
  if (resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  for (Eigen::Index k = 0; k < lo.size(); ++k) {
    if (!(lo(k) < hi(k))) throw std::invalid_argument("grid needs lo < hi on every axis");
  }
}

long GridSpec::cell_count() const {
  long n = 1;
  for (int k = 0; k < dim(); ++k) n *= resolution;
  return n;
}

Vector GridSpec::point(long index) const {
  Vector p(dim());
  for (int k = 0; k < dim(); ++k) {
    const long i = index % resolution;
    index /= resolution;
    // endpoints are hit exactly
    p(k) = i == resolution - 1 ? hi(k) : lo(k) + static_cast<double>(i) * spacing(k);
  }
  return p;
}

double GridSpec::cell_volume(long index) const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) {
    const long i = index % resolution;
    index /= resolution;
    v *= (i == 0 || i == resolution - 1) ? 0.5 * spacing(k) : spacing(k);
  }
  return v;
}

Matrix GridSpec::points() const {
  const long n = cell_count();
  Matrix out(n, dim());
  for (long i = 0; i < n; ++i) out.row(i) = point(i).transpose();
  return out;
}

GridSpec GridSpec::refined(int factor) const {
  if (factor < 1) throw std::invalid_argument("refinement factor must be positive");
  return GridSpec(lo, hi, (resolution - 1) * factor + 1);
}

bool GridSpec::operator==(const GridSpec& other) const {
  return resolution == other.resolution && lo.size() == other.lo.size() && lo == other.lo &&
         hi == other.hi;
}

SpacePartition::SpacePartition(GridSpec g, std::vector<int> raw_labels, std::vector<double> m)
    : grid(std::move(g)), masses(std::move(m)) {
  const auto n = static_cast<std::size_t>(grid.cell_count());
  if (raw_labels.size() != n || masses.size() != n) {
    throw std::invalid_argument("partition needs one label and one mass per grid cell");
  }
  std::map<int, int> ids;
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(masses[i] >= 0.0) || !std::isfinite(masses[i])) {
      throw std::invalid_argument("cell masses must be finite and non-negative");
    }
    auto [it, inserted] = ids.emplace(raw_labels[i], static_cast<int>(ids.size()));
    labels[i] = it->second;
  }
}

int SpacePartition::cluster_count() const {
  int m = 0;
  for (int l : labels) m = std::max(m, l + 1);
  return m;
}

double SpacePartition::total_mass() const {
  double total = 0.0;
  for (double v : masses) total += v;
  return total;
}

std::vector<double> SpacePartition::cluster_masses() const {
  std::vector<double> out(cluster_count(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]] += masses[i];
  return out;
}

namespace {

template <class Density>
std::vector<double> masses_of(const Density& density, const GridSpec& grid, int threads) {
  const long n = grid.cell_count();
  std::vector<double> out(n);
  constexpr long kBlock = 1024;
  const int blocks = static_cast<int>((n + kBlock - 1) / kBlock);
  parallel_for(blocks, threads, [&](int b) {
    const long end = std::min(n, (b + 1) * kBlock);
    for (long i = b * kBlock; i < end; ++i) out[i] = density(grid.point(i)) * grid.cell_volume(i);
  });
  return out;
}

double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

std::vector<double> cell_masses(const DensityModel& model, const GridSpec& grid, int threads) {
  if (grid.dim() != model.dim()) throw std::invalid_argument("grid and model dimensions differ");
  return masses_of([&](const Vector& x) { return model.density(x); }, grid, threads);
}

std::vector<double> cell_masses(const KdeEvaluator& kde, const GridSpec& grid, int threads) {
  if (grid.dim() != kde.dim()) throw std::invalid_argument("grid and estimate dimensions differ");
  return masses_of([&](const Vector& x) { return kde.density(x); }, grid, threads);
}

GridSpec build_grid(const DensityModel& model, int resolution) {
  auto [lo, hi] = model.extent(5.0);
  constexpr int kCheckResolution = 200;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    const GridSpec check(lo, hi, kCheckResolution);
    if (total(cell_masses(model, check)) >= 0.999) return GridSpec(lo, hi, resolution);
    const Vector pad = 0.25 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  throw NumericalError("grid rectangle for model '" + model.info().name +
                       "' does not reach 0.999 probability mass");
}

SpacePartition label_grid(const GridSpec& grid, const DataSet& data, const BandwidthMatrix& H,
                          const MeanShiftConfig& cfg, std::vector<double> masses, int threads,
                          LabelingInfo* info) {
  if (grid.dim() != data.dim()) throw std::invalid_argument("grid and data dimensions differ");
  const ClusterResult clusters = cluster(grid.points(), data, H, cfg, threads);
  if (masses.empty()) masses = cell_masses(KdeEvaluator(data, H), grid, threads);
  if (info) {
    info->nonconverged = clusters.nonconverged;
    info->below_floor = clusters.below_floor;
    info->saddle_restarts = clusters.saddle_restarts;
    info->ascent_violations = 0;
    for (bool ok : clusters.ascent) info->ascent_violations += ok ? 0 : 1;
    info->modes = clusters.modes;
  }
  return SpacePartition(grid, clusters.labels, std::move(masses));
}

DistanceReport distance_in_measure(const SpacePartition& a, const SpacePartition& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("partitions are defined on different grids");
  const int r = a.cluster_count();
  const int s = b.cluster_count();
  const int size = std::max(r, s);

  DistanceReport out;
  out.overlap = Matrix::Zero(r, s);
  for (std::size_t i = 0; i < a.labels.size(); ++i) out.overlap(a.labels[i], b.labels[i]) += a.masses[i];
  out.total_mass = a.total_mass();

  Vector mass_a = Vector::Zero(size), mass_b = Vector::Zero(size);
  mass_a.head(r) = out.overlap.rowwise().sum();
  mass_b.head(s) = out.overlap.colwise().sum().transpose();
  Matrix padded = Matrix::Zero(size, size);
  padded.topLeftCorner(r, s) = out.overlap;
  out.symmetric_difference.resize(size, size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      out.symmetric_difference(i, j) = std::max(0.0, mass_a(i) + mass_b(j) - 2.0 * padded(i, j));
    }
  }
  const Assignment best = solve_assignment(out.symmetric_difference);
  out.matching = best.column_of_row;
  out.distance = 0.5 * best.cost;
  return out;
}

}  // namespace mslab

#include "mslab/modal.hpp"

#include "mslab/parallel.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

namespace mslab {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<int> parent_;
};

std::vector<int> canonical(DisjointSets& sets, int n) {
  std::vector<int> out(n);
  std::map<int, int> ids;
  for (int i = 0; i < n; ++i) {
    const int root = sets.find(i);
    auto [it, inserted] = ids.emplace(root, static_cast<int>(ids.size()));
    out[i] = it->second;
  }
  return out;
}

// Rows of `points` mapped through the whitening, sorted by first coordinate.
struct SweepOrder {
  Matrix white;
  std::vector<int> order;

  SweepOrder(const Matrix& points, const Matrix& whitening) {
    white = points * whitening.transpose();
    order.resize(points.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return white(a, 0) < white(b, 0); });
  }

  // Calls fn(i, j, dist2) for every pair closer than radius.
  template <class Fn>
  void for_close_pairs(double radius, Fn&& fn) const {
    const int n = static_cast<int>(order.size());
    const double r2 = radius * radius;
    for (int a = 0; a < n; ++a) {
      const int i = order[a];
      for (int b = a + 1; b < n; ++b) {
        const int j = order[b];
        if (white(j, 0) - white(i, 0) >= radius) break;
        const double dist2 = (white.row(i) - white.row(j)).squaredNorm();
        if (dist2 < r2) fn(i, j, dist2);
      }
    }
  }
};

std::vector<int> group_endpoints(const Matrix& ends, const ModalProblem& problem) {
  const int n = static_cast<int>(ends.rows());
  DisjointSets sets(n);
  const SweepOrder sweep(ends, problem.whitening);
  sweep.for_close_pairs(problem.merge_tol, [&](int i, int j, double) { sets.unite(i, j); });

  if (problem.connected && problem.connect_radius > 0.0) {
    std::vector<int> base = canonical(sets, n);
    // closest endpoint pair per pair of single-linkage groups
    std::map<std::pair<int, int>, std::tuple<double, int, int>> closest;
    sweep.for_close_pairs(problem.connect_radius, [&](int i, int j, double dist2) {
      if (base[i] == base[j]) return;
      auto key = std::minmax(base[i], base[j]);
      auto it = closest.find(key);
      if (it == closest.end() || dist2 < std::get<0>(it->second)) {
        closest[key] = {dist2, std::min(i, j), std::max(i, j)};
      }
    });
    std::vector<std::tuple<double, int, int>> candidates;
    candidates.reserve(closest.size());
    for (const auto& [key, value] : closest) candidates.push_back(value);
    std::sort(candidates.begin(), candidates.end());
    for (const auto& [dist2, i, j] : candidates) {
      if (sets.find(i) == sets.find(j)) continue;
      if (problem.connected(ends.row(i).transpose(), ends.row(j).transpose())) sets.unite(i, j);
    }
  }
  return canonical(sets, n);
}

Matrix endpoints(const std::vector<AscentOutcome>& outcomes, int d) {
  Matrix ends(static_cast<Eigen::Index>(outcomes.size()), d);
  for (std::size_t i = 0; i < outcomes.size(); ++i) ends.row(i) = outcomes[i].end.transpose();
  return ends;
}

// Index of the highest-density member per group (ties go to the first).
std::vector<int> representatives(const std::vector<AscentOutcome>& outcomes,
                                 const std::vector<int>& groups) {
  const int m = groups.empty() ? 0 : *std::max_element(groups.begin(), groups.end()) + 1;
  std::vector<int> rep(m, -1);
  for (int i = 0; i < static_cast<int>(groups.size()); ++i) {
    int& r = rep[groups[i]];
    if (r < 0 || outcomes[i].log_density > outcomes[r].log_density) r = i;
  }
  return rep;
}

}  // namespace

std::vector<int> single_linkage(const Matrix& points, const Matrix& whitening, double tol) {
  const int n = static_cast<int>(points.rows());
  DisjointSets sets(n);
  if (n == 0) return {};
  SweepOrder(points, whitening).for_close_pairs(tol, [&](int i, int j, double) { sets.unite(i, j); });
  return canonical(sets, n);
}

ModalResult modal_cluster(const Matrix& starts, const ModalProblem& problem, int threads) {
  if (starts.rows() == 0) throw std::invalid_argument("modal_cluster: no start points");
  const int n = static_cast<int>(starts.rows());
  const int d = static_cast<int>(starts.cols());

  ModalResult result;
  result.outcomes.resize(n);
  parallel_for(n, threads, [&](int i) {
    result.outcomes[i] = problem.ascend(starts.row(i).transpose());
  });

  std::vector<int> groups = group_endpoints(endpoints(result.outcomes, d), problem);

  if (problem.unstable_direction) {
    const auto rep = representatives(result.outcomes, groups);
    std::vector<std::optional<Vector>> escape(rep.size());
    for (std::size_t g = 0; g < rep.size(); ++g) {
      escape[g] = problem.unstable_direction(result.outcomes[rep[g]].end);
    }
    std::vector<int> restart;
    for (int i = 0; i < n; ++i) {
      if (escape[groups[i]]) restart.push_back(i);
    }
    if (!restart.empty()) {
      std::vector<AscentOutcome> redo(restart.size());
      parallel_for(static_cast<int>(restart.size()), threads, [&](int k) {
        const int i = restart[k];
        const Vector& dir = *escape[groups[i]];
        const Vector offset = starts.row(i).transpose() - result.outcomes[i].end;
        const double side = (problem.whitening * offset).dot(problem.whitening * dir);
        const double sign = side < 0.0 ? -1.0 : 1.0;
        AscentOutcome again =
            problem.ascend(result.outcomes[i].end + sign * problem.escape_step * dir);
        again.iterations += result.outcomes[i].iterations;
        again.ascent = again.ascent && result.outcomes[i].ascent;
        again.below_floor = result.outcomes[i].below_floor;
        redo[k] = std::move(again);
      });
      for (std::size_t k = 0; k < restart.size(); ++k) result.outcomes[restart[k]] = redo[k];
      result.saddle_restarts = static_cast<int>(restart.size());
      groups = group_endpoints(endpoints(result.outcomes, d), problem);
    }
  }

  const auto rep = representatives(result.outcomes, groups);
  result.modes.resize(static_cast<Eigen::Index>(rep.size()), d);
  for (std::size_t g = 0; g < rep.size(); ++g) {
    result.modes.row(static_cast<Eigen::Index>(g)) = result.outcomes[rep[g]].end.transpose();
  }
  result.labels = std::move(groups);
  return result;
}

}  // namespace mslab

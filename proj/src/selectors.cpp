#include "mslab/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace mslab {

namespace {

constexpr long kPairBlock = 4096;

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

int packed_size(int d) { return d * (d + 1) / 2; }

// Coefficients c with x^T A x = c^T packed(x), packed(x) = (x_a x_b)_{a <= b}.
Vector quadratic_coefficients(const Matrix& A) {
  const int d = static_cast<int>(A.rows());
  Vector c(packed_size(d));
  int k = 0;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) c(k++) = a == b ? A(a, a) : A(a, b) + A(b, a);
  }
  return c;
}

double log_gauss_norm(const BandwidthMatrix& sigma) {
  return -0.5 * (sigma.log_determinant() + sigma.dim() * std::log(2.0 * std::numbers::pi));
}

BandwidthMatrix sum_of(double a, const BandwidthMatrix& A, double b, const BandwidthMatrix& B) {
  return BandwidthMatrix(a * A.matrix() + b * B.matrix());
}

}  // namespace

PilotRule PilotRule::parse(const std::string& text) {
  PilotRule rule;
  if (text == "normal-scale" || text.empty()) return rule;
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) != 0) {
    throw std::invalid_argument("unknown pilot rule '" + text + "' (normal-scale | fixed:<matrix>)");
  }
  std::vector<std::vector<double>> rows;
  std::stringstream rows_in(text.substr(prefix.size()));
  std::string row;
  while (std::getline(rows_in, row, ';')) {
    std::vector<double> values;
    std::stringstream cols_in(row);
    std::string cell;
    while (std::getline(cols_in, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (...) {
        throw std::invalid_argument("pilot matrix entry '" + cell + "' is not a number");
      }
    }
    rows.push_back(std::move(values));
  }
  const auto d = rows.size();
  if (d == 0) throw std::invalid_argument("empty pilot matrix");
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    if (rows[i].size() != d) throw std::invalid_argument("pilot matrix must be square");
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rows[i][j];
  }
  BandwidthMatrix check(m);  // SPD validation
  rule.kind = Kind::Fixed;
  rule.fixed = check.matrix();
  return rule;
}

std::string PilotRule::describe() const {
  if (kind == Kind::NormalScale) return "normal-scale";
  std::ostringstream out;
  out.precision(17);
  out << "fixed:";
  for (Eigen::Index i = 0; i < fixed.rows(); ++i) {
    if (i) out << ';';
    for (Eigen::Index j = 0; j < fixed.cols(); ++j) out << (j ? "," : "") << fixed(i, j);
  }
  return out.str();
}

const std::vector<std::string>& selector_names() {
  static const std::vector<std::string> names = {"ns",  "at",   "cvu",  "cvd", "piu",
                                                 "pid", "scvu", "scvd", "itu", "itd"};
  return names;
}

SelectorSpec SelectorSpec::parse(const std::string& raw) {
  std::string name = raw;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  SelectorSpec spec;
  if (name == "ns") {
    spec.method = SelectorMethod::NS;
  } else if (name == "at") {
    spec.method = SelectorMethod::AT;
    spec.search = SearchClass::Diagonal;
  } else {
    const char last = name.empty() ? '\0' : name.back();
    const std::string stem = name.substr(0, name.size() ? name.size() - 1 : 0);
    if (last == 'u') {
      spec.search = SearchClass::Unconstrained;
    } else if (last == 'd') {
      spec.search = SearchClass::Diagonal;
    } else {
      throw std::invalid_argument("unknown selector '" + raw + "'");
    }
    if (stem == "cv") {
      spec.method = SelectorMethod::CV;
    } else if (stem == "pi") {
      spec.method = SelectorMethod::PI;
    } else if (stem == "scv") {
      spec.method = SelectorMethod::SCV;
    } else if (stem == "it") {
      spec.method = SelectorMethod::IT;
    } else {
      throw std::invalid_argument("unknown selector '" + raw + "'");
    }
  }
  return spec;
}

std::string SelectorSpec::name() const {
  const char* suffix = search == SearchClass::Unconstrained ? "u" : "d";
  switch (method) {
    case SelectorMethod::NS: return "ns";
    case SelectorMethod::AT: return "at";
    case SelectorMethod::CV: return std::string("cv") + suffix;
    case SelectorMethod::PI: return std::string("pi") + suffix;
    case SelectorMethod::SCV: return std::string("scv") + suffix;
    case SelectorMethod::IT: return std::string("it") + suffix;
  }
  return "?";
}

bool SelectorSpec::needs_pilot() const {
  return method == SelectorMethod::PI || method == SelectorMethod::SCV || method == SelectorMethod::IT;
}

double ns_constant(int d, int n) {
  return std::pow(4.0 / (d + 4.0), 2.0 / (d + 6.0)) * std::pow(static_cast<double>(n), -2.0 / (d + 6.0));
}

BandwidthMatrix ns_bandwidth(const DataSet& data) {
  if (data.size() < data.dim() + 1) {
    throw std::invalid_argument("normal scale bandwidth needs at least d + 1 points");
  }
  const Matrix S = data.covariance();
  try {
    return BandwidthMatrix(ns_constant(data.dim(), data.size()) * S);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("sample covariance is singular");
  }
}

BandwidthMatrix at_bandwidth(const DataSet& data) {
  if (data.size() < 2) throw std::invalid_argument("AT bandwidth needs at least two points");
  const int d = data.dim();
  const Vector sd = data.covariance().diagonal().cwiseSqrt();
  if ((sd.array() <= 0.0).any()) throw std::invalid_argument("zero variance in some coordinate");
  const double factor = 0.75 * std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) *
                        std::pow(static_cast<double>(data.size()), -1.0 / (d + 4.0));
  return BandwidthMatrix::diagonal((factor * sd).array().square().matrix());
}

BandwidthMatrix normal_scale_pilot(const DataSet& data) {
  if (data.size() < data.dim() + 1) throw std::invalid_argument("pilot bandwidth needs at least d + 1 points");
  const int d = data.dim();
  const double c = std::pow(4.0 / (d + 2.0), 2.0 / (d + 4.0)) *
                   std::pow(static_cast<double>(data.size()), -2.0 / (d + 4.0));
  try {
    return BandwidthMatrix(c * data.covariance());
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("sample covariance is singular");
  }
}

PairwiseDifferences::PairwiseDifferences(const DataSet& data) : n_(data.size()), d_(data.dim()) {
  if (n_ < 2) throw std::invalid_argument("pairwise criteria need at least two points");
  const long pairs = static_cast<long>(n_) * (n_ - 1) / 2;
  diffs_.resize(d_, pairs);
  moments_.resize(packed_size(d_), pairs);
  const Matrix& X = data.points();
  long p = 0;
  for (int i = 0; i < n_; ++i) {
    for (int j = i + 1; j < n_; ++j, ++p) {
      diffs_.col(p) = (X.row(i) - X.row(j)).transpose();
      int k = 0;
      for (int a = 0; a < d_; ++a) {
        for (int b = a; b < d_; ++b) moments_(k++, p) = diffs_(a, p) * diffs_(b, p);
      }
    }
  }
}

double PairwiseDifferences::laplacian_sum_upper(const BandwidthMatrix& sigma) const {
  if (sigma.dim() != d_) throw std::invalid_argument("laplacian sum: dimension mismatch");
  const Matrix& inv = sigma.inverse();
  const Eigen::RowVectorXd c1 = quadratic_coefficients(inv).transpose();
  const Eigen::RowVectorXd c2 = quadratic_coefficients(inv * inv).transpose();
  const double trace = inv.trace();
  const double log_norm = log_gauss_norm(sigma);
  const long total = pair_count();
  CompensatedSum acc;
  for (long start = 0; start < total; start += kPairBlock) {
    const long len = std::min(kPairBlock, total - start);
    const auto block = moments_.middleCols(start, len);
    const Eigen::ArrayXd q1 = (c1 * block).transpose().array();
    const Eigen::ArrayXd q2 = (c2 * block).transpose().array();
    acc.add(((log_norm - 0.5 * q1).exp() * (q2 - trace)).sum());
  }
  return acc.value();
}

double PairwiseDifferences::laplacian_sum_all(const BandwidthMatrix& sigma) const {
  const double at_zero = -std::exp(log_gauss_norm(sigma)) * sigma.inverse().trace();
  return 2.0 * laplacian_sum_upper(sigma) + n_ * at_zero;
}

Vector PairwiseDifferences::derivative_tensor_mean(const BandwidthMatrix& G, int order) const {
  if (G.dim() != d_) throw std::invalid_argument("derivative tensor sum: dimension mismatch");
  const HermiteTable table(d_, order);
  long size = 1;
  for (int m = 0; m < order; ++m) size *= d_;
  Vector out = Vector::Zero(size);
  if (order % 2 == 1) return out;  // odd derivatives cancel over (i, j) and (j, i)

  const Matrix& P = G.inverse();
  const double log_norm = log_gauss_norm(G);
  std::vector<std::vector<double>> levels;
  std::vector<CompensatedSum> acc(size);
  std::vector<double> block(size);
  const long total = pair_count();
  for (long start = 0; start < total; start += kPairBlock) {
    std::fill(block.begin(), block.end(), 0.0);
    const long end = std::min(total, start + kPairBlock);
    for (long p = start; p < end; ++p) {
      const Vector x = diffs_.col(p);
      const Vector z = P * x;
      const double base = std::exp(log_norm - 0.5 * x.dot(z));
      table.evaluate(z, P, order, levels);
      const auto& top = levels[order];
      for (long k = 0; k < size; ++k) block[k] += base * top[k];
    }
    for (long k = 0; k < size; ++k) acc[k].add(2.0 * block[k]);
  }
  table.evaluate(Vector::Zero(d_), P, order, levels);
  const double base0 = std::exp(log_norm);
  const double n2 = static_cast<double>(n_) * n_;
  for (long k = 0; k < size; ++k) {
    acc[k].add(n_ * base0 * levels[order][k]);
    out(k) = acc[k].value() / n2;
  }
  return out;
}

double variance_term(const BandwidthMatrix& H, int n) {
  return std::exp(-0.5 * H.log_determinant()) * grad_kernel_constant_scalar(H.dim()) *
         H.inverse().trace() / n;
}

double cv_criterion(const BandwidthMatrix& H, const PairwiseDifferences& pairs) {
  const double n = pairs.size();
  const double all_2h = pairs.laplacian_sum_all(H.scaled(2.0));
  const double off_h = 2.0 * pairs.laplacian_sum_upper(H);
  return -all_2h / (n * n) + 2.0 * off_h / (n * (n - 1.0));
}

double cv_criterion(const BandwidthMatrix& H, const DataSet& data) {
  return cv_criterion(H, PairwiseDifferences(data));
}

double pi_bias_term(const BandwidthMatrix& H, const Vector& psi6) {
  const int d = H.dim();
  const int d2 = d * d;
  if (psi6.size() != static_cast<long>(d2) * d2 * d2) {
    throw std::invalid_argument("pi criterion: sixth-order vector has the wrong length");
  }
  // ((vec I) (x) (vec H) (x) (vec H))^T psi6
  const Eigen::Map<const Vector> vec_h(H.matrix().data(), d2);
  const Matrix identity = Matrix::Identity(d, d);
  const Eigen::Map<const Vector> vec_i(identity.data(), d2);
  CompensatedSum acc;
  for (int a = 0; a < d2; ++a) {
    if (vec_i(a) == 0.0) continue;
    for (int b = 0; b < d2; ++b) {
      double row = 0.0;
      const long offset = (static_cast<long>(a) * d2 + b) * d2;
      for (int c = 0; c < d2; ++c) row += vec_h(c) * psi6(offset + c);
      acc.add(vec_i(a) * vec_h(b) * row);
    }
  }
  return -0.25 * acc.value();
}

double pi_criterion(const BandwidthMatrix& H, int n, const Vector& psi6) {
  return variance_term(H, n) + pi_bias_term(H, psi6);
}

double pi_criterion(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G) {
  const Vector psi6 = PairwiseDifferences(data).derivative_tensor_mean(G, 6);
  return pi_criterion(H, data.size(), psi6);
}

double scv_bias_term(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                     const BandwidthMatrix& G) {
  const double n = pairs.size();
  const double s1 = pairs.laplacian_sum_all(sum_of(2.0, H, 2.0, G));
  const double s2 = pairs.laplacian_sum_all(sum_of(1.0, H, 2.0, G));
  const double s3 = pairs.laplacian_sum_all(G.scaled(2.0));
  return -(s1 - 2.0 * s2 + s3) / (n * n);
}

double scv_criterion(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                     const BandwidthMatrix& G) {
  return variance_term(H, pairs.size()) + scv_bias_term(H, pairs, G);
}

double scv_criterion(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G) {
  return scv_criterion(H, PairwiseDifferences(data), G);
}

double it_residual(const BandwidthMatrix& H, const PairwiseDifferences& pairs,
                   const BandwidthMatrix& G) {
  return (H.dim() + 2) * variance_term(H, pairs.size()) - 4.0 * scv_bias_term(H, pairs, G);
}

double it_residual(const BandwidthMatrix& H, const DataSet& data, const BandwidthMatrix& G) {
  return it_residual(H, PairwiseDifferences(data), G);
}

Vector to_search_coordinates(const BandwidthMatrix& H, SearchClass search) {
  const int d = H.dim();
  if (search == SearchClass::Diagonal) return H.matrix().diagonal().array().log().matrix();
  const Matrix& L = H.cholesky();
  Vector theta(packed_size(d));
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) theta(k++) = i == j ? std::log(L(i, i)) : L(i, j) / L(i, i);
  }
  return theta;
}

BandwidthMatrix from_search_coordinates(const Vector& theta, int d, SearchClass search) {
  if (search == SearchClass::Diagonal) {
    if (theta.size() != d) throw std::invalid_argument("diagonal search vector has the wrong length");
    return BandwidthMatrix::diagonal(theta.array().exp().matrix());
  }
  if (theta.size() != packed_size(d)) throw std::invalid_argument("search vector has the wrong length");
  Matrix L = Matrix::Zero(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    const int row = k;
    const double diag = std::exp(theta(row + i));
    for (int j = 0; j <= i; ++j, ++k) L(i, j) = i == j ? diag : diag * theta(k);
  }
  return BandwidthMatrix(L * L.transpose());
}

namespace {

BandwidthMatrix pilot_for(const SelectorSpec& spec, const DataSet& data) {
  if (spec.pilot.kind == PilotRule::Kind::Fixed) {
    if (spec.pilot.fixed.rows() != data.dim()) throw std::invalid_argument("pilot matrix dimension mismatch");
    return BandwidthMatrix(spec.pilot.fixed);
  }
  return normal_scale_pilot(data);
}

BandwidthMatrix restrict_to(const BandwidthMatrix& H, SearchClass search) {
  if (search == SearchClass::Unconstrained) return H;
  return BandwidthMatrix::diagonal(H.matrix().diagonal());
}

// Criterion closure over precomputed data-dependent pieces.
struct Objective {
  SelectorSpec spec;
  int n;
  std::optional<PairwiseDifferences> pairs;
  std::optional<BandwidthMatrix> G;
  Vector psi6;
  double scv_constant = 0.0;  // laplacian_sum_all(2G), independent of H

  Objective(const SelectorSpec& s, const DataSet& data) : spec(s), n(data.size()) {
    if (spec.needs_pilot()) G = pilot_for(spec, data);
    if (spec.method == SelectorMethod::PI) {
      psi6 = PairwiseDifferences(data).derivative_tensor_mean(*G, 6);
    } else {
      pairs.emplace(data);
      if (G) scv_constant = pairs->laplacian_sum_all(G->scaled(2.0));
    }
  }

  double bias(const BandwidthMatrix& H) const {
    const double nn = static_cast<double>(n) * n;
    const double s1 = pairs->laplacian_sum_all(sum_of(2.0, H, 2.0, *G));
    const double s2 = pairs->laplacian_sum_all(sum_of(1.0, H, 2.0, *G));
    return -(s1 - 2.0 * s2 + scv_constant) / nn;
  }

  double operator()(const BandwidthMatrix& H) const {
    switch (spec.method) {
      case SelectorMethod::CV: return cv_criterion(H, *pairs);
      case SelectorMethod::PI: return pi_criterion(H, n, psi6);
      case SelectorMethod::SCV: return variance_term(H, n) + bias(H);
      case SelectorMethod::IT: return (H.dim() + 2) * variance_term(H, n) - 4.0 * bias(H);
      default: throw std::logic_error("closed-form selector has no criterion");
    }
  }
};

}  // namespace

double evaluate_criterion(const SelectorSpec& spec, const DataSet& data, const BandwidthMatrix& H) {
  if (spec.method == SelectorMethod::NS || spec.method == SelectorMethod::AT) {
    throw std::invalid_argument("selector '" + spec.name() + "' has no criterion to evaluate");
  }
  if (H.dim() != data.dim()) throw std::invalid_argument("bandwidth and data dimensions differ");
  return Objective(spec, data)(H);
}

SelectionResult select_bandwidth(const SelectorSpec& spec, const DataSet& data) {
  if (spec.method == SelectorMethod::NS) return {ns_bandwidth(data), 0.0, 0, true, std::nullopt, "closed form"};
  if (spec.method == SelectorMethod::AT) return {at_bandwidth(data), 0.0, 0, true, std::nullopt, "closed form"};
  if (data.size() < 2) throw std::invalid_argument("selector '" + spec.name() + "' needs at least two points");

  const int d = data.dim();
  const Objective objective(spec, data);
  const BandwidthMatrix ns = restrict_to(ns_bandwidth(data), spec.search);
  const bool is_it = spec.method == SelectorMethod::IT;
  const double it_scale = is_it ? variance_term(ns, data.size()) : 1.0;

  int evaluations = 0;
  auto criterion = [&](const BandwidthMatrix& H) {
    ++evaluations;
    const double v = objective(H);
    if (!is_it) return v;
    const double r = v / it_scale;
    return r * r;
  };
  auto in_coordinates = [&](const Vector& theta) {
    try {
      return criterion(from_search_coordinates(theta, d, spec.search));
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  // start from the best of NS * {0.5, 1, 2}
  BandwidthMatrix start = ns;
  double start_value = std::numeric_limits<double>::infinity();
  for (double factor : {0.5, 1.0, 2.0}) {
    const BandwidthMatrix candidate = ns.scaled(factor);
    const double v = criterion(candidate);
    if (v < start_value) {
      start_value = v;
      start = candidate;
    }
  }

  SimplexSettings settings = spec.optimizer;
  // a squared residual this small is left to the ray polish below
  if (is_it) settings.target = std::max(settings.target, 1e-8);
  SimplexResult run = nelder_mead(in_coordinates, to_search_coordinates(start, spec.search), settings);
  // restart once from the best vertex with a fresh simplex
  SimplexResult again = nelder_mead(in_coordinates, run.x, settings);
  const bool converged = run.converged && again.converged;
  if (again.value <= run.value) run = again;

  SelectionResult out{from_search_coordinates(run.x, d, spec.search), 0.0, 0, converged,
                      objective.G ? std::optional<Matrix>(objective.G->matrix()) : std::nullopt,
                      ""};
  if (spec.search == SearchClass::Diagonal) out.H = BandwidthMatrix::diagonal(out.H.matrix().diagonal());

  if (is_it) {
    // Polish the root along the ray t * H so the residual meets the tolerance.
    const BandwidthMatrix base = out.H;
    auto residual_at = [&](double log_t) {
      ++evaluations;
      return objective(base.scaled(std::exp(log_t)));
    };
    double r0 = residual_at(0.0);
    const double tol = 1e-6 * variance_term(base, data.size());
    if (std::abs(r0) > tol) {
      double lo = 0.0, hi = 0.0;
      double step = r0 > 0.0 ? std::log(2.0) : -std::log(2.0);  // positive residual: widen
      bool bracketed = false;
      double prev = 0.0, prev_r = r0;
      for (int k = 0; k < 80 && !bracketed; ++k) {
        const double next = prev + step;
        const double r = residual_at(next);
        if (std::isfinite(r) && (r > 0.0) != (prev_r > 0.0)) {
          lo = std::min(prev, next);
          hi = std::max(prev, next);
          bracketed = true;
        }
        prev = next;
        prev_r = r;
      }
      if (bracketed) {
        const double root = brent_root(residual_at, lo, hi, 1e-14);
        out.H = base.scaled(std::exp(root));
        if (spec.search == SearchClass::Diagonal) out.H = BandwidthMatrix::diagonal(out.H.matrix().diagonal());
      } else {
        out.note = "no sign change of the IT residual along the search ray";
      }
    }
    out.value = objective(out.H);
    out.converged = std::abs(out.value) <= 1e-6 * variance_term(out.H, data.size());
    if (!out.converged && out.note.empty()) out.note = "IT residual above tolerance";
  } else {
    out.value = objective(out.H);
    if (!out.converged) out.note = "simplex search hit the evaluation limit";
  }
  out.evaluations = evaluations;
  return out;
}

}  // namespace mslab

#include "mslab/selectors.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <numbers>

using namespace mslab;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

DataSet normal_sample(int n, std::uint64_t seed, double sx = 1.0, double sy = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  Matrix pts(n, 2);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = sx * z(gen);
    pts(i, 1) = sy * z(gen);
  }
  return DataSet(pts);
}

DataSet scaled(const DataSet& data, double c) { return data.transformed(c * Matrix::Identity(2, 2), Vector::Zero(2)); }

double lap(const Vector& x, const Matrix& S) { return kernel_laplacian(x, BandwidthMatrix(S)); }

}  // namespace

TEST_SUITE("selectors") {
  TEST_CASE("selector names round-trip") {
    for (const auto& name : selector_names()) CHECK(SelectorSpec::parse(name).name() == name);
    CHECK(selector_names().size() == 10);
    CHECK(SelectorSpec::parse("SCVD").name() == "scvd");
    CHECK(SelectorSpec::parse("at").search == SearchClass::Diagonal);
    CHECK(SelectorSpec::parse("itu").needs_pilot());
    CHECK_FALSE(SelectorSpec::parse("cvd").needs_pilot());
    for (const char* bad : {"", "cv", "xyu", "nsu", "scvq"}) {
      CHECK_THROWS_AS(SelectorSpec::parse(bad), std::invalid_argument);
    }
  }

  TEST_CASE("pilot rules parse and describe") {
    CHECK(PilotRule::parse("normal-scale").kind == PilotRule::Kind::NormalScale);
    const PilotRule fixed = PilotRule::parse("fixed:0.5,0.1;0.1,0.4");
    REQUIRE(fixed.kind == PilotRule::Kind::Fixed);
    CHECK(fixed.fixed(0, 1) == 0.1);
    CHECK(PilotRule::parse(fixed.describe()).fixed == fixed.fixed);
    CHECK_THROWS_AS(PilotRule::parse("fixed:1,2;2,1"), std::invalid_argument);
    CHECK_THROWS_AS(PilotRule::parse("fixed:1,0,0;0,1"), std::invalid_argument);
    CHECK_THROWS_AS(PilotRule::parse("silverman"), std::invalid_argument);
  }

  TEST_CASE("normal scale closed form") {
    CHECK(ns_constant(2, 500) == doctest::Approx(std::pow(4.0 / 6.0, 0.25) * std::pow(500.0, -0.25)).epsilon(1e-15));
    const DataSet data = normal_sample(500, 1);
    const Matrix H = ns_bandwidth(data).matrix();
    CHECK((H - ns_constant(2, 500) * data.covariance()).norm() < 1e-15);
    CHECK(select_bandwidth(SelectorSpec::parse("ns"), data).H.matrix() == H);
    // n -> 4n
    CHECK(ns_constant(2, 2000) / ns_constant(2, 500) == doctest::Approx(std::pow(4.0, -0.25)).epsilon(1e-14));
    CHECK(ns_constant(3, 400) / ns_constant(3, 100) == doctest::Approx(std::pow(4.0, -2.0 / 9.0)).epsilon(1e-14));
    // affine equivariance
    Matrix S(2, 2);
    S << 2.0, 0.5, -0.3, 1.0;
    const Matrix moved = ns_bandwidth(data.transformed(S, v2(1, 2))).matrix();
    CHECK((moved - S * H * S.transpose()).norm() < 1e-13 * moved.norm());
    CHECK_THROWS_AS(ns_bandwidth(DataSet(Matrix::Zero(2, 2))), std::invalid_argument);
  }

  TEST_CASE("AT closed form") {
    Matrix pts(4, 2);
    pts << 1, 1, -1, -1, 1, -1, -1, 1;  // unit-free; rescaled below to s = (1, 1)
    const DataSet base(pts);
    const double s0 = std::sqrt(base.covariance()(0, 0));
    const DataSet unit = scaled(base, 1.0 / s0);
    Matrix big(500, 2);
    for (int i = 0; i < 500; ++i) big.row(i) = unit.points().row(i % 4);
    const DataSet data(big);
    const Vector s = data.covariance().diagonal().cwiseSqrt();
    const Matrix H = at_bandwidth(data).matrix();
    CHECK(H(0, 1) == 0.0);
    CHECK(H(1, 0) == 0.0);
    for (int k = 0; k < 2; ++k) {
      CHECK(std::sqrt(H(k, k)) == doctest::Approx(0.75 * std::pow(500.0, -1.0 / 6.0) * s(k)).epsilon(1e-14));
    }

    const DataSet random = normal_sample(300, 2, 1.3, 0.4);
    const Matrix A = at_bandwidth(random).matrix();
    const Matrix B = at_bandwidth(random.transformed(v2(3.0, 1.0).asDiagonal(), Vector::Zero(2))).matrix();
    CHECK(std::sqrt(B(0, 0) / A(0, 0)) == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(B(1, 1) == doctest::Approx(A(1, 1)).epsilon(1e-14));
    // three quarters of the density normal-scale rule per coordinate
    const Matrix P = normal_scale_pilot(random).matrix();
    for (int k = 0; k < 2; ++k) CHECK(std::sqrt(A(k, k) / P(k, k)) == doctest::Approx(0.75).epsilon(1e-14));
    Matrix flat = random.points();
    flat.col(1).setConstant(2.0);
    CHECK_THROWS_AS(at_bandwidth(DataSet(flat)), std::invalid_argument);
  }

  TEST_CASE("variance term for scalar bandwidths") {
    for (double h : {0.3, 1.0, 1.7}) {
      for (int n : {10, 200}) {
        const double expected = std::pow(h, -4.0) * grad_kernel_constant(2).trace() / n;
        CHECK(variance_term(BandwidthMatrix::scalar(2, h * h), n) == doctest::Approx(expected).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("CV hand assembly for two points") {
    Matrix pts(2, 2);
    pts << 0, 0, 1, 0;
    const DataSet data(pts);
    const Matrix I = Matrix::Identity(2, 2);
    const Vector x = v2(1, 0);
    const double hand = -0.25 * (lap(Vector::Zero(2), 2 * I) + lap(Vector::Zero(2), 2 * I) + lap(x, 2 * I) +
                                 lap(-x, 2 * I)) +
                        2.0 / (2.0 * 1.0) * (lap(x, I) + lap(-x, I));
    CHECK(cv_criterion(BandwidthMatrix(I), data) == doctest::Approx(hand).epsilon(1e-14));
  }

  TEST_CASE("CV agrees with a direct double loop") {
    const DataSet data(oracle::random_points(9, 2));
    const Matrix H = oracle::random_spd(2);
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 9; ++i) {
      for (int j = 0; j < 9; ++j) {
        const Vector diff = data.point(i) - data.point(j);
        a += lap(diff, 2 * H);
        if (i != j) b += lap(diff, H);
      }
    }
    const double direct = -a / 81.0 + 2.0 * b / (9.0 * 8.0);
    CHECK(oracle::rel_err(cv_criterion(BandwidthMatrix(H), data), direct) < 1e-12);
  }

  TEST_CASE("SCV hand assembly and the vanishing pilot limit") {
    Matrix pts(2, 2);
    pts << 0, 0, 1, 0;
    const DataSet data(pts);
    const Matrix H = oracle::random_spd(2);
    const Matrix G = 0.3 * oracle::random_spd(2);
    auto bracket = [&](const Vector& x, const Matrix& g) {
      return lap(x, 2 * H + 2 * g) - 2.0 * lap(x, H + 2 * g) + lap(x, 2 * g);
    };
    const Vector x = v2(1, 0), zero = Vector::Zero(2);
    const double hand = -0.25 * (2.0 * bracket(zero, G) + bracket(x, G) + bracket(-x, G));
    CHECK(oracle::rel_err(scv_bias_term(BandwidthMatrix(H), PairwiseDifferences(data), BandwidthMatrix(G)), hand) <
          1e-13);
    CHECK(oracle::rel_err(scv_criterion(BandwidthMatrix(H), data, BandwidthMatrix(G)),
                          variance_term(BandwidthMatrix(H), 2) + hand) < 1e-13);

    // G -> 0: off-diagonal pairs reduce to the CV-style pieces 2H and H
    const Matrix tiny = 1e-8 * Matrix::Identity(2, 2);
    const double limit = lap(x, 2 * H) - 2.0 * lap(x, H);
    CHECK(std::abs(bracket(x, tiny) - limit) < 1e-6 * std::abs(limit));
    const PairwiseDifferences pairs(data);
    const double upper = pairs.laplacian_sum_upper(BandwidthMatrix(2 * H + 2 * tiny)) -
                         2.0 * pairs.laplacian_sum_upper(BandwidthMatrix(H + 2 * tiny)) +
                         pairs.laplacian_sum_upper(BandwidthMatrix(2 * tiny));
    CHECK(std::abs(upper - limit) < 1e-6 * std::abs(limit));
  }

  TEST_CASE("PI contraction factorizes over Kronecker products") {
    const int d = 2, d2 = 4;
    const BandwidthMatrix H(oracle::random_spd(d));
    const Vector a = oracle::random_vector(d2), b = oracle::random_vector(d2), c = oracle::random_vector(d2);
    Vector T(d2 * d2 * d2);
    for (int i = 0; i < d2; ++i) {
      for (int j = 0; j < d2; ++j) {
        for (int k = 0; k < d2; ++k) T((i * d2 + j) * d2 + k) = a(i) * b(j) * c(k);
      }
    }
    const Matrix I = Matrix::Identity(d, d);
    const Eigen::Map<const Vector> vi(I.data(), d2), vh(H.matrix().data(), d2);
    const double expected = -0.25 * vi.dot(a) * vh.dot(b) * vh.dot(c);
    CHECK(oracle::rel_err(pi_bias_term(H, T), expected) < 1e-13);
    CHECK_THROWS_AS(pi_bias_term(H, Vector::Zero(10)), std::invalid_argument);
  }

  TEST_CASE("PI second term matches finite-difference sixth derivatives") {
    Matrix pts(2, 2);
    pts << 0.0, 0.0, 0.6, -0.4;
    const DataSet data(pts);
    const Matrix G = (Matrix(2, 2) << 0.8, 0.1, 0.1, 0.6).finished();
    const Matrix H = (Matrix(2, 2) << 0.5, -0.1, -0.1, 0.7).finished();
    const oracle::Field k = [&](const Vector& y) { return oracle::normal_pdf(y, Vector::Zero(2), G); };
    std::vector<Vector> diffs = {Vector::Zero(2), Vector::Zero(2), data.point(0) - data.point(1),
                                 data.point(1) - data.point(0)};
    Vector psi(64);
    for (int idx = 0; idx < 64; ++idx) {
      std::vector<int> axes(6);
      for (int m = 0; m < 6; ++m) axes[m] = (idx >> (5 - m)) & 1;
      double s = 0.0;
      for (const auto& x : diffs) s += oracle::fd_nested_richardson(k, x, axes, 0.08);
      psi(idx) = s / 4.0;
    }
    // contraction written as a plain 64-entry loop
    double direct = 0.0;
    for (int idx = 0; idx < 64; ++idx) {
      const int s1 = idx >> 5 & 1, s2 = idx >> 4 & 1, s3 = idx >> 3 & 1, s4 = idx >> 2 & 1, s5 = idx >> 1 & 1,
                s6 = idx & 1;
      // (vec I)_(s1,s2) (vec H)_(s3,s4) (vec H)_(s5,s6); vec stacks columns
      direct += (s1 == s2 ? 1.0 : 0.0) * H(s4, s3) * H(s6, s5) * psi(idx);
    }
    direct *= -0.25;
    const Vector exact_psi = PairwiseDifferences(data).derivative_tensor_mean(BandwidthMatrix(G), 6);
    const double exact = pi_bias_term(BandwidthMatrix(H), exact_psi);
    CHECK(oracle::rel_err(exact, direct) < 1e-3);
    CHECK(oracle::rel_err(pi_criterion(BandwidthMatrix(H), data, BandwidthMatrix(G)),
                          variance_term(BandwidthMatrix(H), 2) + exact) < 1e-13);
  }

  TEST_CASE("pairwise tensor mean against a direct loop") {
    const DataSet data(oracle::random_points(6, 2));
    const BandwidthMatrix G(oracle::random_spd(2));
    const PairwiseDifferences pairs(data);
    CHECK(pairs.pair_count() == 15);
    for (int order : {2, 4}) {
      Vector direct = Vector::Zero(1 << order);
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) direct += gaussian_derivative_tensor(data.point(i) - data.point(j), G, order);
      }
      direct /= 36.0;
      CHECK(oracle::rel_err(pairs.derivative_tensor_mean(G, order), direct) < 1e-12);
    }
    CHECK(pairs.derivative_tensor_mean(G, 3).isZero(0.0));
    double all = 0.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) all += kernel_laplacian(data.point(i) - data.point(j), G);
    }
    CHECK(oracle::rel_err(pairs.laplacian_sum_all(G), all) < 1e-12);
  }

  TEST_CASE("IT residual shares its pieces with SCV") {
    for (int t = 0; t < 20; ++t) {
      const int d = 1 + t % 3;
      const DataSet data(oracle::random_points(12, d));
      const BandwidthMatrix H(oracle::random_spd(d, 0.1, 1.0)), G(oracle::random_spd(d, 0.1, 1.0));
      const PairwiseDifferences pairs(data);
      const double first = (d + 2) * variance_term(H, 12);
      const double second = -4.0 * scv_bias_term(H, pairs, G);
      const double r = it_residual(H, pairs, G);
      CHECK(std::abs(r - (first + second)) <= 1e-14 * (std::abs(first) + std::abs(second)));
    }
  }

  TEST_CASE("criteria are invariant under permuting the data") {
    const DataSet data(oracle::random_points(15, 2));
    Matrix rev = data.points().colwise().reverse();
    const DataSet permuted(rev);
    const BandwidthMatrix H(oracle::random_spd(2, 0.2, 1.0)), G(oracle::random_spd(2, 0.2, 1.0));
    CHECK(oracle::rel_err(cv_criterion(H, permuted), cv_criterion(H, data)) < 1e-12);
    CHECK(oracle::rel_err(scv_criterion(H, permuted, G), scv_criterion(H, data, G)) < 1e-12);
    CHECK(oracle::rel_err(pi_criterion(H, permuted, G), pi_criterion(H, data, G)) < 1e-12);
    CHECK(std::abs(it_residual(H, permuted, G) - it_residual(H, data, G)) <
          1e-12 * (3 * variance_term(H, 15) + std::abs(it_residual(H, data, G))));
  }

  TEST_CASE("criterion scale laws") {
    const DataSet data(oracle::random_points(25, 2));
    const BandwidthMatrix H(oracle::random_spd(2, 0.1, 0.5)), G(oracle::random_spd(2, 0.1, 0.5));
    for (double c : {0.5, 2.0}) {
      const DataSet cd = scaled(data, c);
      const BandwidthMatrix cH = H.scaled(c * c), cG = G.scaled(c * c);
      const double f = std::pow(c, -4.0);
      CHECK(oracle::rel_err(cv_criterion(cH, cd), f * cv_criterion(H, data)) < 1e-10);
      CHECK(oracle::rel_err(scv_criterion(cH, cd, cG), f * scv_criterion(H, data, G)) < 1e-10);
      CHECK(oracle::rel_err(it_residual(cH, cd, cG), f * it_residual(H, data, G)) < 1e-10);
      CHECK(oracle::rel_err(pi_criterion(cH, cd, cG), f * pi_criterion(H, data, G)) < 1e-10);
    }
  }

  TEST_CASE("search coordinates round-trip and are scale-free") {
    for (int t = 0; t < 30; ++t) {
      const int d = 1 + t % 3;
      const BandwidthMatrix H(oracle::random_spd(d));
      const Vector theta = to_search_coordinates(H, SearchClass::Unconstrained);
      CHECK(theta.size() == d * (d + 1) / 2);
      const BandwidthMatrix back = from_search_coordinates(theta, d, SearchClass::Unconstrained);
      CHECK((back.matrix() - H.matrix()).norm() < 1e-12 * H.matrix().norm());
      // rescaling H shifts only the diagonal log terms
      const Vector shifted = to_search_coordinates(H.scaled(4.0), SearchClass::Unconstrained);
      int k = 0;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j, ++k) {
          CHECK(shifted(k) - theta(k) == doctest::Approx(i == j ? std::log(2.0) : 0.0).epsilon(1e-12));
        }
      }
      const BandwidthMatrix D = BandwidthMatrix::diagonal(H.matrix().diagonal());
      const BandwidthMatrix d_back =
          from_search_coordinates(to_search_coordinates(D, SearchClass::Diagonal), d, SearchClass::Diagonal);
      CHECK(d_back.cls() == BandwidthClass::Diagonal);
      CHECK((d_back.matrix() - D.matrix()).norm() < 1e-13 * D.matrix().norm());
    }
    CHECK_THROWS_AS(from_search_coordinates(Vector::Zero(2), 2, SearchClass::Unconstrained), std::invalid_argument);
  }

  TEST_CASE("CV scalar minimum brackets the normal scale value") {
    const DataSet data = normal_sample(200, 21);
    const PairwiseDifferences pairs(data);
    double best = std::numeric_limits<double>::infinity(), best_h2 = 0.0;
    for (double log_h2 = std::log(0.02); log_h2 < std::log(3.0); log_h2 += 0.02) {
      const double v = cv_criterion(BandwidthMatrix::scalar(2, std::exp(log_h2)), pairs);
      if (v < best) {
        best = v;
        best_h2 = std::exp(log_h2);
      }
    }
    const double ns_h2 = ns_constant(2, 200) * data.covariance().trace() / 2.0;
    CHECK(best_h2 / ns_h2 > 0.5);
    CHECK(best_h2 / ns_h2 < 2.0);
  }

  TEST_CASE("diagonal selections have exact zeros and no better value") {
    const DataSet data = normal_sample(120, 5, 1.0, 0.6);
    const SelectionResult d = select_bandwidth(SelectorSpec::parse("cvd"), data);
    const SelectionResult u = select_bandwidth(SelectorSpec::parse("cvu"), data);
    CHECK(d.H(0, 1) == 0.0);
    CHECK(d.H(1, 0) == 0.0);
    CHECK(d.H.cls() == BandwidthClass::Diagonal);
    CHECK(d.value >= u.value - 1e-6 * std::abs(u.value));
    CHECK(d.value == doctest::Approx(cv_criterion(d.H, data)).epsilon(1e-14));
    CHECK(d.evaluations > 0);
    CHECK_FALSE(d.pilot.has_value());
  }

  TEST_CASE("every selector returns an SPD bandwidth of its class") {
    const DataSet data = normal_sample(80, 9, 1.0, 0.5);
    for (const auto& name : selector_names()) {
      CAPTURE(name);
      const SelectorSpec spec = SelectorSpec::parse(name);
      const SelectionResult r = select_bandwidth(spec, data);
      CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r.H.matrix()).eigenvalues().minCoeff() > 0.0);
      if (spec.search == SearchClass::Diagonal) CHECK(r.H(0, 1) == 0.0);
      CHECK(r.pilot.has_value() == spec.needs_pilot());
      if (spec.needs_pilot()) CHECK(r.pilot->isApprox(normal_scale_pilot(data).matrix()));
    }
  }

  TEST_CASE("fixed pilots are honoured") {
    const DataSet data = normal_sample(60, 3);
    SelectorSpec spec = SelectorSpec::parse("scvu");
    spec.pilot = PilotRule::parse("fixed:0.2,0;0,0.3");
    const BandwidthMatrix H(Matrix::Identity(2, 2) * 0.3);
    CHECK(evaluate_criterion(spec, data, H) ==
          doctest::Approx(scv_criterion(H, data, BandwidthMatrix(spec.pilot.fixed))).epsilon(1e-13));
    CHECK(select_bandwidth(spec, data).pilot->isApprox(spec.pilot.fixed));
    spec.pilot = PilotRule::parse("fixed:1");
    CHECK_THROWS_AS(select_bandwidth(spec, data), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_criterion(SelectorSpec::parse("ns"), data, H), std::invalid_argument);
  }

  TEST_CASE("selection follows isotropic rescaling of the data") {
    const DataSet data = normal_sample(150, 13, 1.0, 0.7);
    const double c = 2.5;
    const DataSet stretched = scaled(data, c);
    for (const std::string name : {"cvd", "scvd", "pid", "cvu", "itd"}) {
      CAPTURE(name);
      const Matrix a = select_bandwidth(SelectorSpec::parse(name), data).H.matrix();
      const Matrix b = select_bandwidth(SelectorSpec::parse(name), stretched).H.matrix();
      CHECK((b - c * c * a).norm() < 1e-3 * b.norm());
    }
  }

  TEST_CASE("stretching one coordinate is not an exact symmetry of the criteria") {
    // the Laplacian mixes coordinates, so only the stretched axis moves much
    const DataSet data = normal_sample(150, 13, 1.0, 0.7);
    const DataSet stretched = data.transformed(v2(2.5, 1.0).asDiagonal(), Vector::Zero(2));
    const Matrix a = select_bandwidth(SelectorSpec::parse("cvd"), data).H.matrix();
    const Matrix b = select_bandwidth(SelectorSpec::parse("cvd"), stretched).H.matrix();
    CHECK(b(0, 0) / a(0, 0) > 2.0 * 2.0);
    CHECK(b(0, 0) / a(0, 0) < 3.0 * 3.0);
    CHECK(b(1, 1) / a(1, 1) == doctest::Approx(1.0).epsilon(0.2));
  }

  TEST_CASE("ITU root meets the residual tolerance") {
    const DataSet data = normal_sample(200, 77);
    const SelectionResult r = select_bandwidth(SelectorSpec::parse("itu"), data);
    CHECK(r.converged);
    const BandwidthMatrix G = normal_scale_pilot(data);
    const double first = 4.0 * variance_term(r.H, 200);
    CHECK(std::abs(it_residual(r.H, data, G)) <= 1e-6 * first);
    CHECK(r.value == doctest::Approx(it_residual(r.H, data, G)).epsilon(1e-12));
  }
}

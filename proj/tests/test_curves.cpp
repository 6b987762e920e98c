// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tof/checks.hpp"
#include "tof/curves.hpp"

using namespace tof;

namespace {

// Brute-force quadrature oracle for one basis entry, independent of
// PulseProfile::integrate. Midpoint rule on a fine grid.
double oracle_basis_value(const BoxcarElement& box, const PulseProfile& pulse, double t_cm,
                          double step = 1e-3) {
  double tau = t_cm / kDepthCmPerNs;
  double acc = 0.0;
  const auto& s = pulse.samples();
  double dur = pulse.duration();
  for (double u = box.delay_ns + 0.5 * step; u < box.delay_ns + box.width_ns; u += step) {
    double local = u - tau;
    if (local <= 0.0 || local >= dur) continue;
    double pos = local / pulse.grid_step();
    auto i = static_cast<std::size_t>(pos);
    if (i >= s.size() - 1) i = s.size() - 2;
    double frac = pos - static_cast<double>(i);
    acc += (s[i] + (s[i + 1] - s[i]) * frac) * step;
  }
  return acc * distance_decay(t_cm);
}

PulseProfile unit_rectangle(double width_ns) {
  return PulseProfile::trapezoid(0.0, width_ns, 0.0, 1.0, 0.01);
}

}  // namespace

TEST_CASE("zero-width boxcar yields an all-zero column") {
  PulseProfile pulse = PulseProfile::trapezoid(0.5, 2.0, 0.5, 1.0, 0.05);
  DepthGrid grid{60.0, 400.0, 64};
  BoxcarCatalog catalog{{2.0, 0.0}, {2.0, 8.0}};
  Eigen::MatrixXd q = boxcar_basis_matrix(catalog, pulse, grid);
  CHECK(q.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.col(1).maxCoeff() > 0.0);
  CHECK(q.minCoeff() >= 0.0);
}

TEST_CASE("basis response is homogeneous in the pulse") {
  PulseProfile pulse = PulseProfile::trapezoid(0.5, 2.0, 0.5, 3.0, 0.05);
  DepthGrid grid{60.0, 400.0, 48};
  BoxcarCatalog catalog{{0.0, 6.0}, {4.0, 10.0}};
  Eigen::MatrixXd q1 = boxcar_basis_matrix(catalog, pulse, grid);
  Eigen::MatrixXd q2 = boxcar_basis_matrix(catalog, pulse.scaled(2.0), grid);
  CHECK((q2 - 2.0 * q1).cwiseAbs().maxCoeff() == 0.0);  // doubling is exact
  Eigen::MatrixXd q3 = boxcar_basis_matrix(catalog, pulse.scaled(1.7), grid);
  CHECK((q3 - 1.7 * q1).cwiseAbs().maxCoeff() <= 1e-12 * q1.maxCoeff());
}

TEST_CASE("unit rectangle with a covering gate obeys the decay law") {
  PulseProfile pulse = unit_rectangle(2.0);
  DepthGrid grid{80.0, 300.0, 40};
  // gate opens before the earliest arrival and closes after the latest
  double tau_hi = grid.t_max / kDepthCmPerNs;
  BoxcarCatalog catalog{{0.0, tau_hi + 3.0}};
  Eigen::MatrixXd q = boxcar_basis_matrix(catalog, pulse, grid);
  for (int i = 0; i < grid.size; ++i) {
    double t = grid.t(i);
    double compensated = q(i, 0) * t * t;
    CHECK(compensated == doctest::Approx(2.0).epsilon(1e-9));  // pulse area
    CHECK(q(i, 0) == doctest::Approx(oracle_basis_value(catalog[0], pulse, t)).epsilon(2e-3));
  }
}

TEST_CASE("basis values match the brute-force quadrature oracle") {
  PulseProfile pulse = PulseProfile::trapezoid(0.4, 1.6, 0.6, 5.0, 0.02);
  DepthGrid grid{60.0, 450.0, 24};
  BoxcarCatalog catalog{{3.0, 5.0}, {10.0, 12.0}, {20.0, 4.0}};
  Eigen::MatrixXd q = boxcar_basis_matrix(catalog, pulse, grid);
  for (int i = 0; i < grid.size; i += 3) {
    for (std::size_t j = 0; j < catalog.size(); ++j) {
      double expect = oracle_basis_value(catalog[j], pulse, grid.t(i));
      if (expect < 1e-12) {
        CHECK(q(i, static_cast<Eigen::Index>(j)) <= 1e-9);
      } else {
        CHECK(q(i, static_cast<Eigen::Index>(j)) == doctest::Approx(expect).epsilon(5e-3));
      }
    }
  }
}

TEST_CASE("halving the pulse grid step leaves responses stable") {
  DepthGrid grid{60.0, 450.0, 32};
  BoxcarCatalog catalog{{4.0, 8.0}};
  PulseProfile coarse = PulseProfile::trapezoid(0.5, 2.0, 0.5, 1.0, 0.025);
  PulseProfile fine = PulseProfile::trapezoid(0.5, 2.0, 0.5, 1.0, 0.0125);
  Eigen::MatrixXd qc = boxcar_basis_matrix(catalog, coarse, grid);
  Eigen::MatrixXd qf = boxcar_basis_matrix(catalog, fine, grid);
  double rel = (qc - qf).cwiseAbs().maxCoeff() / qf.maxCoeff();
  CHECK(rel < 1e-6);
}

TEST_CASE("errors: empty catalog and nonpositive grid") {
  PulseProfile pulse = unit_rectangle(1.0);
  CHECK_THROWS_AS(boxcar_basis_matrix({}, pulse, DepthGrid{50, 100, 8}), std::invalid_argument);
  CHECK_THROWS_AS(boxcar_basis_matrix({{0, 1}}, pulse, DepthGrid{0.0, 100, 8}),
                  std::invalid_argument);
  CHECK_THROWS_AS(boxcar_basis_matrix({{0, 1}}, pulse, DepthGrid{50, 40, 8}),
                  std::invalid_argument);
}

TEST_CASE("chebyshev reproduces a low-degree polynomial exactly") {
  auto poly = [](double x) { return 3.0 + 0.5 * x - 0.02 * x * x + 1e-4 * x * x * x; };
  std::vector<double> t, y;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(50.0 + 4.5 * i);
    y.push_back(poly(t.back()));
  }
  Chebyshev cheb = Chebyshev::fit(t, y, 50.0, 500.0, 16);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    max_abs = std::max(max_abs, std::abs(cheb.value(t[i]) - y[i]));
  CHECK(max_abs < 1e-9);
  CHECK(cheb.fit_error() < 1e-9);
}

TEST_CASE("chebyshev derivatives match central finite differences") {
  std::vector<double> t, y;
  for (int i = 0; i <= 400; ++i) {
    double x = 50.0 + 600.0 * i / 400.0;
    t.push_back(x);
    y.push_back(std::exp(-x / 180.0) * std::sin(x / 40.0) + 2.0 / x);
  }
  Chebyshev cheb = Chebyshev::fit(t, y, 50.0, 650.0, 16);
  Rng rng(7);
  double h = 1e-3;
  for (int k = 0; k < 100; ++k) {
    double x = rng.uniform(60.0, 640.0);
    ChebJet jet = cheb.eval(x);
    double fd1 = (cheb.value(x + h) - cheb.value(x - h)) / (2.0 * h);
    double fd2 = (cheb.value(x + h) - 2.0 * cheb.value(x) + cheb.value(x - h)) / (h * h);
    CHECK(jet.d1 == doctest::Approx(fd1).epsilon(1e-5));
    CHECK(jet.d2 == doctest::Approx(fd2).epsilon(1e-4));
  }
}

TEST_CASE("chebyshev contract violations") {
  std::vector<double> t{1, 2, 3}, y{1, 2, 3};
  CHECK_THROWS_AS(Chebyshev::fit(t, y, 0.0, 4.0, 5), std::invalid_argument);
  Chebyshev cheb = Chebyshev::fit(t, y, 1.0, 3.0, 1);
  CHECK_THROWS_AS(cheb.value(0.5), std::out_of_range);
  CHECK_THROWS_AS(cheb.value(3.5), std::out_of_range);
}

TEST_CASE("compose_curves: zero, identity and integer-scaled designs") {
  const TestRig& rig = small_rig();
  auto m = static_cast<int>(rig.catalog.size());

  Eigen::MatrixXi zero = Eigen::MatrixXi::Zero(m, 2);
  ResponseCurveSet czero = compose_curves(rig.q, zero, rig.catalog, rig.grid);
  CHECK(czero.ambient().isZero());
  CHECK(std::abs(czero.values(200.0).maxCoeff()) < 1e-12);

  int j = m / 2;
  Eigen::MatrixXi unit = Eigen::MatrixXi::Zero(m, 2);
  unit(j, 0) = 1;
  Eigen::MatrixXi twice = unit;
  twice(j, 0) = 2;
  ResponseCurveSet cu = compose_curves(rig.q, unit, rig.catalog, rig.grid);
  ResponseCurveSet c2 = compose_curves(rig.q, twice, rig.catalog, rig.grid);
  CHECK(cu.ambient()[0] == doctest::Approx(rig.catalog[static_cast<std::size_t>(j)].width_ns));
  CHECK(cu.ambient()[1] == 0.0);
  // channel 0 reproduces column j of Q up to the fit tolerance
  double max_curve = rig.q.col(j).maxCoeff();
  for (int i = 0; i < rig.grid.size; i += 17) {
    double t = rig.grid.t(i);
    CHECK(std::abs(cu.values(t)[0] - rig.q(i, j)) <= cu.fit_error() + 1e-9 * max_curve);
    CHECK(c2.values(t)[0] == doctest::Approx(2.0 * cu.values(t)[0]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(compose_curves(rig.q, Eigen::MatrixXi::Zero(m + 1, 2), rig.catalog, rig.grid),
                  std::invalid_argument);
}

TEST_CASE("decay law holds for a wide-open design") {
  const TestRig& rig = small_rig();
  auto m = static_cast<int>(rig.catalog.size());
  Eigen::MatrixXi z = Eigen::MatrixXi::Zero(m, 1);
  z(m - 1, 0) = 10;  // the rig appends the wide-open element last
  // quadrature claim checked on the grid values, before the Chebyshev fit
  Eigen::VectorXd c_grid = rig.q * z.cast<double>().col(0);
  double ref = c_grid[0] * rig.grid.t(0) * rig.grid.t(0);
  for (int i = 0; i < rig.grid.size; i += 9) {
    double t = rig.grid.t(i);
    CHECK(c_grid[i] * t * t == doctest::Approx(ref).epsilon(1e-9));
  }
  // the fitted evaluator stays within its reported tolerance of the grid
  ResponseCurveSet curves = compose_curves(rig.q, z, rig.catalog, rig.grid);
  for (int i = 0; i < rig.grid.size; i += 9) {
    CHECK(std::abs(curves.values(rig.grid.t(i))[0] - c_grid[i]) <= curves.fit_error() * 1.0001);
  }
}

TEST_CASE("curve file round trip is byte identical") {
  const TestRig& rig = small_rig();
  std::ostringstream first;
  write_curves(first, rig.curves);
  std::istringstream in(first.str());
  ResponseCurveSet back = read_curves(in);
  std::ostringstream second;
  write_curves(second, back);
  CHECK(first.str() == second.str());
  CHECK(back.channel_count() == rig.curves.channel_count());
  for (double t : {60.0, 123.0, 456.0}) {
    CHECK(back.values(t) == rig.curves.values(t));  // bit-exact coefficients
  }
}

TEST_CASE("curve family interpolates corner sets") {
  const TestRig& rig = small_rig();
  auto m = static_cast<int>(rig.catalog.size());
  Eigen::MatrixXi z2 = rig.z;
  z2(m - 1, 0) += 40;
  ResponseCurveSet right = compose_curves(rig.q, z2, rig.catalog, rig.grid);
  CurveFamily family(rig.curves, right);
  Eigen::VectorXd mid = family.at(0.5).values(200.0);
  Eigen::VectorXd expect = 0.5 * (rig.curves.values(200.0) + right.values(200.0));
  CHECK((mid - expect).cwiseAbs().maxCoeff() < 1e-9 * expect.cwiseAbs().maxCoeff());
  CHECK(family.at(0.0).values(321.0) == rig.curves.values(321.0));
}

#include <doctest.h>

#include <cmath>

#include "crysi/interpolants.hpp"
#include "crysi/rng.hpp"
#include "crysi/structure.hpp"

using namespace crysi;

namespace {

constexpr double kPi = 3.14159265358979323846;

InterpolantSpec spec_of(Family f, GammaKind g = GammaKind::None, double a = 1.0) {
  InterpolantSpec s;
  s.family = f;
  s.gamma_kind = g;
  s.a = a;
  return s;
}

}  // namespace

TEST_SUITE("interpolants") {
  TEST_CASE("closed forms of the linear and trig families") {
    const auto lin = spec_of(Family::Linear, GammaKind::LatentSqrt, 0.07);
    const auto trig = spec_of(Family::Trig, GammaKind::LatentSqrt, 0.4);
    for (double t : {0.1, 0.25, 0.5, 0.8}) {
      const auto c = coefficients(lin, t);
      CHECK(c.alpha == doctest::Approx(1 - t).epsilon(1e-15));
      CHECK(c.beta == doctest::Approx(t).epsilon(1e-15));
      CHECK(c.gamma == doctest::Approx(std::sqrt(0.07 * t * (1 - t))).epsilon(1e-15));
      CHECK(c.dgamma == doctest::Approx(0.07 * (1 - 2 * t) / (2 * std::sqrt(0.07 * t * (1 - t)))).epsilon(1e-12));
      const auto d = coefficients(trig, t);
      CHECK(d.alpha == doctest::Approx(std::cos(kPi * t / 2)).epsilon(1e-15));
      CHECK(d.beta == doctest::Approx(std::sin(kPi * t / 2)).epsilon(1e-15));
      CHECK(d.dalpha == doctest::Approx(-kPi / 2 * std::sin(kPi * t / 2)).epsilon(1e-15));
    }
    CHECK(coefficients(lin, 0.5).gamma == doctest::Approx(0.1322876).epsilon(1e-7));
  }

  TEST_CASE("VP with the constant schedule at t = 0.6 gives alpha 0.8, beta 0.6") {
    const auto c = coefficients(spec_of(Family::VpSbd), 0.6);
    CHECK(c.alpha == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(c.beta == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(c.gamma == 0.0);
  }

  TEST_CASE("VP tau schedules against their closed forms") {
    InterpolantSpec s = spec_of(Family::VpSbd);
    CHECK(vp_tau(s, 0.3) == 0.3);
    s.schedule = VpSchedule::Linear;
    for (double t : {0.05, 0.3, 0.7, 1.0}) {
      const double lt = std::log(t);
      CHECK(vp_tau(s, t) == doctest::Approx(std::exp(0.5 * 0.1 * lt - 0.25 * (20.0 - 0.1) * lt * lt)).epsilon(1e-14));
    }
    CHECK(vp_tau(s, 0.0) == 0.0);
    s.schedule = VpSchedule::Cosine;
    const double d = s.cos_offset;
    for (double t : {0.4, 0.6, 0.95}) {
      const double ref = std::sin((kPi + kPi * std::log(t)) / (2 + 2 * d)) / std::sin(kPi / (2 + 2 * d));
      CHECK(vp_tau(s, t) == doctest::Approx(ref).epsilon(1e-14));
    }
    CHECK(vp_tau(s, 0.3) == 0.0);
    CHECK(std::abs(vp_tau(s, std::exp(-1.0))) < 1e-12);
  }

  TEST_CASE("VE coefficients follow the geometric sigma schedule") {
    InterpolantSpec s = spec_of(Family::VeSbd);
    s.sigma_min = 0.02;
    s.sigma_max = 3.0;
    auto sigma = [&](double u) { return 0.02 * std::pow(3.0 / 0.02, u); };
    for (double t : {0.0, 0.3, 0.9, 1.0}) {
      const auto c = coefficients(s, t);
      CHECK(c.alpha == doctest::Approx(std::sqrt(std::max(0.0, sigma(1 - t) * sigma(1 - t) - sigma(0) * sigma(0))))
                           .epsilon(1e-13));
      CHECK(c.beta == 1.0);
      CHECK(c.gamma == 0.0);
    }
    CHECK(coefficients(s, 1.0).alpha == 0.0);
  }

  TEST_CASE("enc-dec at a=1, p=1, T=0.5 reproduces the tabulated row") {
    InterpolantSpec s = spec_of(Family::EncDec, GammaKind::EncDecGamma);
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      if (t == 0.5) continue;
      const auto c = coefficients(s, t);
      const double c2 = std::cos(kPi * t) * std::cos(kPi * t);
      REQUIRE(c.alpha == doctest::Approx(t < 0.5 ? c2 : 0.0).epsilon(1e-12));
      REQUIRE(c.beta == doctest::Approx(t > 0.5 ? c2 : 0.0).epsilon(1e-12));
      REQUIRE(c.gamma == doctest::Approx(std::sin(kPi * t) * std::sin(kPi * t)).epsilon(1e-12));
    }
  }

  TEST_CASE("boundary identities for every family and random parameters") {
    Rng rng(11);
    const std::vector<double> x0{0.3, -1.2, 2.0}, x1{1.1, 0.4, -0.7}, z{0.5, 0.5, -2.0};
    for (Family f : {Family::Linear, Family::Trig, Family::EncDec, Family::VpSbd}) {
      for (int k = 0; k < 100; ++k) {
        InterpolantSpec s = spec_of(f);
        if (f == Family::EncDec) {
          s.gamma_kind = GammaKind::EncDecGamma;
          s.t_switch = rng.uniform(0.05, 0.95);
          s.p = rng.uniform() < 0.5 ? 0.5 : 1.0;
          s.a = rng.uniform(0.1, 3.0);
        } else if (f == Family::VpSbd) {
          s.schedule = static_cast<VpSchedule>(rng.index(3));
        } else {
          s.gamma_kind = GammaKind::LatentSqrt;
          s.a = rng.uniform(0.01, 3.0);
        }
        const auto a = interpolate(s, x0, x1, z, 0.0), b = interpolate(s, x0, x1, z, 1.0);
        for (int d = 0; d < 3; ++d) {
          REQUIRE(std::abs(a[d] - x0[d]) < 1e-10);
          REQUIRE(std::abs(b[d] - x1[d]) < 1e-10);
        }
        REQUIRE(validate(s).ok);
      }
    }
  }

  TEST_CASE("velocity special cases") {
    const std::vector<double> x0{0.3, -1.0}, x1{2.0, 4.0}, z{0.0, 0.0};
    const auto lin = spec_of(Family::Linear);
    for (double t : {0.0, 0.4, 1.0}) {
      const auto v = interpolant_velocity(lin, x0, x1, z, t);
      CHECK(v[0] == doctest::Approx(1.7));
      CHECK(v[1] == doctest::Approx(5.0));
    }
    const auto v = interpolant_velocity(spec_of(Family::Trig), x0, x1, z, 0.0);
    CHECK(v[0] == doctest::Approx(kPi / 2 * 2.0));
    CHECK(interpolate(lin, std::vector<double>{0.0}, std::vector<double>{4.0}, std::vector<double>{0.0}, 0.25)[0] ==
          1.0);
  }

  TEST_CASE("endpoint derivatives are finite through the clamp") {
    const auto s = spec_of(Family::Linear, GammaKind::LatentSqrt, 0.5);
    CHECK(endpoint_singular(s));
    CHECK_FALSE(endpoint_singular(spec_of(Family::Linear)));
    for (double t : {0.0, 1.0}) CHECK(std::isfinite(coefficients(s, t).dgamma));
  }

  TEST_CASE("periodic interpolation follows the short way round") {
    const auto lin = spec_of(Family::Linear);
    const std::vector<double> x0{0.9}, x1{0.1}, z{0.0};
    CHECK(std::abs(periodic_interpolate(lin, x0, x1, z, 0.5)[0]) < 1e-15);
    CHECK(periodic_velocity(lin, x0, x1, z, 0.3)[0] == doctest::Approx(0.2));
    Rng rng(12);
    for (int n = 0; n < 1000; ++n) {
      const std::vector<double> a{rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform()};
      const auto end = periodic_interpolate(spec_of(Family::Trig), a, b, std::vector<double>{0, 0}, 1.0);
      for (int d = 0; d < 2; ++d) REQUIRE(std::abs(torus_displacement({end[d], 0, 0}, {b[d], 0, 0})[0]) < 1e-12);
      const auto mid = periodic_interpolate(lin, a, b, std::vector<double>{0, 0}, rng.uniform());
      for (double m : mid) REQUIRE((m >= 0.0 && m < 1.0));
    }
  }

  TEST_CASE("mean of latent paths equals the latent-free path") {
    const auto g = spec_of(Family::Linear, GammaKind::LatentSqrt, 0.5);
    const std::vector<double> x0{0.2}, x1{1.4};
    const double t = 0.35;
    Rng rng(13);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = interpolate(g, x0, x1, std::vector<double>{rng.normal()}, t)[0];
      s += x;
      s2 += x * x;
    }
    const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean - interpolate(spec_of(Family::Linear), x0, x1, std::vector<double>{0.0}, t)[0]) <
          3 * sd / std::sqrt(n));
  }

  TEST_CASE("validator flags constructed violations") {
    auto base = [](double t) { return Coefficients{1 - t, t, std::sqrt(t * (1 - t)), -1, 1, 0}; };
    CHECK(validate_coefficients(base, true).ok);
    auto gamma_t = [&](double t) {
      auto c = base(t);
      c.gamma = t;
      return c;
    };
    const auto r = validate_coefficients(gamma_t, true);
    CHECK_FALSE(r.ok);
    CHECK(r.violation.find("gamma(1)") != std::string::npos);
    auto flat = [&](double t) {
      auto c = base(t);
      c.gamma = 0.0;
      return c;
    };
    CHECK_FALSE(validate_coefficients(flat, true).ok);
    CHECK(validate_coefficients(flat, false).ok);
  }

  TEST_CASE("inconsistent parameters are rejected") {
    InterpolantSpec s = spec_of(Family::EncDec, GammaKind::EncDecGamma);
    s.t_switch = 1.0;
    CHECK_THROWS(check_parameters(s));
    CHECK_THROWS(check_parameters(spec_of(Family::VpSbd, GammaKind::LatentSqrt)));
    CHECK_THROWS(check_parameters(spec_of(Family::Linear, GammaKind::LatentSqrt, -1.0)));
    CHECK_THROWS(coefficients(spec_of(Family::Linear), 1.5));
    CHECK_THROWS(interpolate(spec_of(Family::Linear), std::vector<double>{0}, std::vector<double>{0, 1},
                             std::vector<double>{0}, 0.5));
  }
}

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "polyrnn/cells.hpp"
#include "polyrnn/errors.hpp"

using namespace polyrnn;

namespace {

LeakyParams leaky(std::size_t n, std::size_t d, double alpha, double r = 0.0) {
  auto p = std::get<LeakyParams>(make_params(CellKind::Leaky, n, d, r));
  p.alpha = alpha;
  return p;
}

GatedParams gated(std::size_t n, std::size_t d, double r = 0.0) {
  return std::get<GatedParams>(make_params(CellKind::Gated, n, d, r));
}

GruParams gru(std::size_t n, std::size_t d, double r = 0.0) {
  return std::get<GruParams>(make_params(CellKind::Gru, n, d, r));
}

}  // namespace

TEST_CASE("cell kind names") {
  CHECK(parse_cell_kind("leaky") == CellKind::Leaky);
  CHECK(parse_cell_kind("gated") == CellKind::Gated);
  CHECK(parse_cell_kind("gru") == CellKind::Gru);
  CHECK(to_string(CellKind::Gru) == "gru");
  CHECK_THROWS_AS(parse_cell_kind("lstm"), ConfigError);
}

TEST_CASE("leaky step") {
  SUBCASE("free decay by 1 - alpha") {
    const auto out = leaky_step(leaky(1, 1, 0.25), Vec{1}, Vec{0});
    CHECK(out.h[0] == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("origin is a fixed point") {
    CHECK(leaky_step(leaky(3, 2, 0.7), Vec(3), Vec(2)).h == Vec(3));
  }
  SUBCASE("input drive") {
    auto p = leaky(1, 1, 0.5);
    p.W(0, 0) = 1.0;
    CHECK(leaky_step(p, Vec{0}, Vec{1}).h[0] == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-15));
    CHECK(leaky_step(p, Vec{0}, Vec{1}).h[0] == doctest::Approx(0.380797).epsilon(1e-6));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(leaky_step(leaky(2, 1, 0.5), Vec(3), Vec(1)), DimensionError);
    CHECK_THROWS_AS(leaky_step(leaky(2, 1, 0.5), Vec(2), Vec(2)), DimensionError);
  }
}

TEST_CASE("polynomial leaky step") {
  SUBCASE("cubic decay at r = 2") {
    const auto out = leaky_step(leaky(1, 1, 0.5, 2.0), Vec{1}, Vec{0});
    CHECK(out.h[0] == 0.5);
  }
  SUBCASE("origin is a fixed point") {
    CHECK(leaky_step(leaky(2, 1, 0.3, 2.0), Vec(2), Vec(1)).h == Vec(2));
  }
  SUBCASE("r = 2 decay term is h cubed") {
    const Vec h{-1.3, 0.2, 0.0, 2.5};
    const Vec dec = decay_term(h, 2.0);
    for (std::size_t i = 0; i < h.dim(); ++i) CHECK(dec[i] == doctest::Approx(h[i] * h[i] * h[i]).epsilon(1e-15));
  }
  SUBCASE("fractional powers are odd-symmetric and vanish at zero") {
    const Vec dec = decay_term(Vec{-0.5, 0.5, 0.0}, 0.5);
    CHECK(dec[0] == doctest::Approx(-std::pow(0.5, 1.5)));
    CHECK(dec[1] == doctest::Approx(std::pow(0.5, 1.5)));
    CHECK(dec[2] == 0.0);
    CHECK(decay_slope(Vec{0.0}, 0.5)[0] == 0.0);
    CHECK(decay_slope(Vec{0.0}, 0.0)[0] == 1.0);
  }
  SUBCASE("decay slope matches a central difference") {
    for (double r : {0.5, 1.0, 2.0, 3.5}) {
      for (double h : {-1.7, -0.3, 0.4, 1.2}) {
        const double fd = oracle::central_difference([r](double z) { return decay_term(Vec{z}, r)[0]; }, h, 1e-6);
        CHECK(oracle::rel_error(decay_slope(Vec{h}, r)[0], fd) < 1e-8);
      }
    }
  }
}

TEST_CASE("gated step") {
  SUBCASE("half gates at zero parameters") {
    CHECK(gated_step(gated(1, 1), Vec{2}, Vec{0}).h[0] == 1.0);
  }
  SUBCASE("large forget bias retains the state") {
    auto p = gated(1, 1);
    p.b_f[0] = 10.0;
    const double f = 1.0 / (1.0 + std::exp(-10.0));
    CHECK(gated_step(p, Vec{1}, Vec{0}).h[0] == doctest::Approx(f).epsilon(1e-14));
    CHECK(f == doctest::Approx(0.9999546).epsilon(1e-7));
  }
  SUBCASE("constant gate gives f^k h0") {
    auto p = gated(3, 2);
    p.b_f = Vec{-1.0, 0.5, 2.0};
    p.b_i = Vec{0.3, 0.3, 0.3};
    Vec h{1.0, -2.0, 0.5};
    const Vec h0 = h;
    Rng rng(3);
    const int k = 12;
    for (int t = 0; t < k; ++t) h = gated_step(p, h, oracle::random_vec(rng, 2)).h;
    for (std::size_t i = 0; i < 3; ++i) {
      const double f = 1.0 / (1.0 + std::exp(-p.b_f[i]));
      CHECK(std::fabs(h[i] - std::pow(f, k) * h0[i]) <= 1e-12 * std::fabs(h0[i]));
    }
  }
  SUBCASE("polynomial form") {
    CHECK(gated_step(gated(1, 1, 2.0), Vec{1}, Vec{0}).h[0] == 0.5);
    CHECK(poly_gated_step(gated(1, 1, 2.0), Vec{1}, Vec{0}).h[0] == 0.5);
    auto p = gated(2, 1, 2.0);
    p.b = Vec{0.4, -0.2};
    const auto out = gated_step(p, Vec(2), Vec{0});
    CHECK(out.h[0] == doctest::Approx(0.5 * std::tanh(0.4)));
    CHECK(out.h[1] == doctest::Approx(0.5 * std::tanh(-0.2)));
  }
  SUBCASE("polynomial form at r = 0 agrees with the multiplicative gate") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = std::get<GatedParams>(oracle::random_cell(rng, CellKind::Gated, 3, 2, 0.0));
      Vec h = oracle::random_vec(rng, 3, 0.1, 1.0);
      const Vec x = oracle::random_vec(rng, 2);
      const Vec a = gated_step(p, h, x).h, b = poly_gated_step(p, h, x).h;
      CHECK(oracle::max_rel_error(a.values(), b.values(), 1.0) < 1e-14);
    }
  }
}

TEST_CASE("gru step") {
  CHECK(gru_step(gru(1, 1), Vec{2}, Vec{0}).h[0] == 1.0);
  auto p = gru(1, 1);
  p.b_z[0] = -10.0;
  CHECK(gru_step(p, Vec{1}, Vec{0}).h[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(gru_step(gru(2, 3), Vec(2), Vec(3)).h == Vec(2));
  SUBCASE("polynomial variant at zero parameters") {
    // h - z·h³ + z·0 with z = 1/2
    CHECK(gru_step(gru(1, 1, 2.0), Vec{1}, Vec{0}).h[0] == 0.5);
  }
}

TEST_CASE("parameter validation") {
  auto p = leaky(2, 1, 0.5);
  CHECK_NOTHROW(validate(CellParams{p}));
  p.alpha = 1.0;
  CHECK_THROWS_AS(validate(CellParams{p}), DomainError);
  p.alpha = 0.5;
  p.rate_r = -1.0;
  CHECK_THROWS_AS(validate(CellParams{p}), DomainError);
  p.rate_r = 0.0;
  p.W = Mat(3, 1);
  CHECK_THROWS_AS(validate(CellParams{p}), DimensionError);
}

TEST_CASE("tensor views follow the parameter layout") {
  CellParams p = make_params(CellKind::Gru, 3, 2, 1.0);
  const auto ts = tensors(p);
  REQUIRE(ts.size() == 9);
  CHECK(ts[0].name == "U_z");
  CHECK(ts[0].rows == 3);
  CHECK(ts[1].cols == 2);
  CHECK(ts[2].cols == 1);
  ts[2].values[1] = 4.0;
  CHECK(std::get<GruParams>(p).b_z[1] == 4.0);
  CHECK(hidden_dim(p) == 3);
  CHECK(input_dim(p) == 2);
  CHECK(rate_of(p) == 1.0);
  CHECK(tensors(make_params(CellKind::Leaky, 2, 1, 0.0))[0].name == "alpha");
}

TEST_CASE("analytic Jacobians") {
  SUBCASE("leaky with U = 0 is (1 - alpha) I") {
    auto p = leaky(3, 2, 0.3);
    p.W = Mat{{1, 2}, {-1, 0}, {0.5, 0.5}};
    p.b = Vec{0.2, -0.1, 0.4};
    CHECK(jacobian_step(CellParams{p}, Vec{0.1, -0.4, 2.0}, Vec{1, -1}) == 0.7 * Mat::identity(3));
  }
  SUBCASE("polynomial leaky reference point") {
    const Mat j = jacobian_step(CellParams{leaky(1, 1, 0.5, 2.0)}, Vec{1}, Vec{0});
    CHECK(j(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  }
  SUBCASE("gru leading term at zero parameters") {
    const CellParams p = gru(1, 1);
    const Mat j = jacobian_step(p, Vec{2}, Vec{0});
    CHECK(oracle::rel_frobenius(j, oracle::numeric_step_jacobian(p, Vec{2}, Vec{0})) < 1e-8);
  }
  SUBCASE("all kinds match finite differences") {
    Rng rng(2024);
    for (auto kind : {CellKind::Leaky, CellKind::Gated, CellKind::Gru}) {
      for (double r : {0.0, 0.5, 1.0, 2.0}) {
        for (int trial = 0; trial < 100; ++trial) {
          const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(3);
          const CellParams p = oracle::random_cell(rng, kind, n, d, r);
          const Vec h = oracle::random_vec(rng, n), x = oracle::random_vec(rng, d);
          const Mat analytic = jacobian_step(p, h, x);
          const Mat numeric = oracle::numeric_step_jacobian(p, h, x);
          INFO("kind ", to_string(kind), " r ", r, " trial ", trial);
          CHECK(oracle::rel_frobenius(analytic, numeric) < 1e-5);
        }
      }
    }
  }
  SUBCASE("the transposed, sign-flipped leaky form is not the derivative") {
    Rng rng(5);
    const auto p = std::get<LeakyParams>(oracle::random_cell(rng, CellKind::Leaky, 3, 2, 0.0));
    const Vec h = oracle::random_vec(rng, 3), x = oracle::random_vec(rng, 2);
    const Vec c = tanh_vec(affine(p.U, h, p.W, x, p.b));
    Vec dt(3);
    for (std::size_t i = 0; i < 3; ++i) dt[i] = 1.0 - c[i] * c[i];
    const Mat printed = (1.0 - p.alpha) * Mat::identity(3) - p.alpha * matmul(transpose(p.U), Mat::diagonal(dt));
    const Mat numeric = oracle::numeric_step_jacobian(CellParams{p}, h, x);
    CHECK(oracle::rel_frobenius(printed, numeric) > 1e-2);
    CHECK(oracle::rel_frobenius(jacobian_step(CellParams{p}, h, x), numeric) < 1e-7);
  }
}

TEST_CASE("free-input Jacobian product") {
  auto p = leaky(3, 2, 0.2);
  p.W = Mat{{1, -1}, {0.5, 2}, {0, 1}};
  p.b = Vec{0.3, 0.3, -0.6};
  Rng rng(9);
  Vec h{0.5, -0.5, 0.1};
  Mat prod = Mat::identity(3);
  const int k = 10;
  for (int t = 0; t < k; ++t) {
    const Vec x = oracle::random_vec(rng, 2);
    prod = matmul(jacobian_step(CellParams{p}, h, x), prod);
    h = leaky_step(p, h, x).h;
  }
  const Mat expected = std::pow(0.8, k) * Mat::identity(3);
  CHECK(oracle::rel_frobenius(prod, expected) < 1e-14);
}

TEST_CASE("backward step matches finite differences of one step") {
  Rng rng(77);
  for (auto kind : {CellKind::Leaky, CellKind::Gated, CellKind::Gru}) {
    for (double r : {0.0, 2.0}) {
      const CellParams p = oracle::random_cell(rng, kind, 3, 2, r);
      const Vec h = oracle::random_vec(rng, 3), x = oracle::random_vec(rng, 2), w = oracle::random_vec(rng, 3);
      CellParams grads = zeros_like(p);
      const auto res = step(p, h, x);
      const StepGradients g = backward_step(p, res.cache, w, grads);
      // scalar objective w·step(h, x)
      for (std::size_t j = 0; j < 2; ++j) {
        const double fd = oracle::central_difference(
            [&](double z) {
              Vec xx = x;
              xx[j] = z;
              return dot(w, step(p, h, xx).h);
            },
            x[j], 1e-6);
        CHECK(oracle::rel_error(g.dx[j], fd, 1e-6) < 1e-6);
      }
      for (std::size_t j = 0; j < 3; ++j) {
        const double fd = oracle::central_difference(
            [&](double z) {
              Vec hh = h;
              hh[j] = z;
              return dot(w, step(p, hh, x).h);
            },
            h[j], 1e-6);
        CHECK(oracle::rel_error(g.dh_prev[j], fd, 1e-6) < 1e-6);
      }
    }
  }
}

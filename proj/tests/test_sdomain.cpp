#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "srlr/error.hpp"
#include "srlr/sdomain.hpp"

using namespace srlr;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("expression folds into a rational function") {
  auto tf = expr_to_rational(parse_infix("5/(s+5)"));
  CHECK(tf.num == std::vector<double>{5.0});
  CHECK(tf.den == std::vector<double>{5.0, 1.0});

  auto folded = expr_to_rational(parse_infix("(2+3)/(s+1)"));
  CHECK(folded.num == std::vector<double>{5.0});

  auto sum = expr_to_rational(parse_infix("1/(s+1) + 1/(s+2)"));
  CHECK(sum.num == std::vector<double>{3.0, 2.0});
  CHECK(sum.den == std::vector<double>{2.0, 3.0, 1.0});

  CHECK(code_of([] {
          expr_to_rational(parse_infix("sin(s)"));
        }) == ErrorCode::SpecInvalid);
}

TEST_CASE("first-order lag realizes as a one-state system") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("5/(s+5)")));
  REQUIRE(ss.order() == 1);
  CHECK(ss.A(0, 0) == doctest::Approx(-5.0));
  CHECK(ss.B(0) == doctest::Approx(1.0));
  CHECK(ss.C(0) == doctest::Approx(5.0));
  CHECK(ss.D == doctest::Approx(0.0));
}

TEST_CASE("biproper controller splits into feedthrough and strictly proper part") {
  auto tf = expr_to_rational(
      parse_infix("(1050*s*s + 5030*s + 3000)/(s*s + 100*s)"));
  auto ss = tf_to_statespace(tf);
  REQUIRE(ss.order() == 2);
  CHECK(ss.D == doctest::Approx(1050.0));
  CHECK(ss.C(0) == doctest::Approx(3000.0));
  CHECK(ss.C(1) == doctest::Approx(-99970.0));
  CHECK(ss.A(0, 1) == doctest::Approx(1.0));
  CHECK(ss.A(1, 0) == doctest::Approx(0.0));
  CHECK(ss.A(1, 1) == doctest::Approx(-100.0));
  CHECK(ss.B(0) == doctest::Approx(0.0));
  CHECK(ss.B(1) == doctest::Approx(1.0));
}

TEST_CASE("ill-posed fractions are rejected") {
  CHECK(code_of([] {
          tf_to_statespace(expr_to_rational(parse_infix("s*s/(s+1)")));
        }) == ErrorCode::ImproperTransferFunction);
  CHECK(code_of([] {
          tf_to_statespace(expr_to_rational(parse_infix("1/(s-s)")));
        }) == ErrorCode::DegenerateDenominator);
}

TEST_CASE("normalization strips tiny leading coefficients and scales") {
  TransferFunction tf{{10.0, 1e-15}, {5.0, 2.0}};
  auto n = tf.normalized();
  CHECK(n.num == std::vector<double>{5.0});
  CHECK(n.den == std::vector<double>{2.5, 1.0});
}

TEST_CASE("pure gains carry zero states") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("3")));
  CHECK(ss.order() == 0);
  CHECK(ss.D == doctest::Approx(3.0));
  std::vector<double> u = {1.0, -2.0, 0.5};
  auto y = simulate(ss, u, 0.1);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(-6.0));
  CHECK(y[2] == doctest::Approx(1.5));
}

TEST_CASE("forward-difference step response tracks the analytic lag") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("1/(s+1)")));
  const double dt = 1e-3;
  std::vector<double> u(3001, 1.0);
  auto y = simulate(ss, u, dt);
  double worst = 0.0;
  for (size_t t = 0; t < y.size(); ++t)
    worst = std::max(worst, std::fabs(y[t] - (1.0 - std::exp(-dt * static_cast<double>(t)))));
  CHECK(worst < 5e-3);
  CHECK(y[0] == doctest::Approx(0.0));
}

TEST_CASE("halving the step halves the first-order integration error") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("1/(s+1)")));
  auto err_at_one = [&](double dt) {
    size_t steps = static_cast<size_t>(std::llround(1.0 / dt));
    std::vector<double> u(steps + 1, 1.0);
    auto y = simulate(ss, u, dt);
    return std::fabs(y[steps] - (1.0 - std::exp(-1.0)));
  };
  double ratio = err_at_one(0.01) / err_at_one(0.005);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("fourth-order integration is accurate at coarse steps") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("1/(s+1)")));
  std::vector<double> u(101, 1.0);
  auto y = simulate(ss, u, 0.01, IntegrationMethod::Rk4);
  CHECK(std::fabs(y[100] - (1.0 - std::exp(-1.0))) < 1e-6);
}

TEST_CASE("direct feedthrough appears instantly in the output") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("(s+2)/(s+1)")));
  std::vector<double> u(3001, 1.0);
  auto y = simulate(ss, u, 1e-3);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(std::fabs(y[3000] - (2.0 - std::exp(-3.0))) < 5e-3);
}

TEST_CASE("a nonzero initial state relaxes to rest") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("1/(s+1)")));
  std::vector<double> u(50, 0.0), out(50);
  std::vector<double> x0 = {2.0};
  REQUIRE(simulate_into(ss, u, 0.01, IntegrationMethod::Euler, out, x0));
  CHECK(out[0] == doctest::Approx(2.0));
  for (size_t k = 0; k < out.size(); ++k)
    CHECK(out[k] == doctest::Approx(2.0 * std::pow(0.99, static_cast<double>(k))));
}

TEST_CASE("unstable simulations abort with a NaN tail") {
  auto ss = tf_to_statespace(expr_to_rational(parse_infix("1/(s-40)")));
  std::vector<double> u(4000, 1.0), out(4000);
  CHECK(!simulate_into(ss, u, 0.05, IntegrationMethod::Euler, out));
  CHECK(std::isnan(out.back()));
  CHECK_THROWS_AS(simulate(ss, u, 0.05), Error);
}

TEST_CASE("non-rational candidates fail to bind") {
  Dataset d;
  d.inputs = {{1.0, 2.0}};
  d.target = {1.0, 2.0};
  SDomainModel model;
  CHECK(model.bind(Expression::parse({"x1"}), d) == nullptr);
  CHECK(model.bind(Expression::parse({"sin", "s"}), d) == nullptr);
  CHECK(model.bind(Expression::parse({"/", "1", "+", "s", "1"}), d) != nullptr);
}

TEST_CASE("search recovers a first-order lag from step data") {
  auto truth = tf_to_statespace(expr_to_rational(parse_infix("5/(s+5)")));
  Dataset d;
  d.dt = 0.01;
  d.inputs.resize(1);
  for (int t = 0; t < 300; ++t) {
    double tt = static_cast<double>(t);
    d.inputs[0].push_back(1.0 + 0.3 * std::sin(0.05 * tt) + 0.2 * std::sin(0.013 * tt + 1.0));
  }
  d.target = simulate(truth, d.inputs[0], d.dt);

  EngineConfig cfg;
  cfg.library = TokenLibrary::laplace(16);
  cfg.alpha = 0.0;
  cfg.phi = 0.1;
  cfg.batch_size = 200;
  cfg.budget = 8000;
  cfg.seed = 3;
  cfg.hidden_size = 24;
  DsrEngine eng(cfg);
  auto rec = recover_tf(eng, d);
  REQUIRE(rec.score.valid);
  CHECK(rec.score.nrmse < 1e-4);
  REQUIRE(rec.tf.den_degree() == 1);
  CHECK(rec.tf.num.back() == doctest::Approx(5.0).epsilon(1e-2));
  CHECK(rec.tf.den[0] == doctest::Approx(5.0).epsilon(1e-2));
}

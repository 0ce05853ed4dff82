#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "srlr/expr.hpp"

using namespace srlr;

namespace {

Dataset two_channel_data() {
  Dataset d;
  d.inputs = {{1, 2, 3, 4, 5, 6}, {10, 20, 30, 40, 50, 60}};
  d.target = {0, 0, 0, 0, 0, 0};
  return d;
}

}  // namespace

TEST_CASE("preorder parse and render") {
  Expression e = Expression::parse({"+", "x1", "x2"});
  CHECK(e.infix() == "(x1 + x2)");
  CHECK(e.complexity() == 3);

  CHECK_THROWS_WITH_AS(Expression::parse({"+", "x1"}), doctest::Contains("mid-tree"),
                       Error);
  try {
    Expression::parse({"+", "x1"});
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::IncompleteTree);
  }
  try {
    Expression::parse({"+", "x1", "x2", "x2"});
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::TrailingTokens);
  }
  try {
    Expression::parse({"frob"});
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownToken);
  }
}

TEST_CASE("complexity weights") {
  CHECK(Expression::parse({"x1"}).complexity() == 1);
  CHECK(Expression::parse({"sin", "x1"}).complexity() == 4);
  CHECK(Expression::parse({"/", "x1", "x2"}).complexity() == 4);
  CHECK(Expression::parse({"log", "x1"}).complexity() == 5);
  CHECK(Expression::parse({"exp", "const"}).complexity() == 5);
  CHECK(Expression::parse({"cos", "x1"}).complexity() == 4);
  // weights add over tokens
  CHECK(Expression::parse({"+", "sin", "x1", "/", "x1", "x2"}).complexity() == 9);
}

TEST_CASE("evaluation with bound constants") {
  Dataset d = two_channel_data();
  Expression e = Expression::parse({"*", "const", "x1"}, {0.8});
  CHECK(eval_at(e, d, 1) == doctest::Approx(1.6).epsilon(1e-12));

  Expression unbound = Expression::parse({"*", "const", "x1"});
  CHECK_THROWS_AS((void)eval_at(unbound, d, 1), Error);
}

TEST_CASE("step semantics: unit at zero and above") {
  Dataset d;
  d.inputs = {{-0.5, 0.0, 0.25}};
  d.target = {0, 0, 0};
  Expression e = Expression::parse({"step", "x1"});
  Program p(e);
  CHECK(p.eval(d, 0) == 0.0);
  CHECK(p.eval(d, 1) == 1.0);
  CHECK(p.eval(d, 2) == 1.0);
}

TEST_CASE("delayed variables index backwards") {
  Dataset d = two_channel_data();
  Expression e = Expression::parse({"x1(t-2)"});
  Program p(e);
  CHECK(p.eval(d, 5) == 4.0);
  CHECK(p.eval(d, 2) == 1.0);
  CHECK_THROWS_AS((void)p.eval(d, 1), Error);
  try {
    (void)p.eval(d, 1);
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::DelayOutOfRange);
  }
  CHECK(Expression::parse({"x1@2"}).infix() == "x1(t-2)");
}

TEST_CASE("channel bounds are enforced") {
  Dataset d;
  d.inputs = {{1, 2, 3}};
  d.target = {0, 0, 0};
  Expression e = Expression::parse({"x2"});
  try {
    (void)eval_at(e, d, 0);
    CHECK(false);
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ChannelMismatch);
  }
}

TEST_CASE("protected division and log return the invalid sentinel") {
  Dataset d;
  d.inputs = {{0.0, -1.0, 5e-13}};
  d.target = {0, 0, 0};
  Program div(Expression::parse({"/", "1", "x1"}));
  CHECK(std::isnan(div.eval(d, 0)));
  CHECK(std::isnan(div.eval(d, 2)));
  CHECK(div.eval(d, 1) == doctest::Approx(-1.0));
  Program lg(Expression::parse({"log", "x1"}));
  CHECK(std::isnan(lg.eval(d, 0)));
  CHECK(std::isnan(lg.eval(d, 1)));
  // overflow collapses to the sentinel as well
  Dataset big;
  big.inputs = {{1000.0}};
  big.target = {0};
  Program ex(Expression::parse({"exp", "x1"}));
  CHECK(std::isnan(ex.eval(big, 0)));
}

TEST_CASE("infix parser handles precedence and functions") {
  Expression e = parse_infix("x1 + x2 * 3");
  Dataset d = two_channel_data();
  CHECK(eval_at(e, d, 0) == doctest::Approx(31.0));
  Expression f = parse_infix("sin(x1) / (2 + x2(t-1))");
  CHECK(eval_at(f, d, 1) ==
        doctest::Approx(std::sin(2.0) / 12.0).epsilon(1e-12));
  Expression g = parse_infix("-2 * x1");
  CHECK(eval_at(g, d, 0) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(parse_infix("x1 +"), Error);
  CHECK_THROWS_AS(parse_infix("x1 x2"), Error);
}

TEST_CASE("render and reparse agree on values") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  const std::vector<double> const_pool = {0.5, 1.5, 2.0, 0.25, 3.0, -1.25};

  auto random_expr = [&](auto&& self, int depth) -> std::vector<std::string> {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 5);
    switch (pick(rng)) {
      case 0:
        return {"x1"};
      case 1:
        return {std::uniform_int_distribution<int>(0, 1)(rng) ? "x2" : "0.5"};
      case 2: {
        auto a = self(self, depth - 1);
        auto b = self(self, depth - 1);
        std::vector<std::string> out{"+"};
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), b.begin(), b.end());
        return out;
      }
      case 3: {
        auto a = self(self, depth - 1);
        auto b = self(self, depth - 1);
        std::vector<std::string> out{"*"};
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), b.begin(), b.end());
        return out;
      }
      case 4: {
        auto a = self(self, depth - 1);
        std::vector<std::string> out{"sin"};
        out.insert(out.end(), a.begin(), a.end());
        return out;
      }
      default: {
        auto a = self(self, depth - 1);
        auto b = self(self, depth - 1);
        std::vector<std::string> out{"/"};
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), b.begin(), b.end());
        return out;
      }
    }
  };

  for (int trial = 0; trial < 60; ++trial) {
    auto names = random_expr(random_expr, 4);
    Expression e = Expression::parse(names);
    if (e.placeholder_count() > 0) {
      std::vector<double> cs;
      for (int i = 0; i < e.placeholder_count(); ++i)
        cs.push_back(const_pool[i % const_pool.size()]);
      e = e.with_constants(std::move(cs));
    }
    Expression round = parse_infix(e.infix());
    Program p1(e), p2(round);
    Dataset d;
    d.inputs = {std::vector<double>(100), std::vector<double>(100)};
    d.target.assign(100, 0.0);
    for (int t = 0; t < 100; ++t) {
      d.inputs[0][t] = val(rng);
      d.inputs[1][t] = val(rng);
    }
    for (size_t t = 0; t < 100; t += 7) {
      double a = p1.eval(d, t);
      double b = p2.eval(d, t);
      if (std::isnan(a))
        CHECK(std::isnan(b));
      else
        CHECK(a == b);
    }
  }
}

TEST_CASE("six significant digit constants in infix") {
  Expression e = Expression::parse({"*", "const", "x1"}, {0.123456789});
  CHECK(e.infix() == "(0.123457 * x1)");
  Expression f = Expression::parse({"-", "x1", "-20"});
  CHECK(f.infix() == "(x1 - -20)");
  Expression g = parse_infix(f.infix());
  Dataset d = two_channel_data();
  CHECK(eval_at(g, d, 0) == 21.0);
}

#include "srlr/sdomain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "srlr/error.hpp"

namespace srlr {

namespace {

constexpr double kOverflowGuard = 1e12;

}  // namespace

std::vector<double> poly_add(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

std::vector<double> poly_sub(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
  return out;
}

std::vector<double> poly_mul(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

std::vector<double> poly_trim(std::vector<double> p, double rel_tol) {
  double peak = 0.0;
  for (double c : p) peak = std::max(peak, std::fabs(c));
  if (peak == 0.0) return {};
  while (!p.empty() && std::fabs(p.back()) <= rel_tol * peak) p.pop_back();
  return p;
}

TransferFunction TransferFunction::normalized(double rel_tol) const {
  TransferFunction out;
  out.num = poly_trim(num, rel_tol);
  out.den = poly_trim(den, rel_tol);
  if (out.den.empty()) raise(ErrorCode::DegenerateDenominator, "zero denominator");
  double scale = out.den.back();
  for (double& c : out.num) c /= scale;
  for (double& c : out.den) c /= scale;
  out.den.back() = 1.0;
  if (out.num.empty()) out.num = {0.0};
  return out;
}

std::string TransferFunction::str() const {
  auto poly_str = [](const std::vector<double>& p) {
    if (p.empty()) return std::string("0");
    std::ostringstream os;
    for (size_t i = 0; i < p.size(); ++i) {
      if (i) os << " + ";
      os << format_sig6(p[i]);
      if (i == 1) os << "*s";
      if (i > 1) os << "*s^" << i;
    }
    return os.str();
  };
  return "(" + poly_str(num) + ") / (" + poly_str(den) + ")";
}

namespace {

struct Rational {
  std::vector<double> num, den;
};

class RationalBuilder {
 public:
  RationalBuilder(const std::vector<Token>& tokens, std::span<const double> consts)
      : tokens_(tokens), consts_(consts) {}

  Rational run() {
    Rational r = build();
    if (pos_ != tokens_.size())
      raise(ErrorCode::TrailingTokens, "unconsumed tokens in rational form");
    return r;
  }

 private:
  Rational build() {
    if (pos_ >= tokens_.size())
      raise(ErrorCode::IncompleteTree, "rational form ended early");
    const Token& tok = tokens_[pos_++];
    switch (tok.op) {
      case Op::Lit:
        return {{tok.value}, {1.0}};
      case Op::Const: {
        if (slot_ >= consts_.size())
          raise(ErrorCode::UnboundConstant, "constant slot out of range");
        return {{consts_[slot_++]}, {1.0}};
      }
      case Op::S:
        return {{0.0, 1.0}, {1.0}};
      case Op::Add:
      case Op::Sub: {
        Rational a = build(), b = build();
        std::vector<double> cross_a = poly_mul(a.num, b.den);
        std::vector<double> cross_b = poly_mul(b.num, a.den);
        Rational r;
        r.num = tok.op == Op::Add ? poly_add(cross_a, cross_b)
                                  : poly_sub(cross_a, cross_b);
        r.den = poly_mul(a.den, b.den);
        return r;
      }
      case Op::Mul: {
        Rational a = build(), b = build();
        return {poly_mul(a.num, b.num), poly_mul(a.den, b.den)};
      }
      case Op::Div: {
        Rational a = build(), b = build();
        return {poly_mul(a.num, b.den), poly_mul(a.den, b.num)};
      }
      default:
        raise(ErrorCode::SpecInvalid,
              "token '" + token_name(tok) + "' has no rational form");
    }
  }

  const std::vector<Token>& tokens_;
  std::span<const double> consts_;
  size_t pos_ = 0;
  size_t slot_ = 0;
};

}  // namespace

TransferFunction expr_to_rational(const Expression& expr,
                                  std::span<const double> consts) {
  Rational r = RationalBuilder(expr.tokens(), consts).run();
  return {std::move(r.num), std::move(r.den)};
}

TransferFunction expr_to_rational(const Expression& expr) {
  return expr_to_rational(expr, expr.constants());
}

StateSpace tf_to_statespace(const TransferFunction& tf) {
  TransferFunction n = tf.normalized();
  const int p = n.den_degree();
  const int q = n.num_degree();
  if (q > p)
    raise(ErrorCode::ImproperTransferFunction,
          "numerator degree " + std::to_string(q) + " exceeds denominator degree " +
              std::to_string(p));
  StateSpace ss;
  if (p == 0) {
    ss.A.resize(0, 0);
    ss.B.resize(0);
    ss.C.resize(0);
    ss.D = n.num[0];
    return ss;
  }
  ss.A = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i + 1 < p; ++i) ss.A(i, i + 1) = 1.0;
  for (int j = 0; j < p; ++j) ss.A(p - 1, j) = -n.den[static_cast<size_t>(j)];
  ss.B = Eigen::VectorXd::Zero(p);
  ss.B(p - 1) = 1.0;
  ss.C = Eigen::VectorXd::Zero(p);
  if (q == p) {
    ss.D = n.num[static_cast<size_t>(p)];
    for (int i = 0; i < p; ++i)
      ss.C(i) = n.num[static_cast<size_t>(i)] - ss.D * n.den[static_cast<size_t>(i)];
  } else {
    ss.D = 0.0;
    for (int i = 0; i <= q; ++i) ss.C(i) = n.num[static_cast<size_t>(i)];
  }
  return ss;
}

bool simulate_into(const StateSpace& ss, std::span<const double> u, double dt,
                   IntegrationMethod method, std::span<double> out,
                   std::span<const double> x0) {
  const int p = ss.order();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  if (!x0.empty()) {
    if (static_cast<int>(x0.size()) != p)
      raise(ErrorCode::SpecInvalid, "initial state size mismatch");
    for (int i = 0; i < p; ++i) x(i) = x0[static_cast<size_t>(i)];
  }
  Eigen::VectorXd k1(p), k2(p), k3(p), k4(p), xt(p);
  const size_t n = std::min(u.size(), out.size());
  for (size_t t = 0; t < n; ++t) {
    double y = ss.D * u[t];
    if (p > 0) y += ss.C.dot(x);
    out[t] = y;
    if (!std::isfinite(y) || std::fabs(y) > kOverflowGuard) {
      for (size_t r = t; r < out.size(); ++r)
        out[r] = std::numeric_limits<double>::quiet_NaN();
      return false;
    }
    if (p == 0) continue;
    if (method == IntegrationMethod::Euler) {
      k1.noalias() = ss.A * x;
      k1 += ss.B * u[t];
      x += dt * k1;
    } else {
      k1.noalias() = ss.A * x;
      k1 += ss.B * u[t];
      xt = x + (0.5 * dt) * k1;
      k2.noalias() = ss.A * xt;
      k2 += ss.B * u[t];
      xt = x + (0.5 * dt) * k2;
      k3.noalias() = ss.A * xt;
      k3 += ss.B * u[t];
      xt = x + dt * k3;
      k4.noalias() = ss.A * xt;
      k4 += ss.B * u[t];
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return true;
}

std::vector<double> simulate(const StateSpace& ss, std::span<const double> u,
                             double dt, IntegrationMethod method) {
  std::vector<double> out(u.size());
  if (!simulate_into(ss, u, dt, method, out))
    raise(ErrorCode::UnstableStep, "simulated output exceeded overflow guard");
  return out;
}

namespace {

class SDomainEval final : public CandidateEval {
 public:
  SDomainEval(Expression expr, const Dataset& data, int max_degree,
              IntegrationMethod method)
      : expr_(std::move(expr)), data_(data), max_degree_(max_degree),
        method_(method) {}

  bool realize(std::span<const double> consts, StateSpace& ss) const {
    try {
      TransferFunction tf = expr_to_rational(expr_, consts).normalized();
      if (tf.den_degree() > max_degree_) return false;
      ss = tf_to_statespace(tf);
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  double sse(std::span<const double> consts,
             std::span<const size_t> idx) override {
    StateSpace ss;
    if (!realize(consts, ss)) return std::numeric_limits<double>::infinity();
    std::vector<double> yhat(data_.target.size());
    if (!simulate_into(ss, data_.inputs[0], data_.dt, method_, yhat))
      return std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (size_t t : idx) {
      double e = data_.target[t] - yhat[t];
      total += e * e;
    }
    return std::isfinite(total) ? total
                                : std::numeric_limits<double>::infinity();
  }

  std::vector<double> predict(std::span<const double> consts) override {
    std::vector<double> yhat(data_.target.size(),
                             std::numeric_limits<double>::quiet_NaN());
    StateSpace ss;
    if (!realize(consts, ss)) return yhat;
    simulate_into(ss, data_.inputs[0], data_.dt, method_, yhat);
    return yhat;
  }

 private:
  Expression expr_;
  const Dataset& data_;
  int max_degree_;
  IntegrationMethod method_;
};

}  // namespace

size_t SDomainModel::first_index(const Dataset&) const { return 0; }

std::unique_ptr<CandidateEval> SDomainModel::bind(const Expression& expr,
                                                  const Dataset& data) const {
  if (data.inputs.size() != 1) raise(ErrorCode::ChannelMismatch, "need one input");
  for (const Token& tok : expr.tokens()) {
    switch (tok.op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Lit:
      case Op::Const:
      case Op::S:
        break;
      default:
        return nullptr;
    }
  }
  return std::make_unique<SDomainEval>(expr, data, max_degree_, method_);
}

RecoveredTf recover_tf(DsrEngine& engine, const Dataset& data,
                       const SDomainModel& model) {
  TrainResult res = engine.train(model, data);
  if (!res.best.valid)
    raise(ErrorCode::NonConvergent, "no realizable rational candidate found");
  RecoveredTf out;
  out.tf = expr_to_rational(res.best.expr).normalized();
  out.score = std::move(res.best);
  return out;
}

}  // namespace srlr

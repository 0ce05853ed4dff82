#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srlr/error.hpp"

namespace srlr {

// Expression vocabulary. Var carries a channel index and a backward time
// shift; Const is a placeholder bound through a separate coefficient vector;
// Lit is an inline numeric literal; S is the Laplace variable for frequency
// domain work.
enum class Op : std::uint8_t {
  Add,
  Sub,
  Mul,
  Div,
  Sin,
  Cos,
  Log,
  Exp,
  Step,
  Var,
  Const,
  Lit,
  S,
};

int arity(Op op);

// Structural cost per token; expression complexity is the sum over tokens.
int token_weight(Op op);

struct Token {
  Op op = Op::Lit;
  std::int16_t var = 0;
  std::int16_t delay = 0;
  double value = 0.0;

  bool operator==(const Token& other) const;
};

Token make_op(Op op);
Token make_var(int channel, int delay = 0);
Token make_const();
Token make_lit(double value);

std::string token_name(const Token& token);
Token token_from_name(const std::string& name);

// Immutable expression tree stored as a pre-order token sequence plus a
// coefficient vector with one entry per Const placeholder (in pre-order).
class Expression {
 public:
  Expression() = default;

  // Validates that the sequence forms exactly one tree.
  static Expression from_preorder(std::vector<Token> tokens,
                                  std::vector<double> constants = {});
  static Expression parse(const std::vector<std::string>& names,
                          std::vector<double> constants = {});

  const std::vector<Token>& tokens() const { return tokens_; }
  const std::vector<double>& constants() const { return constants_; }
  bool constants_bound() const {
    return constants_.size() == static_cast<size_t>(placeholders_);
  }
  int complexity() const { return complexity_; }
  int placeholder_count() const { return placeholders_; }
  int max_delay() const { return max_delay_; }
  int channels_used() const { return channels_; }  // highest channel + 1
  bool uses_s() const { return uses_s_; }
  bool empty() const { return tokens_.empty(); }

  Expression with_constants(std::vector<double> constants) const;

  // Fully parenthesised rendering; literals and bound constants printed with
  // six significant digits.
  std::string infix() const;
  std::vector<std::string> token_names() const;

 private:
  std::vector<Token> tokens_;
  std::vector<double> constants_;
  int complexity_ = 0;
  int placeholders_ = 0;
  int max_delay_ = 0;
  int channels_ = 0;
  bool uses_s_ = false;
};

// General infix parser (precedence climbing); accepts everything infix()
// emits. Numbers become Lit tokens.
Expression parse_infix(const std::string& text);

struct Dataset {
  std::vector<std::vector<double>> inputs;  // [channel][t]
  std::vector<double> target;
  double dt = 1.0;
  std::vector<int> labels;  // optional per-point annotation

  size_t size() const { return target.size(); }
  size_t channels() const { return inputs.size(); }
};

// Postfix-compiled evaluator. Protected semantics: division with
// |denominator| < 1e-12, log of a non-positive argument, or any non-finite
// intermediate yields a quiet NaN for that point.
class Program {
 public:
  explicit Program(const Expression& expr);

  // Requires t >= max_delay (DelayOutOfRange otherwise) and enough input
  // channels (ChannelMismatch).
  double eval(const Dataset& data, size_t t, std::span<const double> consts) const;
  double eval(const Dataset& data, size_t t) const;

  // Predictions over [t0, data.size()); NaN where evaluation is invalid.
  std::vector<double> series(const Dataset& data, size_t t0,
                             std::span<const double> consts) const;
  std::vector<double> series(const Dataset& data, size_t t0) const;

  // Sum of squared residuals over the given timesteps; +inf if any point is
  // invalid. The scratch overload reuses `scratch` as the evaluation
  // workspace across calls (it is resized as needed), which keeps the
  // optimizer's inner loop allocation-free.
  double sse(const Dataset& data, std::span<const size_t> idx,
             std::span<const double> consts) const;
  double sse(const Dataset& data, std::span<const size_t> idx,
             std::span<const double> consts, std::vector<double>& scratch) const;

  int max_delay() const { return max_delay_; }
  int placeholder_count() const { return placeholders_; }

 private:
  double run(const Dataset& data, size_t t, std::span<const double> consts) const;
  void check(const Dataset& data, size_t t) const;

  std::vector<Token> postfix_;
  std::vector<int> const_slot_;  // per postfix token: placeholder index or -1
  std::vector<double> bound_;
  int max_delay_ = 0;
  int channels_ = 0;
  int placeholders_ = 0;
  int depth_ = 0;  // peak operand-stack depth of the postfix program
};

double eval_at(const Expression& expr, const Dataset& data, size_t t);
std::vector<double> eval_series(const Expression& expr, const Dataset& data,
                                size_t t0);

// Six-significant-digit rendering used inside infix text.
std::string format_sig6(double v);
// Nine-significant-digit rendering used by file emitters.
std::string format_sig9(double v);

}  // namespace srlr

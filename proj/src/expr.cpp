#include "srlr/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace srlr {

namespace {
constexpr double kQuietNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kDivGuard = 1e-12;
constexpr int kMaxStack = 80;
}  // namespace

int arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Sin:
    case Op::Cos:
    case Op::Log:
    case Op::Exp:
    case Op::Step:
      return 1;
    default:
      return 0;
  }
}

int token_weight(Op op) {
  switch (op) {
    case Op::Div:
      return 2;
    case Op::Sin:
    case Op::Cos:
      return 3;
    case Op::Log:
    case Op::Exp:
      return 4;
    default:
      return 1;
  }
}

bool Token::operator==(const Token& other) const {
  return op == other.op && var == other.var && delay == other.delay &&
         value == other.value;
}

Token make_op(Op op) {
  Token t;
  t.op = op;
  return t;
}

Token make_var(int channel, int delay) {
  Token t;
  t.op = Op::Var;
  t.var = static_cast<std::int16_t>(channel);
  t.delay = static_cast<std::int16_t>(delay);
  return t;
}

Token make_const() { return make_op(Op::Const); }

Token make_lit(double value) {
  Token t;
  t.op = Op::Lit;
  t.value = value;
  return t;
}

std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string format_sig9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string token_name(const Token& token) {
  switch (token.op) {
    case Op::Add:
      return "+";
    case Op::Sub:
      return "-";
    case Op::Mul:
      return "*";
    case Op::Div:
      return "/";
    case Op::Sin:
      return "sin";
    case Op::Cos:
      return "cos";
    case Op::Log:
      return "log";
    case Op::Exp:
      return "exp";
    case Op::Step:
      return "step";
    case Op::Const:
      return "const";
    case Op::Lit:
      return format_sig9(token.value);
    case Op::S:
      return "s";
    case Op::Var: {
      std::string out = "x" + std::to_string(token.var + 1);
      if (token.delay > 0) out += "(t-" + std::to_string(token.delay) + ")";
      return out;
    }
  }
  return "?";
}

Token token_from_name(const std::string& name) {
  if (name.empty()) raise(ErrorCode::UnknownToken, "empty token name");
  if (name == "+") return make_op(Op::Add);
  if (name == "-") return make_op(Op::Sub);
  if (name == "*") return make_op(Op::Mul);
  if (name == "/") return make_op(Op::Div);
  if (name == "sin") return make_op(Op::Sin);
  if (name == "cos") return make_op(Op::Cos);
  if (name == "log") return make_op(Op::Log);
  if (name == "exp") return make_op(Op::Exp);
  if (name == "step") return make_op(Op::Step);
  if (name == "const") return make_op(Op::Const);
  if (name == "s") return make_op(Op::S);
  if (name[0] == 'x' && name.size() > 1 && std::isdigit(name[1])) {
    size_t pos = 1;
    int channel = 0;
    while (pos < name.size() && std::isdigit(name[pos])) {
      channel = channel * 10 + (name[pos] - '0');
      ++pos;
    }
    if (channel < 1) raise(ErrorCode::UnknownToken, "bad channel in " + name);
    int delay = 0;
    if (pos < name.size()) {
      int n = 0;
      if (std::sscanf(name.c_str() + pos, "(t-%d)%n", &delay, &n) == 1 &&
          pos + n == name.size() && delay > 0) {
        // canonical delayed form
      } else if (std::sscanf(name.c_str() + pos, "@%d%n", &delay, &n) == 1 &&
                 pos + n == name.size() && delay > 0) {
        // compact alias
      } else {
        raise(ErrorCode::UnknownToken, "unrecognised token " + name);
      }
    }
    return make_var(channel - 1, delay);
  }
  char* end = nullptr;
  double v = std::strtod(name.c_str(), &end);
  if (end && *end == '\0' && end != name.c_str()) return make_lit(v);
  raise(ErrorCode::UnknownToken, "unrecognised token " + name);
}

Expression Expression::from_preorder(std::vector<Token> tokens,
                                     std::vector<double> constants) {
  Expression e;
  if (tokens.empty()) raise(ErrorCode::IncompleteTree, "no tokens");
  long open = 1;
  size_t used = 0;
  for (const Token& t : tokens) {
    if (open == 0) raise(ErrorCode::TrailingTokens, "tokens after complete tree");
    open += arity(t.op) - 1;
    ++used;
    e.complexity_ += token_weight(t.op);
    if (t.op == Op::Const) ++e.placeholders_;
    if (t.op == Op::Var) {
      e.max_delay_ = std::max(e.max_delay_, static_cast<int>(t.delay));
      e.channels_ = std::max(e.channels_, static_cast<int>(t.var) + 1);
    }
    if (t.op == Op::S) e.uses_s_ = true;
  }
  if (open != 0) raise(ErrorCode::IncompleteTree, "tokens exhausted mid-tree");
  (void)used;
  if (!constants.empty() &&
      constants.size() != static_cast<size_t>(e.placeholders_)) {
    raise(ErrorCode::UnboundConstant,
          "constant vector size does not match placeholder count");
  }
  e.tokens_ = std::move(tokens);
  e.constants_ = std::move(constants);
  return e;
}

Expression Expression::parse(const std::vector<std::string>& names,
                             std::vector<double> constants) {
  std::vector<Token> toks;
  toks.reserve(names.size());
  for (const auto& n : names) toks.push_back(token_from_name(n));
  return from_preorder(std::move(toks), std::move(constants));
}

Expression Expression::with_constants(std::vector<double> constants) const {
  if (constants.size() != static_cast<size_t>(placeholders_)) {
    raise(ErrorCode::UnboundConstant,
          "constant vector size does not match placeholder count");
  }
  Expression e = *this;
  e.constants_ = std::move(constants);
  return e;
}

namespace {

struct Renderer {
  const std::vector<Token>& toks;
  const std::vector<double>& consts;
  size_t pos = 0;
  int next_const = 0;

  std::string walk() {
    const Token& t = toks[pos++];
    switch (arity(t.op)) {
      case 2: {
        std::string a = walk();
        std::string b = walk();
        const char* op = t.op == Op::Add   ? " + "
                         : t.op == Op::Sub ? " - "
                         : t.op == Op::Mul ? " * "
                                           : " / ";
        return "(" + a + op + b + ")";
      }
      case 1: {
        std::string a = walk();
        return token_name(t) + "(" + a + ")";
      }
      default:
        if (t.op == Op::Const) {
          int slot = next_const++;
          if (static_cast<size_t>(slot) < consts.size())
            return format_sig6(consts[slot]);
          return "c" + std::to_string(slot);
        }
        if (t.op == Op::Lit) return format_sig6(t.value);
        return token_name(t);
    }
  }
};

}  // namespace

std::string Expression::infix() const {
  if (tokens_.empty()) return "";
  Renderer r{tokens_, constants_};
  return r.walk();
}

std::vector<std::string> Expression::token_names() const {
  std::vector<std::string> out;
  out.reserve(tokens_.size());
  for (const auto& t : tokens_) out.push_back(token_name(t));
  return out;
}

// ---------------------------------------------------------------------------
// Infix parsing

namespace {

struct Lexer {
  std::string_view text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  bool accept(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c))
      raise(ErrorCode::UnknownToken,
            std::string("expected '") + c + "' at offset " + std::to_string(pos));
  }
  bool number(double* out) {
    skip_ws();
    const char* begin = text.data() + pos;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) return false;
    // do not swallow a leading sign; unary minus is handled by the grammar
    if (*begin == '-' || *begin == '+') return false;
    pos += static_cast<size_t>(end - begin);
    *out = v;
    return true;
  }
  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    return std::string(text.substr(start, pos - start));
  }
};

struct InfixParser {
  Lexer lex;

  std::vector<Token> expr() {
    std::vector<Token> lhs = term();
    while (true) {
      if (lex.accept('+')) {
        std::vector<Token> rhs = term();
        lhs = join(Op::Add, lhs, rhs);
      } else if (lex.accept('-')) {
        std::vector<Token> rhs = term();
        lhs = join(Op::Sub, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  std::vector<Token> term() {
    std::vector<Token> lhs = factor();
    while (true) {
      if (lex.accept('*')) {
        std::vector<Token> rhs = factor();
        lhs = join(Op::Mul, lhs, rhs);
      } else if (lex.accept('/')) {
        std::vector<Token> rhs = factor();
        lhs = join(Op::Div, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  std::vector<Token> factor() {
    if (lex.accept('-')) {
      std::vector<Token> inner = factor();
      if (inner.size() == 1 && inner[0].op == Op::Lit) {
        inner[0].value = -inner[0].value;
        return inner;
      }
      std::vector<Token> out{make_op(Op::Sub), make_lit(0.0)};
      out.insert(out.end(), inner.begin(), inner.end());
      return out;
    }
    return primary();
  }

  std::vector<Token> primary() {
    double num;
    if (lex.number(&num)) return {make_lit(num)};
    if (lex.accept('(')) {
      std::vector<Token> inner = expr();
      lex.expect(')');
      return inner;
    }
    std::string id = lex.ident();
    if (id.empty())
      raise(ErrorCode::UnknownToken,
            "unexpected character at offset " + std::to_string(lex.pos));
    if (id == "s") return {make_op(Op::S)};
    if (id == "sin" || id == "cos" || id == "log" || id == "exp" || id == "step") {
      Op op = id == "sin"   ? Op::Sin
              : id == "cos" ? Op::Cos
              : id == "log" ? Op::Log
              : id == "exp" ? Op::Exp
                            : Op::Step;
      lex.expect('(');
      std::vector<Token> inner = expr();
      lex.expect(')');
      std::vector<Token> out{make_op(op)};
      out.insert(out.end(), inner.begin(), inner.end());
      return out;
    }
    if (id[0] == 'x' && id.size() > 1) {
      int channel = std::atoi(id.c_str() + 1);
      if (channel < 1) raise(ErrorCode::UnknownToken, "bad variable " + id);
      int delay = 0;
      size_t save = lex.pos;
      if (lex.accept('(')) {
        std::string t = lex.ident();
        if (t == "t" && lex.accept('-')) {
          double d;
          if (!lex.number(&d) || d < 1 || d != std::floor(d))
            raise(ErrorCode::UnknownToken, "bad delay for " + id);
          lex.expect(')');
          delay = static_cast<int>(d);
        } else {
          lex.pos = save;  // plain variable followed by parenthesised term
        }
      }
      return {make_var(channel - 1, delay)};
    }
    if (id[0] == 'c' && id.size() > 1) {
      // unbound placeholder reference, e.g. c0
      return {make_const()};
    }
    raise(ErrorCode::UnknownToken, "unrecognised identifier " + id);
  }

  static std::vector<Token> join(Op op, const std::vector<Token>& a,
                                 const std::vector<Token>& b) {
    std::vector<Token> out;
    out.reserve(1 + a.size() + b.size());
    out.push_back(make_op(op));
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }
};

}  // namespace

Expression parse_infix(const std::string& text) {
  InfixParser p{Lexer{text}};
  std::vector<Token> toks = p.expr();
  if (!p.lex.eof())
    raise(ErrorCode::TrailingTokens,
          "unconsumed input at offset " + std::to_string(p.lex.pos));
  // literals that came from rendered constants stay literals; placeholders
  // stay unbound
  return Expression::from_preorder(std::move(toks));
}

// ---------------------------------------------------------------------------
// Evaluation

Program::Program(const Expression& expr) {
  if (expr.uses_s())
    raise(ErrorCode::SpecInvalid,
          "frequency-domain expression cannot be evaluated pointwise");
  if (expr.empty()) raise(ErrorCode::IncompleteTree, "empty expression");
  max_delay_ = expr.max_delay();
  channels_ = expr.channels_used();
  placeholders_ = expr.placeholder_count();
  bound_ = expr.constants();

  // pre-order -> post-order, tracking placeholder slots in pre-order
  struct Item {
    size_t idx;
    int stage;
  };
  const auto& toks = expr.tokens();
  std::vector<int> slot_of(toks.size(), -1);
  int next = 0;
  for (size_t i = 0; i < toks.size(); ++i)
    if (toks[i].op == Op::Const) slot_of[i] = next++;

  // compute subtree extents to emit postfix iteratively
  std::vector<size_t> end(toks.size());
  for (size_t i = toks.size(); i-- > 0;) {
    size_t e = i + 1;
    for (int a = 0; a < arity(toks[i].op); ++a) e = end[e];
    end[i] = e;
  }
  struct Frame {
    size_t idx;
    int child;
  };
  std::vector<Frame> stack{{0, 0}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    int a = arity(toks[f.idx].op);
    if (f.child == a) {
      postfix_.push_back(toks[f.idx]);
      const_slot_.push_back(slot_of[f.idx]);
      stack.pop_back();
      continue;
    }
    size_t child_idx = f.idx + 1;
    for (int c = 0; c < f.child; ++c) child_idx = end[child_idx];
    ++f.child;
    stack.push_back({child_idx, 0});
  }

  int depth = 0;
  for (const Token& tk : postfix_) {
    depth += 1 - arity(tk.op);
    depth_ = std::max(depth_, depth);
  }
}

void Program::check(const Dataset& data, size_t t) const {
  if (static_cast<size_t>(channels_) > data.channels())
    raise(ErrorCode::ChannelMismatch,
          "expression references more channels than the dataset provides");
  if (t < static_cast<size_t>(max_delay_))
    raise(ErrorCode::DelayOutOfRange,
          "timestep precedes the largest referenced delay");
  if (t >= data.size())
    raise(ErrorCode::DelayOutOfRange, "timestep beyond dataset end");
}

double Program::run(const Dataset& data, size_t t,
                    std::span<const double> consts) const {
  double stack[kMaxStack];
  int sp = 0;
  const size_t n = postfix_.size();
  for (size_t i = 0; i < n; ++i) {
    const Token& tk = postfix_[i];
    switch (tk.op) {
      case Op::Var:
        stack[sp++] = data.inputs[tk.var][t - static_cast<size_t>(tk.delay)];
        break;
      case Op::Const:
        stack[sp++] = consts[const_slot_[i]];
        break;
      case Op::Lit:
        stack[sp++] = tk.value;
        break;
      case Op::Add:
        --sp;
        stack[sp - 1] += stack[sp];
        break;
      case Op::Sub:
        --sp;
        stack[sp - 1] -= stack[sp];
        break;
      case Op::Mul:
        --sp;
        stack[sp - 1] *= stack[sp];
        break;
      case Op::Div: {
        --sp;
        if (std::fabs(stack[sp]) < kDivGuard) return kQuietNan;
        stack[sp - 1] /= stack[sp];
        break;
      }
      case Op::Sin:
        stack[sp - 1] = std::sin(stack[sp - 1]);
        break;
      case Op::Cos:
        stack[sp - 1] = std::cos(stack[sp - 1]);
        break;
      case Op::Log:
        if (stack[sp - 1] <= 0.0) return kQuietNan;
        stack[sp - 1] = std::log(stack[sp - 1]);
        break;
      case Op::Exp:
        stack[sp - 1] = std::exp(stack[sp - 1]);
        break;
      case Op::Step:
        stack[sp - 1] = stack[sp - 1] >= 0.0 ? 1.0 : 0.0;
        break;
      case Op::S:
        return kQuietNan;
    }
  }
  double v = stack[0];
  return std::isfinite(v) ? v : kQuietNan;
}

double Program::eval(const Dataset& data, size_t t,
                     std::span<const double> consts) const {
  check(data, t);
  if (consts.size() < static_cast<size_t>(placeholders_))
    raise(ErrorCode::UnboundConstant, "expression has unbound constants");
  return run(data, t, consts);
}

double Program::eval(const Dataset& data, size_t t) const {
  return eval(data, t, bound_);
}

std::vector<double> Program::series(const Dataset& data, size_t t0,
                                    std::span<const double> consts) const {
  if (consts.size() < static_cast<size_t>(placeholders_))
    raise(ErrorCode::UnboundConstant, "expression has unbound constants");
  if (t0 < static_cast<size_t>(max_delay_))
    raise(ErrorCode::DelayOutOfRange, "series start precedes max delay");
  if (static_cast<size_t>(channels_) > data.channels())
    raise(ErrorCode::ChannelMismatch,
          "expression references more channels than the dataset provides");
  std::vector<double> out(data.size(), kQuietNan);
  for (size_t t = t0; t < data.size(); ++t) out[t] = run(data, t, consts);
  return out;
}

std::vector<double> Program::series(const Dataset& data, size_t t0) const {
  return series(data, t0, bound_);
}

double Program::sse(const Dataset& data, std::span<const size_t> idx,
                    std::span<const double> consts) const {
  std::vector<double> scratch;
  return sse(data, idx, consts, scratch);
}

// Column-major evaluation: every token processes all timesteps before the
// next token runs. Semantics match the per-point interpreter exactly,
// including the distinction between guard trips (division by a near-zero
// value, log of a non-positive value), which pin the point's final value to
// NaN, and organically arising NaN (e.g. inf - inf), which step() maps to 0.
double Program::sse(const Dataset& data, std::span<const size_t> idx,
                    std::span<const double> consts,
                    std::vector<double>& scratch) const {
  const size_t m = idx.size();
  if (m == 0) return 0.0;
  check(data, idx[0]);  // validates channels; delays checked per column below
  const size_t cols = static_cast<size_t>(depth_);
  scratch.assign(cols * m + m, 0.0);  // last m doubles: guard-trip flags
  double* dead = scratch.data() + cols * m;
  constexpr double qnan = std::numeric_limits<double>::quiet_NaN();

  size_t sp = 0;
  const size_t n = postfix_.size();
  for (size_t i = 0; i < n; ++i) {
    const Token& tk = postfix_[i];
    double* a = scratch.data() + (sp - 1) * m;
    switch (tk.op) {
      case Op::Var: {
        double* top = scratch.data() + sp * m;
        const double* col = data.inputs[static_cast<size_t>(tk.var)].data();
        const auto d = static_cast<size_t>(tk.delay);
        for (size_t j = 0; j < m; ++j) {
          if (idx[j] < d) check(data, idx[j]);  // raises DelayOutOfRange
          top[j] = col[idx[j] - d];
        }
        ++sp;
        break;
      }
      case Op::Const: {
        double* top = scratch.data() + sp * m;
        std::fill(top, top + m, consts[const_slot_[i]]);
        ++sp;
        break;
      }
      case Op::Lit: {
        double* top = scratch.data() + sp * m;
        std::fill(top, top + m, tk.value);
        ++sp;
        break;
      }
      case Op::Add: {
        const double* b = scratch.data() + (sp - 1) * m;
        a = scratch.data() + (sp - 2) * m;
        for (size_t j = 0; j < m; ++j) a[j] += b[j];
        --sp;
        break;
      }
      case Op::Sub: {
        const double* b = scratch.data() + (sp - 1) * m;
        a = scratch.data() + (sp - 2) * m;
        for (size_t j = 0; j < m; ++j) a[j] -= b[j];
        --sp;
        break;
      }
      case Op::Mul: {
        const double* b = scratch.data() + (sp - 1) * m;
        a = scratch.data() + (sp - 2) * m;
        for (size_t j = 0; j < m; ++j) a[j] *= b[j];
        --sp;
        break;
      }
      case Op::Div: {
        const double* b = scratch.data() + (sp - 1) * m;
        a = scratch.data() + (sp - 2) * m;
        for (size_t j = 0; j < m; ++j) {
          if (std::fabs(b[j]) < kDivGuard) {
            a[j] = qnan;
            dead[j] = 1.0;
          } else {
            a[j] /= b[j];
          }
        }
        --sp;
        break;
      }
      case Op::Sin:
        for (size_t j = 0; j < m; ++j) a[j] = std::sin(a[j]);
        break;
      case Op::Cos:
        for (size_t j = 0; j < m; ++j) a[j] = std::cos(a[j]);
        break;
      case Op::Log:
        for (size_t j = 0; j < m; ++j) {
          if (a[j] <= 0.0) {
            a[j] = qnan;
            dead[j] = 1.0;
          } else {
            a[j] = std::log(a[j]);
          }
        }
        break;
      case Op::Exp:
        for (size_t j = 0; j < m; ++j) a[j] = std::exp(a[j]);
        break;
      case Op::Step:
        for (size_t j = 0; j < m; ++j)
          if (dead[j] == 0.0) a[j] = a[j] >= 0.0 ? 1.0 : 0.0;
        break;
      case Op::S:
        return std::numeric_limits<double>::infinity();
    }
  }

  const double* out = scratch.data();
  double acc = 0.0;
  for (size_t j = 0; j < m; ++j) {
    double v = out[j];
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    double d = v - data.target[idx[j]];
    acc += d * d;
  }
  return acc;
}

double eval_at(const Expression& expr, const Dataset& data, size_t t) {
  return Program(expr).eval(data, t);
}

std::vector<double> eval_series(const Expression& expr, const Dataset& data,
                                size_t t0) {
  return Program(expr).series(data, t0);
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IncompleteTree: return "IncompleteTree";
    case ErrorCode::TrailingTokens: return "TrailingTokens";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::UnboundConstant: return "UnboundConstant";
    case ErrorCode::DelayOutOfRange: return "DelayOutOfRange";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::OptimizerDiverged: return "OptimizerDiverged";
    case ErrorCode::ImproperTransferFunction: return "ImproperTransferFunction";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::UnstableStep: return "UnstableStep";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::InsufficientBoundaryPoints: return "InsufficientBoundaryPoints";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace srlr

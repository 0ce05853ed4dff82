#include "srlr/policy.hpp"

#include <algorithm>
#include <cmath>

namespace srlr {

namespace {
constexpr double kTinyProb = 1e-300;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

bool TokenLibrary::has_leaf() const {
  return std::any_of(tokens.begin(), tokens.end(),
                     [](const Token& t) { return arity(t.op) == 0; });
}

TokenLibrary TokenLibrary::from_names(const std::vector<std::string>& names,
                                      int max_length, int max_constants) {
  TokenLibrary lib;
  lib.max_length = max_length;
  lib.max_constants = max_constants;
  for (const auto& n : names) lib.tokens.push_back(token_from_name(n));
  if (lib.tokens.empty() || !lib.has_leaf())
    raise(ErrorCode::SpecInvalid, "token library needs at least one leaf");
  return lib;
}

TokenLibrary TokenLibrary::time_domain(int channels, int max_delay,
                                       bool with_transcendental, bool with_step,
                                       int max_length) {
  TokenLibrary lib;
  lib.max_length = max_length;
  for (Op op : {Op::Add, Op::Sub, Op::Mul, Op::Div}) lib.tokens.push_back(make_op(op));
  if (with_transcendental)
    for (Op op : {Op::Sin, Op::Cos, Op::Log, Op::Exp})
      lib.tokens.push_back(make_op(op));
  if (with_step) lib.tokens.push_back(make_op(Op::Step));
  lib.tokens.push_back(make_const());
  for (int c = 0; c < channels; ++c)
    for (int d = 0; d <= max_delay; ++d) lib.tokens.push_back(make_var(c, d));
  return lib;
}

TokenLibrary TokenLibrary::laplace(int max_length) {
  TokenLibrary lib;
  lib.max_length = max_length;
  for (Op op : {Op::Add, Op::Sub, Op::Mul, Op::Div}) lib.tokens.push_back(make_op(op));
  lib.tokens.push_back(make_const());
  lib.tokens.push_back(make_op(Op::S));
  return lib;
}

// ---------------------------------------------------------------------------

TreeBuilder::TreeBuilder(const TokenLibrary& lib) : lib_(&lib) {}

std::vector<std::uint8_t> TreeBuilder::legal_mask() const {
  const auto& toks = lib_->tokens;
  std::vector<std::uint8_t> mask(toks.size(), 0);
  const int open = stack_.empty()
                       ? (seq_.empty() ? 1 : 0)
                       : [&] {
                           int n = 0;
                           for (const auto& o : stack_) n += o.remaining;
                           return n;
                         }();
  const int tokens_left = lib_->max_length - length();
  const Token* parent_tok =
      parent_ >= 0 ? &toks[static_cast<size_t>(parent_)] : nullptr;
  const bool parent_unary = parent_tok && arity(parent_tok->op) == 1;

  bool any = false;
  for (size_t i = 0; i < toks.size(); ++i) {
    const Token& t = toks[i];
    if (arity(t.op) > tokens_left - open) continue;
    if (parent_unary && t.op == parent_tok->op) continue;
    if (parent_unary && t.op == Op::Const) continue;
    if (t.op == Op::Const && consts_used_ >= lib_->max_constants) continue;
    mask[i] = 1;
    any = true;
  }
  if (!any) {
    // shortest legal completion: any leaf, avoiding Const when possible
    for (size_t i = 0; i < toks.size(); ++i)
      if (arity(toks[i].op) == 0 && toks[i].op != Op::Const) {
        mask[i] = 1;
        any = true;
      }
    if (!any)
      for (size_t i = 0; i < toks.size(); ++i)
        if (arity(toks[i].op) == 0) mask[i] = 1;
  }
  return mask;
}

void TreeBuilder::push(int lib_index) {
  const Token& tok = lib_->tokens[static_cast<size_t>(lib_index)];
  seq_.push_back(lib_index);
  if (tok.op == Op::Const) ++consts_used_;
  const int a = arity(tok.op);
  if (a > 0) {
    stack_.push_back({lib_index, a, -1});
  } else {
    int completed = lib_index;
    while (!stack_.empty()) {
      Open& top = stack_.back();
      --top.remaining;
      top.last_child_root = completed;
      if (top.remaining == 0) {
        completed = top.token;
        stack_.pop_back();
      } else {
        break;
      }
    }
    if (stack_.empty()) done_ = true;
  }
  refresh_context();
}

void TreeBuilder::refresh_context() {
  if (stack_.empty()) {
    parent_ = -1;
    sibling_ = -1;
  } else {
    parent_ = stack_.back().token;
    sibling_ = stack_.back().last_child_root;
  }
}

// ---------------------------------------------------------------------------

GruPolicy::GruPolicy(int vocab, int hidden, std::uint64_t seed)
    : vocab_(vocab), hidden_(hidden), input_(2 * (vocab + 1)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.08, 0.08);
  auto mat = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = u(rng);
    return m;
  };
  auto vec = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = u(rng);
    return v;
  };
  mats_ = {mat(hidden_, input_), mat(hidden_, hidden_), mat(hidden_, input_),
           mat(hidden_, hidden_), mat(hidden_, input_), mat(hidden_, hidden_),
           mat(vocab_, hidden_)};
  vecs_ = {vec(hidden_), vec(hidden_), vec(hidden_), vec(vocab_)};
  for (const auto& m : mats_) {
    adam_m_mats_.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    adam_v_mats_.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  }
  for (const auto& v : vecs_) {
    adam_m_vecs_.push_back(Eigen::VectorXd::Zero(v.size()));
    adam_v_vecs_.push_back(Eigen::VectorXd::Zero(v.size()));
  }
}

Eigen::VectorXd GruPolicy::input_vector(int parent, int sibling) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(input_);
  x(parent + 1) = 1.0;
  x(vocab_ + 1 + sibling + 1) = 1.0;
  return x;
}

namespace {

// softmax over allowed entries; p is zero elsewhere; returns log Z shifted max
void masked_softmax(const Eigen::VectorXd& logits,
                    const std::vector<std::uint8_t>& mask, Eigen::VectorXd* p,
                    double* log_norm, double* max_logit) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < logits.size(); ++i)
    if (mask[static_cast<size_t>(i)]) mx = std::max(mx, logits(i));
  double z = 0.0;
  p->setZero(logits.size());
  for (int i = 0; i < logits.size(); ++i)
    if (mask[static_cast<size_t>(i)]) {
      double e = std::exp(logits(i) - mx);
      (*p)(i) = e;
      z += e;
    }
  *p /= z;
  *log_norm = std::log(z);
  *max_logit = mx;
}

}  // namespace

void GruPolicy::forward(const PolicyTrace& trace,
                        std::vector<StepState>* states) const {
  const Eigen::MatrixXd& Wz = mats_[0];
  const Eigen::MatrixXd& Uz = mats_[1];
  const Eigen::MatrixXd& Wr = mats_[2];
  const Eigen::MatrixXd& Ur = mats_[3];
  const Eigen::MatrixXd& Wg = mats_[4];
  const Eigen::MatrixXd& Ug = mats_[5];
  const Eigen::MatrixXd& Wo = mats_[6];
  const Eigen::VectorXd& bz = vecs_[0];
  const Eigen::VectorXd& br = vecs_[1];
  const Eigen::VectorXd& bg = vecs_[2];
  const Eigen::VectorXd& bo = vecs_[3];

  Eigen::VectorXd h = Eigen::VectorXd::Zero(hidden_);
  states->clear();
  states->reserve(trace.chosen.size());
  for (size_t t = 0; t < trace.chosen.size(); ++t) {
    StepState st;
    st.x = input_vector(trace.parent[t], trace.sibling[t]);
    Eigen::VectorXd az = Wz * st.x + Uz * h + bz;
    Eigen::VectorXd ar = Wr * st.x + Ur * h + br;
    st.z = az.unaryExpr([](double v) { return sigmoid(v); });
    st.r = ar.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd q = st.r.cwiseProduct(h);
    Eigen::VectorXd ag = Wg * st.x + Ug * q + bg;
    st.g = ag.array().tanh();
    st.h = (Eigen::VectorXd::Ones(hidden_) - st.z).cwiseProduct(h) +
           st.z.cwiseProduct(st.g);
    Eigen::VectorXd logits = Wo * st.h + bo;
    double log_norm, mx;
    masked_softmax(logits, trace.mask[t], &st.p, &log_norm, &mx);
    states->push_back(std::move(st));
    h = states->back().h;
  }
}

std::vector<int> GruPolicy::sample(const TokenLibrary& lib, std::mt19937_64& rng,
                                   PolicyTrace* trace) const {
  TreeBuilder builder(lib);
  PolicyTrace local;
  PolicyTrace* tr = trace ? trace : &local;
  tr->chosen.clear();
  tr->parent.clear();
  tr->sibling.clear();
  tr->mask.clear();
  tr->log_prob = 0.0;

  const auto& Wo = mats_[6];
  const auto& bo = vecs_[3];
  Eigen::VectorXd h = Eigen::VectorXd::Zero(hidden_);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  while (!builder.done()) {
    auto mask = builder.legal_mask();
    Eigen::VectorXd x = input_vector(builder.parent(), builder.sibling());
    Eigen::VectorXd z =
        (mats_[0] * x + mats_[1] * h + vecs_[0]).unaryExpr([](double v) {
          return sigmoid(v);
        });
    Eigen::VectorXd r =
        (mats_[2] * x + mats_[3] * h + vecs_[1]).unaryExpr([](double v) {
          return sigmoid(v);
        });
    Eigen::VectorXd g =
        (mats_[4] * x + mats_[5] * r.cwiseProduct(h) + vecs_[2]).array().tanh();
    h = (Eigen::VectorXd::Ones(hidden_) - z).cwiseProduct(h) + z.cwiseProduct(g);
    Eigen::VectorXd logits = Wo * h + bo;
    Eigen::VectorXd p;
    double log_norm, mx;
    masked_softmax(logits, mask, &p, &log_norm, &mx);

    double u = uni(rng);
    int choice = -1;
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      acc += p(i);
      if (u <= acc) {
        choice = i;
        break;
      }
    }
    if (choice < 0) {  // numerical remainder: take the last allowed entry
      for (int i = p.size() - 1; i >= 0; --i)
        if (mask[static_cast<size_t>(i)]) {
          choice = i;
          break;
        }
    }

    tr->parent.push_back(builder.parent());
    tr->sibling.push_back(builder.sibling());
    tr->mask.push_back(std::move(mask));
    tr->chosen.push_back(choice);
    tr->log_prob += logits(choice) - mx - log_norm;
    builder.push(choice);
  }
  return builder.sequence();
}

double GruPolicy::log_prob(const PolicyTrace& trace) const {
  std::vector<StepState> states;
  forward(trace, &states);
  double lp = 0.0;
  for (size_t t = 0; t < states.size(); ++t) {
    double pk = states[t].p(trace.chosen[t]);
    lp += std::log(std::max(pk, kTinyProb));
  }
  return lp;
}

void GruPolicy::Gradients::setZero() {
  for (auto& m : mats) m.setZero();
  for (auto& v : vecs) v.setZero();
}

GruPolicy::Gradients GruPolicy::zero_gradients() const {
  Gradients g;
  for (const auto& m : mats_) g.mats.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : vecs_) g.vecs.push_back(Eigen::VectorXd::Zero(v.size()));
  return g;
}

void GruPolicy::accumulate(const PolicyTrace& trace, double coeff,
                           double entropy_coeff, Gradients* grads) const {
  if (trace.chosen.empty()) return;
  std::vector<StepState> states;
  forward(trace, &states);

  const auto& Uz = mats_[1];
  const auto& Ur = mats_[3];
  const auto& Ug = mats_[5];
  const auto& Wo = mats_[6];

  const size_t T = states.size();
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hidden_);
  for (size_t t = T; t-- > 0;) {
    const StepState& st = states[t];
    const Eigen::VectorXd& h_prev =
        t == 0 ? Eigen::VectorXd::Zero(hidden_).eval() : states[t - 1].h;

    // d objective / d logits
    double H = 0.0;
    for (int i = 0; i < st.p.size(); ++i)
      if (st.p(i) > kTinyProb) H -= st.p(i) * std::log(st.p(i));
    Eigen::VectorXd dlogit = Eigen::VectorXd::Zero(vocab_);
    for (int i = 0; i < st.p.size(); ++i) {
      if (!trace.mask[t][static_cast<size_t>(i)]) continue;
      double e = coeff * ((i == trace.chosen[t] ? 1.0 : 0.0) - st.p(i));
      if (entropy_coeff != 0.0 && st.p(i) > kTinyProb)
        e -= entropy_coeff * st.p(i) * (std::log(st.p(i)) + H);
      dlogit(i) = e;
    }

    grads->mats[6] += dlogit * st.h.transpose();
    grads->vecs[3] += dlogit;
    Eigen::VectorXd dh = Wo.transpose() * dlogit + dh_next;

    Eigen::VectorXd dz = dh.cwiseProduct(st.g - h_prev);
    Eigen::VectorXd dg = dh.cwiseProduct(st.z);
    Eigen::VectorXd dh_prev =
        dh.cwiseProduct(Eigen::VectorXd::Ones(hidden_) - st.z);

    Eigen::VectorXd dag =
        dg.cwiseProduct(Eigen::VectorXd::Ones(hidden_) - st.g.cwiseProduct(st.g));
    grads->mats[4] += dag * st.x.transpose();
    grads->vecs[2] += dag;
    grads->mats[5] += dag * st.r.cwiseProduct(h_prev).transpose();
    Eigen::VectorXd dq = Ug.transpose() * dag;
    Eigen::VectorXd dr = dq.cwiseProduct(h_prev);
    dh_prev += dq.cwiseProduct(st.r);

    Eigen::VectorXd dar = dr.cwiseProduct(st.r).cwiseProduct(
        Eigen::VectorXd::Ones(hidden_) - st.r);
    grads->mats[2] += dar * st.x.transpose();
    grads->vecs[1] += dar;
    grads->mats[3] += dar * h_prev.transpose();
    dh_prev += Ur.transpose() * dar;

    Eigen::VectorXd daz = dz.cwiseProduct(st.z).cwiseProduct(
        Eigen::VectorXd::Ones(hidden_) - st.z);
    grads->mats[0] += daz * st.x.transpose();
    grads->vecs[0] += daz;
    grads->mats[1] += daz * h_prev.transpose();
    dh_prev += Uz.transpose() * daz;

    dh_next = dh_prev;
  }
}

void GruPolicy::adam_step(Gradients& grads, double lr, double clip_norm) {
  double norm2 = 0.0;
  for (const auto& m : grads.mats) norm2 += m.squaredNorm();
  for (const auto& v : grads.vecs) norm2 += v.squaredNorm();
  double norm = std::sqrt(norm2);
  if (clip_norm > 0.0 && norm > clip_norm) {
    double scale = clip_norm / norm;
    for (auto& m : grads.mats) m *= scale;
    for (auto& v : grads.vecs) v *= scale;
  }

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++adam_t_;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  for (size_t i = 0; i < mats_.size(); ++i) {
    adam_m_mats_[i] = b1 * adam_m_mats_[i] + (1 - b1) * grads.mats[i];
    adam_v_mats_[i] =
        b2 * adam_v_mats_[i] + (1 - b2) * grads.mats[i].cwiseProduct(grads.mats[i]);
    // gradient ascent
    mats_[i] += lr * (adam_m_mats_[i] / c1)
                    .cwiseQuotient(((adam_v_mats_[i] / c2).cwiseSqrt().array() + eps)
                                       .matrix());
  }
  for (size_t i = 0; i < vecs_.size(); ++i) {
    adam_m_vecs_[i] = b1 * adam_m_vecs_[i] + (1 - b1) * grads.vecs[i];
    adam_v_vecs_[i] =
        b2 * adam_v_vecs_[i] + (1 - b2) * grads.vecs[i].cwiseProduct(grads.vecs[i]);
    vecs_[i] += lr * (adam_m_vecs_[i] / c1)
                    .cwiseQuotient(((adam_v_vecs_[i] / c2).cwiseSqrt().array() + eps)
                                       .matrix());
  }
}

std::vector<double*> GruPolicy::parameters() {
  std::vector<double*> out;
  out.reserve(parameter_count());
  for (auto& m : mats_)
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
  for (auto& v : vecs_)
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v.data() + i);
  return out;
}

size_t GruPolicy::parameter_count() const {
  size_t n = 0;
  for (const auto& m : mats_) n += static_cast<size_t>(m.size());
  for (const auto& v : vecs_) n += static_cast<size_t>(v.size());
  return n;
}

Expression expression_from_indices(const TokenLibrary& lib,
                                   const std::vector<int>& indices) {
  std::vector<Token> toks;
  toks.reserve(indices.size());
  for (int i : indices) toks.push_back(lib.tokens[static_cast<size_t>(i)]);
  return Expression::from_preorder(std::move(toks));
}

double policy_gradient_check(int vocab_channels, int hidden, std::uint64_t seed,
                             double fd_step) {
  TokenLibrary lib = TokenLibrary::time_domain(vocab_channels, 0, true, false, 16);
  GruPolicy policy(static_cast<int>(lib.size()), hidden, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  PolicyTrace trace;
  policy.sample(lib, rng, &trace);

  auto grads = policy.zero_gradients();
  policy.accumulate(trace, 1.0, 0.0, &grads);
  std::vector<double> analytic;
  for (const auto& m : grads.mats)
    for (Eigen::Index i = 0; i < m.size(); ++i) analytic.push_back(m.data()[i]);
  for (const auto& v : grads.vecs)
    for (Eigen::Index i = 0; i < v.size(); ++i) analytic.push_back(v.data()[i]);

  // Floor the denominator at a fraction of the largest gradient entry:
  // near-zero components otherwise amplify the cancellation noise of the
  // central difference into spurious relative error.
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::fabs(a));
  double floor = 1e-4 * (1.0 + scale);

  auto params = policy.parameters();
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    double saved = *params[i];
    *params[i] = saved + fd_step;
    double lp1 = policy.log_prob(trace);
    *params[i] = saved - fd_step;
    double lp2 = policy.log_prob(trace);
    *params[i] = saved;
    double fd = (lp1 - lp2) / (2.0 * fd_step);
    double denom = std::max({std::fabs(analytic[i]), std::fabs(fd), floor});
    worst = std::max(worst, std::fabs(analytic[i] - fd) / denom);
  }
  return worst;
}

}  // namespace srlr

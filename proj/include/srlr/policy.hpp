#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "srlr/expr.hpp"

namespace srlr {

// Sampling vocabulary plus the structural limits enforced while sampling.
struct TokenLibrary {
  std::vector<Token> tokens;
  int max_length = 30;
  int max_constants = 5;

  size_t size() const { return tokens.size(); }
  bool has_leaf() const;
  static TokenLibrary from_names(const std::vector<std::string>& names,
                                 int max_length = 30, int max_constants = 5);
  // {+,-,*,/,const} plus x<c>(t-d) for every channel and delay 0..max_delay;
  // optional trig/exp/log and step extensions.
  static TokenLibrary time_domain(int channels, int max_delay,
                                  bool with_transcendental = false,
                                  bool with_step = false, int max_length = 30);
  // {+,-,*,/,const,s}
  static TokenLibrary laplace(int max_length = 30);
};

// Incremental pre-order construction state: tracks open argument slots and
// the parent/sibling context that conditions the next sample.
class TreeBuilder {
 public:
  explicit TreeBuilder(const TokenLibrary& lib);

  bool done() const { return done_; }
  int parent() const { return parent_; }
  int sibling() const { return sibling_; }
  int length() const { return static_cast<int>(seq_.size()); }
  const std::vector<int>& sequence() const { return seq_; }

  // Mask of library entries legal at the next position.
  std::vector<std::uint8_t> legal_mask() const;
  void push(int lib_index);

 private:
  struct Open {
    int token;     // library index of the operator
    int remaining; // children still to fill
    int last_child_root;
  };
  const TokenLibrary* lib_;
  std::vector<Open> stack_;
  std::vector<int> seq_;
  int consts_used_ = 0;
  int parent_ = -1;
  int sibling_ = -1;
  bool done_ = false;

  void refresh_context();
};

struct PolicyTrace {
  std::vector<int> chosen;
  std::vector<int> parent;
  std::vector<int> sibling;
  std::vector<std::vector<std::uint8_t>> mask;
  double log_prob = 0.0;
};

// Single gated recurrent cell with an output projection over the vocabulary.
// The next-token distribution is conditioned on one-hot parent and sibling
// context. All gradients are computed by hand and verified against finite
// differences in the test suite.
class GruPolicy {
 public:
  GruPolicy(int vocab, int hidden, std::uint64_t seed);

  int vocab() const { return vocab_; }
  int hidden() const { return hidden_; }

  std::vector<int> sample(const TokenLibrary& lib, std::mt19937_64& rng,
                          PolicyTrace* trace = nullptr) const;

  // Log-probability of a recorded trace under the current parameters.
  double log_prob(const PolicyTrace& trace) const;

  struct Gradients {
    std::vector<Eigen::MatrixXd> mats;
    std::vector<Eigen::VectorXd> vecs;
    void setZero();
  };
  Gradients zero_gradients() const;

  // Adds d/dtheta of [coeff * log p(trace) + entropy_coeff * sum_t H_t].
  void accumulate(const PolicyTrace& trace, double coeff, double entropy_coeff,
                  Gradients* grads) const;

  // Gradient-ascent step with Adam; gradients are first clipped to a global
  // norm bound to survive the unbounded reward scale.
  void adam_step(Gradients& grads, double lr, double clip_norm = 5.0);

  // Flat parameter access used by the finite-difference check.
  std::vector<double*> parameters();
  size_t parameter_count() const;

 private:
  int vocab_;
  int hidden_;
  int input_;

  // order: Wz Uz Wr Ur Wg Ug Wo | bz br bg bo
  std::vector<Eigen::MatrixXd> mats_;
  std::vector<Eigen::VectorXd> vecs_;
  std::vector<Eigen::MatrixXd> adam_m_mats_, adam_v_mats_;
  std::vector<Eigen::VectorXd> adam_m_vecs_, adam_v_vecs_;
  long adam_t_ = 0;

  struct StepState {
    Eigen::VectorXd x, z, r, g, h, p;
  };
  void forward(const PolicyTrace& trace, std::vector<StepState>* states) const;
  Eigen::VectorXd input_vector(int parent, int sibling) const;
};

// Max relative error between analytic and central finite-difference gradients
// of log p over every parameter, for a freshly sampled sequence.
double policy_gradient_check(int vocab_channels, int hidden,
                             std::uint64_t seed, double fd_step = 1e-5);

Expression expression_from_indices(const TokenLibrary& lib,
                                   const std::vector<int>& indices);

}  // namespace srlr

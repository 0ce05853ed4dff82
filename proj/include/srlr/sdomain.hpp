#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "srlr/engine.hpp"
#include "srlr/expr.hpp"

namespace srlr {

// Polynomials are coefficient vectors in ascending powers of s; an empty
// vector is the zero polynomial.
std::vector<double> poly_add(std::span<const double> a, std::span<const double> b);
std::vector<double> poly_sub(std::span<const double> a, std::span<const double> b);
std::vector<double> poly_mul(std::span<const double> a, std::span<const double> b);
// Drops leading coefficients whose magnitude is below rel_tol times the
// largest coefficient magnitude.
std::vector<double> poly_trim(std::vector<double> p, double rel_tol = 1e-12);

// num/den in ascending powers of s.
struct TransferFunction {
  std::vector<double> num;
  std::vector<double> den;

  // Trims both polynomials and rescales so the leading denominator
  // coefficient is one. Raises DegenerateDenominator if den vanishes.
  TransferFunction normalized(double rel_tol = 1e-12) const;
  int num_degree() const { return static_cast<int>(num.size()) - 1; }
  int den_degree() const { return static_cast<int>(den.size()) - 1; }
  bool proper() const { return num_degree() <= den_degree(); }
  std::string str() const;
};

// Folds an expression over {+, -, *, /, constants, s} into a rational
// function. Constants must be bound. Raises SpecInvalid on any other token.
TransferFunction expr_to_rational(const Expression& expr);
// Variant used during constant fitting: placeholder slots read from consts.
TransferFunction expr_to_rational(const Expression& expr,
                                  std::span<const double> consts);

// x' = Ax + Bu, y = Cx + Du in controllable canonical form.
struct StateSpace {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::VectorXd C;
  double D = 0.0;
  int order() const { return static_cast<int>(A.rows()); }
};

// Raises ImproperTransferFunction when the numerator degree exceeds the
// denominator degree, DegenerateDenominator when the denominator is zero.
StateSpace tf_to_statespace(const TransferFunction& tf);

enum class IntegrationMethod { Euler, Rk4 };

// Fixed-step simulation from rest (x0 = 0) with zero-order-hold input.
// Returns false and pads with NaN once |y| exceeds the overflow guard.
bool simulate_into(const StateSpace& ss, std::span<const double> u, double dt,
                   IntegrationMethod method, std::span<double> out,
                   std::span<const double> x0 = {});
// Throwing wrapper; raises UnstableStep on overflow.
std::vector<double> simulate(const StateSpace& ss, std::span<const double> u,
                             double dt, IntegrationMethod method = IntegrationMethod::Euler);

// Scores rational candidates in s by simulating them over the dataset input
// from rest. Candidates whose denominator degree exceeds max_degree, or that
// are improper or degenerate, evaluate to infinite error.
class SDomainModel final : public PredictionModel {
 public:
  explicit SDomainModel(int max_degree = 4,
                        IntegrationMethod method = IntegrationMethod::Euler)
      : max_degree_(max_degree), method_(method) {}
  size_t first_index(const Dataset& data) const override;
  std::unique_ptr<CandidateEval> bind(const Expression& expr,
                                      const Dataset& data) const override;

 private:
  int max_degree_;
  IntegrationMethod method_;
};

struct RecoveredTf {
  TransferFunction tf;  // normalized
  ScoredExpression score;
};

// Trains the engine on the dataset and converts the winner to a normalized
// transfer function. Raises NonConvergent if no valid candidate appeared.
RecoveredTf recover_tf(DsrEngine& engine, const Dataset& data,
                       const SDomainModel& model = SDomainModel());

}  // namespace srlr

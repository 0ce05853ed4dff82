#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>

#include "srlr/policy.hpp"

namespace srlr {

struct EngineConfig {
  TokenLibrary library;
  double epsilon = 0.05;        // elite fraction for risk-seeking updates
  double alpha = 0.05;          // trimmed fraction of worst-loss points (0 = off)
  double phi = 0.1;             // weight of the complexity penalty (0 = off)
  int batch_size = 500;
  long budget = 100000;         // sampled expressions, repeats included
  std::uint64_t seed = 0;
  int hidden_size = 32;
  double learning_rate = 5e-4;
  double entropy_weight = 5e-3;
  double grad_clip = 5.0;
  int nm_max_iter = 200;
  // optional plateau cut: stop the constant fit after this many iterations
  // without significant improvement (0 disables; narrow SSE valleys from
  // correlated inputs need the full iteration budget to converge)
  int nm_stall_iters = 0;
  // trimmed-fit concentration passes: re-rank losses and refit until the
  // kept set stabilizes (1 = single filter pass)
  int outlier_csteps = 3;
  double reward_cap = 1e6;
  double nrmse_floor = 1e-6;
  bool stop_on_perfect = true;
  int threads = 1;
};

// Loss assigned to points a candidate cannot predict.
constexpr double kInvalidLoss = 1e30;

struct ScoredExpression {
  Expression expr;
  double reward = 0.0;        // 1 / NRMSE over the active points, capped
  double train_reward = 0.0;  // reward plus weighted complexity penalty
  double nrmse = std::numeric_limits<double>::infinity();
  double sse = std::numeric_limits<double>::infinity();
  double aic = std::numeric_limits<double>::infinity();
  bool valid = false;
  std::vector<double> losses;   // |y - yhat| per timestep, kInvalidLoss gaps
  std::vector<size_t> active;   // indices the fit and reward used
};

// Per-candidate evaluation handle; constants vary across calls.
class CandidateEval {
 public:
  virtual ~CandidateEval() = default;
  virtual double sse(std::span<const double> consts,
                     std::span<const size_t> idx) = 0;
  // Full-length prediction series; NaN marks invalid points.
  virtual std::vector<double> predict(std::span<const double> consts) = 0;
};

// Domain semantics: how an expression becomes predictions on a dataset.
class PredictionModel {
 public:
  virtual ~PredictionModel() = default;
  virtual size_t first_index(const Dataset& data) const = 0;
  // nullptr when the candidate is structurally unusable in this domain
  virtual std::unique_ptr<CandidateEval> bind(const Expression& expr,
                                              const Dataset& data) const = 0;
};

// Pointwise evaluation of time-domain expressions with delayed inputs.
class TimeDomainModel : public PredictionModel {
 public:
  explicit TimeDomainModel(int max_library_delay)
      : max_delay_(max_library_delay) {}
  size_t first_index(const Dataset&) const override {
    return static_cast<size_t>(max_delay_);
  }
  std::unique_ptr<CandidateEval> bind(const Expression& expr,
                                      const Dataset& data) const override;

 private:
  int max_delay_;
};

// Derivative-free least squares (Nelder-Mead, adaptive parameters). Returns
// the best vertex; never worse than the starting point. `converged` reports
// whether the simplex collapsed before the iteration cap.
struct NmResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool diverged = false;  //no finite objective anywhere
};
NmResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                     std::vector<double> start, int max_iter,
                     int stall_iters = 0);

double population_std(std::span<const double> values);

// Empirical quantile with the nearest-rank convention.
double quantile_nearest_rank(std::vector<double> values, double q);

// Indices (into losses) whose loss does not exceed the (1 - alpha) quantile.
std::vector<size_t> outlier_filter(std::span<const double> losses,
                                   std::span<const size_t> idx, double alpha);

double modified_aic(double sse, size_t n, int complexity);

struct TrainLogRow {
  long iteration;
  double best_reward;
  double mean_reward;
  int best_complexity;
};

struct TrainResult {
  ScoredExpression best;
  long evaluated = 0;
  bool any_valid = false;
  std::vector<TrainLogRow> log;
};

class DsrEngine {
 public:
  explicit DsrEngine(EngineConfig cfg);

  // Train on `data` restricted to `subset` (empty = every evaluable index).
  // The policy persists across calls so alternating schemes can warm-start.
  TrainResult train(const PredictionModel& model, const Dataset& data,
                    std::vector<size_t> subset = {},
                    std::optional<long> budget_override = std::nullopt);

  // Score one expression exactly as the training loop would.
  ScoredExpression score(const PredictionModel& model, const Dataset& data,
                         const Expression& expr,
                         std::span<const size_t> idx) const;

  const EngineConfig& config() const { return cfg_; }
  GruPolicy& policy();
  void reset_policy();

 private:
  EngineConfig cfg_;
  std::unique_ptr<GruPolicy> policy_;
  std::mt19937_64 rng_;

  ScoredExpression score_impl(const PredictionModel& model, const Dataset& data,
                              const Expression& expr,
                              std::span<const size_t> idx) const;
};

}  // namespace srlr

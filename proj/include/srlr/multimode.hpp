#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "srlr/engine.hpp"
#include "srlr/expr.hpp"

namespace srlr {

// Continuity-regularized membership settings for alternating optimization.
struct ContinuityConfig {
  size_t w = 50;           // seed-window length; relaxed threshold applies here
  double lambda1 = 1.0;    // relaxed loss threshold
  double lambda2 = 1e-3;   // strict loss threshold
  size_t window = 50;      // index-adjustment window (stride equals size)
  double occupancy = 0.8;  // assigned fraction that flips a window to assigned
  int max_alternations = 10;
  int max_modes = 8;
  long budget_per_alternation = 20000;
};

enum class MembershipPhase { InitialWindow, Rest };

// gamma_t = 1 iff loss_t <= lambda for the phase; the closed-form minimizer
// of the per-point assignment objective sum gamma_t (l_t - lambda).
std::vector<char> update_membership(std::span<const double> losses,
                                    const ContinuityConfig& cfg,
                                    MembershipPhase phase);

// Non-overlapping windows: assigned fraction > occupancy makes the whole
// window assigned, otherwise the whole window unassigned. Idempotent.
std::vector<char> adjust_indices(std::vector<char> gamma, size_t window,
                                 double occupancy);

struct ModeEntry {
  Expression expr;
  std::vector<size_t> indices;  // timesteps claimed by this mode
};

struct ModeModel {
  std::vector<ModeEntry> modes;
  // Optional switch predicate over the input channels; sign(f) > 0 selects
  // modes[0], otherwise modes[1] (two-mode convention).
  std::optional<Expression> switch_logic;
  size_t mode_count() const { return modes.size(); }
};

struct MultimodeResult {
  ModeModel model;
  std::vector<int> assignment;           // final mode per timestep, -1 before warmup
  std::vector<ScoredExpression> scores;  // per mode, fit on its claimed points
  long evaluated = 0;
};

// Raised when a mode fails to claim at least w points; carries progress.
class MultimodeError : public Error {
 public:
  MultimodeError(const std::string& msg, MultimodeResult partial_result)
      : Error(ErrorCode::NonConvergent, msg), partial(std::move(partial_result)) {}
  MultimodeResult partial;
};

// Alternating optimization: seed membership on the first w unassigned points,
// alternate (fit expression on assigned points, recompute losses, update
// membership) until stable or max_alternations, smooth with adjust_indices,
// claim the mode, repeat on the residual. Leftover points shorter than one
// seed window are closed out by assigning each to its lowest-loss mode.
MultimodeResult recover_multimode(DsrEngine& engine, const PredictionModel& pm,
                                  const Dataset& data, const ContinuityConfig& cfg);

// Robust location/scatter by minimum covariance determinant (random
// elemental subsets refined with concentration steps).
struct McdResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::vector<double> dist2;  // squared Mahalanobis distance per row
};
McdResult fast_mcd(const Eigen::MatrixXd& rows, double support = 0.5,
                   int subsets = 200, int c_steps = 3, uint64_t seed = 0);

struct SwitchDetectConfig {
  double keep_fraction = 0.4;  // normalized Mahalanobis rank cutoff
  size_t min_points = 10;
  double support = 0.5;
  int subsets = 200;
  int c_steps = 3;
};

// Collects samples straddling mode changes, keeps the Mahalanobis-central
// fraction, and fits sign(f) to the two mode sides (+1 for modes[0]).
// The engine's library must cover the dataset's channels.
// Raises InsufficientBoundaryPoints when fewer than min_points survive.
Expression detect_switch_logic(DsrEngine& engine, const Dataset& data,
                               const ModeModel& model,
                               const SwitchDetectConfig& cfg = {});

// Root of f along channel `channel` (other channels fixed at zero) closest
// to `center`, located by sign-change scan plus bisection over [lo, hi].
std::optional<double> predicate_root_1d(const Expression& f, double lo, double hi,
                                        double center, int channel = 0,
                                        int grid = 4096);

// Switched prediction series. Expressions in s simulate as switched
// state-space blocks: the selected mode integrates, the others hold state.
// Time-domain expressions evaluate pointwise. With a switch predicate the
// active mode follows sign(f); without one, the per-point minimum residual
// across modes is returned as the prediction error proxy (predictions then
// come from the best mode per point, using the observed target).
std::vector<double> predict_modes(const ModeModel& model, const Dataset& data);

}  // namespace srlr

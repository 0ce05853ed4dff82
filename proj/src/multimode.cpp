#include "srlr/multimode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "srlr/sdomain.hpp"

namespace srlr {

std::vector<char> update_membership(std::span<const double> losses,
                                    const ContinuityConfig& cfg,
                                    MembershipPhase phase) {
  const double lambda =
      phase == MembershipPhase::InitialWindow ? cfg.lambda1 : cfg.lambda2;
  std::vector<char> gamma(losses.size(), 0);
  for (size_t i = 0; i < losses.size(); ++i)
    gamma[i] = losses[i] <= lambda ? 1 : 0;
  return gamma;
}

std::vector<char> adjust_indices(std::vector<char> gamma, size_t window,
                                 double occupancy) {
  if (window == 0) return gamma;
  for (size_t start = 0; start < gamma.size(); start += window) {
    const size_t end = std::min(start + window, gamma.size());
    size_t assigned = 0;
    for (size_t i = start; i < end; ++i) assigned += gamma[i] ? 1 : 0;
    const char fill =
        static_cast<double>(assigned) > occupancy * static_cast<double>(end - start)
            ? 1
            : 0;
    for (size_t i = start; i < end; ++i) gamma[i] = fill;
  }
  return gamma;
}

namespace {

// Loss of `score` at each timestep of `universe`; invalid points keep
// kInvalidLoss so strict thresholds reject them.
std::vector<double> universe_losses(const ScoredExpression& score,
                                    const std::vector<size_t>& universe) {
  std::vector<double> out(universe.size(), kInvalidLoss);
  for (size_t j = 0; j < universe.size(); ++j) {
    size_t t = universe[j];
    if (t < score.losses.size()) out[j] = score.losses[t];
  }
  return out;
}

std::vector<char> membership_over_universe(const std::vector<double>& losses,
                                           const ContinuityConfig& cfg) {
  const size_t head = std::min(cfg.w, losses.size());
  std::span<const double> all(losses);
  std::vector<char> gamma =
      update_membership(all.subspan(0, head), cfg, MembershipPhase::InitialWindow);
  std::vector<char> tail =
      update_membership(all.subspan(head), cfg, MembershipPhase::Rest);
  gamma.insert(gamma.end(), tail.begin(), tail.end());
  return gamma;
}

}  // namespace

MultimodeResult recover_multimode(DsrEngine& engine, const PredictionModel& pm,
                                  const Dataset& data, const ContinuityConfig& cfg) {
  MultimodeResult result;
  const size_t first = pm.first_index(data);
  if (data.size() < first + cfg.w)
    raise(ErrorCode::NonConvergent, "dataset shorter than one seed window");

  std::vector<size_t> universe(data.size() - first);
  for (size_t j = 0; j < universe.size(); ++j) universe[j] = first + j;
  result.assignment.assign(data.size(), -1);

  while (universe.size() >= cfg.w &&
         result.model.modes.size() < static_cast<size_t>(cfg.max_modes)) {
    engine.reset_policy();
    std::vector<size_t> train_set(universe.begin(),
                                  universe.begin() + static_cast<long>(cfg.w));
    std::vector<char> gamma(universe.size(), 0);
    std::fill(gamma.begin(), gamma.begin() + static_cast<long>(cfg.w), 1);
    ScoredExpression best;

    for (int alt = 0; alt < cfg.max_alternations; ++alt) {
      TrainResult round =
          engine.train(pm, data, train_set, cfg.budget_per_alternation);
      result.evaluated += round.evaluated;
      if (!round.best.valid) continue;
      best = round.best;
      std::vector<double> losses = universe_losses(best, universe);
      gamma = membership_over_universe(losses, cfg);
      std::vector<size_t> next_set;
      for (size_t j = 0; j < universe.size(); ++j)
        if (gamma[j]) next_set.push_back(universe[j]);
      if (next_set.empty()) {
        // Nothing met the threshold; retrain on the seed window. The truthful
        // all-zero membership is kept so a hopeless mode fails the claim step.
        next_set.assign(universe.begin(), universe.begin() + static_cast<long>(cfg.w));
        train_set = std::move(next_set);
        continue;
      }
      bool stable = next_set == train_set;
      train_set = std::move(next_set);
      if (stable) break;
    }

    if (!best.valid)
      throw MultimodeError("no valid expression for mode " +
                               std::to_string(result.model.modes.size()),
                           std::move(result));

    gamma = adjust_indices(std::move(gamma), cfg.window, cfg.occupancy);
    std::vector<size_t> claimed;
    for (size_t j = 0; j < universe.size(); ++j)
      if (gamma[j]) claimed.push_back(universe[j]);
    if (claimed.size() < cfg.w)
      throw MultimodeError("mode " + std::to_string(result.model.modes.size()) +
                               " claimed " + std::to_string(claimed.size()) +
                               " points (need " + std::to_string(cfg.w) + ")",
                           std::move(result));

    // Refit constants on the final claimed set for the recorded score.
    ScoredExpression final_score = engine.score(pm, data, best.expr, claimed);
    if (!final_score.valid) final_score = best;
    for (size_t t : claimed)
      result.assignment[t] = static_cast<int>(result.model.modes.size());
    result.model.modes.push_back({final_score.expr, claimed});
    result.scores.push_back(std::move(final_score));

    std::vector<size_t> remaining;
    remaining.reserve(universe.size() - claimed.size());
    size_t ci = 0;
    for (size_t t : universe) {
      if (ci < claimed.size() && claimed[ci] == t) {
        ++ci;
      } else {
        remaining.push_back(t);
      }
    }
    universe = std::move(remaining);
  }

  if (result.model.modes.empty())
    throw MultimodeError("no mode recovered", std::move(result));

  // Close out leftovers: lowest loss across recovered modes wins.
  if (!universe.empty()) {
    for (size_t t : universe) {
      int best_mode = 0;
      double best_loss = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < result.scores.size(); ++k) {
        const auto& l = result.scores[k].losses;
        double lk = t < l.size() ? l[t] : kInvalidLoss;
        if (lk < best_loss) {
          best_loss = lk;
          best_mode = static_cast<int>(k);
        }
      }
      result.assignment[t] = best_mode;
      result.model.modes[static_cast<size_t>(best_mode)].indices.push_back(t);
    }
    for (auto& mode : result.model.modes)
      std::sort(mode.indices.begin(), mode.indices.end());
  }
  return result;
}

McdResult fast_mcd(const Eigen::MatrixXd& rows, double support, int subsets,
                   int c_steps, uint64_t seed) {
  const long n = rows.rows();
  const long d = rows.cols();
  if (n <= d) raise(ErrorCode::SpecInvalid, "too few rows for scatter estimate");
  const long h = std::max<long>(
      d + 1, static_cast<long>(std::ceil(support * static_cast<double>(n))));
  std::mt19937_64 rng(seed);

  auto moments = [&](const std::vector<long>& sel, Eigen::VectorXd& mu,
                     Eigen::MatrixXd& cov) {
    mu = Eigen::VectorXd::Zero(d);
    for (long i : sel) mu += rows.row(i).transpose();
    mu /= static_cast<double>(sel.size());
    cov = Eigen::MatrixXd::Zero(d, d);
    for (long i : sel) {
      Eigen::VectorXd c = rows.row(i).transpose() - mu;
      cov += c * c.transpose();
    }
    cov /= static_cast<double>(sel.size());
    // Ridge keeps elemental subsets invertible.
    double ridge = std::max(cov.trace() / static_cast<double>(d), 1.0) * 1e-9;
    cov += ridge * Eigen::MatrixXd::Identity(d, d);
  };

  auto distances = [&](const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov,
                       std::vector<double>& d2) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    d2.resize(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
      Eigen::VectorXd c = rows.row(i).transpose() - mu;
      d2[static_cast<size_t>(i)] = c.dot(ldlt.solve(c));
    }
  };

  auto log_det = [&](const Eigen::MatrixXd& cov) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    return ldlt.vectorD().array().max(1e-300).log().sum();
  };

  McdResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> d2;
  std::vector<long> order(static_cast<size_t>(n));

  for (int trial = 0; trial < subsets; ++trial) {
    std::set<long> pick;
    while (pick.size() < static_cast<size_t>(d + 1))
      pick.insert(static_cast<long>(rng() % static_cast<uint64_t>(n)));
    std::vector<long> sel(pick.begin(), pick.end());
    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    moments(sel, mu, cov);
    for (int step = 0; step < c_steps; ++step) {
      distances(mu, cov, d2);
      for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
      std::nth_element(order.begin(), order.begin() + h - 1, order.end(),
                       [&](long a, long b) {
                         return d2[static_cast<size_t>(a)] < d2[static_cast<size_t>(b)];
                       });
      sel.assign(order.begin(), order.begin() + h);
      moments(sel, mu, cov);
    }
    double obj = log_det(cov);
    if (obj < best_obj) {
      best_obj = obj;
      best.mean = mu;
      best.cov = cov;
    }
  }
  distances(best.mean, best.cov, best.dist2);
  return best;
}

Expression detect_switch_logic(DsrEngine& engine, const Dataset& data,
                               const ModeModel& model,
                               const SwitchDetectConfig& cfg) {
  if (model.mode_count() < 2)
    raise(ErrorCode::InsufficientBoundaryPoints, "need at least two modes");
  std::vector<int> assign(data.size(), -1);
  for (size_t k = 0; k < model.modes.size(); ++k)
    for (size_t t : model.modes[k].indices)
      if (t < assign.size()) assign[t] = static_cast<int>(k);

  const size_t channels = data.inputs.size();
  std::vector<size_t> pts;     // timestep per boundary sample
  std::vector<double> labels;  // +1 for modes[0], -1 otherwise
  for (size_t t = 1; t < data.size(); ++t) {
    if (assign[t] < 0 || assign[t - 1] < 0 || assign[t] == assign[t - 1]) continue;
    for (size_t s : {t - 1, t}) {
      pts.push_back(s);
      labels.push_back(assign[s] == 0 ? 1.0 : -1.0);
    }
  }
  if (pts.size() < cfg.min_points)
    raise(ErrorCode::InsufficientBoundaryPoints,
          "only " + std::to_string(pts.size()) + " boundary samples");

  Eigen::MatrixXd feats(static_cast<long>(pts.size()), static_cast<long>(channels));
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t c = 0; c < channels; ++c)
      feats(static_cast<long>(i), static_cast<long>(c)) = data.inputs[c][pts[i]];

  McdResult mcd = fast_mcd(feats, cfg.support, cfg.subsets, cfg.c_steps,
                           /*seed=*/1234577);
  std::vector<size_t> rank(pts.size());
  for (size_t i = 0; i < rank.size(); ++i) rank[i] = i;
  std::sort(rank.begin(), rank.end(),
            [&](size_t a, size_t b) { return mcd.dist2[a] < mcd.dist2[b]; });
  size_t keep = static_cast<size_t>(
      std::floor(cfg.keep_fraction * static_cast<double>(pts.size())));
  if (keep < cfg.min_points)
    raise(ErrorCode::InsufficientBoundaryPoints,
          "only " + std::to_string(keep) + " samples after filtering");

  Dataset fit;
  fit.inputs.resize(channels);
  for (size_t r = 0; r < keep; ++r) {
    size_t i = rank[r];
    for (size_t c = 0; c < channels; ++c)
      fit.inputs[c].push_back(data.inputs[c][pts[i]]);
    fit.target.push_back(labels[i]);
  }
  bool has_pos = false, has_neg = false;
  for (double v : fit.target) (v > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    raise(ErrorCode::InsufficientBoundaryPoints,
          "filtered boundary points collapse to one mode side");
  TrainResult res = engine.train(TimeDomainModel(0), fit);
  if (!res.best.valid)
    raise(ErrorCode::NonConvergent, "no separating predicate found");
  return res.best.expr;
}

std::optional<double> predicate_root_1d(const Expression& f, double lo, double hi,
                                        double center, int channel, int grid) {
  if (!(hi > lo) || grid < 2) return std::nullopt;
  Program prog(f);
  Dataset probe;
  probe.inputs.assign(static_cast<size_t>(channel) + 1, std::vector<double>{0.0});
  probe.target = {0.0};
  auto eval = [&](double x) {
    probe.inputs[static_cast<size_t>(channel)][0] = x;
    return prog.eval(probe, 0, f.constants());
  };
  std::optional<double> best;
  double prev_x = lo, prev_v = eval(lo);
  for (int i = 1; i <= grid; ++i) {
    double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid);
    double v = eval(x);
    if (std::isfinite(prev_v) && std::isfinite(v) &&
        ((prev_v <= 0 && v > 0) || (prev_v > 0 && v <= 0))) {
      double a = prev_x, b = x, fa = prev_v;
      for (int it = 0; it < 60; ++it) {
        double m = 0.5 * (a + b), fm = eval(m);
        if ((fa <= 0) == (fm <= 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      double root = 0.5 * (a + b);
      if (!best || std::fabs(root - center) < std::fabs(*best - center))
        best = root;
    }
    prev_x = x;
    prev_v = v;
  }
  return best;
}

namespace {

bool all_laplace(const ModeModel& model) {
  for (const auto& m : model.modes)
    if (!m.expr.uses_s()) return false;
  return !model.modes.empty();
}

// Switched state-space run: the active block integrates, inactive blocks
// hold their state. Output comes from the active block.
std::vector<double> simulate_switched(const ModeModel& model, const Dataset& data) {
  std::vector<StateSpace> blocks;
  for (const auto& m : model.modes)
    blocks.push_back(tf_to_statespace(expr_to_rational(m.expr)));
  std::vector<Eigen::VectorXd> states;
  for (const auto& b : blocks) states.push_back(Eigen::VectorXd::Zero(b.order()));

  Program pred(*model.switch_logic);
  const auto& consts = model.switch_logic->constants();
  std::vector<double> out(data.size(), std::numeric_limits<double>::quiet_NaN());
  const std::vector<double>& u = data.inputs[0];
  for (size_t t = 0; t < data.size(); ++t) {
    double s = pred.eval(data, t, consts);
    size_t k = (std::isfinite(s) && s > 0) ? 0 : 1;
    const StateSpace& b = blocks[k];
    Eigen::VectorXd& x = states[k];
    double y = b.D * u[t];
    if (b.order() > 0) y += b.C.dot(x);
    out[t] = y;
    if (!std::isfinite(y) || std::fabs(y) > 1e12) return out;
    if (b.order() > 0) x += data.dt * (b.A * x + b.B * u[t]);
  }
  return out;
}

}  // namespace

std::vector<double> predict_modes(const ModeModel& model, const Dataset& data) {
  if (model.modes.empty()) raise(ErrorCode::SpecInvalid, "empty mode model");
  if (model.switch_logic && model.mode_count() >= 2 && all_laplace(model))
    return simulate_switched(model, data);

  // Pointwise: selected (or best-residual) mode value per timestep.
  std::vector<Program> progs;
  for (const auto& m : model.modes) progs.emplace_back(m.expr);
  std::optional<Program> pred;
  if (model.switch_logic) pred.emplace(*model.switch_logic);

  std::vector<double> out(data.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t t = 0; t < data.size(); ++t) {
    if (pred) {
      double s = pred->eval(data, t, model.switch_logic->constants());
      size_t k = (std::isfinite(s) && s > 0) ? 0 : 1;
      try {
        out[t] = progs[k].eval(data, t, model.modes[k].expr.constants());
      } catch (const Error&) {
      }
      continue;
    }
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_err = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < progs.size(); ++k) {
      double v;
      try {
        v = progs[k].eval(data, t, model.modes[k].expr.constants());
      } catch (const Error&) {
        continue;
      }
      if (!std::isfinite(v)) continue;
      double err = std::fabs(data.target[t] - v);
      if (err < best_err) {
        best_err = err;
        best = v;
      }
    }
    out[t] = best;
  }
  return out;
}

}  // namespace srlr

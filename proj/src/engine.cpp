#include "srlr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace srlr {

namespace {

class TimeDomainEval : public CandidateEval {
 public:
  TimeDomainEval(const Expression& expr, const Dataset& data, size_t first)
      : prog_(expr), data_(&data), first_(first) {}

  double sse(std::span<const double> consts,
             std::span<const size_t> idx) override {
    return prog_.sse(*data_, idx, consts, scratch_);
  }

  std::vector<double> predict(std::span<const double> consts) override {
    return prog_.series(*data_, first_, consts);
  }

 private:
  Program prog_;
  const Dataset* data_;
  size_t first_;
  std::vector<double> scratch_;
};

std::string sequence_key(const Expression& expr) {
  std::string key;
  key.reserve(expr.tokens().size() * 6);
  for (const Token& t : expr.tokens()) {
    key.push_back(static_cast<char>('A' + static_cast<int>(t.op)));
    if (t.op == Op::Var) {
      key += std::to_string(t.var);
      key.push_back(',');
      key += std::to_string(t.delay);
    }
    key.push_back(';');
  }
  return key;
}

bool better(const ScoredExpression& a, const ScoredExpression& b) {
  if (a.train_reward != b.train_reward) return a.train_reward > b.train_reward;
  if (a.expr.complexity() != b.expr.complexity())
    return a.expr.complexity() < b.expr.complexity();
  return a.expr.tokens().size() < b.expr.tokens().size();
}

}  // namespace

std::unique_ptr<CandidateEval> TimeDomainModel::bind(const Expression& expr,
                                                     const Dataset& data) const {
  if (expr.uses_s()) return nullptr;
  if (static_cast<size_t>(expr.channels_used()) > data.channels()) return nullptr;
  if (expr.max_delay() > max_delay_) return nullptr;
  return std::make_unique<TimeDomainEval>(expr, data, first_index(data));
}

// ---------------------------------------------------------------------------

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

double quantile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double rank = std::ceil(q * static_cast<double>(values.size()));
  size_t idx = rank < 1.0 ? 0 : static_cast<size_t>(rank) - 1;
  idx = std::min(idx, values.size() - 1);
  return values[idx];
}

std::vector<size_t> outlier_filter(std::span<const double> losses,
                                   std::span<const size_t> idx, double alpha) {
  std::vector<size_t> kept;
  if (alpha <= 0.0) {
    kept.assign(idx.begin(), idx.end());
    return kept;
  }
  std::vector<double> subset;
  subset.reserve(idx.size());
  for (size_t i : idx) subset.push_back(losses[i]);
  double cut = quantile_nearest_rank(std::move(subset), 1.0 - alpha);
  for (size_t i : idx)
    if (losses[i] <= cut) kept.push_back(i);
  return kept;
}

double modified_aic(double sse, size_t n, int complexity) {
  double nn = static_cast<double>(n);
  double sse_eff = std::max(sse, 1e-12);
  double log_lik =
      -(nn / 2.0) * std::log(2.0 * M_PI) - (nn / 2.0) * std::log(sse_eff / nn) -
      nn / 2.0;
  double m = static_cast<double>(complexity);
  return (2.0 * m - log_lik) / nn + m;
}

// ---------------------------------------------------------------------------
// Nelder-Mead with the dimension-adaptive coefficients of Gao & Han.

NmResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                     std::vector<double> start, int max_iter, int stall_iters) {
  const int n = static_cast<int>(start.size());
  NmResult out;
  if (n == 0) {
    out.x = std::move(start);
    out.f = f(out.x);
    out.converged = true;
    return out;
  }
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / n;
  const double gamma = 0.75 - 1.0 / (2.0 * n);
  const double delta = 1.0 - 1.0 / n;

  std::vector<std::vector<double>> xs(static_cast<size_t>(n) + 1, start);
  for (int i = 0; i < n; ++i)
    xs[static_cast<size_t>(i) + 1][static_cast<size_t>(i)] +=
        std::max(0.5, 0.1 * std::fabs(start[static_cast<size_t>(i)]));
  std::vector<double> fs(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) fs[i] = f(xs[i]);

  std::vector<size_t> order(xs.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return fs[a] < fs[b]; });
  };

  double stagnant_best = std::numeric_limits<double>::infinity();
  int stagnant_iters = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    sort_simplex();
    const size_t best = order[0], worst = order.back(),
                 second_worst = order[order.size() - 2];
    if (!std::isfinite(fs[best])) {
      out.diverged = true;
      break;
    }
    double spread = std::fabs(fs[worst] - fs[best]);
    if (spread <= 1e-12 * (1.0 + std::fabs(fs[best]))) {
      out.converged = true;
      break;
    }
    // optional plateau cut: flat landscapes otherwise burn the full budget
    if (fs[best] < stagnant_best - 1e-9 * (1.0 + std::fabs(stagnant_best))) {
      stagnant_best = fs[best];
      stagnant_iters = 0;
    } else if (stall_iters > 0 && ++stagnant_iters >= stall_iters) {
      break;
    }

    std::vector<double> centroid(static_cast<size_t>(n), 0.0);
    for (size_t i : order)
      if (i != worst)
        for (int d = 0; d < n; ++d)
          centroid[static_cast<size_t>(d)] += xs[i][static_cast<size_t>(d)] / n;

    auto blend = [&](double t) {
      std::vector<double> x(static_cast<size_t>(n));
      for (int d = 0; d < n; ++d)
        x[static_cast<size_t>(d)] =
            centroid[static_cast<size_t>(d)] +
            t * (centroid[static_cast<size_t>(d)] - xs[worst][static_cast<size_t>(d)]);
      return x;
    };

    std::vector<double> xr = blend(alpha);
    double fr = f(xr);
    if (fr < fs[best]) {
      std::vector<double> xe = blend(beta);
      double fe = f(xe);
      if (fe < fr) {
        xs[worst] = std::move(xe);
        fs[worst] = fe;
      } else {
        xs[worst] = std::move(xr);
        fs[worst] = fr;
      }
    } else if (fr < fs[second_worst]) {
      xs[worst] = std::move(xr);
      fs[worst] = fr;
    } else {
      bool outside = fr < fs[worst];
      std::vector<double> xc = blend(outside ? gamma : -gamma);
      double fc = f(xc);
      if (fc < std::min(fr, fs[worst])) {
        xs[worst] = std::move(xc);
        fs[worst] = fc;
      } else {
        for (size_t i : order)
          if (i != best) {
            for (int d = 0; d < n; ++d)
              xs[i][static_cast<size_t>(d)] =
                  xs[best][static_cast<size_t>(d)] +
                  delta * (xs[i][static_cast<size_t>(d)] -
                           xs[best][static_cast<size_t>(d)]);
            fs[i] = f(xs[i]);
          }
      }
    }
  }

  sort_simplex();
  out.x = xs[order[0]];
  out.f = fs[order[0]];
  if (!std::isfinite(out.f)) out.diverged = true;
  return out;
}

// ---------------------------------------------------------------------------

DsrEngine::DsrEngine(EngineConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

GruPolicy& DsrEngine::policy() {
  if (!policy_)
    policy_ = std::make_unique<GruPolicy>(static_cast<int>(cfg_.library.size()),
                                          cfg_.hidden_size, cfg_.seed);
  return *policy_;
}

void DsrEngine::reset_policy() { policy_.reset(); }

ScoredExpression DsrEngine::score(const PredictionModel& model,
                                  const Dataset& data, const Expression& expr,
                                  std::span<const size_t> idx) const {
  return score_impl(model, data, expr, idx);
}

ScoredExpression DsrEngine::score_impl(const PredictionModel& model,
                                       const Dataset& data,
                                       const Expression& expr,
                                       std::span<const size_t> idx) const {
  ScoredExpression sc;
  sc.expr = expr;
  sc.losses.assign(data.size(), kInvalidLoss);
  sc.active.assign(idx.begin(), idx.end());

  auto eval = model.bind(expr, data);
  if (!eval) {
    sc.aic = 1e9;
    sc.train_reward = cfg_.phi > 0.0 ? -cfg_.phi * sc.aic : 0.0;
    return sc;
  }

  const int np = expr.placeholder_count();
  std::vector<double> consts(static_cast<size_t>(np), 1.0);
  if (!expr.constants().empty()) consts = expr.constants();

  if (np > 0) {
    NmResult fit = nelder_mead(
        [&](std::span<const double> c) { return eval->sse(c, idx); }, consts,
        cfg_.nm_max_iter, cfg_.nm_stall_iters);
    if (!fit.diverged) consts = std::move(fit.x);
  }

  auto fill_losses = [&](const std::vector<double>& preds) {
    for (size_t t = 0; t < preds.size(); ++t) {
      double p = preds[t];
      sc.losses[t] = std::isfinite(p) ? std::fabs(p - data.target[t]) : kInvalidLoss;
    }
  };
  fill_losses(eval->predict(consts));

  if (cfg_.alpha > 0.0) {
    // concentration loop: the first fit is biased by the very points the
    // filter must find, so re-rank losses after each refit until the kept
    // set stabilizes
    for (int step = 0; step < std::max(1, cfg_.outlier_csteps); ++step) {
      std::vector<size_t> kept = outlier_filter(sc.losses, idx, cfg_.alpha);
      bool unchanged = step > 0 && kept == sc.active;
      sc.active = std::move(kept);
      if (unchanged) break;
      if (np == 0 || sc.active.size() == idx.size()) break;
      NmResult refit = nelder_mead(
          [&](std::span<const double> c) { return eval->sse(c, sc.active); },
          consts, cfg_.nm_max_iter, cfg_.nm_stall_iters);
      if (!refit.diverged) consts = std::move(refit.x);
      fill_losses(eval->predict(consts));
    }
  }

  sc.expr = expr.with_constants(consts);
  sc.sse = eval->sse(consts, sc.active);
  if (!std::isfinite(sc.sse) || sc.active.empty()) {
    sc.aic = 1e9;
    sc.train_reward = cfg_.phi > 0.0 ? -cfg_.phi * sc.aic : 0.0;
    return sc;
  }

  std::vector<double> targets;
  targets.reserve(sc.active.size());
  for (size_t t : sc.active) targets.push_back(data.target[t]);
  double sigma = population_std(targets);
  if (sigma <= 0.0) {
    raise(ErrorCode::DegenerateTarget,
          "target has zero variance on the active points");
  }
  sc.nrmse = std::sqrt(sc.sse / static_cast<double>(sc.active.size())) / sigma;
  sc.reward = sc.nrmse < cfg_.nrmse_floor ? cfg_.reward_cap : 1.0 / sc.nrmse;
  sc.reward = std::min(sc.reward, cfg_.reward_cap);
  sc.aic = modified_aic(sc.sse, sc.active.size(), expr.complexity());
  sc.train_reward = sc.reward + (cfg_.phi > 0.0 ? cfg_.phi * (-sc.aic) : 0.0);
  sc.valid = true;
  return sc;
}

TrainResult DsrEngine::train(const PredictionModel& model, const Dataset& data,
                             std::vector<size_t> subset,
                             std::optional<long> budget_override) {
  const size_t first = model.first_index(data);
  if (data.size() <= first)
    raise(ErrorCode::SpecInvalid, "dataset shorter than the evaluation offset");

  std::vector<size_t> idx;
  if (subset.empty()) {
    idx.resize(data.size() - first);
    std::iota(idx.begin(), idx.end(), first);
  } else {
    std::sort(subset.begin(), subset.end());
    for (size_t t : subset)
      if (t >= first && t < data.size()) idx.push_back(t);
  }
  if (idx.empty())
    raise(ErrorCode::SpecInvalid, "no evaluable points in the training subset");

  {
    std::vector<double> targets;
    targets.reserve(idx.size());
    for (size_t t : idx) targets.push_back(data.target[t]);
    if (population_std(targets) <= 0.0)
      raise(ErrorCode::DegenerateTarget, "training target has zero variance");
  }

  GruPolicy& pol = policy();
  const long budget = budget_override.value_or(cfg_.budget);
  TrainResult result;

  struct CacheRow {
    double reward, train_reward, nrmse, sse, aic;
    bool valid;
    std::vector<double> consts;
  };
  std::unordered_map<std::string, CacheRow> cache;

  long iteration = 0;
  while (result.evaluated < budget) {
    const int n =
        static_cast<int>(std::min<long>(cfg_.batch_size, budget - result.evaluated));
    std::vector<PolicyTrace> traces(static_cast<size_t>(n));
    std::vector<Expression> exprs(static_cast<size_t>(n));
    std::vector<std::string> keys(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto seq = pol.sample(cfg_.library, rng_, &traces[static_cast<size_t>(i)]);
      exprs[static_cast<size_t>(i)] = expression_from_indices(cfg_.library, seq);
      keys[static_cast<size_t>(i)] = sequence_key(exprs[static_cast<size_t>(i)]);
    }

    std::vector<ScoredExpression> scored(static_cast<size_t>(n));
    std::vector<int> misses;
    for (int i = 0; i < n; ++i) {
      auto it = cache.find(keys[static_cast<size_t>(i)]);
      if (it == cache.end()) {
        misses.push_back(i);
        continue;
      }
      ScoredExpression& sc = scored[static_cast<size_t>(i)];
      sc.reward = it->second.reward;
      sc.train_reward = it->second.train_reward;
      sc.nrmse = it->second.nrmse;
      sc.sse = it->second.sse;
      sc.aic = it->second.aic;
      sc.valid = it->second.valid;
      sc.expr = it->second.consts.empty()
                    ? exprs[static_cast<size_t>(i)]
                    : exprs[static_cast<size_t>(i)].with_constants(it->second.consts);
    }

    auto score_range = [&](size_t lo, size_t hi) {
      for (size_t k = lo; k < hi; ++k) {
        int i = misses[k];
        scored[static_cast<size_t>(i)] =
            score_impl(model, data, exprs[static_cast<size_t>(i)], idx);
      }
    };
    const int workers = std::max(1, cfg_.threads);
    if (workers == 1 || misses.size() < 2) {
      score_range(0, misses.size());
    } else {
      std::vector<std::thread> pool;
      size_t chunk = (misses.size() + workers - 1) / static_cast<size_t>(workers);
      for (int w = 0; w < workers; ++w) {
        size_t lo = static_cast<size_t>(w) * chunk;
        size_t hi = std::min(misses.size(), lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(score_range, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    for (int i : misses) {
      const ScoredExpression& sc = scored[static_cast<size_t>(i)];
      cache.emplace(keys[static_cast<size_t>(i)],
                    CacheRow{sc.reward, sc.train_reward, sc.nrmse, sc.sse, sc.aic,
                             sc.valid, sc.expr.constants()});
    }

    result.evaluated += n;
    ++iteration;

    // risk-seeking gradient on the elite slice, entropy bonus on everything
    std::vector<double> rewards(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      rewards[static_cast<size_t>(i)] = scored[static_cast<size_t>(i)].train_reward;
    double tilde = quantile_nearest_rank(rewards, 1.0 - cfg_.epsilon);
    auto grads = pol.zero_gradients();
    double ent_coeff = cfg_.entropy_weight / n;
    double risk_scale = 1.0 / (cfg_.epsilon * n);
    for (int i = 0; i < n; ++i) {
      double r = scored[static_cast<size_t>(i)].train_reward;
      double coeff = r >= tilde ? (r - tilde) * risk_scale : 0.0;
      pol.accumulate(traces[static_cast<size_t>(i)], coeff, ent_coeff, &grads);
    }
    pol.adam_step(grads, cfg_.learning_rate, cfg_.grad_clip);

    double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    for (int i = 0; i < n; ++i) {
      if (scored[static_cast<size_t>(i)].valid) result.any_valid = true;
      if (scored[static_cast<size_t>(i)].valid &&
          (!result.best.valid || better(scored[static_cast<size_t>(i)], result.best)))
        result.best = scored[static_cast<size_t>(i)];
    }
    result.log.push_back({iteration,
                          result.best.valid ? result.best.train_reward : 0.0, mean,
                          result.best.valid ? result.best.expr.complexity() : 0});

    if (cfg_.stop_on_perfect && result.best.valid &&
        result.best.nrmse <= cfg_.nrmse_floor)
      break;
  }

  if (result.best.valid) {
    // recompute the winner so callers get fresh full-range losses
    result.best = score_impl(model, data, result.best.expr, idx);
  }
  return result;
}

}  // namespace srlr

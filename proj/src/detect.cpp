#include "srlr/detect.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include "srlr/error.hpp"

namespace srlr {

namespace {

std::vector<double> predictor_series(const Rule& rule, const Dataset& data) {
  if (std::holds_alternative<Expression>(rule.predictor)) {
    const auto& expr = std::get<Expression>(rule.predictor);
    Program prog(expr);
    // full-length series; samples before the max delay come back as NaN
    return prog.series(data, static_cast<size_t>(expr.max_delay()));
  }
  if (std::holds_alternative<ModeModel>(rule.predictor))
    return predict_modes(std::get<ModeModel>(rule.predictor), data);
  if (std::holds_alternative<TransferFunction>(rule.predictor)) {
    if (data.channels() != 1)
      raise(ErrorCode::ChannelMismatch,
            "transfer-function rules need exactly one input channel");
    StateSpace ss =
        tf_to_statespace(std::get<TransferFunction>(rule.predictor).normalized());
    std::vector<double> yhat(data.size());
    simulate_into(ss, data.inputs[0], data.dt, rule.method, yhat);
    return yhat;
  }
  raise(ErrorCode::SpecInvalid, "rule " + rule.id + " has no predictor");
}

}  // namespace

std::vector<double> rule_predictions(const Rule& rule, const Dataset& data) {
  return predictor_series(rule, data);
}

std::vector<double> score(const Rule& rule, const Dataset& data) {
  std::vector<double> e(data.size(), 0.0);
  if (rule.kind == Rule::Kind::Range) {
    if (!(rule.lower < rule.upper))
      raise(ErrorCode::SpecInvalid, "range rule " + rule.id + " needs lower < upper");
    for (size_t t = 0; t < data.size(); ++t) {
      double v = data.target[t];
      e[t] = (v < rule.lower || v > rule.upper) ? 1.0 : 0.0;
    }
    return e;
  }

  std::vector<double> yhat = predictor_series(rule, data);
  for (size_t t = 0; t < data.size(); ++t) {
    if (!std::isfinite(yhat[t])) continue;  // unevaluable point stays unscored
    double diff = std::abs(data.target[t] - yhat[t]);
    e[t] = rule.kind == Rule::Kind::Equation ? diff : (diff > 0.5 ? 1.0 : 0.0);
  }
  return e;
}

std::vector<double> ewma_smooth(std::span<const double> scores, double a) {
  std::vector<double> s(scores.size());
  if (scores.empty()) return s;
  s[0] = scores[0];
  // incremental form keeps a constant input an exact fixed point
  for (size_t t = 1; t < scores.size(); ++t)
    s[t] = s[t - 1] + a * (scores[t] - s[t - 1]);
  return s;
}

namespace {

struct SetStats {
  double mean = 0.0;
  double sd = 0.0;
};

SetStats stats(std::span<const double> v) {
  SetStats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(sq / static_cast<double>(v.size()));
  return s;
}

}  // namespace

double nonparametric_threshold(std::span<const double> smoothed) {
  SetStats all = stats(smoothed);
  double best_gain = -std::numeric_limits<double>::infinity();
  double best_eps = all.mean + 10.0 * all.sd;
  for (double z = 2.0; z <= 10.0 + 1e-9; z += 0.5) {
    double eps = all.mean + z * all.sd;
    std::vector<double> below;
    below.reserve(smoothed.size());
    size_t points = 0, segments = 0;
    bool in_run = false;
    for (double v : smoothed) {
      if (v > eps) {
        points++;
        if (!in_run) segments++;
        in_run = true;
      } else {
        below.push_back(v);
        in_run = false;
      }
    }
    if (points == 0) continue;
    SetStats kept = stats(below);
    double dmu = all.mean - kept.mean;
    double dsd = all.sd - kept.sd;
    double gain = (all.mean != 0.0 ? dmu / all.mean : 0.0) +
                  (all.sd != 0.0 ? dsd / all.sd : 0.0);
    gain /= static_cast<double>(points) + static_cast<double>(segments * segments);
    if (gain > best_gain) {
      best_gain = gain;
      best_eps = eps;
    }
  }
  return best_eps;
}

SmoothedScores smooth_and_threshold(std::span<const double> scores,
                                    double smoothing) {
  SmoothedScores out;
  out.smoothed = ewma_smooth(scores, smoothing);
  out.threshold = nonparametric_threshold(out.smoothed);
  return out;
}

AnomalyReport detect_anomalies(const std::vector<Rule>& rules,
                               const Dataset& data, const DetectConfig& cfg) {
  AnomalyReport report;
  for (const Rule& rule : rules) {
    std::vector<double> raw = score(rule, data);
    SmoothedScores ss = smooth_and_threshold(raw, cfg.smoothing);
    size_t points = 0;
    size_t start = 0;
    bool in_run = false;
    for (size_t t = 0; t <= ss.smoothed.size(); ++t) {
      bool hot = t < ss.smoothed.size() && ss.smoothed[t] > ss.threshold;
      if (hot) {
        points++;
        if (!in_run) start = t;
        in_run = true;
      } else if (in_run) {
        if (t - start >= std::max<size_t>(cfg.min_segment, 1))
          report.segments.push_back({start, t, rule.id});
        in_run = false;
      }
    }
    report.rule_ids.push_back(rule.id);
    report.raw.push_back(std::move(raw));
    report.smoothed.push_back(std::move(ss.smoothed));
    report.thresholds.push_back(ss.threshold);
    report.violations[rule.id] = points;
  }
  std::sort(report.segments.begin(), report.segments.end(),
            [](const AlarmSegment& a, const AlarmSegment& b) {
              return std::tie(a.start, a.end, a.rule_id) <
                     std::tie(b.start, b.end, b.rule_id);
            });
  return report;
}

namespace {

struct SegmentView {
  size_t start = 0, end = 0;  // [start, end)
  double max_score = 0.0;
  size_t length() const { return end - start; }
};

std::vector<SegmentView> label_segments(std::span<const double> scores,
                                        std::span<const int> labels) {
  std::vector<SegmentView> segs;
  for (size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] == 0) continue;
    if (segs.empty() || segs.back().end != t)
      segs.push_back({t, t + 1, scores[t]});
    else {
      segs.back().end = t + 1;
      segs.back().max_score = std::max(segs.back().max_score, scores[t]);
    }
  }
  return segs;
}

double f_measure(double tp, double fp, double fn) {
  double denom = 2.0 * tp + fp + fn;
  return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

}  // namespace

Metrics metrics_at_threshold(std::span<const double> scores,
                             std::span<const int> labels, double threshold) {
  Metrics m;
  m.threshold = threshold;
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t t = 0; t < scores.size(); ++t) {
    bool alarm = scores[t] >= threshold;
    bool truth = labels[t] != 0;
    tp += alarm && truth;
    fp += alarm && !truth;
    fn += !alarm && truth;
    tn += !alarm && !truth;
  }
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = f_measure(tp, fp, fn);
  m.fpr = fp + tn > 0 ? fp / (fp + tn) : 0.0;

  // point adjustment: a segment touched by any alarm counts in full
  auto segs = label_segments(scores, labels);
  double tp_pa = 0, fn_pa = 0;
  for (const auto& s : segs) {
    if (s.max_score >= threshold)
      tp_pa += static_cast<double>(s.length());
    else
      fn_pa += static_cast<double>(s.length());
  }
  m.precision_pa = tp_pa + fp > 0 ? tp_pa / (tp_pa + fp) : 0.0;
  m.recall_pa = tp_pa + fn_pa > 0 ? tp_pa / (tp_pa + fn_pa) : 0.0;
  m.f1_pa = f_measure(tp_pa, fp, fn_pa);
  return m;
}

Metrics evaluate(std::span<const double> scores, std::span<const int> labels) {
  size_t n = scores.size();
  size_t positives = 0;
  for (int v : labels) positives += v != 0;
  if (positives == 0 || n == 0) {
    Metrics m;
    m.threshold = std::numeric_limits<double>::infinity();
    return m;
  }

  // plain sweep: sort points by score, alarm set = {score >= v} per distinct v
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  Metrics best;
  best.f1 = -1.0;
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    double v = scores[order[i]];
    while (i < n && scores[order[i]] == v) {
      if (labels[order[i]] != 0)
        tp += 1;
      else
        fp += 1;
      ++i;
    }
    double fn = static_cast<double>(positives) - tp;
    double f1 = f_measure(tp, fp, fn);
    if (f1 > best.f1) {
      best.f1 = f1;
      best.threshold = v;
    }
  }
  Metrics m = metrics_at_threshold(scores, labels, best.threshold);

  // point-adjusted sweep: segment coverage by max score, pointwise fp outside
  auto segs = label_segments(scores, labels);
  std::vector<std::pair<double, size_t>> seg_by_max;  // (max score, length)
  double total_len = 0.0;
  for (const auto& s : segs) {
    seg_by_max.emplace_back(s.max_score, s.length());
    total_len += static_cast<double>(s.length());
  }
  std::sort(seg_by_max.begin(), seg_by_max.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> neg_scores;
  neg_scores.reserve(n);
  for (size_t t = 0; t < n; ++t)
    if (labels[t] == 0) neg_scores.push_back(scores[t]);
  std::sort(neg_scores.begin(), neg_scores.end(), std::greater<>());

  std::set<double> values(scores.begin(), scores.end());
  double best_pa = -1.0, best_pa_thr = 0.0;
  size_t si = 0, ni = 0;
  double tp_pa = 0;
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    double v = *it;
    while (si < seg_by_max.size() && seg_by_max[si].first >= v)
      tp_pa += static_cast<double>(seg_by_max[si++].second);
    while (ni < neg_scores.size() && neg_scores[ni] >= v) ++ni;
    double fp_pa = static_cast<double>(ni);
    double fn_pa = total_len - tp_pa;
    double f1 = f_measure(tp_pa, fp_pa, fn_pa);
    if (f1 > best_pa) {
      best_pa = f1;
      best_pa_thr = v;
    }
  }
  Metrics pa = metrics_at_threshold(scores, labels, best_pa_thr);
  m.f1_pa = pa.f1_pa;
  m.precision_pa = pa.precision_pa;
  m.recall_pa = pa.recall_pa;
  return m;
}

double bfr(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) return 0.0;
  double mean = std::accumulate(y.begin(), y.end(), 0.0) /
                static_cast<double>(y.size());
  double num = 0.0, den = 0.0;
  for (size_t t = 0; t < y.size(); ++t) {
    num += (y[t] - yhat[t]) * (y[t] - yhat[t]);
    den += (y[t] - mean) * (y[t] - mean);
  }
  if (!std::isfinite(num)) return 0.0;
  if (num == 0.0) return 1.0;
  if (den == 0.0) return 0.0;
  return std::max(0.0, 1.0 - std::sqrt(num) / std::sqrt(den));
}

double index_accuracy(std::span<const int> predicted,
                      std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) return 0.0;
  int k = 0;
  for (int v : predicted) k = std::max(k, v + 1);
  for (int v : truth) k = std::max(k, v + 1);
  if (k <= 0) return 0.0;
  std::vector<int> perm(static_cast<size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    size_t hits = 0;
    for (size_t t = 0; t < truth.size(); ++t) {
      int p = predicted[t];
      if (p >= 0 && perm[static_cast<size_t>(p)] == truth[t]) hits++;
    }
    best = std::max(best, static_cast<double>(hits) /
                              static_cast<double>(truth.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

namespace {

std::vector<std::string> expr_variables(const Expression& expr) {
  std::set<int> channels;
  for (const Token& tok : expr.tokens())
    if (tok.op == Op::Var) channels.insert(tok.var);
  std::vector<std::string> out;
  for (int c : channels) out.push_back("x" + std::to_string(c + 1));
  return out;
}

}  // namespace

std::vector<Explanation> explain(const AnomalyReport& report,
                                 const std::vector<Rule>& rules) {
  std::vector<Explanation> out;
  for (const AlarmSegment& seg : report.segments) {
    auto it = std::find_if(rules.begin(), rules.end(),
                           [&](const Rule& r) { return r.id == seg.rule_id; });
    if (it == rules.end()) continue;
    Explanation ex;
    ex.segment = seg;
    std::set<std::string> vars;
    if (it->kind == Rule::Kind::Range) {
      ex.formula = format_sig6(it->lower) + " <= y <= " + format_sig6(it->upper);
    } else if (std::holds_alternative<Expression>(it->predictor)) {
      const auto& e = std::get<Expression>(it->predictor);
      bool already_step =
          !e.tokens().empty() && e.tokens().front().op == Op::Step;
      ex.formula = it->kind == Rule::Kind::StepEquation && !already_step
                       ? "y = step(" + e.infix() + ")"
                       : "y = " + e.infix();
      for (auto& v : expr_variables(e)) vars.insert(v);
    } else if (std::holds_alternative<ModeModel>(it->predictor)) {
      const auto& mm = std::get<ModeModel>(it->predictor);
      std::string f;
      for (size_t k = 0; k < mm.modes.size(); ++k) {
        if (k) f += "; ";
        f += "mode" + std::to_string(k) + ": y = " + mm.modes[k].expr.infix();
        for (auto& v : expr_variables(mm.modes[k].expr)) vars.insert(v);
      }
      if (mm.switch_logic) {
        f += "; switch: " + mm.switch_logic->infix() + " > 0";
        for (auto& v : expr_variables(*mm.switch_logic)) vars.insert(v);
      }
      ex.formula = f;
    } else if (std::holds_alternative<TransferFunction>(it->predictor)) {
      ex.formula = "y = [" + std::get<TransferFunction>(it->predictor).str() + "] u";
      vars.insert("x1");
    }
    vars.insert("y");
    ex.variables.assign(vars.begin(), vars.end());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace srlr

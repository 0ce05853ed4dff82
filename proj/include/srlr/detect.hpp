#pragma once

#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "srlr/expr.hpp"
#include "srlr/multimode.hpp"
#include "srlr/sdomain.hpp"

namespace srlr {

// A monitoring rule derived from recovered logic. Equation rules score the
// absolute prediction residual, step-equation rules score binary mismatch of
// a thresholded predictor, range rules flag the target outside [lower, upper].
struct Rule {
  enum class Kind { Equation, StepEquation, Range };

  std::string id;
  Kind kind = Kind::Equation;
  std::variant<std::monostate, Expression, ModeModel, TransferFunction> predictor;
  double lower = 0.0;  // Range only; lower < upper enforced at scoring
  double upper = 0.0;
  IntegrationMethod method = IntegrationMethod::Euler;  // TransferFunction only
};

// Raw per-timestep anomaly scores for one rule. Points a predictor cannot
// evaluate (leading delay warmup, non-finite predictions) score zero.
std::vector<double> score(const Rule& rule, const Dataset& data);

// Predictions used by equation scoring; exposed for metric computation.
std::vector<double> rule_predictions(const Rule& rule, const Dataset& data);

// s_t = a e_t + (1-a) s_{t-1}, s_0 = e_0.
std::vector<double> ewma_smooth(std::span<const double> scores, double a);

// Label-free threshold: scan eps = mu + z sigma for z in {2, 2.5, ..., 10}
// and keep the z maximizing (dmu/mu + dsigma/sigma) / (#points + #segments^2)
// over the points strictly above eps. Falls back to the widest eps when no
// candidate produces anomalies.
double nonparametric_threshold(std::span<const double> smoothed);

struct SmoothedScores {
  std::vector<double> smoothed;
  double threshold = 0.0;
};
SmoothedScores smooth_and_threshold(std::span<const double> scores,
                                    double smoothing = 0.1);

struct AlarmSegment {
  size_t start = 0;  // [start, end)
  size_t end = 0;
  std::string rule_id;
};

struct DetectConfig {
  double smoothing = 0.1;
  size_t min_segment = 0;  // prune alarm runs shorter than this (0 keeps all)
};

struct AnomalyReport {
  std::vector<std::string> rule_ids;
  std::vector<std::vector<double>> raw;       // per rule
  std::vector<std::vector<double>> smoothed;  // per rule
  std::vector<double> thresholds;             // per rule
  std::vector<AlarmSegment> segments;         // all rules, sorted by start
  std::map<std::string, size_t> violations;   // alarm point count per rule
};
AnomalyReport detect_anomalies(const std::vector<Rule>& rules,
                               const Dataset& data,
                               const DetectConfig& cfg = {});

struct Metrics {
  double f1 = 0.0, precision = 0.0, recall = 0.0;
  double f1_pa = 0.0, precision_pa = 0.0, recall_pa = 0.0;
  double threshold = 0.0;  // plain best-F1 threshold (alarm: score >= threshold)
  double fpr = 0.0;        // false-positive rate at that threshold
  double bfr = 0.0;        // optional context, filled by callers
  double index_acc = 0.0;  // optional context, filled by callers
};

// Point metrics at one fixed threshold (alarm = score >= threshold), both
// plain and point-adjusted (a true segment touched by any alarm counts whole).
Metrics metrics_at_threshold(std::span<const double> scores,
                             std::span<const int> labels, double threshold);

// Best-threshold sweep over all distinct score values: plain F1 and
// point-adjusted F1 are each maximized independently.
Metrics evaluate(std::span<const double> scores, std::span<const int> labels);

// max(0, 1 - ||y - yhat|| / ||y - mean(y)||); 1 iff exact, 0 on non-finite.
double bfr(std::span<const double> y, std::span<const double> yhat);

// Best agreement over all relabelings of the predicted mode indices;
// entries of -1 in `predicted` never match.
double index_accuracy(std::span<const int> predicted, std::span<const int> truth);

struct Explanation {
  AlarmSegment segment;
  std::string formula;
  std::vector<std::string> variables;  // candidate compromised variables
};
std::vector<Explanation> explain(const AnomalyReport& report,
                                 const std::vector<Rule>& rules);

}  // namespace srlr

#include "srlr/plantsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "srlr/error.hpp"

namespace srlr {

std::vector<double> ou_series(std::size_t n, double dt, const OuParams& p,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n);
  if (n == 0) return x;
  double v = p.mean + p.sigma * normal(rng);
  double diff = p.sigma * std::sqrt(2.0 * dt / p.tau);
  for (std::size_t t = 0; t < n; ++t) {
    x[t] = v;
    v += dt * (p.mean - v) / p.tau + diff * normal(rng);
  }
  return x;
}

std::vector<double> rescale_noise(std::vector<double> raw, double target_std) {
  if (raw.empty()) return raw;
  double mean = std::accumulate(raw.begin(), raw.end(), 0.0) /
                static_cast<double>(raw.size());
  double sq = 0.0;
  for (double v : raw) sq += (v - mean) * (v - mean);
  double sd = std::sqrt(sq / static_cast<double>(raw.size()));
  if (sd <= 0.0) raise(ErrorCode::DegenerateTarget, "noise draw has zero spread");
  double scale = target_std / sd;
  for (double& v : raw) v = (v - mean) * scale;
  return raw;
}

// ---------------------------------------------------------------------------

EwmaRun gen_ewma(std::size_t n, double alpha, double contamination,
                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EwmaRun run;
  run.alpha = alpha;
  run.clean_x = ou_series(n, 0.1, OuParams{0.5, 0.5, 10.0}, rng);
  const auto& x = run.clean_x;

  std::vector<double> y(n);
  double w0 = alpha, w1 = alpha * (1.0 - alpha),
         w2 = alpha * (1.0 - alpha) * (1.0 - alpha);
  for (std::size_t t = 0; t < n; ++t) {
    y[t] = w0 * x[t];
    if (t >= 1) y[t] += w1 * x[t - 1];
    if (t >= 2) y[t] += w2 * x[t - 2];
  }

  std::vector<double> xc = x;
  std::size_t count =
      static_cast<std::size_t>(std::llround(contamination * static_cast<double>(n)));
  if (count > 0) {
    double xbar = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sample(idx.begin(), idx.end(), std::back_inserter(run.mask), count, rng);
    std::sort(run.mask.begin(), run.mask.end());
    std::normal_distribution<double> eps(-0.1, 0.1);
    for (std::size_t i : run.mask) xc[i] += xbar * eps(rng);
  }

  run.data.inputs = {std::move(xc)};
  run.data.target = std::move(y);
  return run;
}

// ---------------------------------------------------------------------------

std::vector<int> dwell_schedule(const std::vector<std::size_t>& counts,
                                std::mt19937_64& rng) {
  std::vector<std::size_t> remaining = counts;
  std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<int> labels;
  labels.reserve(total);

  auto pick = [&](int avoid) {
    std::vector<int> live;
    for (std::size_t k = 0; k < remaining.size(); ++k)
      if (remaining[k] > 0 && static_cast<int>(k) != avoid)
        live.push_back(static_cast<int>(k));
    if (live.empty()) return avoid;  // only the current mode has budget left
    std::uniform_int_distribution<std::size_t> d(0, live.size() - 1);
    return live[d(rng)];
  };

  int current = pick(-1);
  while (labels.size() < total) {
    std::size_t r = remaining[current];
    std::size_t dwell;
    if (r <= 150) {
      dwell = r;
    } else {
      std::uniform_int_distribution<std::size_t> d(50, std::min<std::size_t>(150, r - 50));
      dwell = d(rng);
    }
    labels.insert(labels.end(), dwell, current);
    remaining[current] -= dwell;
    if (labels.size() < total) current = pick(current);
  }
  return labels;
}

namespace {

struct HybridSpec {
  std::vector<std::size_t> counts;
  std::vector<std::string> exprs;
  int channels;
};

HybridSpec hybrid_spec(HybridKind kind) {
  switch (kind) {
    case HybridKind::Relay:
      return {{1200, 1200}, {"1", "-1"}, 1};
    case HybridKind::Hysteresis:
      return {{2000, 2000},
              {"0.5*x1*x1 + x1 - 0.5", "-0.5*x1*x1 + x1 + 0.5"},
              1};
    case HybridKind::Phototaxic:
      return {{840, 1500, 1200}, {"x2 - x1", "1/(x1 - x2)", "0"}, 2};
    case HybridKind::Nonlinear:
      return {{1500, 1000, 1000},
              {"x1*x2", "6*x1/(6 + x2)", "(x1 + x2)/(x1 - x2)"},
              2};
  }
  raise(ErrorCode::SpecInvalid, "unknown hybrid kind");
}

}  // namespace

HybridRun gen_hybrid(HybridKind kind, double noise_power, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HybridSpec spec = hybrid_spec(kind);
  HybridRun run;
  run.counts = spec.counts;
  std::vector<int> labels = dwell_schedule(spec.counts, rng);
  std::size_t n = labels.size();

  std::vector<std::vector<double>> inputs;
  switch (kind) {
    case HybridKind::Relay:
      inputs.push_back(ou_series(n, 0.1, OuParams{0.8, 0.7, 0.0}, rng));
      break;
    case HybridKind::Hysteresis: {
      auto x = ou_series(n, 0.1, OuParams{0.8, 1.0, 0.0}, rng);
      for (double& v : x) v = std::clamp(v, -2.0, 2.0);
      inputs.push_back(std::move(x));
      break;
    }
    case HybridKind::Phototaxic: {
      auto x1 = ou_series(n, 0.1, OuParams{0.8, 0.8, 3.0}, rng);
      auto x2 = ou_series(n, 0.1, OuParams{0.8, 0.8, 1.0}, rng);
      for (std::size_t t = 0; t < n; ++t) {
        // keep the channels separated so 1/(x1-x2) stays bounded
        if (x1[t] - x2[t] < 0.4) {
          double mid = 0.5 * (x1[t] + x2[t]);
          x1[t] = mid + 0.2;
          x2[t] = mid - 0.2;
        }
      }
      inputs.push_back(std::move(x1));
      inputs.push_back(std::move(x2));
      break;
    }
    case HybridKind::Nonlinear: {
      auto x1 = ou_series(n, 0.1, OuParams{0.8, 1.0, 3.0}, rng);
      auto x2 = ou_series(n, 0.1, OuParams{0.8, 1.0, 3.0}, rng);
      for (std::size_t t = 0; t < n; ++t) {
        x1[t] = std::clamp(x1[t], 1.0, 5.0);
        x2[t] = std::clamp(x2[t], 1.0, 5.0);
        // keep |x1-x2| >= 0.5 by pushing x2 away, preserving the gap's sign
        if (std::abs(x1[t] - x2[t]) < 0.5)
          x2[t] = x1[t] - (x1[t] >= x2[t] ? 0.5 : -0.5);
      }
      inputs.push_back(std::move(x1));
      inputs.push_back(std::move(x2));
      break;
    }
  }

  for (const auto& s : spec.exprs) run.truth.push_back(parse_infix(s));
  std::vector<Program> progs;
  for (const auto& e : run.truth) progs.emplace_back(e);

  Dataset clean;
  clean.inputs = inputs;
  clean.target.resize(n);
  clean.labels = labels;
  for (std::size_t t = 0; t < n; ++t)
    clean.target[t] = progs[static_cast<std::size_t>(labels[t])].eval(clean, t);

  run.test = clean;
  run.train = std::move(clean);
  if (noise_power > 0.0) {
    double sd = population_std(run.train.target);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> raw(n);
    for (double& v : raw) v = normal(rng);
    auto noise = rescale_noise(std::move(raw), noise_power * sd);
    for (std::size_t t = 0; t < n; ++t) run.train.target[t] += noise[t];
  }
  return run;
}

// ---------------------------------------------------------------------------

SwitchedLinearRun gen_switched_linear(double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SwitchedLinearRun run;
  run.snr_db = snr_db;
  run.theta = {{{-0.277, -1.779, 1.154}},
               {{-0.747, -1.816, 0.707}},
               {{-0.376, 1.803, 0.928}}};
  std::vector<int> labels = dwell_schedule({1200, 1200, 1200}, rng);
  std::size_t n = labels.size();
  std::vector<double> x = ou_series(n, 0.1, OuParams{0.5, 1.0, 0.0}, rng);

  auto roll = [&](const std::vector<double>& e) {
    std::vector<double> y(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& th = run.theta[static_cast<std::size_t>(labels[t])];
      double v = 0.0;
      if (t >= 1) v += th[0] * y[t - 1] + th[1] * x[t - 1];
      if (t >= 2) v += th[2] * x[t - 2];
      y[t] = v + (e.empty() ? 0.0 : e[t]);
    }
    return y;
  };

  std::vector<double> y_clean = roll({});
  double power = 0.0;
  for (std::size_t t = 2; t < n; ++t) power += y_clean[t] * y_clean[t];
  power /= static_cast<double>(n - 2);
  run.sigma_e = std::sqrt(power / std::pow(10.0, snr_db / 10.0));

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(n);
  for (double& v : raw) v = normal(rng);
  std::vector<double> e = rescale_noise(std::move(raw), run.sigma_e);
  std::vector<double> y = roll(e);

  run.data.inputs = {std::move(x), y};
  run.data.target = std::move(y);
  run.data.labels = std::move(labels);
  return run;
}

// ---------------------------------------------------------------------------

Dataset gen_block_data(const TransferFunction& tf, double duration, double dt,
                       std::uint64_t seed, IntegrationMethod method) {
  std::mt19937_64 rng(seed);
  std::size_t n = static_cast<std::size_t>(std::llround(duration / dt));
  std::vector<double> u = ou_series(n, dt, OuParams{0.05, 0.3, 0.0}, rng);
  for (double& v : u) v += 1.0;
  StateSpace ss = tf_to_statespace(tf.normalized());
  Dataset data;
  data.target = simulate(ss, u, dt, method);
  data.inputs = {std::move(u)};
  data.dt = dt;
  return data;
}

// ---------------------------------------------------------------------------

double lfc_control_output(int mode, double e, double xf, double z,
                          const LfcGains& g) {
  double u = (g.kp + g.kd) * e - g.kd * xf;
  if (mode == 0) u += g.ki * z;
  return u;
}

LfcRun simulate_lfc(double duration, double dt, std::uint64_t seed,
                    std::optional<double> fixed_load,
                    std::optional<LfcGains> gains) {
  std::mt19937_64 rng(seed);
  std::size_t n = static_cast<std::size_t>(std::llround(duration / dt));
  LfcRun run;
  if (gains) run.gains = *gains;
  run.dt = dt;
  run.ctrl.dt = dt;
  run.ctrl.inputs.resize(1);
  auto& es = run.ctrl.inputs[0];
  es.reserve(n);
  run.ctrl.target.reserve(n);
  run.ctrl.labels.assign(n, 0);
  run.mode.reserve(n);
  run.freq_dev.reserve(n);
  run.load.reserve(n);
  run.filt.reserve(n);
  run.integ.reserve(n);

  std::uniform_real_distribution<double> level(0.0, 0.5);
  std::uniform_real_distribution<double> dwell(2.0, 3.5);
  double dpl = fixed_load ? *fixed_load : level(rng);
  double next_switch = dwell(rng);

  double xg = 0.0, xt = 0.0, xm = 0.0, xf = 0.0, z = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double now = static_cast<double>(t) * dt;
    if (!fixed_load && now >= next_switch) {
      dpl = level(rng);
      next_switch += dwell(rng);
    }
    double dw = xm;
    double e = -20.0 * dw;
    int mode = std::abs(e) <= 0.1 ? 0 : 1;
    double u = lfc_control_output(mode, e, xf, z, run.gains);

    es.push_back(e);
    run.ctrl.target.push_back(u);
    run.mode.push_back(mode);
    run.freq_dev.push_back(dw);
    run.load.push_back(dpl);
    run.filt.push_back(xf);
    run.integ.push_back(z);

    xg += dt * (u - 5.0 * dw - xg) / 0.1;
    xt += dt * (xg - xt) / 0.4;
    xm += dt * (xt - dpl - 0.8 * xm) / 8.0;
    xf += dt * (e - xf);
    if (mode == 0) z += dt * e;
  }
  return run;
}

LfcRun apply_attack(const LfcRun& clean, const AttackConfig& cfg,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LfcRun run = clean;
  std::size_t n = run.ctrl.size();
  run.ctrl.labels.assign(n, 0);
  auto& u = run.ctrl.target;

  switch (cfg.kind) {
    case AttackKind::OutputInjection: {
      std::bernoulli_distribution flip(cfg.flip_probability);
      for (std::size_t t = 0; t < n; ++t) {
        if (!flip(rng)) continue;
        double v = -std::tanh(cfg.gain * u[t]);
        run.ctrl.labels[t] = v != u[t];
        u[t] = v;
      }
      break;
    }
    case AttackKind::ConfigTampering: {
      std::uniform_real_distribution<double> factor(0.4, 0.9);
      std::bernoulli_distribution coin(0.5);
      for (double start = 0.0; start < static_cast<double>(n) * run.dt;
           start += cfg.period) {
        LfcGains g = run.gains;
        for (double* gain : {&g.kp, &g.ki, &g.kd}) {
          double f = factor(rng) * (coin(rng) ? 1.0 : -1.0);
          *gain = std::max(0.0, *gain * (1.0 + f));
        }
        auto lo = static_cast<std::size_t>(std::llround((start + cfg.offset) / run.dt));
        auto hi = std::min<std::size_t>(
            n, static_cast<std::size_t>(std::llround((start + cfg.period) / run.dt)));
        for (std::size_t t = lo; t < hi; ++t) {
          double v = lfc_control_output(run.mode[t], run.ctrl.inputs[0][t],
                                        run.filt[t], run.integ[t], g);
          run.ctrl.labels[t] = v != clean.ctrl.target[t];
          u[t] = v;
        }
      }
      break;
    }
    case AttackKind::Disabling: {
      for (double start = 0.0; start < static_cast<double>(n) * run.dt;
           start += cfg.period) {
        auto lo = static_cast<std::size_t>(std::llround((start + cfg.offset) / run.dt));
        auto hi = std::min<std::size_t>(
            n, static_cast<std::size_t>(std::llround((start + cfg.period) / run.dt)));
        for (std::size_t t = lo; t < hi; ++t) {
          run.ctrl.labels[t] = clean.ctrl.target[t] != 0.0;
          u[t] = 0.0;
        }
      }
      break;
    }
  }
  return run;
}

// ---------------------------------------------------------------------------

AvrRun simulate_avr(double duration, double dt, std::uint64_t /*seed*/) {
  auto block = [](std::vector<double> num, std::vector<double> den) {
    return tf_to_statespace(TransferFunction{std::move(num), std::move(den)}.normalized());
  };
  StateSpace pid = block({100.0, 161.0, 81.6}, {0.0, 100.0, 1.0});
  StateSpace amp = block({10.0}, {1.0, 0.1});
  StateSpace exc = block({1.0}, {1.0, 0.4});
  StateSpace gen = block({1.0}, {1.0, 1.0});
  StateSpace sen = block({1.0}, {1.0, 0.05});

  std::size_t n = static_cast<std::size_t>(std::llround(duration / dt));
  AvrRun run;
  run.dt = dt;
  run.ctrl.dt = dt;
  run.ctrl.inputs.resize(1);
  run.ctrl.inputs[0].reserve(n);
  run.ctrl.target.reserve(n);
  run.terminal.reserve(n);

  Eigen::VectorXd x_pid = Eigen::VectorXd::Zero(pid.order());
  Eigen::VectorXd x_amp = Eigen::VectorXd::Zero(amp.order());
  Eigen::VectorXd x_exc = Eigen::VectorXd::Zero(exc.order());
  Eigen::VectorXd x_gen = Eigen::VectorXd::Zero(gen.order());
  Eigen::VectorXd x_sen = Eigen::VectorXd::Zero(sen.order());

  const double vref = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    // strictly proper blocks read only their state; the PID feedthrough
    // needs the error of the current step, so outputs go in loop order
    double vt = gen.C.dot(x_gen);
    double vs = sen.C.dot(x_sen);
    double e = vref - vs;
    double u = pid.C.dot(x_pid) + pid.D * e;
    double va = amp.C.dot(x_amp);
    double vx = exc.C.dot(x_exc);

    run.ctrl.inputs[0].push_back(e);
    run.ctrl.target.push_back(u);
    run.terminal.push_back(vt);

    x_sen += dt * (sen.A * x_sen + sen.B * vt);
    x_pid += dt * (pid.A * x_pid + pid.B * e);
    x_amp += dt * (amp.A * x_amp + amp.B * u);
    x_exc += dt * (exc.A * x_exc + exc.B * va);
    x_gen += dt * (gen.A * x_gen + gen.B * vx);
  }
  return run;
}

// ---------------------------------------------------------------------------

namespace {
double quantize_level(double v) { return std::round(v / 0.05) * 0.05; }
}  // namespace

TankRun gen_tank(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TankRun run;
  const double dt = run.dt;
  const double inflow = 0.55;

  std::vector<double> demand = ou_series(n, dt, OuParams{4.0, 0.15, 0.3}, rng);
  for (double& v : demand) v = std::clamp(v, 0.05, 0.55);

  std::vector<double> reading(n), pump_bits(n);
  double l = 0.5;
  for (std::size_t t = 0; t < n; ++t) {
    double lq = quantize_level(l);
    int pump = 0.5 - lq >= 0.0 ? 1 : 0;
    reading[t] = lq;
    pump_bits[t] = pump;
    l += dt * (inflow * pump - demand[t]);
    l = std::clamp(l, 0.0, 1.2);
  }

  run.pump.inputs = {reading};
  run.pump.target = pump_bits;
  run.pump.dt = dt;
  run.level.inputs = {reading, pump_bits, demand};
  run.level.target = reading;
  run.level.dt = dt;
  run.demand = std::move(demand);
  run.labels.assign(n, 0);
  return run;
}

TankRun apply_tank_attack(const TankRun& clean, TankAttack kind,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  (void)rng;
  TankRun run = clean;
  std::size_t n = run.pump.size();
  run.labels.assign(n, 0);
  // spans cover 20% of the stream so alarm thresholds keep headroom
  const std::size_t period = 400, offset = 320;

  std::vector<double> reading = clean.pump.inputs[0];
  std::vector<double> pump = clean.pump.target;

  for (std::size_t start = 0; start < n; start += period) {
    std::size_t lo = start + offset, hi = std::min(n, start + period);
    if (lo >= hi) continue;
    switch (kind) {
      case TankAttack::ActuatorFlip:
        for (std::size_t t = lo; t < hi; ++t) {
          pump[t] = 1.0 - pump[t];
          run.labels[t] = 1;
        }
        break;
      case TankAttack::OutOfRange:
        for (std::size_t t = lo; t < hi; ++t) {
          reading[t] += 0.8;
          run.labels[t] = 1;
        }
        break;
      case TankAttack::SensorFreeze: {
        double held = reading[lo];
        for (std::size_t t = lo; t < hi; ++t) {
          run.labels[t] = reading[t] != held;
          reading[t] = held;
        }
        break;
      }
    }
  }

  run.pump.inputs = {reading};
  run.pump.target = pump;
  run.level.inputs = {reading, pump, run.demand};
  run.level.target = std::move(reading);
  run.pump.labels = run.labels;
  run.level.labels = run.labels;
  return run;
}

}  // namespace srlr

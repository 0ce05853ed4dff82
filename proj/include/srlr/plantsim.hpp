#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "srlr/expr.hpp"
#include "srlr/multimode.hpp"
#include "srlr/sdomain.hpp"

namespace srlr {

// Ornstein-Uhlenbeck process, Euler-Maruyama discretized:
//   x += dt (mean - x)/tau + sigma sqrt(2 dt / tau) xi,   xi ~ N(0,1)
// `sigma` is the stationary standard deviation; x0 is drawn from the
// stationary law.
struct OuParams {
  double tau = 1.0;
  double sigma = 1.0;
  double mean = 0.0;
};
std::vector<double> ou_series(std::size_t n, double dt, const OuParams& p,
                              std::mt19937_64& rng);

// Standardize `raw` to exact zero mean and unit population std, then scale so
// the population std of the result is exactly `target_std`.
std::vector<double> rescale_noise(std::vector<double> raw, double target_std);

// ---------------------------------------------------------------------------
// Exponentially weighted moving average sensor with optional input
// contamination. The response keeps the three leading terms of the filter:
//   y(t) = a x(t) + a(1-a) x(t-1) + a(1-a)^2 x(t-2)
// computed from the clean input. Contaminated samples are replaced by
//   x~(i) = x(i) + mean(x) * eps_i,   eps_i ~ N(-0.1, 0.1)
// at `round(contamination * n)` positions drawn without replacement.
struct EwmaRun {
  Dataset data;                   // inputs {x~}, target y (from clean x)
  std::vector<std::size_t> mask;  // contaminated sample indices, ascending
  std::vector<double> clean_x;
  double alpha = 0.8;
};
EwmaRun gen_ewma(std::size_t n, double alpha, double contamination,
                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Hybrid benchmark systems: piecewise analytic outputs over shared continuous
// inputs, scheduled in dwell segments with exact per-mode sample counts.
enum class HybridKind { Relay, Hysteresis, Phototaxic, Nonlinear };

struct HybridRun {
  Dataset train;  // target = mode output + rescaled noise; labels = mode index
  Dataset test;   // same inputs, noiseless target, same labels
  std::vector<Expression> truth;    // one expression per mode
  std::vector<std::size_t> counts;  // per-mode sample totals
};
HybridRun gen_hybrid(HybridKind kind, double noise_power, std::uint64_t seed);

// Mode label sequence with exact totals: segments dwell on a mode for
// rand[50, min(150, r-50)] samples (all remaining r when r <= 150), then hand
// off to a random different mode that still has budget.
std::vector<int> dwell_schedule(const std::vector<std::size_t>& counts,
                                std::mt19937_64& rng);

// Switched ARX benchmark: y(t) = th_k . [y(t-1), x(t-1), x(t-2)] + e(t) with
// three submodels, 1200 samples each; e is white noise rescaled so that
// 10 log10(P_clean / var(e)) equals snr_db exactly, where P_clean is the mean
// square of the noise-free trajectory.
struct SwitchedLinearRun {
  Dataset data;  // inputs {x, y}, target y, labels = submodel index
  double snr_db = 0.0;
  double sigma_e = 0.0;
  std::vector<std::array<double, 3>> theta;
};
SwitchedLinearRun gen_switched_linear(double snr_db, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Open-loop excitation of a transfer function: u = 1 + OU(tau 0.05, sd 0.3),
// y simulated from rest with `method`. inputs {u}, target y.
Dataset gen_block_data(const TransferFunction& tf, double duration, double dt,
                       std::uint64_t seed,
                       IntegrationMethod method = IntegrationMethod::Euler);

// ---------------------------------------------------------------------------
// Load-frequency control loop with an integral-separated PID. The error is
// e = -20 dw; the integral channel only runs while |e| <= 0.1:
//   mode 0 (|e| <= 0.1):  u = Kp e + Kd (e - xf) + Ki z      (PID)
//   mode 1 (|e| >  0.1):  u = (Kp + Kd) e - Kd xf            (PD)
// with shared filter state xf' = e - xf and gated integrator z' = e.
// Per-mode transfer functions: (3.3 s^2 + 2.7 s + 0.6)/(s^2 + s) and
// (3.3 s + 2.1)/(s + 1) for Kp 2.1, Ki 0.6, Kd 1.2.
struct LfcGains {
  double kp = 2.1;
  double ki = 0.6;
  double kd = 1.2;
};
double lfc_control_output(int mode, double e, double xf, double z,
                          const LfcGains& g);

struct LfcRun {
  Dataset ctrl;              // inputs {e}, target u, labels = attack flags
  std::vector<int> mode;     // 0 = PID, 1 = PD
  std::vector<double> freq_dev;
  std::vector<double> load;
  std::vector<double> filt;   // xf trajectory
  std::vector<double> integ;  // z trajectory
  LfcGains gains;
  double dt = 1e-2;
};
// Random piecewise-constant load (levels U[0, 0.5], dwell U[2, 3.5] s) unless
// `fixed_load` pins it; `gains` overrides the nominal controller (all-zero
// gains give the droop-only response).
LfcRun simulate_lfc(double duration, double dt, std::uint64_t seed,
                    std::optional<double> fixed_load = {},
                    std::optional<LfcGains> gains = {});

// ---------------------------------------------------------------------------
// Controller-side attacks replayed open-loop over a clean run: the plant
// traces and error signal stay untouched, only the recorded command channel
// changes. Labels are the pointwise difference u_att != u_clean.
enum class AttackKind { OutputInjection, ConfigTampering, Disabling };

struct AttackConfig {
  AttackKind kind = AttackKind::OutputInjection;
  double flip_probability = 0.15;  // injection: Bernoulli rate, fixed per run
  double gain = 2.0;               // injection: u -> -tanh(gain u)
  double period = 20.0;            // tampering/disabling: seconds per period
  double offset = 8.0;             // span start inside each period, seconds
};
LfcRun apply_attack(const LfcRun& clean, const AttackConfig& cfg,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Automatic voltage regulator loop: PID (81.6 s^2 + 161 s + 100)/(s^2 + 100 s),
// amplifier 10/(0.1 s + 1), exciter 1/(0.4 s + 1), generator 1/(s + 1),
// sensor 1/(0.05 s + 1), unit reference step, forward Euler.
struct AvrRun {
  Dataset ctrl;  // inputs {e}, target u
  std::vector<double> terminal;
  double dt = 1e-3;
};
AvrRun simulate_avr(double duration, double dt, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bang-bang tank: pump = step(0.5 - level_reading) refills against an OU
// demand draw; the level sensor quantizes to a 0.05 grid, which guarantees a
// margin for the threshold rule. dt 0.5, inflow 0.55 when the pump runs.
struct TankRun {
  Dataset pump;   // inputs {reading}, target pump bit
  Dataset level;  // inputs {reading, pump, demand}, target reading
  std::vector<double> demand;
  std::vector<int> labels;  // attack flags (all zero for a clean run)
  double dt = 0.5;
};
TankRun gen_tank(std::size_t n, std::uint64_t seed);

enum class TankAttack { ActuatorFlip, OutOfRange, SensorFreeze };
TankRun apply_tank_attack(const TankRun& clean, TankAttack kind,
                          std::uint64_t seed);

}  // namespace srlr

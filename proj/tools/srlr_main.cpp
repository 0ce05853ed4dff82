#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srlr/dataio.hpp"
#include "srlr/detect.hpp"
#include "srlr/engine.hpp"
#include "srlr/multimode.hpp"
#include "srlr/plantsim.hpp"
#include "srlr/policy.hpp"
#include "srlr/sdomain.hpp"

namespace fs = std::filesystem;
using srlr::Json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_path;
  std::string rules_path;
  long long seed = -1;  // -1 = take the config's seed
  bool force = false;
  int threads = 0;  // 0 = SRLR_THREADS env, then 1
};

Json load_config(const CommonArgs& args) {
  if (args.config_path.empty()) return Json::object();
  Json j = Json::parse(srlr::read_text_file(args.config_path), nullptr, false);
  if (j.is_discarded())
    srlr::raise(srlr::ErrorCode::SpecInvalid,
                "config is not valid JSON: " + args.config_path);
  if (!j.is_object())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "config root must be an object");
  return j;
}

std::uint64_t effective_seed(const CommonArgs& args, const Json& config) {
  if (args.seed >= 0) return static_cast<std::uint64_t>(args.seed);
  return config.value("seed", std::uint64_t{0});
}

int effective_threads(const CommonArgs& args) {
  if (args.threads > 0) return args.threads;
  if (const char* env = std::getenv("SRLR_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

fs::path prepare_run_dir(const CommonArgs& args, const std::string& command,
                         const Json& config, std::uint64_t seed) {
  if (args.out_dir.empty())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "--out directory is required");
  fs::path dir(args.out_dir);
  if (fs::exists(dir)) {
    if (!args.force)
      srlr::raise(srlr::ErrorCode::SpecInvalid,
                  "output directory exists: " + args.out_dir +
                      " (pass --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  Json snapshot;
  snapshot["command"] = command;
  snapshot["seed"] = seed;
  snapshot["config"] = config;
  srlr::write_text_file((dir / "config.json").string(),
                        srlr::dump_json(snapshot));
  return dir;
}

double label_fraction(const srlr::Dataset& data) {
  if (data.labels.empty()) return 0.0;
  size_t hits = 0;
  for (int v : data.labels) hits += v != 0;
  return static_cast<double>(hits) / static_cast<double>(data.labels.size());
}

// --------------------------------------------------------------------------
// simulate

srlr::AttackConfig attack_from_json(const Json& j) {
  srlr::AttackConfig cfg;
  std::string kind = j.value("kind", "injection");
  if (kind == "injection")
    cfg.kind = srlr::AttackKind::OutputInjection;
  else if (kind == "tampering")
    cfg.kind = srlr::AttackKind::ConfigTampering;
  else if (kind == "disabling")
    cfg.kind = srlr::AttackKind::Disabling;
  else
    srlr::raise(srlr::ErrorCode::SpecInvalid, "attack.kind: unknown '" + kind + "'");
  cfg.flip_probability = j.value("flip_probability", cfg.flip_probability);
  cfg.gain = j.value("gain", cfg.gain);
  cfg.period = j.value("period", cfg.period);
  cfg.offset = j.value("offset", cfg.offset);
  return cfg;
}

int cmd_simulate(const CommonArgs& args) {
  Json config = load_config(args);
  std::uint64_t seed = effective_seed(args, config);
  fs::path dir = prepare_run_dir(args, "simulate", config, seed);
  std::string plant = config.value("plant", "");
  Json truth;
  srlr::Dataset data;

  if (plant == "ewma") {
    auto run = srlr::gen_ewma(config.value("n", std::size_t{5000}),
                              config.value("alpha", 0.8),
                              config.value("contamination", 0.0), seed);
    data = run.data;
    truth["coefficients"] = {run.alpha, run.alpha * (1 - run.alpha),
                             run.alpha * (1 - run.alpha) * (1 - run.alpha)};
    size_t corrupted = 0;
    for (char m : run.mask) corrupted += m != 0;
    truth["contaminated_points"] = corrupted;
  } else if (plant == "relay" || plant == "hysteresis" ||
             plant == "phototaxic" || plant == "nonlinear") {
    srlr::HybridKind kind = plant == "relay"       ? srlr::HybridKind::Relay
                            : plant == "hysteresis" ? srlr::HybridKind::Hysteresis
                            : plant == "phototaxic" ? srlr::HybridKind::Phototaxic
                                                    : srlr::HybridKind::Nonlinear;
    auto run = srlr::gen_hybrid(kind, config.value("noise_power", 0.02), seed);
    data = run.train;
    srlr::write_csv((dir / "test.csv").string(), run.test);
    truth["modes"] = Json::array();
    for (const auto& e : run.truth) truth["modes"].push_back(e.infix());
    truth["counts"] = run.counts;
  } else if (plant == "switched") {
    auto run = srlr::gen_switched_linear(config.value("snr_db", 20.0), seed);
    data = run.data;
    truth["theta"] = run.theta;
    truth["sigma_e"] = run.sigma_e;
    truth["snr_db"] = run.snr_db;
  } else if (plant == "block") {
    srlr::TransferFunction tf{config.at("num").get<std::vector<double>>(),
                              config.at("den").get<std::vector<double>>()};
    auto method = config.value("method", "euler") == std::string("rk4")
                      ? srlr::IntegrationMethod::Rk4
                      : srlr::IntegrationMethod::Euler;
    data = srlr::gen_block_data(tf, config.value("duration", 10.0),
                                config.value("dt", 1e-3), seed, method);
    truth["tf"] = srlr::tf_to_json(tf);
  } else if (plant == "lfc") {
    std::optional<double> fixed_load;
    if (config.contains("fixed_load") && !config["fixed_load"].is_null())
      fixed_load = config["fixed_load"].get<double>();
    std::optional<srlr::LfcGains> gains;
    if (config.contains("gains")) {
      const Json& g = config["gains"];
      gains = srlr::LfcGains{g.value("kp", 2.1), g.value("ki", 0.6),
                             g.value("kd", 1.2)};
    }
    auto run = srlr::simulate_lfc(config.value("duration", 180.0),
                                  config.value("dt", 1e-2), seed, fixed_load,
                                  gains);
    if (config.contains("attack"))
      run = srlr::apply_attack(run, attack_from_json(config["attack"]),
                               seed + 1);
    data = run.ctrl;
    truth["gains"] = {{"kp", run.gains.kp},
                      {"ki", run.gains.ki},
                      {"kd", run.gains.kd}};
    truth["switch_threshold"] = 0.1;
    truth["mode"] = run.mode;
  } else if (plant == "avr") {
    auto run = srlr::simulate_avr(config.value("duration", 8.0),
                                  config.value("dt", 1e-3), seed);
    data = run.ctrl;
    truth["pid"] = srlr::tf_to_json(
        srlr::TransferFunction{{100.0, 161.0, 81.6}, {0.0, 100.0, 1.0}});
  } else if (plant == "tank") {
    auto run = srlr::gen_tank(config.value("n", std::size_t{4000}), seed);
    if (config.contains("attack")) {
      std::string kind = config["attack"].value("kind", "flip");
      srlr::TankAttack atk = kind == "flip"    ? srlr::TankAttack::ActuatorFlip
                             : kind == "range" ? srlr::TankAttack::OutOfRange
                             : kind == "freeze"
                                 ? srlr::TankAttack::SensorFreeze
                                 : throw srlr::Error(
                                       srlr::ErrorCode::SpecInvalid,
                                       "attack.kind: unknown '" + kind + "'");
      run = srlr::apply_tank_attack(run, atk, seed + 1);
    }
    data = run.pump;
    data.labels = run.labels;
    srlr::Dataset level = run.level;
    level.labels = run.labels;
    srlr::write_csv((dir / "level.csv").string(), level);
    truth["pump_rule"] = "y = step(0.5 - x1)";
    truth["level_bounds"] = {0.0, 1.0};
  } else {
    srlr::raise(srlr::ErrorCode::SpecInvalid,
                "plant: expected one of ewma|relay|hysteresis|phototaxic|"
                "nonlinear|switched|block|lfc|avr|tank, got '" +
                    plant + "'");
  }

  srlr::write_csv((dir / "data.csv").string(), data);
  srlr::write_text_file((dir / "truth.json").string(), srlr::dump_json(truth));
  std::string summary = "rows=" + std::to_string(data.size()) +
                        " channels=" + std::to_string(data.channels()) +
                        " attack_fraction=" +
                        srlr::format_sig9(label_fraction(data));
  srlr::write_text_file((dir / "log.txt").string(), summary + "\n");
  std::cout << summary << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// recover

srlr::TokenLibrary library_from_json(const Json& config) {
  int max_length = config.value("max_length", 30);
  int max_constants = config.value("max_constants", 5);
  if (!config.contains("library"))
    srlr::raise(srlr::ErrorCode::SpecInvalid, "config needs a 'library' entry");
  const Json& lib = config["library"];
  if (lib.is_string()) {
    if (lib.get<std::string>() == "laplace")
      return srlr::TokenLibrary::laplace(max_length);
    srlr::raise(srlr::ErrorCode::SpecInvalid,
                "library: unknown preset '" + lib.get<std::string>() + "'");
  }
  if (lib.is_array()) {
    auto names = lib.get<std::vector<std::string>>();
    return srlr::TokenLibrary::from_names(names, max_length, max_constants);
  }
  srlr::TokenLibrary out = srlr::TokenLibrary::time_domain(
      lib.value("channels", 1), lib.value("max_delay", 0),
      lib.value("transcendental", false), lib.value("step", false), max_length);
  out.max_constants = max_constants;
  return out;
}

srlr::EngineConfig engine_config_from_json(const Json& config,
                                           std::uint64_t seed, int threads) {
  srlr::EngineConfig cfg;
  cfg.library = library_from_json(config);
  cfg.epsilon = config.value("epsilon", cfg.epsilon);
  cfg.alpha = config.value("alpha", cfg.alpha);
  cfg.phi = config.value("phi", cfg.phi);
  cfg.batch_size = config.value("batch_size", cfg.batch_size);
  cfg.budget = config.value("budget", cfg.budget);
  cfg.hidden_size = config.value("hidden_size", cfg.hidden_size);
  cfg.learning_rate = config.value("learning_rate", cfg.learning_rate);
  cfg.entropy_weight = config.value("entropy_weight", cfg.entropy_weight);
  cfg.nm_max_iter = config.value("nm_max_iter", cfg.nm_max_iter);
  cfg.nm_stall_iters = config.value("nm_stall_iters", cfg.nm_stall_iters);
  cfg.outlier_csteps = config.value("outlier_csteps", cfg.outlier_csteps);
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

std::string train_log_csv(const srlr::TrainResult& result) {
  std::string out = "iteration,best_reward,mean_reward,best_complexity\n";
  for (const auto& row : result.log) {
    out += std::to_string(row.iteration) + ',' +
           srlr::format_sig9(row.best_reward) + ',' +
           srlr::format_sig9(row.mean_reward) + ',' +
           std::to_string(row.best_complexity) + "\n";
  }
  return out;
}

// Fit quality over [from, n) on the points the rule can actually predict.
double holdout_bfr(const srlr::Rule& rule, const srlr::Dataset& data,
                   size_t from) {
  auto yhat = srlr::rule_predictions(rule, data);
  std::vector<double> y_part, yhat_part;
  for (size_t t = from; t < data.size(); ++t) {
    if (!std::isfinite(yhat[t])) continue;
    y_part.push_back(data.target[t]);
    yhat_part.push_back(yhat[t]);
  }
  if (y_part.empty()) return 0.0;
  return srlr::bfr(y_part, yhat_part);
}

int cmd_recover(const CommonArgs& args) {
  Json config = load_config(args);
  std::uint64_t seed = effective_seed(args, config);
  fs::path dir = prepare_run_dir(args, "recover", config, seed);
  if (args.data_path.empty())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "--data CSV is required");
  srlr::Dataset data = srlr::read_csv(args.data_path);
  std::string mode = config.value("mode", "time");
  double holdout = config.value("holdout", 0.0);
  if (holdout < 0.0 || holdout >= 1.0)
    srlr::raise(srlr::ErrorCode::SpecInvalid, "holdout must lie in [0, 1)");
  size_t split = data.size() -
                 static_cast<size_t>(holdout * static_cast<double>(data.size()));

  srlr::EngineConfig ecfg =
      engine_config_from_json(config, seed, effective_threads(args));
  int lib_delay = 0;
  for (const auto& tok : ecfg.library.tokens)
    lib_delay = std::max(lib_delay, static_cast<int>(tok.delay));
  if (data.channels() == 0)
    srlr::raise(srlr::ErrorCode::SchemaMismatch, "dataset has no input columns");

  srlr::DsrEngine engine(ecfg);
  auto started = std::chrono::steady_clock::now();
  std::vector<srlr::Rule> rules;
  Json report;
  report["mode"] = mode;
  long evaluated = 0;

  if (mode == "time") {
    srlr::TimeDomainModel model(lib_delay);
    std::vector<size_t> subset;
    if (holdout > 0.0)
      for (size_t t = model.first_index(data); t < split; ++t)
        subset.push_back(t);
    auto result = engine.train(model, data, subset);
    evaluated = result.evaluated;
    srlr::Rule rule;
    rule.id = "r1";
    rule.kind = config.value("rule_kind", "equation") == std::string("step_equation")
                    ? srlr::Rule::Kind::StepEquation
                    : srlr::Rule::Kind::Equation;
    rule.predictor = result.best.expr;
    rules.push_back(rule);
    report["infix"] = result.best.expr.infix();
    report["complexity"] = result.best.expr.complexity();
    report["reward"] = result.best.reward;
    report["nrmse"] = result.best.nrmse;
    report["aic"] = result.best.aic;
    srlr::write_text_file((dir / "train_log.csv").string(),
                          train_log_csv(result));
  } else if (mode == "sdomain") {
    srlr::SDomainModel model(config.value("max_degree", 4),
                             config.value("integration", "euler") ==
                                     std::string("rk4")
                                 ? srlr::IntegrationMethod::Rk4
                                 : srlr::IntegrationMethod::Euler);
    auto recovered = srlr::recover_tf(engine, data, model);
    srlr::Rule rule;
    rule.id = "r1";
    rule.kind = srlr::Rule::Kind::Equation;
    rule.predictor = recovered.tf;
    rules.push_back(rule);
    report["tf"] = srlr::tf_to_json(recovered.tf);
    report["infix"] = recovered.tf.str();
    report["complexity"] = recovered.score.expr.complexity();
    report["reward"] = recovered.score.reward;
    report["nrmse"] = recovered.score.nrmse;
    split = std::min(split, data.size());
  } else if (mode == "multimode") {
    Json mm = config.value("multimode", Json::object());
    srlr::ContinuityConfig ccfg;
    ccfg.w = mm.value("w", ccfg.w);
    ccfg.lambda1 = mm.value("lambda1", ccfg.lambda1);
    ccfg.lambda2 = mm.value("lambda2", ccfg.lambda2);
    ccfg.window = mm.value("window", ccfg.window);
    ccfg.occupancy = mm.value("occupancy", ccfg.occupancy);
    ccfg.max_alternations = mm.value("max_alternations", ccfg.max_alternations);
    ccfg.max_modes = mm.value("max_modes", ccfg.max_modes);
    ccfg.budget_per_alternation =
        mm.value("budget_per_alternation", ccfg.budget_per_alternation);
    bool laplace = config["library"].is_string() &&
                   config["library"].get<std::string>() == "laplace";
    std::unique_ptr<srlr::PredictionModel> model;
    if (laplace)
      model = std::make_unique<srlr::SDomainModel>(config.value("max_degree", 4));
    else
      model = std::make_unique<srlr::TimeDomainModel>(lib_delay);
    auto result = srlr::recover_multimode(engine, *model, data, ccfg);
    evaluated = result.evaluated;
    srlr::ModeModel mode_model = result.model;
    if (mm.value("switch", false)) {
      srlr::SwitchDetectConfig swcfg;
      swcfg.support = mm.value("switch_support", swcfg.support);
      swcfg.keep_fraction = mm.value("switch_keep", swcfg.keep_fraction);
      mode_model.switch_logic =
          srlr::detect_switch_logic(engine, data, mode_model, swcfg);
    }
    srlr::Rule rule;
    rule.id = "r1";
    rule.kind = srlr::Rule::Kind::Equation;
    rule.predictor = mode_model;
    rules.push_back(rule);
    report["modes"] = Json::array();
    for (const auto& m : mode_model.modes)
      report["modes"].push_back(m.expr.infix());
    if (mode_model.switch_logic)
      report["switch_logic"] = mode_model.switch_logic->infix();
    if (!data.labels.empty()) {
      std::vector<int> assignment = result.assignment;
      report["index_accuracy"] =
          srlr::index_accuracy(assignment, data.labels);
    }
  } else {
    srlr::raise(srlr::ErrorCode::SpecInvalid,
                "mode: expected time|sdomain|multimode, got '" + mode + "'");
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              started)
                    .count();
  report["bfr"] = holdout_bfr(rules[0], data, holdout > 0.0 ? split : 0);
  report["evaluated"] = evaluated;
  srlr::write_text_file((dir / "rules.json").string(),
                        srlr::dump_json(srlr::rules_to_json(rules)));
  srlr::write_text_file((dir / "report.json").string(),
                        srlr::dump_json(report));
  std::string summary = "bfr=" + srlr::format_sig9(report["bfr"].get<double>());
  if (report.contains("infix"))
    summary += " recovered=" + report["infix"].get<std::string>();
  srlr::write_text_file((dir / "log.txt").string(),
                        summary + "\nwall_time_s=" + srlr::format_sig9(wall) +
                            "\n");
  std::cout << summary << "\nwall_time_s=" << srlr::format_sig9(wall) << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// detect / eval

std::vector<srlr::Rule> load_rules(const CommonArgs& args) {
  if (args.rules_path.empty())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "--rules JSON is required");
  Json j = Json::parse(srlr::read_text_file(args.rules_path), nullptr, false);
  if (j.is_discarded())
    srlr::raise(srlr::ErrorCode::SpecInvalid,
                "rules file is not valid JSON: " + args.rules_path);
  return srlr::rules_from_json(j);
}

std::string plot_csv(const srlr::Dataset& data, const srlr::AnomalyReport& report,
                     size_t rule_index) {
  std::string out = "t,raw,smoothed,threshold,label\n";
  const auto& raw = report.raw[rule_index];
  const auto& smoothed = report.smoothed[rule_index];
  double threshold = report.thresholds[rule_index];
  for (size_t t = 0; t < raw.size(); ++t) {
    out += srlr::format_sig9(static_cast<double>(t) * data.dt) + ',' +
           srlr::format_sig9(raw[t]) + ',' + srlr::format_sig9(smoothed[t]) +
           ',' + srlr::format_sig9(threshold) + ',' +
           std::to_string(data.labels.empty() ? 0 : data.labels[t]) + "\n";
  }
  return out;
}

std::vector<double> combined_smoothed(const srlr::AnomalyReport& report) {
  std::vector<double> combined;
  for (const auto& series : report.smoothed) {
    if (combined.empty()) combined.assign(series.size(), 0.0);
    for (size_t t = 0; t < series.size(); ++t)
      combined[t] = std::max(combined[t], series[t]);
  }
  return combined;
}

int cmd_detect(const CommonArgs& args) {
  Json config = load_config(args);
  std::uint64_t seed = effective_seed(args, config);
  fs::path dir = prepare_run_dir(args, "detect", config, seed);
  if (args.data_path.empty())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "--data CSV is required");
  srlr::Dataset data = srlr::read_csv(args.data_path);
  std::vector<srlr::Rule> rules = load_rules(args);

  srlr::DetectConfig dcfg;
  dcfg.smoothing = config.value("smoothing", dcfg.smoothing);
  dcfg.min_segment = config.value("min_segment", dcfg.min_segment);
  srlr::AnomalyReport report = srlr::detect_anomalies(rules, data, dcfg);

  Json out = srlr::report_to_json(report);
  out["explanations"] = Json::array();
  for (const auto& note : srlr::explain(report, rules)) {
    Json e;
    e["start"] = note.segment.start;
    e["end"] = note.segment.end;
    e["rule"] = note.segment.rule_id;
    e["formula"] = note.formula;
    e["variables"] = note.variables;
    out["explanations"].push_back(e);
  }
  srlr::write_text_file((dir / "report.json").string(), srlr::dump_json(out));
  for (size_t i = 0; i < rules.size(); ++i)
    srlr::write_text_file((dir / ("plot_" + report.rule_ids[i] + ".csv")).string(),
                          plot_csv(data, report, i));

  std::string summary = "segments=" + std::to_string(report.segments.size());
  if (!data.labels.empty()) {
    srlr::Metrics metrics = srlr::evaluate(combined_smoothed(report), data.labels);
    srlr::write_text_file((dir / "metrics.csv").string(),
                          srlr::metrics_csv(metrics));
    summary += " f1=" + srlr::format_sig9(metrics.f1) +
               " f1_pa=" + srlr::format_sig9(metrics.f1_pa);
  }
  srlr::write_text_file((dir / "log.txt").string(), summary + "\n");
  std::cout << summary << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  Json config = load_config(args);
  std::uint64_t seed = effective_seed(args, config);
  fs::path dir = prepare_run_dir(args, "eval", config, seed);
  if (args.data_path.empty())
    srlr::raise(srlr::ErrorCode::SpecInvalid, "--data CSV is required");
  srlr::Dataset data = srlr::read_csv(args.data_path);
  std::vector<srlr::Rule> rules = load_rules(args);

  Json out;
  out["bfr_by_rule"] = Json::object();
  for (const auto& rule : rules) {
    if (rule.kind == srlr::Rule::Kind::Range) continue;
    out["bfr_by_rule"][rule.id] = holdout_bfr(rule, data, 0);
  }
  std::string summary;
  if (!data.labels.empty()) {
    srlr::AnomalyReport report = srlr::detect_anomalies(rules, data);
    srlr::Metrics metrics = srlr::evaluate(combined_smoothed(report), data.labels);
    out["detection"] = srlr::metrics_to_json(metrics);
    srlr::write_text_file((dir / "metrics.csv").string(),
                          srlr::metrics_csv(metrics));
    summary = "f1=" + srlr::format_sig9(metrics.f1) +
              " f1_pa=" + srlr::format_sig9(metrics.f1_pa);
  } else {
    summary = "rules=" + std::to_string(rules.size());
  }
  srlr::write_text_file((dir / "metrics.json").string(), srlr::dump_json(out));
  srlr::write_text_file((dir / "log.txt").string(), summary + "\n");
  std::cout << summary << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  Json config = load_config(args);
  std::uint64_t seed = effective_seed(args, config);
  double err = srlr::policy_gradient_check(config.value("channels", 2),
                                           config.value("hidden", 8), seed,
                                           config.value("fd_step", 1e-5));
  bool pass = err < 1e-4;
  Json out;
  out["max_relative_error"] = err;
  out["pass"] = pass;
  if (!args.out_dir.empty()) {
    fs::path dir = prepare_run_dir(args, "gradcheck", config, seed);
    srlr::write_text_file((dir / "gradcheck.json").string(),
                          srlr::dump_json(out));
  }
  std::cout << "max_relative_error=" << srlr::format_sig9(err)
            << " pass=" << (pass ? "true" : "false") << "\n";
  return pass ? 0 : 1;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_data,
                bool with_rules, bool out_required) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--seed", args.seed, "Override the config seed");
  auto* out = cmd->add_option("--out", args.out_dir, "Run output directory");
  if (out_required) out->required();
  cmd->add_flag("--force", args.force, "Replace an existing output directory");
  cmd->add_option("--threads", args.threads,
                  "Worker threads (default: SRLR_THREADS env, then 1)");
  if (with_data)
    cmd->add_option("--data", args.data_path, "Input dataset CSV")->required();
  if (with_rules)
    cmd->add_option("--rules", args.rules_path, "Rules JSON file")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controller logic recovery and anomaly detection toolkit"};
  app.require_subcommand(1);
  CommonArgs args;

  CLI::App* simulate = app.add_subcommand("simulate", "Generate plant data");
  add_common(simulate, args, false, false, true);
  simulate->get_option("--config")->required();

  CLI::App* recover = app.add_subcommand("recover", "Recover logic from data");
  add_common(recover, args, true, false, true);
  recover->get_option("--config")->required();

  CLI::App* detect = app.add_subcommand("detect", "Run anomaly detection");
  add_common(detect, args, true, true, true);

  CLI::App* eval = app.add_subcommand("eval", "Score rules against data");
  add_common(eval, args, true, true, true);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Verify policy gradients numerically");
  add_common(gradcheck, args, false, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    Json err;
    err["error"] = "Usage";
    err["message"] = e.what();
    std::cerr << srlr::dump_json(err);
    return 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(args);
    if (recover->parsed()) return cmd_recover(args);
    if (detect->parsed()) return cmd_detect(args);
    if (eval->parsed()) return cmd_eval(args);
    if (gradcheck->parsed()) return cmd_gradcheck(args);
  } catch (const srlr::Error& e) {
    Json err;
    err["error"] = srlr::error_code_name(e.code());
    err["message"] = e.what();
    std::cerr << srlr::dump_json(err);
    return 1;
  } catch (const std::exception& e) {
    Json err;
    err["error"] = "Internal";
    err["message"] = e.what();
    std::cerr << srlr::dump_json(err);
    return 1;
  }
  return 0;
}

#include "srlr/dataio.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace srlr {

Json round_sig9(const Json& j) {
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (!std::isfinite(v)) return nullptr;
    return Json(std::strtod(format_sig9(v).c_str(), nullptr));
  }
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& item : j) out.push_back(round_sig9(item));
    return out;
  }
  if (j.is_object()) {
    Json out = Json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
      out[it.key()] = round_sig9(it.value());
    return out;
  }
  return j;
}

std::string dump_json(const Json& j) { return round_sig9(j).dump(2) + "\n"; }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path);
  out << content;
  if (!out) raise(ErrorCode::IoFailure, "write failed for " + path);
}

void write_csv(const std::string& path, const Dataset& data) {
  bool labeled = !data.labels.empty();
  if (labeled && data.labels.size() != data.size())
    raise(ErrorCode::SchemaMismatch, "label column length mismatch");
  for (const auto& ch : data.inputs)
    if (ch.size() != data.size())
      raise(ErrorCode::SchemaMismatch, "input channel length mismatch");

  std::ostringstream out;
  out << "time";
  for (size_t c = 0; c < data.channels(); ++c) out << ",x" << c + 1;
  out << ",y";
  if (labeled) out << ",label";
  out << "\n";
  for (size_t t = 0; t < data.size(); ++t) {
    out << format_sig9(static_cast<double>(t) * data.dt);
    for (size_t c = 0; c < data.channels(); ++c)
      out << ',' << format_sig9(data.inputs[c][t]);
    out << ',' << format_sig9(data.target[t]);
    if (labeled) out << ',' << data.labels[t];
    out << "\n";
  }
  write_text_file(path, out.str());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, const std::string& path) {
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str())
    raise(ErrorCode::SchemaMismatch, path + ": non-numeric cell '" + text + "'");
  return v;
}

}  // namespace

Dataset read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorCode::SchemaMismatch, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = split_line(line);
  size_t channels = 0;
  bool labeled = false;
  {
    size_t i = 0;
    if (header.empty() || header[i] != "time")
      raise(ErrorCode::SchemaMismatch, path + ": first column must be 'time'");
    ++i;
    while (i < header.size() &&
           header[i] == "x" + std::to_string(channels + 1)) {
      ++channels;
      ++i;
    }
    if (i >= header.size() || header[i] != "y")
      raise(ErrorCode::SchemaMismatch, path + ": expected 'y' after inputs");
    ++i;
    if (i < header.size() && header[i] == "label") {
      labeled = true;
      ++i;
    }
    if (i != header.size())
      raise(ErrorCode::SchemaMismatch, path + ": unrecognized trailing columns");
  }

  Dataset data;
  data.inputs.resize(channels);
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      raise(ErrorCode::SchemaMismatch,
            path + ": row has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(header.size()));
    size_t i = 0;
    times.push_back(parse_number(cells[i++], path));
    for (size_t c = 0; c < channels; ++c)
      data.inputs[c].push_back(parse_number(cells[i++], path));
    data.target.push_back(parse_number(cells[i++], path));
    if (labeled)
      data.labels.push_back(static_cast<int>(parse_number(cells[i++], path)));
  }
  if (times.size() >= 2) data.dt = times[1] - times[0];
  return data;
}

Json expression_to_json(const Expression& e) {
  Json j;
  j["tokens"] = e.token_names();
  j["constants"] = e.constants();
  j["complexity"] = e.complexity();
  j["infix"] = e.infix();
  return j;
}

Expression expression_from_json(const Json& j) {
  if (j.contains("tokens"))
    return Expression::parse(j.at("tokens").get<std::vector<std::string>>(),
                             j.value("constants", std::vector<double>{}));
  return parse_infix(j.at("infix").get<std::string>());
}

Json tf_to_json(const TransferFunction& tf) {
  Json j;
  j["num"] = tf.num;
  j["den"] = tf.den;
  return j;
}

TransferFunction tf_from_json(const Json& j) {
  return TransferFunction{j.at("num").get<std::vector<double>>(),
                          j.at("den").get<std::vector<double>>()};
}

namespace {

Json rle_encode(const std::vector<size_t>& indices) {
  Json runs = Json::array();
  size_t i = 0;
  while (i < indices.size()) {
    size_t start = indices[i], len = 1;
    while (i + len < indices.size() && indices[i + len] == start + len) ++len;
    runs.push_back(Json::array({start, len}));
    i += len;
  }
  return runs;
}

std::vector<size_t> rle_decode(const Json& runs) {
  std::vector<size_t> indices;
  for (const auto& run : runs) {
    size_t start = run.at(0).get<size_t>();
    size_t len = run.at(1).get<size_t>();
    for (size_t k = 0; k < len; ++k) indices.push_back(start + k);
  }
  return indices;
}

}  // namespace

Json mode_model_to_json(const ModeModel& m) {
  Json j;
  j["modes"] = Json::array();
  for (const auto& mode : m.modes) {
    Json entry = expression_to_json(mode.expr);
    entry["indices"] = rle_encode(mode.indices);
    j["modes"].push_back(entry);
  }
  if (m.switch_logic) {
    j["switch_logic_infix"] = m.switch_logic->infix();
    j["switch_logic"] = expression_to_json(*m.switch_logic);
  }
  return j;
}

ModeModel mode_model_from_json(const Json& j) {
  ModeModel m;
  for (const auto& entry : j.at("modes")) {
    ModeEntry mode;
    mode.expr = expression_from_json(entry);
    if (entry.contains("indices")) mode.indices = rle_decode(entry["indices"]);
    m.modes.push_back(std::move(mode));
  }
  if (j.contains("switch_logic"))
    m.switch_logic = expression_from_json(j["switch_logic"]);
  else if (j.contains("switch_logic_infix"))
    m.switch_logic = parse_infix(j["switch_logic_infix"].get<std::string>());
  return m;
}

namespace {

const char* kind_name(Rule::Kind kind) {
  switch (kind) {
    case Rule::Kind::Equation: return "equation";
    case Rule::Kind::StepEquation: return "step_equation";
    case Rule::Kind::Range: return "range";
  }
  return "equation";
}

Rule::Kind kind_from_name(const std::string& name) {
  if (name == "equation") return Rule::Kind::Equation;
  if (name == "step_equation") return Rule::Kind::StepEquation;
  if (name == "range") return Rule::Kind::Range;
  raise(ErrorCode::SchemaMismatch, "unknown rule kind '" + name + "'");
}

}  // namespace

Json rule_to_json(const Rule& r) {
  Json j;
  j["id"] = r.id;
  j["kind"] = kind_name(r.kind);
  if (r.kind == Rule::Kind::Range) {
    j["bounds"] = Json::array({r.lower, r.upper});
    return j;
  }
  if (std::holds_alternative<Expression>(r.predictor)) {
    const auto& e = std::get<Expression>(r.predictor);
    j["infix"] = e.infix();
    j["expression"] = expression_to_json(e);
  } else if (std::holds_alternative<TransferFunction>(r.predictor)) {
    const auto& tf = std::get<TransferFunction>(r.predictor);
    j["infix"] = tf.str();
    j["tf"] = tf_to_json(tf);
    j["integration"] = r.method == IntegrationMethod::Rk4 ? "rk4" : "euler";
  } else if (std::holds_alternative<ModeModel>(r.predictor)) {
    j["modes"] = mode_model_to_json(std::get<ModeModel>(r.predictor));
  } else {
    raise(ErrorCode::SpecInvalid, "rule '" + r.id + "' has no predictor");
  }
  return j;
}

Rule rule_from_json(const Json& j) {
  Rule r;
  r.id = j.at("id").get<std::string>();
  r.kind = kind_from_name(j.at("kind").get<std::string>());
  if (r.kind == Rule::Kind::Range) {
    const auto& b = j.at("bounds");
    r.lower = b.at(0).get<double>();
    r.upper = b.at(1).get<double>();
    return r;
  }
  if (j.contains("tf")) {
    r.predictor = tf_from_json(j["tf"]);
    if (j.value("integration", "euler") == std::string("rk4"))
      r.method = IntegrationMethod::Rk4;
  } else if (j.contains("modes")) {
    r.predictor = mode_model_from_json(j["modes"]);
  } else if (j.contains("expression")) {
    r.predictor = expression_from_json(j["expression"]);
  } else if (j.contains("infix")) {
    r.predictor = parse_infix(j["infix"].get<std::string>());
  } else {
    raise(ErrorCode::SchemaMismatch, "rule '" + r.id + "' has no predictor");
  }
  return r;
}

Json rules_to_json(const std::vector<Rule>& rules) {
  Json j = Json::array();
  for (const auto& r : rules) j.push_back(rule_to_json(r));
  return j;
}

std::vector<Rule> rules_from_json(const Json& j) {
  std::vector<Rule> rules;
  for (const auto& item : j) rules.push_back(rule_from_json(item));
  return rules;
}

Json report_to_json(const AnomalyReport& r) {
  Json j;
  j["rules"] = r.rule_ids;
  j["thresholds"] = Json::object();
  for (size_t i = 0; i < r.rule_ids.size(); ++i)
    j["thresholds"][r.rule_ids[i]] = r.thresholds[i];
  j["segments"] = Json::array();
  for (const auto& seg : r.segments) {
    Json s;
    s["start"] = seg.start;
    s["end"] = seg.end;
    s["rule"] = seg.rule_id;
    j["segments"].push_back(s);
  }
  j["violations"] = Json::object();
  for (const auto& [id, count] : r.violations) j["violations"][id] = count;
  return j;
}

Json metrics_to_json(const Metrics& m) {
  Json j;
  j["f1"] = m.f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1_pa"] = m.f1_pa;
  j["precision_pa"] = m.precision_pa;
  j["recall_pa"] = m.recall_pa;
  j["threshold"] = m.threshold;
  j["fpr"] = m.fpr;
  j["bfr"] = m.bfr;
  j["index_acc"] = m.index_acc;
  return j;
}

std::string metrics_csv(const Metrics& m) {
  std::ostringstream out;
  out << "f1,precision,recall,f1_pa,precision_pa,recall_pa,threshold,fpr,bfr,"
         "index_acc\n";
  out << format_sig9(m.f1) << ',' << format_sig9(m.precision) << ','
      << format_sig9(m.recall) << ',' << format_sig9(m.f1_pa) << ','
      << format_sig9(m.precision_pa) << ',' << format_sig9(m.recall_pa) << ','
      << format_sig9(m.threshold) << ',' << format_sig9(m.fpr) << ','
      << format_sig9(m.bfr) << ',' << format_sig9(m.index_acc) << "\n";
  return out.str();
}

}  // namespace srlr

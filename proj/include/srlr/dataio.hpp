#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "srlr/detect.hpp"
#include "srlr/expr.hpp"
#include "srlr/multimode.hpp"
#include "srlr/sdomain.hpp"

namespace srlr {

using Json = nlohmann::json;

// Numbers render with at most nine significant digits everywhere (see
// format_sig9 in expr.hpp), so a rerun with the same config and seed
// reproduces output files byte for byte.

// Recursively replaces every float by its nine-significant-digit rounding;
// non-finite values become null.
Json round_sig9(const Json& j);

// round_sig9 + sorted keys + two-space indent + trailing newline.
std::string dump_json(const Json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// CSV dialect: comma-separated, header row `time,x1..xn,y[,label]`,
// '.' decimal, no quoting. The label column is written only when the
// dataset carries labels.
void write_csv(const std::string& path, const Dataset& data);
Dataset read_csv(const std::string& path);

Json expression_to_json(const Expression& e);
Expression expression_from_json(const Json& j);

Json tf_to_json(const TransferFunction& tf);
TransferFunction tf_from_json(const Json& j);

// {modes: [{infix, tokens, constants, indices: [[start,len],...]}],
//  switch_logic_infix}
Json mode_model_to_json(const ModeModel& m);
ModeModel mode_model_from_json(const Json& j);

Json rule_to_json(const Rule& r);
Rule rule_from_json(const Json& j);
Json rules_to_json(const std::vector<Rule>& rules);
std::vector<Rule> rules_from_json(const Json& j);

Json report_to_json(const AnomalyReport& r);

Json metrics_to_json(const Metrics& m);
// Header row plus one value row.
std::string metrics_csv(const Metrics& m);

}  // namespace srlr

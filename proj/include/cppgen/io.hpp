#pragma once

// File formats: model JSON, fit bounds JSON, Newick files, depth and F-grid CSV.

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cppgen/error.hpp"
#include "cppgen/inference.hpp"
#include "cppgen/kernel.hpp"
#include "cppgen/newick.hpp"
#include "cppgen/rates.hpp"
#include "cppgen/tree.hpp"

namespace cppgen {

using Json = nlohmann::json;

namespace io_detail {

inline void require_keys(const Json& j, const std::set<std::string>& required,
                         const std::set<std::string>& optional, const std::string& where) {
  if (!j.is_object()) throw InvalidModel(where + " must be a JSON object");
  for (const auto& key : required)
    if (!j.contains(key)) throw InvalidModel(where + ": missing key \"" + key + "\"");
  for (const auto& [key, value] : j.items())
    if (!required.count(key) && !optional.count(key))
      throw InvalidModel(where + ": unknown key \"" + key + "\"");
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw InvalidModel(where + " must be a number");
  return j.get<double>();
}

inline std::vector<double> numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidModel(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(number(v, where));
  return out;
}

inline PiecewiseConstant piecewise(const Json& j, const std::string& where) {
  if (j.is_number()) return PiecewiseConstant(j.get<double>());
  require_keys(j, {"breaks", "values"}, {}, where);
  return PiecewiseConstant(numbers(j["breaks"], where + ".breaks"),
                           numbers(j["values"], where + ".values"));
}

inline Json to_json(const PiecewiseConstant& p) {
  if (p.is_constant()) return p.values().front();
  return Json{{"breaks", p.breaks()}, {"values", p.values()}};
}

}  // namespace io_detail

inline RateModel model_from_json(const Json& j) {
  using namespace io_detail;
  require_keys(j, {"kind", "lambda", "mu", "T"}, {}, "model");
  if (!j["kind"].is_string()) throw InvalidModel("model.kind must be a string");
  const std::string kind = j["kind"].get<std::string>();
  const double T = number(j["T"], "model.T");
  if (kind == "constant") {
    return RateModel::constant(number(j["lambda"], "model.lambda"), number(j["mu"], "model.mu"), T);
  }
  if (kind == "time_varying") {
    return RateModel::time_varying(piecewise(j["lambda"], "model.lambda"),
                                   piecewise(j["mu"], "model.mu"), T);
  }
  if (kind == "age_dependent") {
    const Json& mu = j["mu"];
    require_keys(mu, {"time_breaks", "age_breaks", "values"}, {}, "model.mu");
    if (!mu["values"].is_array()) throw InvalidModel("model.mu.values must be an array of rows");
    std::vector<std::vector<double>> rows;
    for (const auto& row : mu["values"]) rows.push_back(numbers(row, "model.mu.values"));
    return RateModel::age_dependent(
        piecewise(j["lambda"], "model.lambda"),
        AgeTimeTable(numbers(mu["time_breaks"], "model.mu.time_breaks"),
                     numbers(mu["age_breaks"], "model.mu.age_breaks"), std::move(rows)),
        T);
  }
  throw InvalidModel("model.kind must be constant, time_varying or age_dependent, got \"" + kind + "\"");
}

inline Json model_to_json(const RateModel& model) {
  Json j;
  j["kind"] = to_string(model.kind());
  j["T"] = model.horizon();
  j["lambda"] = io_detail::to_json(model.birth());
  if (const auto* p = std::get_if<PiecewiseConstant>(&model.death())) {
    j["mu"] = io_detail::to_json(*p);
  } else {
    const auto& t = std::get<AgeTimeTable>(model.death());
    j["mu"] = Json{{"time_breaks", t.time_breaks()}, {"age_breaks", t.age_breaks()}, {"values", t.values()}};
  }
  return j;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
}

inline RateModel read_model(const std::string& path) { return model_from_json(read_json_file(path)); }

// {"lambda_max": .., "mu_max": .., "y": [lo, hi], "init": {"lambda": .., "mu": ..}}
// with "y" and "init" optional.
struct FitConfig {
  FitBounds bounds;
  FitInit init;
};

inline FitConfig fit_config_from_json(const Json& j) {
  using namespace io_detail;
  require_keys(j, {"lambda_max", "mu_max"}, {"y", "init"}, "bounds");
  FitConfig c;
  c.bounds.lambda_max = number(j["lambda_max"], "bounds.lambda_max");
  c.bounds.mu_max = number(j["mu_max"], "bounds.mu_max");
  if (j.contains("y")) {
    const auto y = numbers(j["y"], "bounds.y");
    if (y.size() != 2) throw InvalidModel("bounds.y must be [lo, hi]");
    c.bounds.y_range = std::pair{y[0], y[1]};
  }
  if (j.contains("init")) {
    require_keys(j["init"], {"lambda", "mu"}, {}, "bounds.init");
    c.init.lambda = number(j["init"]["lambda"], "bounds.init.lambda");
    c.init.mu = number(j["init"]["mu"], "bounds.init.mu");
  }
  return c;
}

// One tree per line; blank lines are skipped.
// Trees without a root edge take `known_height` as their height.
inline std::vector<OrientedUltrametricTree> read_newick_stream(std::istream& in,
                                                               std::optional<double> known_height = std::nullopt) {
  std::vector<OrientedUltrametricTree> trees;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      trees.push_back(newick_to_tree(line, known_height));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.message(), e.position());
    }
  }
  return trees;
}

inline std::vector<OrientedUltrametricTree> read_newick_file(const std::string& path,
                                                             std::optional<double> known_height = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_newick_stream(in, known_height);
}

inline void write_depths_csv_header(std::ostream& out) { out << "rep,index,depth\n"; }

inline void write_depths_csv_rows(std::ostream& out, std::size_t rep, const OrientedUltrametricTree& tree) {
  char buf[64];
  const auto h = tree.depths();
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", rep, i + 1, h[i]);
    out << buf;
  }
}

// "t,F" on a uniform grid of `points` + 1 nodes.
inline void write_f_grid_csv(std::ostream& out, const InverseTail& F, std::size_t points) {
  out << "t,F\n";
  char buf[64];
  const double T = F.horizon();
  for (std::size_t i = 0; i <= points; ++i) {
    const double t = i == points ? T : T * static_cast<double>(i) / static_cast<double>(points);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, F.value(t));
    out << buf;
  }
}

}  // namespace cppgen

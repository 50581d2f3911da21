#pragma once

// Minimal reader for CPLEX LP text, written independently of the exporter:
// a maximize objective, named constraints, a Binaries section and End.

#include <cctype>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "celltrack/ilp.hpp"

namespace celltrack::testing {

struct ParsedRow {
  std::string name;
  std::map<std::string, double> coef;
  std::string sense;
  double rhs = 0;
};

struct ParsedLp {
  bool maximize = false;
  std::map<std::string, double> objective;
  std::vector<ParsedRow> rows;
  std::set<std::string> binaries;
};

inline bool is_number(const std::string& tok) {
  if (tok.empty()) return false;
  char* end = nullptr;
  std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size();
}

inline ParsedLp parse_lp(const std::string& text) {
  ParsedLp lp;
  std::vector<std::string> toks;
  {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (const auto c = line.find('\\'); c != std::string::npos) line.resize(c);
      std::istringstream words(line);
      std::string w;
      while (words >> w) toks.push_back(w);
    }
  }
  enum class Section { None, Objective, Constraints, Binaries, Done } section = Section::None;
  std::map<std::string, double>* target = nullptr;
  double sign = 1;
  double pending = 1;
  bool have_coef = false;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    std::string lower;
    for (char ch : t) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower == "maximize" || lower == "minimize") {
      lp.maximize = lower == "maximize";
      section = Section::Objective;
      target = &lp.objective;
      continue;
    }
    if (lower == "subject" && i + 1 < toks.size()) {
      ++i;
      section = Section::Constraints;
      target = nullptr;
      continue;
    }
    if (lower == "binaries" || lower == "binary") {
      section = Section::Binaries;
      continue;
    }
    if (lower == "end") {
      section = Section::Done;
      continue;
    }
    if (section == Section::Binaries) {
      lp.binaries.insert(t);
      continue;
    }
    if (section != Section::Objective && section != Section::Constraints) throw std::runtime_error("stray token " + t);
    if (t.back() == ':') {
      if (section == Section::Constraints) {
        lp.rows.push_back({t.substr(0, t.size() - 1), {}, "", 0});
        target = &lp.rows.back().coef;
      }
      sign = 1;
      have_coef = false;
      continue;
    }
    if (t == "+" || t == "-") {
      sign = t == "-" ? -1 : 1;
      continue;
    }
    if (t == "<=" || t == ">=" || t == "=" || t == "=<" || t == "=>") {
      if (lp.rows.empty() || i + 1 >= toks.size()) throw std::runtime_error("dangling sense");
      lp.rows.back().sense = t == "=<" ? "<=" : t == "=>" ? ">=" : t;
      lp.rows.back().rhs = std::strtod(toks[++i].c_str(), nullptr);
      target = nullptr;
      continue;
    }
    if (is_number(t)) {
      pending = std::strtod(t.c_str(), nullptr);
      have_coef = true;
      continue;
    }
    if (!target) throw std::runtime_error("term outside a row: " + t);
    (*target)[t] += sign * (have_coef ? pending : 1.0);
    sign = 1;
    have_coef = false;
  }
  if (section != Section::Done) throw std::runtime_error("missing End");
  return lp;
}

/// Empty when the parsed program has exactly the model's objective,
/// coefficient matrix, senses, right-hand sides and binary variables.
inline std::string lp_mismatch(const IPModel& model, const ParsedLp& lp) {
  if (!lp.maximize) return "not a maximization";
  std::map<std::string, int> index;
  for (int j = 0; j < model.num_vars(); ++j) index[model.vars[static_cast<std::size_t>(j)].name] = j;
  if (lp.binaries.size() != index.size()) return "binary count differs";
  for (const auto& name : lp.binaries)
    if (!index.count(name)) return "unknown binary " + name;
  for (const auto& [name, c] : lp.objective) {
    const auto it = index.find(name);
    if (it == index.end()) return "unknown objective variable " + name;
    if (c != model.weights(it->second)) return "objective coefficient of " + name;
  }
  for (int j = 0; j < model.num_vars(); ++j)
    if (model.weights(j) != 0 && !lp.objective.count(model.vars[static_cast<std::size_t>(j)].name))
      return "missing objective term";
  if (static_cast<int>(lp.rows.size()) != model.num_rows()) return "row count differs";
  for (int i = 0; i < model.num_rows(); ++i) {
    const auto& info = model.rows[static_cast<std::size_t>(i)];
    const auto& row = lp.rows[static_cast<std::size_t>(i)];
    if (row.name != info.name) return "row name " + row.name;
    const char* sense = info.sense == RowSense::Equal ? "=" : info.sense == RowSense::LessEqual ? "<=" : ">=";
    if (row.sense != sense || row.rhs != info.rhs) return "sense or rhs of " + row.name;
    std::map<std::string, double> expect;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, i); it; ++it)
      if (it.value() != 0) expect[model.vars[static_cast<std::size_t>(it.col())].name] = it.value();
    std::map<std::string, double> got;
    for (const auto& [name, c] : row.coef)
      if (c != 0) got[name] = c;
    if (got != expect) return "coefficients of " + row.name;
  }
  return {};
}

}  // namespace celltrack::testing

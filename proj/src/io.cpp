#include "rebal/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace rebal {

namespace {

using nlohmann::json;

const json& field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw Error(Errc::ParseError, std::string("missing key '") + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw Error(Errc::ParseError, where + " is not a number");
  return v.get<double>();
}

std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) throw Error(Errc::ParseError, where + " is not a list");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(number(v[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw Error(Errc::ParseError, where + " is not an integer");
  return v.get<int>();
}

}  // namespace

RawMdp parse_mdp_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::ParseError, "top level must be an object");

  RawMdp raw;
  raw.n = integer(field(doc, "n"), "n");
  const json& fibers = field(doc, "fibers");
  if (!fibers.is_array()) throw Error(Errc::ParseError, "fibers is not a list");
  for (std::size_t i = 0; i < fibers.size(); ++i) {
    raw.fibers.push_back(integer(fibers[i], "fibers[" + std::to_string(i) + "]"));
  }
  raw.gamma = number(field(doc, "gamma"), "gamma");
  raw.rewards = numbers(field(doc, "rewards"), "rewards");
  const json& rows = field(doc, "transitions");
  if (!rows.is_array()) throw Error(Errc::ParseError, "transitions is not a list");
  for (std::size_t j = 0; j < rows.size(); ++j) {
    raw.transitions.push_back(numbers(rows[j], "transitions[" + std::to_string(j) + "]"));
  }
  return raw;
}

Mdp read_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return validate_mdp(parse_mdp_json(buf.str()));
}

std::string write_mdp_json(const Mdp& mdp) {
  // Numbers are written by hand so every value keeps 17 significant digits.
  const auto& fs = mdp.structure();
  std::ostringstream out;
  out << "{\n  \"n\": " << fs.n() << ",\n  \"fibers\": [";
  for (int i = 0; i < fs.n(); ++i) out << (i ? ", " : "") << fs.fiber_size(i);
  out << "],\n  \"gamma\": " << format_number(mdp.gamma()) << ",\n  \"rewards\": [";
  for (int j = 0; j < fs.m(); ++j) out << (j ? ", " : "") << format_number(mdp.rewards()[j]);
  out << "],\n  \"transitions\": [\n";
  for (int j = 0; j < fs.m(); ++j) {
    out << "    [";
    for (int k = 0; k < fs.n(); ++k) out << (k ? ", " : "") << format_number(mdp.transitions()(j, k));
    out << "]" << (j + 1 < fs.m() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  return out.str();
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace rebal

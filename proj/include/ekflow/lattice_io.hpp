#pragma once

// Lattice catalogs in JSON:
//   {"name": "...", "rank": k, "pairing": [k*k numbers, row-major],
//    "c1": [k numbers], "divisors": [{"name": "...", "coeffs": [k numbers]}],
//    "c1_sq": optional expected value}
// A file holds one such object, an array of them, or nothing at all.

#include "ekflow/class_flow.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ekflow {

namespace detail {

inline VectorXd json_vector(const nlohmann::json& j, Index expected, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != expected) {
    throw std::invalid_argument(what + ": expected an array of " + std::to_string(expected) + " numbers");
  }
  VectorXd v(expected);
  for (Index i = 0; i < expected; ++i) {
    if (!j[static_cast<size_t>(i)].is_number()) throw std::invalid_argument(what + ": non-numeric entry");
    v(i) = j[static_cast<size_t>(i)].get<double>();
  }
  return v;
}

}  // namespace detail

inline LatticePtr lattice_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("lattice entry must be an object");
  for (const char* key : {"name", "rank", "pairing", "c1"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("lattice entry is missing '") + key + "'");
  }
  const auto name = j.at("name").get<std::string>();
  const auto rank = j.at("rank").get<long>();
  if (rank < 1) throw std::invalid_argument(name + ": rank must be positive");
  const VectorXd flat = detail::json_vector(j.at("pairing"), rank * rank, name + ".pairing");
  MatrixXd q(rank, rank);
  for (Index r = 0; r < rank; ++r)
    for (Index c = 0; c < rank; ++c) q(r, c) = flat(r * rank + c);
  const VectorXd c1 = detail::json_vector(j.at("c1"), rank, name + ".c1");
  std::vector<Divisor> divisors;
  if (j.contains("divisors")) {
    for (const auto& d : j.at("divisors")) {
      const auto dname = d.at("name").get<std::string>();
      divisors.push_back({dname, detail::json_vector(d.at("coeffs"), rank, name + "." + dname)});
    }
  }
  std::optional<double> expected;
  if (j.contains("c1_sq")) expected = j.at("c1_sq").get<double>();
  return std::make_shared<IntersectionLattice>(name, q, c1, std::move(divisors), expected);
}

inline std::vector<LatticePtr> lattices_from_json_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("lattice catalog: ") + e.what());
  }
  std::vector<LatticePtr> out;
  try {
    if (j.is_array()) {
      for (const auto& e : j) out.push_back(lattice_from_json(e));
    } else {
      out.push_back(lattice_from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("lattice catalog: ") + e.what());
  }
  return out;
}

inline std::vector<LatticePtr> load_lattice_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read lattice file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return lattices_from_json_text(ss.str());
}

/// Built-ins followed by the file's lattices; a file lattice may not reuse a
/// built-in name.
inline std::vector<LatticePtr> merged_catalog(const std::vector<LatticePtr>& extra) {
  std::vector<LatticePtr> out = bundled_lattices();
  for (const auto& l : extra) {
    if (find_lattice(out, l->name())) throw std::invalid_argument("duplicate lattice name " + l->name());
    out.push_back(l);
  }
  return out;
}

}  // namespace ekflow

#pragma once

// MDP files are JSON objects with keys n, fibers, gamma, rewards and
// transitions (m rows of n numbers).

#include "rebal/mdp.hpp"

#include <string>

namespace rebal {

/// Parses without validating; throws ParseError naming the offending key.
RawMdp parse_mdp_json(const std::string& text);

/// parse_mdp_json followed by validate_mdp.
Mdp read_mdp_file(const std::string& path);

/// Serializes with round-trip precision.
std::string write_mdp_json(const Mdp& mdp);

/// %.17g formatting.
std::string format_number(double value);

}  // namespace rebal

#pragma once

#include <string>

#include <json.hpp>

#include "maskdiff/denoiser.hpp"

namespace maskdiff {

// Data distribution from JSON: either an explicit table
//   {"d": <int>, "V": <int>, "probs": [...]}        (base-V enumeration order)
// or a Boltzmann spec materialized by enumeration
//   {"type": "ising", "L": <int>, "beta": <float>, "J": <float>, "h": <float>}.
TabularDataDistribution load_data_distribution(const nlohmann::json& spec);
TabularDataDistribution load_data_distribution_file(const std::string& path);

}  // namespace maskdiff

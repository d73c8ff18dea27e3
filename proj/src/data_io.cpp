#include "maskdiff/data_io.hpp"

#include <fstream>

#include "maskdiff/ising.hpp"

namespace maskdiff {

namespace {

void reject_unknown_keys(const nlohmann::json& obj,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw std::invalid_argument("unknown key in data spec: " + key);
  }
}

}  // namespace

TabularDataDistribution load_data_distribution(const nlohmann::json& spec) {
  if (!spec.is_object()) throw std::invalid_argument("data spec must be an object");
  if (spec.contains("type")) {
    const std::string type = spec.at("type").get<std::string>();
    if (type != "ising")
      throw std::invalid_argument("unknown data spec type: " + type);
    reject_unknown_keys(spec, {"type", "L", "beta", "J", "h", "enumeration_limit"});
    BoltzmannSpec b;
    b.model.L = spec.at("L").get<int>();
    b.beta = spec.at("beta").get<double>();
    b.model.coupling = spec.value("J", 1.0);
    b.model.field = spec.value("h", 0.0);
    const auto limit = spec.value("enumeration_limit", kDefaultEnumerationLimit);
    return exact_boltzmann(b, limit);
  }
  reject_unknown_keys(spec, {"d", "V", "probs"});
  const int d = spec.at("d").get<int>();
  const int V = spec.at("V").get<int>();
  const auto probs = spec.at("probs").get<std::vector<double>>();
  return TabularDataDistribution(Vocabulary{V}, d, probs);
}

TabularDataDistribution load_data_distribution_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file: " + path);
  nlohmann::json j;
  in >> j;
  return load_data_distribution(j);
}

}  // namespace maskdiff

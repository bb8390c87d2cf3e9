#pragma once

#include <map>
#include <string>
#include <vector>

#include "tpjm/inla.hpp"
#include "tpjm/types.hpp"

namespace tpjm {

// key/value file with [section] headers and '#' comments
using IniSections = std::map<std::string, std::map<std::string, std::string>>;

IniSections parse_ini(const std::string& text);

struct ModelConfig {
  IniSections sections;

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key,
                 double fallback) const;
};

ModelConfig load_config_file(const std::string& path);
ModelConfig config_from_text(const std::string& text);

// the default model shape used by the scenario studies
ModelConfig default_model_config();

// validated TpjmSpec from a parsed config; covariate names are checked
// against the data when provided
TpjmSpec build_spec(const ModelConfig& config,
                    const std::vector<SubjectData>* data = nullptr);

PriorConfig build_priors(const ModelConfig& config);
InlaOptions build_inla_options(const ModelConfig& config);

}  // namespace tpjm

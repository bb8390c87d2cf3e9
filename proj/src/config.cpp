#include "tpjm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tpjm {

namespace {
std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: malformed number for " + what + ": '" +
                                s + "'");
  }
}
}  // namespace

IniSections parse_ini(const std::string& text) {
  IniSections sections;
  std::string current = "";
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: bad section header at line " +
                                    std::to_string(lineno));
      current = trim(line.substr(1, line.size() - 2));
      sections[current];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key at line " +
                                  std::to_string(lineno));
    sections[current][key] = val;
  }
  return sections;
}

bool ModelConfig::has(const std::string& section, const std::string& key) const {
  auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string ModelConfig::get(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
  auto s = sections.find(section);
  if (s == sections.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ModelConfig::get_num(const std::string& section, const std::string& key,
                            double fallback) const {
  if (!has(section, key)) return fallback;
  return parse_number(get(section, key, ""), section + "." + key);
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig c;
  c.sections = parse_ini(text);
  return c;
}

ModelConfig default_model_config() {
  return config_from_text(
      "[model]\n"
      "re_structure = intercepts_only\n"
      "baseline_bins = 15\n"
      "follow_up_max = 4.0\n"
      "rw_order = 2\n"
      "[binary]\n"
      "terms = 1, time, trt, time:trt\n"
      "[continuous]\n"
      "terms = 1, time, trt, time:trt\n"
      "[survival]\n"
      "terms = trt\n");
}

TpjmSpec build_spec(const ModelConfig& config,
                    const std::vector<SubjectData>* data) {
  TpjmSpec spec;
  std::string re = config.get("model", "re_structure", "intercepts_only");
  if (re == "intercepts_only")
    spec.re_structure = ReStructure::intercepts_only;
  else if (re == "intercept_plus_slope")
    spec.re_structure = ReStructure::intercept_plus_slope;
  else
    throw std::invalid_argument("config: unknown re_structure '" + re + "'");

  spec.baseline_bins =
      static_cast<int>(config.get_num("model", "baseline_bins", 15));
  spec.follow_up_max = config.get_num("model", "follow_up_max", 4.0);
  spec.rw_order = static_cast<int>(config.get_num("model", "rw_order", 2));

  for (const auto& t : split_list(config.get("binary", "terms", "1")))
    spec.binary_terms.push_back(parse_term(t));
  for (const auto& t : split_list(config.get("continuous", "terms", "1")))
    spec.continuous_terms.push_back(parse_term(t));
  for (const auto& t : split_list(config.get("survival", "terms", "")))
    spec.survival_terms.push_back(parse_term(t));

  spec.validate();

  if (data && !data->empty()) {
    auto check = [&](const std::vector<Term>& terms, const char* part) {
      for (const auto& t : terms) {
        if (t.kind != Term::covariate && t.kind != Term::time_covariate)
          continue;
        for (const auto& subj : *data)
          if (!subj.covariates.count(t.name))
            throw std::invalid_argument(
                std::string("config: unknown covariate name '") + t.name +
                "' in " + part + " part (subject " + std::to_string(subj.id) +
                ")");
      }
    };
    check(spec.binary_terms, "binary");
    check(spec.continuous_terms, "continuous");
    check(spec.survival_terms, "survival");
  }
  return spec;
}

PriorConfig build_priors(const ModelConfig& config) {
  PriorConfig p;
  p.fixed_effect_prec = config.get_num("priors", "fixed_effect_prec", 1e-3);
  p.assoc_prec = config.get_num("priors", "assoc_prec", 1e-3);
  p.corr_prior_sd = config.get_num("priors", "corr_prior_sd", 1.0);
  p.lambda_anchor = config.get_num("priors", "lambda_anchor", 1e-5);

  auto pc_pair = [&](const std::string& key, PcPair fallback) {
    if (!config.has("priors", key)) return fallback;
    auto parts = split_list(config.get("priors", key, ""));
    if (parts.size() != 2)
      throw std::invalid_argument("config: priors." + key +
                                  " must be 'w, v'");
    return PcPair{parse_number(parts[0], key), parse_number(parts[1], key)};
  };
  p.pc_eps = pc_pair("pc_eps", PcPair{});
  p.pc_rw = pc_pair("pc_rw", PcPair{});
  p.pc_re = {pc_pair("pc_re", PcPair{})};
  p.validate();
  return p;
}

InlaOptions build_inla_options(const ModelConfig& config) {
  InlaOptions o;
  std::string strategy = config.get("engine", "strategy", "ccd");
  if (strategy == "ccd")
    o.strategy = Strategy::ccd;
  else if (strategy == "eb")
    o.strategy = Strategy::eb;
  else if (strategy == "grid")
    o.strategy = Strategy::grid;
  else
    throw std::invalid_argument("config: unknown strategy '" + strategy + "'");
  o.ccd_f0 = config.get_num("engine", "ccd_f0", o.ccd_f0);
  o.mean_correction =
      config.get_num("engine", "mean_correction", o.mean_correction ? 1 : 0) != 0;
  return o;
}

}  // namespace tpjm

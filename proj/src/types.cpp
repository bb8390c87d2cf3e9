#include "tpjm/types.hpp"

#include <stdexcept>

namespace tpjm {

double SubjectData::covariate(const std::string& name) const {
  auto it = covariates.find(name);
  if (it == covariates.end())
    throw std::invalid_argument("subject " + std::to_string(id) +
                                ": unknown covariate '" + name + "'");
  return it->second;
}

void SubjectData::validate() const {
  if (!(surv_time > 0.0))
    throw std::invalid_argument("subject " + std::to_string(id) +
                                ": surv_time must be positive");
  if (event != 0 && event != 1)
    throw std::invalid_argument("subject " + std::to_string(id) +
                                ": event must be 0 or 1");
  double prev = -1.0;
  for (const auto& v : visits) {
    if (v.time < 0.0)
      throw std::invalid_argument("subject " + std::to_string(id) +
                                  ": negative visit time");
    if (v.value < 0.0)
      throw std::invalid_argument("subject " + std::to_string(id) +
                                  ": negative biomarker value");
    if (v.time <= prev)
      throw std::invalid_argument("subject " + std::to_string(id) +
                                  ": visit times must be strictly increasing");
    if (v.time > surv_time)
      throw std::invalid_argument("subject " + std::to_string(id) +
                                  ": visit after terminal/censoring time");
    prev = v.time;
  }
}

void validate_dataset(const std::vector<SubjectData>& data) {
  for (const auto& s : data) s.validate();
}

double Term::eval(double t, const SubjectData& subj) const {
  switch (kind) {
    case intercept: return 1.0;
    case time: return t;
    case covariate: return subj.covariate(name);
    case time_covariate: return t * subj.covariate(name);
  }
  return 0.0;
}

std::string Term::label() const {
  switch (kind) {
    case intercept: return "1";
    case time: return "time";
    case covariate: return name;
    case time_covariate: return "time:" + name;
  }
  return "";
}

Term parse_term(const std::string& text) {
  Term t;
  if (text == "1") {
    t.kind = Term::intercept;
  } else if (text == "time") {
    t.kind = Term::time;
  } else if (text.rfind("time:", 0) == 0) {
    t.kind = Term::time_covariate;
    t.name = text.substr(5);
    if (t.name.empty()) throw std::invalid_argument("empty interaction term");
  } else if (text.size() > 5 && text.substr(text.size() - 5) == ":time") {
    t.kind = Term::time_covariate;
    t.name = text.substr(0, text.size() - 5);
  } else {
    t.kind = Term::covariate;
    t.name = text;
  }
  return t;
}

void TpjmSpec::validate() const {
  if (baseline_bins < 2)
    throw std::invalid_argument("baseline_bins must be >= 2");
  if (!(follow_up_max > 0.0))
    throw std::invalid_argument("follow_up_max must be positive");
  if (rw_order != 1 && rw_order != 2)
    throw std::invalid_argument("rw_order must be 1 or 2");
  for (const auto& term : survival_terms) {
    // lambda absorbs the survival level; no fixed intercept and no
    // time-varying covariates in the survival part
    if (term.kind == Term::intercept)
      throw std::invalid_argument(
          "survival part has no fixed intercept (baseline absorbs the level)");
    if (term.kind == Term::time || term.kind == Term::time_covariate)
      throw std::invalid_argument(
          "time-varying survival covariates are not supported");
  }
}

LatentLayout make_layout(const TpjmSpec& spec, int n_subjects) {
  LatentLayout l;
  l.n_subjects = n_subjects;
  l.re_dim = spec.re_dim();
  l.n_alpha = static_cast<int>(spec.binary_terms.size());
  l.n_beta = static_cast<int>(spec.continuous_terms.size());
  l.n_gamma = static_cast<int>(spec.survival_terms.size());
  l.n_lambda = spec.baseline_bins;
  return l;
}

HyperParams HyperParams::zeros(int d) {
  HyperParams h;
  h.re_log_prec = Eigen::VectorXd::Zero(d);
  h.re_z = Eigen::VectorXd::Zero(d * (d - 1) / 2);
  h.assoc = Eigen::VectorXd::Zero(d);
  return h;
}

int HyperParams::dim() const {
  return 2 + static_cast<int>(re_log_prec.size() + re_z.size() + assoc.size());
}

Eigen::VectorXd HyperParams::to_vector() const {
  Eigen::VectorXd v(dim());
  v[0] = log_prec_eps;
  v[1] = log_prec_rw;
  int at = 2;
  v.segment(at, re_log_prec.size()) = re_log_prec;
  at += static_cast<int>(re_log_prec.size());
  v.segment(at, re_z.size()) = re_z;
  at += static_cast<int>(re_z.size());
  v.segment(at, assoc.size()) = assoc;
  return v;
}

HyperParams HyperParams::from_vector(const Eigen::VectorXd& v, int d) {
  ThetaIndex ti{d};
  if (v.size() != ti.dim())
    throw std::invalid_argument("HyperParams::from_vector: wrong length");
  HyperParams h;
  h.log_prec_eps = v[ti.log_prec_eps()];
  h.log_prec_rw = v[ti.log_prec_rw()];
  h.re_log_prec = v.segment(2, d);
  h.re_z = v.segment(2 + d, d * (d - 1) / 2);
  h.assoc = v.segment(2 + d + d * (d - 1) / 2, d);
  return h;
}

PcPair PriorConfig::pc_re_at(int k) const {
  if (pc_re.empty()) return PcPair{};
  if (k < static_cast<int>(pc_re.size())) return pc_re[k];
  return pc_re.front();
}

void PriorConfig::validate() const {
  auto check_pair = [](const PcPair& p) {
    if (!(p.w > 0.0) || !(p.v > 0.0 && p.v < 1.0))
      throw std::invalid_argument("PC prior requires w > 0 and 0 < v < 1");
  };
  check_pair(pc_eps);
  check_pair(pc_rw);
  for (const auto& p : pc_re) check_pair(p);
  if (!(fixed_effect_prec > 0.0) || !(assoc_prec > 0.0))
    throw std::invalid_argument("prior precisions must be positive");
  if (!(corr_prior_sd > 0.0))
    throw std::invalid_argument("corr_prior_sd must be positive");
}

}  // namespace tpjm

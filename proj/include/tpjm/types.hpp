#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace tpjm {

// One biomarker visit. is_positive is derived, not stored: the semicontinuous
// threshold is exact zero, no epsilon.
struct VisitRecord {
  double time = 0.0;   // years since randomization
  double value = 0.0;  // biomarker measurement (cm), >= 0
  bool is_positive() const { return value > 0.0; }
};

struct SubjectData {
  int id = 0;
  std::vector<VisitRecord> visits;  // sorted by time, strictly increasing
  double surv_time = 0.0;           // T_i, years
  int event = 0;                    // 1 = observed, 0 = censored
  std::map<std::string, double> covariates;

  double covariate(const std::string& name) const;
  // throws std::invalid_argument on any violated invariant
  void validate() const;
};

void validate_dataset(const std::vector<SubjectData>& data);

enum class ReStructure {
  intercepts_only,      // (a_i, b0_i), d = 2
  intercept_plus_slope  // (a_i, b0_i, b1_i), d = 3
};

// A linear-predictor term: intercept, time, a covariate, or time:covariate.
struct Term {
  enum Kind { intercept, time, covariate, time_covariate } kind = intercept;
  std::string name;  // covariate name when applicable

  double eval(double t, const SubjectData& subj) const;
  std::string label() const;
};

Term parse_term(const std::string& text);

struct TpjmSpec {
  std::vector<Term> binary_terms;      // X_B columns (alpha)
  std::vector<Term> continuous_terms;  // X_C columns (beta)
  std::vector<Term> survival_terms;    // X columns (gamma); baseline covariates only
  ReStructure re_structure = ReStructure::intercepts_only;
  int baseline_bins = 15;       // m hazard bins on [0, follow_up_max]
  double follow_up_max = 4.0;   // administrative horizon (years)
  int rw_order = 2;

  int re_dim() const { return re_structure == ReStructure::intercepts_only ? 2 : 3; }
  double bin_width() const { return follow_up_max / baseline_bins; }
  void validate() const;
};

// Index map for the latent vector u:
//   [ per-subject random effects | alpha | beta | gamma | lambda ]
struct LatentLayout {
  int n_subjects = 0;
  int re_dim = 0;  // d
  int n_alpha = 0;
  int n_beta = 0;
  int n_gamma = 0;
  int n_lambda = 0;  // m

  int re_offset() const { return 0; }
  int alpha_offset() const { return n_subjects * re_dim; }
  int beta_offset() const { return alpha_offset() + n_alpha; }
  int gamma_offset() const { return beta_offset() + n_beta; }
  int lambda_offset() const { return gamma_offset() + n_gamma; }
  int size() const { return lambda_offset() + n_lambda; }

  int re_index(int subject, int k) const { return subject * re_dim + k; }
  int alpha_index(int j) const { return alpha_offset() + j; }
  int beta_index(int j) const { return beta_offset() + j; }
  int gamma_index(int j) const { return gamma_offset() + j; }
  int lambda_index(int k) const { return lambda_offset() + k; }
};

LatentLayout make_layout(const TpjmSpec& spec, int n_subjects);

// The latent Gaussian vector with its index map.
struct LatentField {
  LatentLayout layout;
  Eigen::VectorXd values;

  explicit LatentField(const LatentLayout& l)
      : layout(l), values(Eigen::VectorXd::Zero(l.size())) {}
};

// Hyperparameters theta. phi lives here, not in the latent field: conditional
// on theta the survival predictor a^T phi_a + b^T phi_b is linear in (a, b),
// keeping the field Gaussian.
struct HyperParams {
  double log_prec_eps = 0.0;          // log tau_eps, tau_eps = sigma_eps^-2
  double log_prec_rw = 0.0;           // log tau_lambda
  Eigen::VectorXd re_log_prec;        // d log-precisions of the RE covariance
  Eigen::VectorXd re_z;               // d(d-1)/2 Fisher-z correlations, pair order (0,1),(0,2),(1,2)
  Eigen::VectorXd assoc;              // phi_a, phi_b0 [, phi_b1]

  static HyperParams zeros(int d);
  int dim() const;

  // flat vector in canonical order [log_prec_eps, log_prec_rw, re_log_prec, re_z, assoc]
  Eigen::VectorXd to_vector() const;
  static HyperParams from_vector(const Eigen::VectorXd& v, int d);
};

// canonical offsets into the flat theta vector
struct ThetaIndex {
  int d = 2;
  int log_prec_eps() const { return 0; }
  int log_prec_rw() const { return 1; }
  int re_log_prec(int k) const { return 2 + k; }
  int re_z(int k) const { return 2 + d + k; }
  int assoc(int k) const { return 2 + d + d * (d - 1) / 2 + k; }
  int dim() const { return 2 + d + d * (d - 1) / 2 + d; }
};

struct PcPair {
  double w = 1.0;   // scale bound
  double v = 0.01;  // tail probability P[sigma > w] = v
};

struct PriorConfig {
  double fixed_effect_prec = 1e-3;  // tau_alpha = tau_beta = tau_gamma
  double assoc_prec = 1e-3;         // tau_phi
  PcPair pc_eps;                    // for tau_eps
  PcPair pc_rw;                     // for tau_lambda
  std::vector<PcPair> pc_re;        // one per RE precision; single entry broadcast
  double corr_prior_sd = 1.0;       // Gaussian prior SD on Fisher-z correlations
  double lambda_anchor = 1e-5;      // tiny diagonal on the RW block (intrinsic rank fix)

  PcPair pc_re_at(int k) const;
  void validate() const;
};

}  // namespace tpjm

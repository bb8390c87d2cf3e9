#pragma once

#include <vector>

#include "tpjm/types.hpp"

namespace tpjm {

struct LogLikTriple {
  double value = 0.0;
  double d1 = 0.0;  // d/d eta
  double d2 = 0.0;  // d^2/d eta^2, always <= 0
};

// Bernoulli-logit: u*eta - log(1 + exp(eta)), stable for |eta| > 30.
LogLikTriple binary_loglik(double eta, double u);

// Gaussian on the log scale, constants retained:
// 0.5*log(tau/2pi) - tau*(y_log - eta)^2 / 2.
LogLikTriple gaussian_loglik(double eta, double y_log, double tau_eps);

// Poisson-form survival segment: event*eta - exp(eta + log_exposure).
// Summed over a subject's segments this equals the exact piecewise-constant
// hazard log-likelihood (event*log_exposure is not part of it).
LogLikTriple poisson_surv_loglik(double eta_total, double event,
                                 double log_exposure);

enum class ObsKind { binary, continuous, surv_segment };

// One sparse coefficient of an A-matrix row. scale_slot >= 0 marks entries
// multiplied by a theta-dependent loading (the association phi on survival
// rows); -1 entries are plain constants.
struct RowEntry {
  int col = 0;
  double coef = 0.0;
  int scale_slot = -1;
};

struct AugmentedObservation {
  ObsKind kind = ObsKind::binary;
  int subject = 0;
  double response = 0.0;  // U_ij, log Y_ij, or segment event indicator
  double offset = 0.0;    // log exposure for surv_segment rows
  std::vector<RowEntry> entries;
};

// Expands a dataset into LGM observation rows: one binary row per visit, one
// continuous row per positive visit, one surv_segment row per (subject, bin)
// with positive exposure. Exposures per subject sum to T_i.
std::vector<AugmentedObservation> augment_dataset(
    const std::vector<SubjectData>& data, const TpjmSpec& spec,
    const LatentLayout& layout);

}  // namespace tpjm

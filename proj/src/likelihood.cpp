#include "tpjm/likelihood.hpp"

#include <cmath>
#include <stdexcept>

#include "tpjm/numeric.hpp"

namespace tpjm {

LogLikTriple binary_loglik(double eta, double u) {
  LogLikTriple t;
  double p = expit(eta);
  t.value = u * eta - log1pexp(eta);
  t.d1 = u - p;
  t.d2 = -p * (1.0 - p);
  return t;
}

LogLikTriple gaussian_loglik(double eta, double y_log, double tau_eps) {
  LogLikTriple t;
  double r = y_log - eta;
  t.value = 0.5 * std::log(tau_eps / (2.0 * M_PI)) - 0.5 * tau_eps * r * r;
  t.d1 = tau_eps * r;
  t.d2 = -tau_eps;
  return t;
}

LogLikTriple poisson_surv_loglik(double eta_total, double event,
                                 double log_exposure) {
  LogLikTriple t;
  double mu = std::exp(eta_total + log_exposure);
  t.value = event * eta_total - mu;
  t.d1 = event - mu;
  t.d2 = -mu;
  return t;
}

namespace {

void append_fixed_terms(std::vector<RowEntry>& entries,
                        const std::vector<Term>& terms, int offset, double t,
                        const SubjectData& subj) {
  for (int j = 0; j < static_cast<int>(terms.size()); ++j)
    entries.push_back({offset + j, terms[j].eval(t, subj), -1});
}

}  // namespace

std::vector<AugmentedObservation> augment_dataset(
    const std::vector<SubjectData>& data, const TpjmSpec& spec,
    const LatentLayout& layout) {
  spec.validate();
  const int d = spec.re_dim();
  const int m = spec.baseline_bins;
  const double width = spec.bin_width();

  std::vector<AugmentedObservation> rows;
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    const SubjectData& subj = data[i];
    subj.validate();
    if (subj.surv_time > spec.follow_up_max)
      throw std::invalid_argument("subject " + std::to_string(subj.id) +
                                  ": survival time exceeds follow_up_max");

    for (const auto& visit : subj.visits) {
      AugmentedObservation bin_row;
      bin_row.kind = ObsKind::binary;
      bin_row.subject = i;
      bin_row.response = visit.is_positive() ? 1.0 : 0.0;
      bin_row.entries.push_back({layout.re_index(i, 0), 1.0, -1});
      append_fixed_terms(bin_row.entries, spec.binary_terms,
                         layout.alpha_offset(), visit.time, subj);
      rows.push_back(std::move(bin_row));

      if (visit.is_positive()) {
        AugmentedObservation cont_row;
        cont_row.kind = ObsKind::continuous;
        cont_row.subject = i;
        cont_row.response = std::log(visit.value);
        cont_row.entries.push_back({layout.re_index(i, 1), 1.0, -1});
        if (d == 3)
          cont_row.entries.push_back({layout.re_index(i, 2), visit.time, -1});
        append_fixed_terms(cont_row.entries, spec.continuous_terms,
                           layout.beta_offset(), visit.time, subj);
        rows.push_back(std::move(cont_row));
      }
    }

    // survival segments: exposure differences of the cut points so per-subject
    // exposures telescope to T_i
    double prev_cut = 0.0;
    int last_segment = -1;
    std::size_t first_seg_row = rows.size();
    for (int k = 0; k < m && prev_cut < subj.surv_time; ++k) {
      double cut = std::min(subj.surv_time, (k + 1) * width);
      double exposure = cut - prev_cut;
      prev_cut = cut;
      if (exposure <= 0.0) continue;

      AugmentedObservation seg;
      seg.kind = ObsKind::surv_segment;
      seg.subject = i;
      seg.response = 0.0;
      seg.offset = std::log(exposure);
      seg.entries.push_back({layout.re_index(i, 0), 1.0, 0});       // phi_a
      seg.entries.push_back({layout.re_index(i, 1), 1.0, 1});       // phi_b0
      if (d == 3) seg.entries.push_back({layout.re_index(i, 2), 1.0, 2});  // phi_b1
      append_fixed_terms(seg.entries, spec.survival_terms,
                         layout.gamma_offset(), 0.0, subj);
      seg.entries.push_back({layout.lambda_index(k), 1.0, -1});
      rows.push_back(std::move(seg));
      last_segment = static_cast<int>(rows.size()) - 1;
    }
    if (subj.event == 1) {
      if (last_segment < 0 || static_cast<std::size_t>(last_segment) < first_seg_row)
        throw std::invalid_argument("subject " + std::to_string(subj.id) +
                                    ": event with no positive exposure");
      rows[last_segment].response = 1.0;
    }
  }
  return rows;
}

}  // namespace tpjm

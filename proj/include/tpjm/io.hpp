#pragma once

#include <string>
#include <vector>

#include "tpjm/tpjm_model.hpp"
#include "tpjm/types.hpp"

namespace tpjm {

// Longitudinal CSV columns: id,time,value. Survival CSV columns:
// id,surv_time,event,<covariate columns>. Strict numeric parsing; subjects
// ordered by id.
std::vector<SubjectData> read_dataset(const std::string& longitudinal_csv,
                                      const std::string& survival_csv);

void write_dataset(const std::vector<SubjectData>& data,
                   const std::string& longitudinal_csv,
                   const std::string& survival_csv);

// machine-readable fitted-model file (JSON), lossless for doubles
void write_fit(const FitReport& report, const std::string& path);
FitReport read_fit(const std::string& path);

// human-readable table in the layout of the paper's tables; significance
// stars rendered when p-value indications are enabled
std::string fit_table(const FitReport& report, bool p_indications = true);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace tpjm

#include "tpjm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tpjm {

namespace {
using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && (item.back() == '\r' || item.back() == ' '))
      item.pop_back();
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    out.push_back(item);
  }
  return out;
}

double strict_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size())
      throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed numeric value '" + s + "' in " +
                                context);
  }
}

long strict_long(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed integer '" + s + "' in " + context);
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_to_vec(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i];
  return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

Eigen::MatrixXd json_to_mat(const json& a) {
  int rows = static_cast<int>(a.size());
  int cols = rows > 0 ? static_cast<int>(a[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = a[i][j];
  return m;
}
}  // namespace

std::vector<SubjectData> read_dataset(const std::string& longitudinal_csv,
                                      const std::string& survival_csv) {
  auto surv_lines = read_lines(survival_csv);
  if (surv_lines.empty())
    throw std::invalid_argument("empty survival file " + survival_csv);
  auto header = split_csv_line(surv_lines[0]);
  if (header.size() < 3 || header[0] != "id" || header[1] != "surv_time" ||
      header[2] != "event")
    throw std::invalid_argument(
        "survival header must start with id,surv_time,event");
  std::vector<std::string> covariate_names(header.begin() + 3, header.end());

  std::map<int, SubjectData> subjects;
  for (std::size_t i = 1; i < surv_lines.size(); ++i) {
    auto cells = split_csv_line(surv_lines[i]);
    if (cells.size() != header.size())
      throw std::invalid_argument("survival row " + std::to_string(i) +
                                  " has wrong column count");
    std::string ctx = survival_csv + " row " + std::to_string(i);
    SubjectData s;
    s.id = static_cast<int>(strict_long(cells[0], ctx));
    if (subjects.count(s.id))
      throw std::invalid_argument("duplicate subject id " +
                                  std::to_string(s.id) + " in survival file");
    s.surv_time = strict_double(cells[1], ctx);
    long ev = strict_long(cells[2], ctx);
    s.event = static_cast<int>(ev);
    for (std::size_t c = 0; c < covariate_names.size(); ++c)
      s.covariates[covariate_names[c]] = strict_double(cells[3 + c], ctx);
    subjects[s.id] = std::move(s);
  }

  auto long_lines = read_lines(longitudinal_csv);
  if (long_lines.empty())
    throw std::invalid_argument("empty longitudinal file " + longitudinal_csv);
  auto lheader = split_csv_line(long_lines[0]);
  if (lheader.size() != 3 || lheader[0] != "id" || lheader[1] != "time" ||
      lheader[2] != "value")
    throw std::invalid_argument("longitudinal header must be id,time,value");

  std::set<std::pair<int, double>> seen;
  for (std::size_t i = 1; i < long_lines.size(); ++i) {
    auto cells = split_csv_line(long_lines[i]);
    if (cells.size() != 3)
      throw std::invalid_argument("longitudinal row " + std::to_string(i) +
                                  " has wrong column count");
    std::string ctx = longitudinal_csv + " row " + std::to_string(i);
    int id = static_cast<int>(strict_long(cells[0], ctx));
    double time = strict_double(cells[1], ctx);
    double value = strict_double(cells[2], ctx);
    auto it = subjects.find(id);
    if (it == subjects.end())
      throw std::invalid_argument("subject id " + std::to_string(id) +
                                  " appears in the longitudinal file only");
    if (value < 0.0)
      throw std::invalid_argument("negative biomarker value for subject " +
                                  std::to_string(id));
    if (!seen.insert({id, time}).second)
      throw std::invalid_argument("duplicate (id, time) pair: (" +
                                  std::to_string(id) + ", " +
                                  std::to_string(time) + ")");
    it->second.visits.push_back({time, value});
  }

  std::vector<SubjectData> data;
  data.reserve(subjects.size());
  for (auto& [id, s] : subjects) {
    if (s.visits.empty())
      throw std::invalid_argument("subject id " + std::to_string(id) +
                                  " appears in the survival file only");
    std::sort(s.visits.begin(), s.visits.end(),
              [](const VisitRecord& a, const VisitRecord& b) {
                return a.time < b.time;
              });
    s.validate();
    data.push_back(std::move(s));
  }
  return data;
}

void write_dataset(const std::vector<SubjectData>& data,
                   const std::string& longitudinal_csv,
                   const std::string& survival_csv) {
  std::vector<std::string> covariate_names;
  if (!data.empty())
    for (const auto& [name, value] : data.front().covariates) {
      (void)value;
      covariate_names.push_back(name);
    }

  std::ofstream lf(longitudinal_csv);
  if (!lf) throw std::runtime_error("cannot write " + longitudinal_csv);
  lf.precision(17);
  lf << "id,time,value\n";
  for (const auto& s : data)
    for (const auto& v : s.visits)
      lf << s.id << ',' << v.time << ',' << v.value << '\n';

  std::ofstream sf(survival_csv);
  if (!sf) throw std::runtime_error("cannot write " + survival_csv);
  sf.precision(17);
  sf << "id,surv_time,event";
  for (const auto& n : covariate_names) sf << ',' << n;
  sf << '\n';
  for (const auto& s : data) {
    sf << s.id << ',' << s.surv_time << ',' << s.event;
    for (const auto& n : covariate_names) sf << ',' << s.covariates.at(n);
    sf << '\n';
  }
}

void write_fit(const FitReport& report, const std::string& path) {
  json j;
  j["engine"] = report.engine;
  j["converged"] = report.converged;
  j["log_marginal"] = report.log_marginal;
  j["seconds"] = report.seconds;
  j["seed"] = report.seed;
  j["baseline_bins"] = report.baseline_bins;
  j["follow_up_max"] = report.follow_up_max;
  j["re_dim"] = report.re_dim;
  j["iterations"] = report.iterations;
  j["crit_loglik"] = report.crit_loglik;
  j["crit_param"] = report.crit_param;
  j["crit_grad"] = report.crit_grad;
  j["config"] = report.config_echo;

  json rows = json::array();
  for (const auto& r : report.rows) {
    json row;
    row["name"] = r.name;
    row["display"] = r.display;
    row["estimate"] = r.estimate;
    row["sd"] = r.sd;
    row["lo95"] = r.lo95;
    row["hi95"] = r.hi95;
    row["median"] = r.median;
    row["p_indication"] = r.p_indication;
    row["has_cp"] = r.has_cp;
    rows.push_back(row);
  }
  j["parameters"] = rows;
  j["lambda"] = vec_to_json(report.lambda);
  j["assoc_mean"] = vec_to_json(report.assoc_mean);
  j["assoc_cov"] = mat_to_json(report.assoc_cov);
  j["re_sigma"] = mat_to_json(report.re_sigma);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

FitReport read_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  in >> j;

  FitReport report;
  report.engine = j.at("engine");
  report.converged = j.at("converged");
  report.log_marginal = j.at("log_marginal");
  report.seconds = j.at("seconds");
  report.seed = j.at("seed");
  report.baseline_bins = j.at("baseline_bins");
  report.follow_up_max = j.at("follow_up_max");
  report.re_dim = j.at("re_dim");
  report.iterations = j.at("iterations");
  report.crit_loglik = j.at("crit_loglik");
  report.crit_param = j.at("crit_param");
  report.crit_grad = j.at("crit_grad");
  if (j.contains("config"))
    report.config_echo =
        j.at("config").get<std::map<std::string, std::string>>();

  for (const auto& row : j.at("parameters")) {
    ParamRow r;
    r.name = row.at("name");
    r.display = row.at("display");
    r.estimate = row.at("estimate");
    r.sd = row.at("sd");
    r.lo95 = row.at("lo95");
    r.hi95 = row.at("hi95");
    r.median = row.at("median");
    r.p_indication = row.at("p_indication");
    r.has_cp = row.at("has_cp");
    report.rows.push_back(std::move(r));
  }
  report.lambda = json_to_vec(j.at("lambda"));
  report.assoc_mean = json_to_vec(j.at("assoc_mean"));
  report.assoc_cov = json_to_mat(j.at("assoc_cov"));
  report.re_sigma = json_to_mat(j.at("re_sigma"));
  return report;
}

namespace {
const char* stars(double p) {
  if (!(p == p)) return "";  // NaN
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

void section(std::ostringstream& os, const std::string& title) {
  os << title << "\n";
}
}  // namespace

std::string fit_table(const FitReport& report, bool p_indications) {
  std::ostringstream os;
  os << "engine: " << report.engine
     << (report.converged ? "" : "  [NOT CONVERGED]") << "\n";
  char buf[160];

  auto row_line = [&](const ParamRow& r) {
    if (p_indications)
      snprintf(buf, sizeof(buf), "  %-28s %8.3f%-3s (%.3f)  [%.3f, %.3f]\n",
               r.display.c_str(), r.estimate, stars(r.p_indication), r.sd,
               r.lo95, r.hi95);
    else
      snprintf(buf, sizeof(buf), "  %-28s %8.3f (%.3f)  [%.3f, %.3f]\n",
               r.display.c_str(), r.estimate, r.sd, r.lo95, r.hi95);
    os << buf;
  };

  auto emit = [&](const std::string& title, const std::string& prefix) {
    bool any = false;
    for (const auto& r : report.rows)
      if (r.name.rfind(prefix, 0) == 0) {
        if (!any) section(os, title);
        any = true;
        row_line(r);
      }
  };
  emit("Binary part", "alpha");
  emit("Continuous part", "beta");
  for (const auto& r : report.rows)
    if (r.name == "sigma_eps") row_line(r);
  emit("Death risk", "gamma");
  emit("Association", "phi");
  os << "Random effects' standard deviation\n";
  for (const auto& r : report.rows)
    if (r.name.rfind("sigma_", 0) == 0 && r.name != "sigma_eps") row_line(r);
  for (const auto& r : report.rows)
    if (r.name.rfind("rho_", 0) == 0) row_line(r);

  snprintf(buf, sizeof(buf), "log marginal likelihood: %.4f\n",
           report.log_marginal);
  os << buf;
  snprintf(buf, sizeof(buf), "time: %.2f sec\n", report.seconds);
  os << buf;
  if (p_indications)
    os << "significance indications: *** p<0.001, ** p<0.01, * p<0.05\n";
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace tpjm

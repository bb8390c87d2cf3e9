#include "tpjm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "tpjm/numeric.hpp"
#include "tpjm/rng.hpp"

namespace tpjm {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double quantile_sorted(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return kNaN;
  double idx = p * (v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(idx);
  if (lo + 1 >= v.size()) return v.back();
  double frac = idx - lo;
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}
}  // namespace

const ParamStat* ReplicationReport::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  int count = std::min(workers, n);
  pool.reserve(count);
  for (int w = 0; w < count; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

ReplicationReport run_study_with(
    const ScenarioConfig& cfg, const std::string& engine_name, int replicates,
    const StudyOptions& opts,
    const std::function<std::optional<FitReport>(
        const std::vector<SubjectData>&, const ScenarioConfig&)>& fit_one) {
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");

  ReplicationReport rep;
  rep.engine = engine_name;
  rep.replicates = replicates;
  rep.raw_names = parameter_names(cfg.spec);
  rep.raw_estimates.assign(replicates,
                           std::vector<double>(rep.raw_names.size(), kNaN));

  struct Slot {
    bool converged = false;
    FitReport report;
    double seconds = 0.0;
  };
  std::vector<Slot> slots(replicates);

  parallel_for(replicates, opts.workers, [&](int r) {
    ScenarioConfig rep_cfg = cfg;
    rep_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r));
    auto data = generate_dataset(rep_cfg);
    auto t0 = std::chrono::steady_clock::now();
    try {
      std::optional<FitReport> fit = fit_one(data, rep_cfg);
      slots[r].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      if (fit && fit->converged) {
        slots[r].converged = true;
        slots[r].report = std::move(*fit);
      }
    } catch (const std::exception&) {
      slots[r].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  });

  auto truth = cfg.truth.named(cfg.spec);
  std::map<std::string, std::vector<double>> est;
  std::map<std::string, int> cover;
  std::map<std::string, bool> has_cp;
  std::vector<double> seconds;
  std::vector<std::vector<double>> curves;

  for (int r = 0; r < replicates; ++r) {
    if (!slots[r].converged) continue;
    const FitReport& fit = slots[r].report;
    ++rep.converged;
    seconds.push_back(slots[r].seconds);
    for (std::size_t j = 0; j < rep.raw_names.size(); ++j) {
      const ParamRow* row = fit.find(rep.raw_names[j]);
      if (!row) continue;
      rep.raw_estimates[r][j] = row->estimate;
      est[row->name].push_back(row->estimate);
      has_cp[row->name] = row->has_cp;
      auto it = truth.find(row->name);
      if (it != truth.end() && std::isfinite(row->lo95) &&
          it->second >= row->lo95 && it->second <= row->hi95)
        cover[row->name]++;
    }
    SurvivalCurve c =
        baseline_survival(fit.lambda, fit.follow_up_max, opts.survival_grid);
    if (rep.curve_time.empty()) rep.curve_time = c.time;
    curves.push_back(std::move(c.survival));
  }

  for (const auto& name : rep.raw_names) {
    ParamStat st;
    st.name = name;
    st.truth = truth.count(name) ? truth.at(name) : kNaN;
    auto it = est.find(name);
    if (it != est.end() && !it->second.empty()) {
      const auto& v = it->second;
      st.n_used = static_cast<int>(v.size());
      double m = 0.0;
      for (double x : v) m += x;
      m /= v.size();
      double s2 = 0.0;
      for (double x : v) s2 += (x - m) * (x - m);
      st.mean_est = m;
      st.sd_est = v.size() > 1 ? std::sqrt(s2 / (v.size() - 1)) : 0.0;
      st.cp = static_cast<double>(cover[name]) / v.size();
      st.has_cp = has_cp[name];
    }
    rep.params.push_back(std::move(st));
  }

  if (!seconds.empty()) {
    double m = 0.0;
    for (double s : seconds) m += s;
    m /= seconds.size();
    double s2 = 0.0;
    for (double s : seconds) s2 += (s - m) * (s - m);
    rep.mean_seconds = m;
    rep.sd_seconds =
        seconds.size() > 1 ? std::sqrt(s2 / (seconds.size() - 1)) : 0.0;
  }

  if (!curves.empty()) {
    const std::size_t G = rep.curve_time.size();
    rep.curve_q025.resize(G);
    rep.curve_q50.resize(G);
    rep.curve_q975.resize(G);
    std::vector<double> col(curves.size());
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t r = 0; r < curves.size(); ++r) col[r] = curves[r][g];
      rep.curve_q025[g] = quantile_sorted(col, 0.025);
      rep.curve_q50[g] = quantile_sorted(col, 0.5);
      rep.curve_q975[g] = quantile_sorted(col, 0.975);
    }
  }
  return rep;
}

ReplicationReport run_study(const ScenarioConfig& cfg, Engine engine,
                            int replicates, const StudyOptions& opts) {
  if (engine == Engine::inla) {
    PriorConfig priors;
    return run_study_with(
        cfg, "inla", replicates, opts,
        [&](const std::vector<SubjectData>& data, const ScenarioConfig& c) {
          InlaFit fit = fit_inla(data, c.spec, priors, opts.inla);
          return std::optional<FitReport>(std::move(fit.report));
        });
  }
  return run_study_with(
      cfg, "mle", replicates, opts,
      [&](const std::vector<SubjectData>& data, const ScenarioConfig& c) {
        MleResult res = fit_mle(data, c.spec, opts.n_points,
                                mix_seed(c.seed, 0x9d2c5681ULL), opts.marquardt);
        return std::optional<FitReport>(make_mle_report(c.spec, res));
      });
}

namespace {
std::string fmt_cell(const ParamStat* p) {
  if (!p || p->n_used == 0) return "--";
  char buf[96];
  if (p->has_cp)
    snprintf(buf, sizeof(buf), "%.2f (%.2f) [%.0f%%]", p->mean_est, p->sd_est,
             100.0 * p->cp);
  else
    snprintf(buf, sizeof(buf), "%.2f (%.2f)", p->mean_est, p->sd_est);
  return buf;
}
}  // namespace

std::string report_table(const ReplicationReport& r) {
  std::ostringstream os;
  os << "engine: " << r.engine << "\n";
  char buf[128];
  snprintf(buf, sizeof(buf), "%-12s %10s  %s\n", "parameter", "truth",
           "Est (SD) [CP]");
  os << buf;
  for (const auto& p : r.params) {
    snprintf(buf, sizeof(buf), "%-12s %10.3f  %s\n", p.name.c_str(), p.truth,
             fmt_cell(&p).c_str());
    os << buf;
  }
  snprintf(buf, sizeof(buf), "%-12s %10s  %.2f sec. (%.2f)\n", "time", "",
           r.mean_seconds, r.sd_seconds);
  os << buf;
  snprintf(buf, sizeof(buf), "%-12s %10s  %.0f%% (%d/%d)\n", "convergence", "",
           r.replicates > 0 ? 100.0 * r.converged / r.replicates : 0.0,
           r.converged, r.replicates);
  os << buf;
  return os.str();
}

std::string compare_reports(const ReplicationReport& a,
                            const ReplicationReport& b) {
  if (a.params.size() != b.params.size())
    throw std::invalid_argument("compare_reports: parameter label mismatch");
  for (std::size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i].name != b.params[i].name)
      throw std::invalid_argument("compare_reports: parameter label mismatch");

  std::ostringstream os;
  char buf[192];
  snprintf(buf, sizeof(buf), "%-12s %10s  %-26s %-26s\n", "parameter", "truth",
           a.engine.c_str(), b.engine.c_str());
  os << buf;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    snprintf(buf, sizeof(buf), "%-12s %10.3f  %-26s %-26s\n",
             a.params[i].name.c_str(), a.params[i].truth,
             fmt_cell(&a.params[i]).c_str(), fmt_cell(&b.params[i]).c_str());
    os << buf;
  }
  snprintf(buf, sizeof(buf), "%-12s %10s  %-26s %-26s\n", "time", "",
           (std::to_string(a.mean_seconds) + " sec.").c_str(),
           (std::to_string(b.mean_seconds) + " sec.").c_str());
  os << buf;
  snprintf(buf, sizeof(buf), "%-12s %10s  %-26s %-26s\n", "convergence", "",
           (std::to_string(100 * a.converged / std::max(a.replicates, 1)) + "%").c_str(),
           (std::to_string(100 * b.converged / std::max(b.replicates, 1)) + "%").c_str());
  os << buf;
  return os.str();
}

std::string report_csv(const ReplicationReport& r) {
  std::ostringstream os;
  os << "parameter,truth,mean_est,emp_sd,cp,n_used\n";
  os.precision(12);
  for (const auto& p : r.params) {
    os << p.name << ',' << p.truth << ',' << p.mean_est << ',' << p.sd_est
       << ',';
    if (p.has_cp && p.n_used > 0) os << p.cp;
    os << ',' << p.n_used << '\n';
  }
  os << "curve_time";
  for (double t : r.curve_time) os << ',' << t;
  os << "\ncurve_q025";
  for (double v : r.curve_q025) os << ',' << v;
  os << "\ncurve_q50";
  for (double v : r.curve_q50) os << ',' << v;
  os << "\ncurve_q975";
  for (double v : r.curve_q975) os << ',' << v;
  os << '\n';
  return os.str();
}

std::string raw_estimates_csv(const ReplicationReport& r) {
  std::ostringstream os;
  os << "replicate";
  for (const auto& n : r.raw_names) os << ',' << n;
  os << '\n';
  os.precision(12);
  for (std::size_t i = 0; i < r.raw_estimates.size(); ++i) {
    os << i;
    for (double v : r.raw_estimates[i]) {
      os << ',';
      if (std::isfinite(v)) os << v;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tpjm

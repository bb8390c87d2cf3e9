#include "tpjm/inla.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tpjm/numeric.hpp"

namespace tpjm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int find_entry(const Eigen::SparseMatrix<double>& m, int row, int col) {
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  int lo = outer[col], hi = outer[col + 1];
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (inner[mid] < row)
      lo = mid + 1;
    else
      hi = mid;
  }
  if (lo < outer[col + 1] && inner[lo] == row) return lo;
  throw std::logic_error("find_entry: pattern entry missing");
}

double llt_log_det(const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>& llt) {
  double ld = 0.0;
  const auto& L = llt.matrixL().nestedExpression();
  for (int k = 0; k < L.rows(); ++k) ld += std::log(L.coeff(k, k));
  return 2.0 * ld;
}
}  // namespace

struct InlaEngine::FlatRows {
  int n_rows = 0;
  std::vector<int> offsets;       // n_rows + 1
  std::vector<int> cols;
  std::vector<double> base_coefs;
  std::vector<int> scale_slots;
  std::vector<double> coefs;      // numeric for the current theta
  // rows touching each latent column, as (row, entry position)
  std::vector<std::vector<std::pair<int, int>>> col_rows;
};

InlaEngine::InlaEngine(const LgmModel& model, InlaOptions opts)
    : model_(model), opts_(opts) {
  const auto& rows = model_.obs_rows();
  rows_ = std::make_unique<FlatRows>();
  rows_->n_rows = static_cast<int>(rows.size());
  rows_->offsets.reserve(rows.size() + 1);
  rows_->offsets.push_back(0);
  for (const auto& r : rows) {
    for (const auto& e : r.entries) {
      rows_->cols.push_back(e.col);
      rows_->base_coefs.push_back(e.coef);
      rows_->scale_slots.push_back(e.scale_slot);
    }
    rows_->offsets.push_back(static_cast<int>(rows_->cols.size()));
  }
  rows_->coefs = rows_->base_coefs;
}

InlaEngine::~InlaEngine() = default;

void InlaEngine::refresh_coefs(const Eigen::VectorXd& theta) {
  Eigen::VectorXd scales = model_.row_scales(theta);
  for (std::size_t p = 0; p < rows_->cols.size(); ++p) {
    int slot = rows_->scale_slots[p];
    rows_->coefs[p] =
        slot < 0 ? rows_->base_coefs[p] : rows_->base_coefs[p] * scales[slot];
  }
}

double InlaEngine::objective_at(const Eigen::VectorXd& u,
                                const Eigen::VectorXd& theta) const {
  // value-only evaluation used by the inner line search; Q part added by caller
  KahanSum ll;
  const auto& rows = model_.obs_rows();
  for (int r = 0; r < rows_->n_rows; ++r) {
    double eta = 0.0;
    for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
      eta += rows_->coefs[p] * u[rows_->cols[p]];
    ll.add(model_.kernel(rows[r], eta, theta).value);
  }
  return ll.value();
}

GaussianApprox InlaEngine::inner_mode(const Eigen::VectorXd& theta,
                                      bool want_marginal_sd) {
  const int n = model_.latent_dim();
  Eigen::SparseMatrix<double> Q = model_.prior_precision(theta);
  refresh_coefs(theta);

  if (!analyzed_) {
    // fixed sparsity: union of Q and the likelihood cross-products, lower part
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < Q.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Q, k); it; ++it)
        if (it.row() >= it.col())
          trips.emplace_back(static_cast<int>(it.row()),
                             static_cast<int>(it.col()), 0.0);
    for (int r = 0; r < rows_->n_rows; ++r)
      for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
        for (int q = rows_->offsets[r]; q <= p; ++q) {
          int i = rows_->cols[p], j = rows_->cols[q];
          if (i < j) std::swap(i, j);
          trips.emplace_back(i, j, 0.0);
        }
    H_.resize(n, n);
    H_.setFromTriplets(trips.begin(), trips.end());

    q_map_.clear();
    for (int k = 0; k < Q.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Q, k); it; ++it)
        q_map_.push_back(it.row() >= it.col()
                             ? find_entry(H_, static_cast<int>(it.row()),
                                          static_cast<int>(it.col()))
                             : -1);

    pair_map_.assign(rows_->n_rows, {});
    for (int r = 0; r < rows_->n_rows; ++r) {
      auto& pm = pair_map_[r];
      for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
        for (int q = rows_->offsets[r]; q <= p; ++q) {
          int i = rows_->cols[p], j = rows_->cols[q];
          if (i < j) std::swap(i, j);
          pm.push_back(find_entry(H_, i, j));
        }
    }

    h_llt_.analyzePattern(H_);
    q_llt_.analyzePattern(Q);
    analyzed_ = true;
  }

  GaussianApprox ga;
  Eigen::VectorXd u = (warm_u_.size() == n) ? warm_u_ : Eigen::VectorXd::Zero(n);
  const auto& rows = model_.obs_rows();
  Eigen::VectorXd grad(n), delta(n), qu(n);
  double* hvals = H_.valuePtr();
  const int h_nnz = static_cast<int>(H_.nonZeros());

  double f = kNegInf;
  bool have_factorization = false;
  double f_prev = kNegInf;
  double step_prev = std::numeric_limits<double>::infinity();
  int stagnant = 0;

  for (int iter = 0;; ++iter) {
    qu = Q * u;
    KahanSum ll;
    grad = -qu;
    std::fill(hvals, hvals + h_nnz, 0.0);
    {
      int qi = 0;
      for (int k = 0; k < Q.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Q, k); it; ++it, ++qi)
          if (q_map_[qi] >= 0) hvals[q_map_[qi]] += it.value();
    }
    for (int r = 0; r < rows_->n_rows; ++r) {
      double eta = 0.0;
      for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
        eta += rows_->coefs[p] * u[rows_->cols[p]];
      LogLikTriple t = model_.kernel(rows[r], eta, theta);
      ll.add(t.value);
      double c = -t.d2;
      if (c < 0.0) c = 0.0;  // kernels are log-concave; guard roundoff
      const auto& pm = pair_map_[r];
      int pair = 0;
      for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p) {
        grad[rows_->cols[p]] += t.d1 * rows_->coefs[p];
        for (int q = rows_->offsets[r]; q <= p; ++q, ++pair)
          hvals[pm[pair]] += c * rows_->coefs[p] * rows_->coefs[q];
      }
    }
    f = -0.5 * u.dot(qu) + ll.value();
    ga.loglik = ll.value();
    ga.prior_quad = u.dot(qu);

    h_llt_.factorize(H_);
    if (h_llt_.info() != Eigen::Success) {
      if (std::getenv("TPJM_DEBUG"))
        fprintf(stderr, "[inner] factorize failed at iter %d\n", iter);
      ga.converged = false;
      ga.iterations = iter;
      break;
    }
    have_factorization = true;
    delta = h_llt_.solve(grad);

    double step_max = delta.lpNorm<Eigen::Infinity>();
    double grad_max = grad.lpNorm<Eigen::Infinity>();
    {
      const char* dbg = std::getenv("TPJM_DEBUG");
      if (dbg && dbg[0] == '2')
        fprintf(stderr, "[inner it %d] f=%.8f step=%.3g grad=%.3g\n", iter, f,
                step_max, grad_max);
    }
    if (step_max < opts_.inner_step_tol && grad_max < opts_.inner_grad_tol) {
      ga.converged = true;
      ga.iterations = iter;
      break;
    }
    // stagnation at the floating-point resolution of the objective counts as
    // the numerical mode (stiff Q can leave the gradient floor above tol)
    const double f_noise =
        4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    if (std::abs(f - f_prev) <= f_noise && step_prev < 1e-5) {
      if (++stagnant >= 2) {
        ga.converged = true;
        ga.iterations = iter;
        break;
      }
    } else {
      stagnant = 0;
    }
    f_prev = f;
    if (iter >= opts_.max_inner_iterations) {
      ga.converged = false;
      ga.iterations = iter;
      break;
    }

    // step-halving line search; objective must not decrease beyond the
    // floating-point resolution of f (tiny Newton steps near the mode ask for
    // improvements below 1 ulp)
    double slope = grad.dot(delta);
    double t = 1.0;
    bool accepted = false;
    const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                         (1.0 + std::abs(f));
    for (int back = 0; back < 40; ++back) {
      Eigen::VectorXd u_try = u + t * delta;
      double f_try = -0.5 * u_try.dot(Q * u_try) + objective_at(u_try, theta);
      if (std::isfinite(f_try) && f_try >= f + 1e-4 * t * slope - noise) {
        u = u_try;
        accepted = true;
        step_prev = t * step_max;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (std::getenv("TPJM_DEBUG"))
        fprintf(stderr,
                "[inner] line search failed at iter %d (step %.3g grad %.3g)\n",
                iter, delta.lpNorm<Eigen::Infinity>(),
                grad.lpNorm<Eigen::Infinity>());
      ga.converged = false;
      ga.iterations = iter;
      break;
    }
  }
  if (!ga.converged && ga.iterations >= opts_.max_inner_iterations &&
      std::getenv("TPJM_DEBUG"))
    fprintf(stderr, "[inner] iteration cap reached\n");

  ga.mode = u;
  if (have_factorization) {
    ga.log_det_precision = llt_log_det(h_llt_);
    if (want_marginal_sd && ga.converged) {
      const bool shift = opts_.mean_correction;
      if (shift && rows_->col_rows.empty()) {
        rows_->col_rows.assign(n, {});
        for (int r = 0; r < rows_->n_rows; ++r)
          for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
            rows_->col_rows[rows_->cols[p]].emplace_back(r, p);
      }
      std::vector<double> eta_var(shift ? rows_->n_rows : 0, 0.0);

      ga.marginal_sd.resize(n);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        Eigen::VectorXd x = h_llt_.solve(e);
        ga.marginal_sd[j] = std::sqrt(std::max(x[j], 0.0));
        e[j] = 0.0;
        if (!shift) continue;
        for (const auto& [r, pj] : rows_->col_rows[j]) {
          double dot = 0.0;
          for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
            dot += rows_->coefs[p] * x[rows_->cols[p]];
          eta_var[r] += rows_->coefs[pj] * dot;
        }
      }

      if (shift) {
        // E[u_j] - mode_j ~ 1/2 sum_r l'''_r Var(eta_r) (H^-1 a_r)_j
        const auto& rows = model_.obs_rows();
        Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
        for (int r = 0; r < rows_->n_rows; ++r) {
          double eta = 0.0;
          for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
            eta += rows_->coefs[p] * u[rows_->cols[p]];
          double d3 = model_.kernel_d3(rows[r], eta, theta);
          if (d3 == 0.0) continue;
          double w = d3 * eta_var[r];
          for (int p = rows_->offsets[r]; p < rows_->offsets[r + 1]; ++p)
            t[rows_->cols[p]] += w * rows_->coefs[p];
        }
        ga.mean_shift = 0.5 * h_llt_.solve(t);
      }
    }
  }
  if (ga.converged) warm_u_ = u;
  return ga;
}

double InlaEngine::log_post_theta(const Eigen::VectorXd& theta,
                                  GaussianApprox* approx_out,
                                  bool want_marginal_sd) {
  for (int k = 0; k < theta.size(); ++k)
    if (std::abs(theta[k]) > opts_.theta_bound) return kNegInf;

  Eigen::SparseMatrix<double> Q;
  try {
    Q = model_.prior_precision(theta);
  } catch (const RejectionError&) {
    return kNegInf;
  }

  GaussianApprox ga = inner_mode(theta, want_marginal_sd);
  if (!ga.converged) {
    if (approx_out) *approx_out = std::move(ga);
    return kNegInf;
  }

  q_llt_.factorize(Q);
  if (q_llt_.info() != Eigen::Success) return kNegInf;
  double log_det_q = llt_log_det(q_llt_);

  double lp = model_.log_prior(theta) + 0.5 * log_det_q - 0.5 * ga.prior_quad +
              ga.loglik - 0.5 * ga.log_det_precision;
  if (approx_out) *approx_out = std::move(ga);
  return lp;
}

double InlaEngine::log_marginal_given_theta(const Eigen::VectorXd& theta) {
  return log_post_theta(theta) - model_.log_prior(theta);
}

double InlaEngine::loglik_at(const Eigen::VectorXd& u,
                             const Eigen::VectorXd& theta) {
  refresh_coefs(theta);
  return objective_at(u, theta);
}

Eigen::MatrixXd InlaEngine::fd_hessian(const Eigen::VectorXd& mode,
                                       double f_mode) {
  const int k = static_cast<int>(mode.size());
  const double h = opts_.fd_step;
  Eigen::MatrixXd H(k, k);
  auto eval = [&](const Eigen::VectorXd& th) { return log_post_theta(th); };
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd t = mode;
    t[i] = mode[i] + h;
    double fp = eval(t);
    t[i] = mode[i] - h;
    double fm = eval(t);
    H(i, i) = (fp - 2.0 * f_mode + fm) / (h * h);
    for (int j = i + 1; j < k; ++j) {
      Eigen::VectorXd s = mode;
      s[i] = mode[i] + h; s[j] = mode[j] + h;
      double fpp = eval(s);
      s[j] = mode[j] - h;
      double fpm = eval(s);
      s[i] = mode[i] - h; s[j] = mode[j] + h;
      double fmp = eval(s);
      s[j] = mode[j] - h;
      double fmm = eval(s);
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return H;
}

CcdDesign ccd_design(int dim, double f0) {
  if (dim < 1) throw std::invalid_argument("ccd_design: dim must be >= 1");
  if (!(f0 > 1.0)) throw std::invalid_argument("ccd_design: f0 must exceed 1");
  const double r = f0 * std::sqrt(static_cast<double>(dim));

  std::vector<Eigen::VectorXd> pts;
  pts.push_back(Eigen::VectorXd::Zero(dim));  // center
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    z[i] = r;
    pts.push_back(z);
    z[i] = -r;
    pts.push_back(z);
  }

  if (dim >= 2) {
    // smallest 2^q fraction whose +-1 columns are pairwise orthogonal:
    // q base columns plus distinct interaction words of >= 2 letters
    int q = 1;
    while ((1 << q) - 1 < dim) ++q;
    std::vector<unsigned> words;
    for (int b = 0; b < q; ++b) words.push_back(1u << b);
    for (unsigned mask = 3; static_cast<int>(words.size()) < dim; ++mask) {
      if (mask >= (1u << q)) throw std::logic_error("ccd_design: word overflow");
      if (__builtin_popcount(mask) >= 2) words.push_back(mask);
    }
    const double scale = r / std::sqrt(static_cast<double>(dim));
    for (unsigned run = 0; run < (1u << q); ++run) {
      Eigen::VectorXd z(dim);
      for (int j = 0; j < dim; ++j) {
        int parity = __builtin_popcount(run & words[j]) & 1;
        z[j] = parity ? -scale : scale;
      }
      pts.push_back(z);
    }
  }

  CcdDesign design;
  design.z_points.resize(static_cast<int>(pts.size()), dim);
  for (int i = 0; i < design.z_points.rows(); ++i)
    design.z_points.row(i) = pts[i].transpose();
  const double ns = static_cast<double>(pts.size() - 1);
  design.sphere_rel_weight =
      dim / ((r * r - dim) * ns) * std::exp(0.5 * r * r);
  return design;
}

ExploreResult InlaEngine::explore_theta(const Eigen::VectorXd& start) {
  ExploreResult res;
  const int k = static_cast<int>(start.size());
  if (k != model_.hyper_dim())
    throw std::invalid_argument("explore_theta: start has wrong dimension");
  int n_evals = 0;
  auto eval = [&](const Eigen::VectorXd& th) {
    ++n_evals;
    return log_post_theta(th);
  };

  if (k == 0) {
    res.mode = start;
    res.log_post_mode = eval(start);
    res.mode_converged = true;
    ThetaPoint pt;
    pt.theta = start;
    pt.log_post = log_post_theta(start, &pt.approx, true);
    pt.weight = 1.0;
    res.all_inner_converged = pt.approx.converged;
    res.points.push_back(std::move(pt));
    res.n_evals = n_evals;
    return res;
  }

  const double h = opts_.fd_step;
  auto fd_grad = [&](const Eigen::VectorXd& x, double fx) {
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd t = x;
      t[i] = x[i] + h;
      double fp = eval(t);
      t[i] = x[i] - h;
      double fm = eval(t);
      if (std::isfinite(fp) && std::isfinite(fm))
        g[i] = (fp - fm) / (2.0 * h);
      else if (std::isfinite(fp))
        g[i] = (fp - fx) / h;
      else if (std::isfinite(fm))
        g[i] = (fx - fm) / h;
      else
        g[i] = 0.0;
    }
    return g;
  };
  // 4th-order stencil for the polish phase: the 2nd-order truncation bias in
  // stiff directions can sit at the same magnitude as the tolerance
  auto fd_grad5 = [&](const Eigen::VectorXd& x, double fx) {
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd t = x;
      t[i] = x[i] + 2.0 * h;
      double fp2 = eval(t);
      t[i] = x[i] + h;
      double fp = eval(t);
      t[i] = x[i] - h;
      double fm = eval(t);
      t[i] = x[i] - 2.0 * h;
      double fm2 = eval(t);
      if (std::isfinite(fp2) && std::isfinite(fp) && std::isfinite(fm) &&
          std::isfinite(fm2))
        g[i] = (-fp2 + 8.0 * fp - 8.0 * fm + fm2) / (12.0 * h);
      else if (std::isfinite(fp) && std::isfinite(fm))
        g[i] = (fp - fm) / (2.0 * h);
      else
        g[i] = std::isfinite(fp) ? (fp - fx) / h
                                 : (std::isfinite(fm) ? (fx - fm) / h : 0.0);
    }
    return g;
  };

  // BFGS ascent with finite-difference gradient, diagonal FD preconditioning
  const int budget = opts_.mode_budget_per_dim * k;
  Eigen::VectorXd x = start;
  double fx = eval(x);
  if (!std::isfinite(fx))
    throw std::invalid_argument("explore_theta: start has zero posterior density");
  Eigen::VectorXd g = fd_grad(x, fx);

  auto diag_precond = [&](const Eigen::VectorXd& at, double f_at) {
    Eigen::MatrixXd B0 = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd t = at;
      t[i] = at[i] + h;
      double fp = eval(t);
      t[i] = at[i] - h;
      double fm = eval(t);
      double curv = -(fp - 2.0 * f_at + fm) / (h * h);
      if (!std::isfinite(curv)) curv = 1.0;
      B0(i, i) = 1.0 / std::min(std::max(curv, 0.05), 1e7);
    }
    return B0;
  };
  Eigen::MatrixXd B = diag_precond(x, fx);
  bool converged = g.lpNorm<Eigen::Infinity>() <= opts_.mode_grad_tol;

  auto line_search = [&](const Eigen::VectorXd& p, double slope,
                         Eigen::VectorXd& x_new, double& f_new) {
    double t = 1.0;
    const double noise =
        32.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(fx));
    for (int back = 0; back < 50; ++back) {
      x_new = x + t * p;
      f_new = eval(x_new);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * t * slope - noise)
        return true;
      t *= 0.5;
    }
    return false;
  };

  bool bfgs_stalled = false;
  while (!converged && !bfgs_stalled && n_evals < budget) {
    Eigen::VectorXd p = B * g;
    if (p.dot(g) <= 0.0) {
      B = diag_precond(x, fx);
      p = B * g;
    }
    // trust cap on the transformed scale
    double pmax = p.lpNorm<Eigen::Infinity>();
    if (pmax > 2.0) p *= 2.0 / pmax;

    Eigen::VectorXd x_new;
    double f_new = kNegInf;
    if (!line_search(p, p.dot(g), x_new, f_new)) {
      B = diag_precond(x, fx);
      p = B * g;
      pmax = p.lpNorm<Eigen::Infinity>();
      if (pmax > 1.0) p /= pmax;
      if (!line_search(p, p.dot(g), x_new, f_new)) {
        bfgs_stalled = true;
        break;
      }
    }
    Eigen::VectorXd g_new = fd_grad(x_new, f_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g - g_new;  // gradient change of -f
    double sy = s.dot(y);
    if (sy > 1e-12) {
      Eigen::VectorXd By = B * y;
      B += ((sy + y.dot(By)) / (sy * sy)) * (s * s.transpose()) -
           (By * s.transpose() + s * By.transpose()) / sy;
    }
    x = x_new;
    fx = f_new;
    g = g_new;
    converged = g.lpNorm<Eigen::Infinity>() <= opts_.mode_grad_tol;
  }

  // damped Newton polish with the finite-difference Hessian and a 4th-order
  // gradient; also leaves the Hessian at the accepted mode behind for the
  // integration design
  bool have_hessian = false;
  Eigen::MatrixXd Hfd;
  const int polish_budget = n_evals + 12 * k * k + 120 * k + 400;
  if (!converged) {
    g = fd_grad5(x, fx);
    converged = g.lpNorm<Eigen::Infinity>() <= opts_.mode_grad_tol;
  }
  int theta_stagnant = 0;
  while (!converged && n_evals < polish_budget) {
    Hfd = fd_hessian(x, fx);
    n_evals += 2 * k * k;
    have_hessian = true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-Hfd);
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(1e-8);
    Eigen::VectorXd p = es.eigenvectors() *
                        (es.eigenvectors().transpose() * g).cwiseQuotient(lam);
    if (p.dot(g) <= 0.0) p = g;
    double pmax = p.lpNorm<Eigen::Infinity>();
    if (pmax > 2.0) p *= 2.0 / pmax;
    Eigen::VectorXd x_new;
    double f_new = kNegInf;
    if (!line_search(p, p.dot(g), x_new, f_new)) break;
    double gain = f_new - fx;
    double moved = (x_new - x).lpNorm<Eigen::Infinity>();
    x = x_new;
    fx = f_new;
    g = fd_grad5(x, fx);
    converged = g.lpNorm<Eigen::Infinity>() <= opts_.mode_grad_tol;
    have_hessian = false;  // x moved
    if (!converged && moved < 1e-5 &&
        gain <= 1e-9 * (1.0 + std::abs(fx))) {
      // numerical mode: the objective cannot improve at double resolution
      if (++theta_stagnant >= 2) converged = true;
    } else {
      theta_stagnant = 0;
    }
  }

  res.mode = x;
  res.log_post_mode = fx;
  res.mode_converged = converged;

  if (std::getenv("TPJM_DEBUG")) {
    fprintf(stderr, "[mode] conv=%d evals=%d f=%.4f |g|=%.4g stalled=%d theta=",
            converged, n_evals, fx, g.lpNorm<Eigen::Infinity>(), (int)bfgs_stalled);
    for (int i = 0; i < k; ++i) fprintf(stderr, "%.3f ", x[i]);
    fprintf(stderr, "\n");
  }

  res.hessian = have_hessian ? Hfd : fd_hessian(x, fx);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-res.hessian);
  Eigen::VectorXd lam = es.eigenvalues();
  for (int i = 0; i < k; ++i) lam[i] = std::max(lam[i], 1e-8);
  res.theta_cov = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
  Eigen::MatrixXd T = es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal();

  // integration design in the standardized space
  std::vector<Eigen::VectorXd> z_points;
  std::vector<double> design_weights;
  switch (opts_.strategy) {
    case Strategy::eb: {
      z_points.push_back(Eigen::VectorXd::Zero(k));
      design_weights.push_back(1.0);
      break;
    }
    case Strategy::grid: {
      if (k > 2)
        throw std::invalid_argument("grid strategy supports at most 2 hyperparameters");
      std::vector<double> marks;
      for (double z = -opts_.grid_halfwidth; z <= opts_.grid_halfwidth + 1e-9;
           z += opts_.grid_step)
        marks.push_back(z);
      if (k == 1) {
        for (double z : marks) {
          Eigen::VectorXd v(1);
          v << z;
          z_points.push_back(v);
          design_weights.push_back(1.0);
        }
      } else {
        for (double z1 : marks)
          for (double z2 : marks) {
            Eigen::VectorXd v(2);
            v << z1, z2;
            z_points.push_back(v);
            design_weights.push_back(1.0);
          }
      }
      break;
    }
    case Strategy::ccd: {
      CcdDesign design = ccd_design(k, opts_.ccd_f0);
      for (int i = 0; i < design.z_points.rows(); ++i) {
        z_points.push_back(design.z_points.row(i).transpose());
        design_weights.push_back(i == 0 ? 1.0 : design.sphere_rel_weight);
      }
      break;
    }
  }

  std::vector<double> design_lp(z_points.size(),
                                std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < z_points.size(); ++i) {
    ThetaPoint pt;
    pt.theta = x + T * z_points[i];
    bool rejected = false;
    try {
      model_.prior_precision(pt.theta);
    } catch (const RejectionError&) {
      rejected = true;
    }
    for (int c = 0; c < k && !rejected; ++c)
      if (std::abs(pt.theta[c]) > opts_.theta_bound) rejected = true;
    if (rejected) continue;  // zero posterior density, weight 0

    pt.log_post = log_post_theta(pt.theta, &pt.approx, true);
    ++n_evals;
    if (std::getenv("TPJM_DEBUG"))
      fprintf(stderr, "[pt %zu] lp=%.4f conv=%d |z|=%.2f theta0=%.2f\n", i,
              pt.log_post, pt.approx.converged, z_points[i].norm(), pt.theta[0]);
    if (!pt.approx.converged) {
      res.all_inner_converged = false;
      continue;
    }
    design_lp[i] = pt.log_post;
    pt.weight = design_weights[i];
    res.points.push_back(std::move(pt));
  }
  if (res.points.empty())
    throw std::runtime_error("explore_theta: no usable integration points");

  // Split-normal marginal moments of theta from the axial densities ("based
  // on the density at these points"): per eigendirection, the one-sided
  // scalings sigma+- solve lp(mode) - lp(mode +- r e_i) = r^2 / (2 sigma^2).
  res.theta_marginal_mean = x;
  res.theta_marginal_sd.resize(k);
  for (int j = 0; j < k; ++j)
    res.theta_marginal_sd[j] = std::sqrt(res.theta_cov(j, j));
  if (opts_.strategy == Strategy::ccd) {
    const double r = opts_.ccd_f0 * std::sqrt(static_cast<double>(k));
    // a side whose density drop is too small for the quadratic standardization
    // to be trusted carries no usable skew information
    auto scaling = [&](double lp_val) {
      if (!std::isfinite(lp_val)) return -1.0;
      double drop = res.log_post_mode - lp_val;
      if (drop <= r * r / 18.0) return -1.0;
      return std::min(std::max(r / std::sqrt(2.0 * drop), 1.0 / 3.0), 3.0);
    };
    Eigen::VectorXd ez(k), vz(k);
    for (int i = 0; i < k; ++i) {
      double sp = scaling(design_lp[1 + 2 * i]);
      double sm = scaling(design_lp[2 + 2 * i]);
      if (sp < 0.0 || sm < 0.0) {  // symmetric fallback
        ez[i] = 0.0;
        vz[i] = 1.0;
        continue;
      }
      double diff = sp - sm;
      ez[i] = std::sqrt(2.0 / M_PI) * diff;
      vz[i] = (1.0 - 2.0 / M_PI) * diff * diff + sp * sm;
    }
    res.theta_marginal_mean = x + T * ez;
    for (int j = 0; j < k; ++j) {
      double v = 0.0;
      for (int i = 0; i < k; ++i) v += T(j, i) * T(j, i) * vz[i];
      res.theta_marginal_sd[j] = std::sqrt(v);
    }
  }

  double lp_max = kNegInf;
  for (const auto& pt : res.points) lp_max = std::max(lp_max, pt.log_post);
  double total = 0.0;
  for (auto& pt : res.points) {
    pt.weight *= std::exp(pt.log_post - lp_max);
    total += pt.weight;
  }
  for (auto& pt : res.points) pt.weight /= total;

  res.n_evals = n_evals;
  return res;
}

PosteriorSummary InlaEngine::fit(const Eigen::VectorXd& start) {
  auto t0 = std::chrono::steady_clock::now();
  ExploreResult ex = explore_theta(start);
  PosteriorSummary s;
  s.latent = latent_marginals(ex.points);
  s.theta_mode = ex.mode;
  s.theta_cov = ex.theta_cov;
  s.theta_marginal_mean = ex.theta_marginal_mean;
  s.theta_marginal_sd = ex.theta_marginal_sd;
  s.points = std::move(ex.points);
  s.mode_converged = ex.mode_converged;
  s.all_inner_converged = ex.all_inner_converged;
  s.n_evals = ex.n_evals;

  const int k = static_cast<int>(ex.mode.size());
  if (k == 0) {
    s.log_marginal = ex.log_post_mode;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-ex.hessian);
    double log_det = 0.0;
    for (int i = 0; i < k; ++i)
      log_det += std::log(std::max(es.eigenvalues()[i], 1e-8));
    s.log_marginal =
        ex.log_post_mode + 0.5 * k * std::log(2.0 * M_PI) - 0.5 * log_det;
  }

  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
  return s;
}

namespace {
double component_mean(const ThetaPoint& pt, int index) {
  double mu = pt.approx.mode[index];
  if (pt.approx.mean_shift.size() > index)
    mu += pt.approx.mean_shift[index];
  return mu;
}
}  // namespace

double mixture_cdf(const std::vector<ThetaPoint>& points, int index, double x) {
  double f = 0.0;
  for (const auto& pt : points) {
    if (pt.weight <= 0.0) continue;
    double mu = component_mean(pt, index);
    double sd = pt.approx.marginal_sd[index];
    f += pt.weight * normal_cdf((x - mu) / sd);
  }
  return f;
}

double mixture_quantile(const std::vector<ThetaPoint>& points, int index,
                        double p) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& pt : points) {
    if (pt.weight <= 0.0) continue;
    double mu = component_mean(pt, index);
    double sd = pt.approx.marginal_sd[index];
    lo = std::min(lo, mu - 12.0 * sd);
    hi = std::max(hi, mu + 12.0 * sd);
  }
  for (int it = 0; it < 300; ++it) {
    double mid = 0.5 * (lo + hi);
    double f = mixture_cdf(points, index, mid);
    if (std::abs(f - p) <= 1e-8 &&
        (hi - lo) <= 1e-10 * std::max(1.0, std::abs(mid)))
      return mid;
    if (f < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<LatentMarginal> latent_marginals(const std::vector<ThetaPoint>& points) {
  if (points.empty()) return {};
  const int n = static_cast<int>(points.front().approx.mode.size());
  std::vector<LatentMarginal> out(n);
  for (int j = 0; j < n; ++j) {
    double mean = 0.0, second = 0.0;
    for (const auto& pt : points) {
      if (pt.weight <= 0.0) continue;
      double mu = component_mean(pt, j);
      double sd = pt.approx.marginal_sd[j];
      mean += pt.weight * mu;
      second += pt.weight * (sd * sd + mu * mu);
    }
    out[j].mean = mean;
    out[j].sd = std::sqrt(std::max(second - mean * mean, 0.0));
    out[j].q025 = mixture_quantile(points, j, 0.025);
    out[j].q50 = mixture_quantile(points, j, 0.5);
    out[j].q975 = mixture_quantile(points, j, 0.975);
  }
  return out;
}

SurvivalCurve baseline_survival(const Eigen::VectorXd& log_hazard,
                                double follow_up_max, int grid_points) {
  const int m = static_cast<int>(log_hazard.size());
  const double width = follow_up_max / m;
  SurvivalCurve curve;
  curve.time.reserve(grid_points);
  curve.survival.reserve(grid_points);
  for (int g = 0; g < grid_points; ++g) {
    double t = follow_up_max * g / (grid_points - 1);
    double cum = 0.0;
    for (int k = 0; k < m; ++k) {
      double overlap = std::min(t, (k + 1) * width) - k * width;
      if (overlap <= 0.0) break;
      cum += std::exp(log_hazard[k]) * overlap;
    }
    curve.time.push_back(t);
    curve.survival.push_back(std::exp(-cum));
  }
  return curve;
}

}  // namespace tpjm

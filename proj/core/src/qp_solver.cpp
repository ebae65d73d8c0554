#include "cbfmeta/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"

namespace cbfmeta {

std::string to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Solved: return "solved";
    case QPStatus::Infeasible: return "infeasible";
    case QPStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

void compute_residuals(const QPProblem& p, QPSolution& s) {
  const bool rows = p.num_rows() > 0;
  const Eigen::VectorXd Gx = rows ? Eigen::VectorXd(p.G * s.x) : Eigen::VectorXd();
  const Eigen::VectorXd Hx = p.hessian * s.x;
  const Eigen::VectorXd Gmu = rows ? Eigen::VectorXd(p.G.transpose() * s.multipliers) : Eigen::VectorXd::Zero(p.num_vars());
  const double row_scale = std::max({1.0, inf_norm(Gx), inf_norm(p.c)});
  const Eigen::VectorXd slack = rows ? Eigen::VectorXd(Gx - p.c) : Eigen::VectorXd();
  s.primal_residual = rows ? std::max(0.0, slack.maxCoeff()) / row_scale : 0.0;
  s.stationarity_residual =
      inf_norm(Hx + p.linear + Gmu) / std::max({1.0, inf_norm(Hx), inf_norm(p.linear), inf_norm(Gmu)});
  s.complementarity_residual =
      rows ? inf_norm(s.multipliers.cwiseProduct(slack)) / std::max(1.0, inf_norm(s.multipliers) * row_scale) : 0.0;
  s.objective = p.objective(s.x);
}

// Equality-constrained solve on the rows in `active`; false if singular.
bool polish(const QPProblem& p, const std::vector<int>& active, Eigen::VectorXd& x, Eigen::VectorXd& mu) {
  const int n = p.num_vars();
  const int q = static_cast<int>(active.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + q, n + q);
  Eigen::VectorXd rhs(n + q);
  K.topLeftCorner(n, n) = p.hessian;
  rhs.head(n) = -p.linear;
  for (int k = 0; k < q; ++k) {
    K.block(0, n + k, n, 1) = p.G.row(active[k]).transpose();
    K.block(n + k, 0, 1, n) = p.G.row(active[k]);
    rhs(n + k) = p.c(active[k]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) return false;
  Eigen::VectorXd sol = lu.solve(rhs);
  sol += lu.solve(rhs - K * sol);  // one step of iterative refinement
  x = sol.head(n);
  mu = Eigen::VectorXd::Zero(p.num_rows());
  for (int k = 0; k < q; ++k) mu(active[k]) = sol(n + k);
  return true;
}

}  // namespace

QPSolution solve_qp(const QPProblem& p, const QPOptions& opts) {
  const int n = p.num_vars();
  const int m = p.num_rows();
  if (p.hessian.cols() != n || p.linear.size() != n || (m > 0 && p.G.cols() != n) || p.c.size() != m) {
    throw Error(ErrorCode::DomainError, "QP dimensions are inconsistent");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(p.hessian);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::DomainError, "QP hessian is not SPD");
  const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const int max_iter = opts.max_iterations > 0 ? opts.max_iterations : std::max(100, 100 * m);
  const double feas_tol = 1e-12 * std::max(1.0, m > 0 ? p.c.cwiseAbs().maxCoeff() : 0.0);

  QPSolution sol;
  sol.x = -Hinv * p.linear;
  sol.multipliers = Eigen::VectorXd::Zero(m);
  std::vector<int> active;
  std::vector<double> u;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);

  // Constraint k in ">=" form: n_k^T x >= b_k with n_k = -G_k, b_k = -c_k.
  auto slack = [&](int k) { return p.c(k) - p.G.row(k).dot(sol.x); };

  int iter = 0;
  bool infeasible = false;
  bool limit = false;
  while (true) {
    int viol = -1;
    double worst = -feas_tol;
    for (int k = 0; k < m; ++k) {
      if (is_active[static_cast<std::size_t>(k)]) continue;
      const double s = slack(k);
      if (s < worst) {
        worst = s;
        viol = k;
      }
    }
    if (viol < 0) break;
    const Eigen::VectorXd np = -p.G.row(viol).transpose();
    std::vector<double> uplus = u;
    uplus.push_back(0.0);
    bool added = false;
    while (!added) {
      if (++iter > max_iter) {
        limit = true;
        break;
      }
      const int q = static_cast<int>(active.size());
      Eigen::VectorXd z;
      Eigen::VectorXd r;
      if (q == 0) {
        z = Hinv * np;
      } else {
        Eigen::MatrixXd N(n, q);
        for (int k = 0; k < q; ++k) N.col(k) = -p.G.row(active[k]).transpose();
        const Eigen::MatrixXd HN = Hinv * N;
        const Eigen::MatrixXd M = N.transpose() * HN;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
        const Eigen::MatrixXd Nstar = lu.solve(HN.transpose());
        r = Nstar * np;
        z = Hinv * np - HN * r;
      }
      // Zero tests are relative: with q = n the step z vanishes only up to roundoff.
      const double zscale = (Hinv * np).norm();
      const double rscale = q > 0 ? std::max(1.0, r.cwiseAbs().maxCoeff()) : 1.0;
      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (int k = 0; k < q; ++k) {
        if (r(k) > 1e-12 * rscale) {
          const double ratio = uplus[static_cast<std::size_t>(k)] / r(k);
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      const double znp = z.dot(np);
      double t2 = std::numeric_limits<double>::infinity();
      // Full step length: the violated row becomes tight.
      if (z.norm() > 1e-10 * zscale && znp > 1e-14 * zscale * np.norm()) t2 = std::max(0.0, -slack(viol)) / znp;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        infeasible = true;
        break;
      }
      for (int k = 0; k < q; ++k) uplus[static_cast<std::size_t>(k)] -= t * r(k);
      uplus.back() += t;
      if (std::isfinite(t2)) sol.x += t * z;
      if (t2 <= t1) {
        active.push_back(viol);
        is_active[static_cast<std::size_t>(viol)] = 1;
        u = uplus;
        added = true;
      } else {
        is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
        active.erase(active.begin() + drop);
        uplus.erase(uplus.begin() + drop);
      }
    }
    if (infeasible || limit) break;
  }

  sol.iterations = iter;
  for (std::size_t k = 0; k < active.size(); ++k) sol.multipliers(active[k]) = u[k];
  const Eigen::VectorXd dual_mu = sol.multipliers;
  if (!infeasible && !limit) {
    Eigen::VectorXd px;
    Eigen::VectorXd pmu;
    if (polish(p, active, px, pmu)) {
      QPSolution trial = sol;
      trial.x = px;
      trial.multipliers = pmu;
      compute_residuals(p, trial);
      compute_residuals(p, sol);
      const double before = std::max({sol.primal_residual, sol.stationarity_residual, sol.complementarity_residual});
      const double after = std::max({trial.primal_residual, trial.stationarity_residual,
                                     trial.complementarity_residual});
      if (after <= before && (pmu.size() == 0 || pmu.minCoeff() >= -1e-12)) sol = trial;
    }
  }
  std::sort(active.begin(), active.end());
  sol.active_set = active;
  compute_residuals(p, sol);
  if (infeasible) {
    sol.status = QPStatus::Infeasible;
  } else if (limit) {
    sol.status = QPStatus::IterationLimit;
  } else {
    const bool kkt_ok = sol.primal_residual <= opts.kkt_tolerance &&
                        sol.stationarity_residual <= opts.kkt_tolerance &&
                        sol.complementarity_residual <= opts.kkt_tolerance;
    sol.status = kkt_ok ? QPStatus::Solved : QPStatus::IterationLimit;
    // Near-dependent rows can send the dual iterates off to infinity without an exact
    // zero step. Normalised multipliers with G^T y = 0 and c^T y < 0 certify infeasibility.
    if (!kkt_ok && m > 0 && inf_norm(dual_mu) > 0.0) {
      const Eigen::VectorXd y = dual_mu / inf_norm(dual_mu);
      const double gscale = std::max(1.0, p.G.cwiseAbs().maxCoeff());
      if (inf_norm(p.G.transpose() * y) <= 1e-10 * gscale && p.c.dot(y) < -1e-8 * std::max(1.0, inf_norm(p.c))) {
        sol.status = QPStatus::Infeasible;
      }
    }
  }
  return sol;
}

std::string qp_to_text(const QPProblem& p) {
  std::ostringstream os;
  const int n = p.num_vars();
  const int m = p.num_rows();
  os << "qp 1\n" << n << ' ' << m << '\n';
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) os << (j ? " " : "") << fmt_double(p.hessian(i, j));
    os << '\n';
  }
  for (int j = 0; j < n; ++j) os << (j ? " " : "") << fmt_double(p.linear(j));
  os << '\n';
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) os << fmt_double(p.G(i, j)) << ' ';
    os << fmt_double(p.c(i)) << '\n';
  }
  return os.str();
}

QPProblem qp_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  int version = 0;
  int n = 0;
  int m = 0;
  if (!(is >> tag >> version) || tag != "qp" || version != 1) {
    throw Error(ErrorCode::FormatMismatch, "not a qp v1 document");
  }
  if (!(is >> n >> m) || n < 1 || m < 0) throw Error(ErrorCode::FormatMismatch, "bad qp dimensions");
  QPProblem p{Eigen::MatrixXd(n, n), Eigen::VectorXd(n), Eigen::MatrixXd(m, n), Eigen::VectorXd(m)};
  auto read = [&](double& v) {
    if (!(is >> v)) throw Error(ErrorCode::FormatMismatch, "truncated qp document");
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) read(p.hessian(i, j));
  }
  for (int j = 0; j < n; ++j) read(p.linear(j));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) read(p.G(i, j));
    read(p.c(i));
  }
  return p;
}

CbfClfParams CbfClfParams::with_box(double v_max, double omega_max) {
  CbfClfParams params;
  params.input_A = Eigen::MatrixXd(4, 2);
  params.input_A << 1, 0, -1, 0, 0, 1, 0, -1;
  params.input_b = Eigen::VectorXd(4);
  params.input_b << v_max, v_max, omega_max, omega_max;
  return params;
}

QPProblem assemble_cbf_clf_qp(const ControlAffineEval& dyn, const CertificateEval& clf,
                              std::span<const CertificateEval> barriers, const CbfClfParams& params) {
  const int m = static_cast<int>(dyn.g.cols());
  if (params.H.rows() != m || params.H.cols() != m) {
    throw Error(ErrorCode::DomainError, "cost matrix H must be m x m");
  }
  if (params.input_A.size() > 0 && params.input_A.cols() != m) {
    throw Error(ErrorCode::DomainError, "input polytope has the wrong width");
  }
  const int input_rows = static_cast<int>(params.input_A.rows());
  const int rows = 1 + static_cast<int>(barriers.size()) + input_rows;
  QPProblem p;
  p.hessian = Eigen::MatrixXd::Zero(m + 1, m + 1);
  p.hessian.topLeftCorner(m, m) = params.H;
  p.hessian(m, m) = 2.0 * params.lambda;
  p.linear = Eigen::VectorXd::Zero(m + 1);
  p.G = Eigen::MatrixXd::Zero(rows, m + 1);
  p.c = Eigen::VectorXd::Zero(rows);

  const double lfv = clf.gradient.dot(dyn.f);
  p.G.row(0).head(m) = clf.gradient.transpose() * dyn.g;
  p.G(0, m) = -1.0;
  p.c(0) = -params.gamma_v * clf.value - lfv;

  int row = 1;
  for (const auto& b : barriers) {
    const Eigen::RowVectorXd lgh = b.gradient.transpose() * dyn.g;
    const double rhs = params.gamma_c * b.value + b.gradient.dot(dyn.f);
    if (lgh.norm() == 0.0 && rhs < 0.0) {
      throw Error(ErrorCode::DegenerateRow, "barrier row " + std::to_string(row - 1) +
                                                " has zero input gain and a violated constant side");
    }
    p.G.row(row).head(m) = -lgh;
    p.c(row) = rhs;
    ++row;
  }
  for (int i = 0; i < input_rows; ++i) {
    p.G.row(row).head(m) = params.input_A.row(i);
    p.c(row) = params.input_b(i);
    ++row;
  }
  return p;
}

}  // namespace cbfmeta

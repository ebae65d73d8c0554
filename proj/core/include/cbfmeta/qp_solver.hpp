#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cbfmeta {

/// minimize 1/2 x^T hessian x + linear^T x  subject to  G x <= c.
struct QPProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd G;
  Eigen::VectorXd c;

  int num_vars() const { return static_cast<int>(hessian.rows()); }
  int num_rows() const { return static_cast<int>(G.rows()); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(hessian * x) + linear.dot(x); }
};

enum class QPStatus { Solved, Infeasible, IterationLimit };

std::string to_string(QPStatus s);

struct QPSolution {
  QPStatus status = QPStatus::Infeasible;
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per row, zero for inactive rows
  std::vector<int> active_set;
  double objective = 0.0;
  // KKT residuals, each divided by the size of the terms it is built from:
  //   primal:          max(0, max_i (G x - c)_i) / max(1, |G x|, |c|)
  //   stationarity:    |H x + linear + G^T mu| / max(1, |H x|, |linear|, |G^T mu|)
  //   complementarity: max_i |mu_i (G x - c)_i| / max(1, |mu| max(1, |G x|, |c|))
  // with infinity norms throughout.
  double primal_residual = 0.0;
  double stationarity_residual = 0.0;
  double complementarity_residual = 0.0;
  int iterations = 0;
};

struct QPOptions {
  int max_iterations = 0;      // 0 means 100 * rows (at least 100)
  double kkt_tolerance = 1e-8;
};

/// Dual active-set method (Goldfarb-Idnani): starts from the unconstrained
/// minimiser, adds the most violated row, and drops rows whose multipliers
/// would turn negative. The final active set is polished with one KKT solve.
/// Requires an SPD hessian.
QPSolution solve_qp(const QPProblem& p, const QPOptions& opts = {});

/// Plain-text QP exchange format:
///   qp 1
///   <n> <m>
///   hessian rows (n lines), linear (1 line), then m lines "g_1 .. g_n c".
std::string qp_to_text(const QPProblem& p);
QPProblem qp_from_text(const std::string& text);

/// Control-affine dynamics evaluated at the current state.
struct ControlAffineEval {
  Eigen::VectorXd f;  // n
  Eigen::MatrixXd g;  // n x m
};

/// Scalar certificate (CLF or CBF) value with its state gradient.
struct CertificateEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // n
};

struct CbfClfParams {
  double gamma_c = 1.0;
  double gamma_v = 1.0;
  double lambda = 10.0;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd input_A;  // rows x m
  Eigen::VectorXd input_b;

  /// |v| <= v_max and |omega| <= omega_max as four rows.
  static CbfClfParams with_box(double v_max = 1.0, double omega_max = 2.0);
};

/// Builds the relaxed CBF-CLF QP over (u, eps):
///   CLF row:   LgV u - eps <= -gamma_v V - LfV
///   CBF rows:  -Lgh u      <=  gamma_c h + Lfh      (one per barrier)
///   input rows: A u <= b
/// Throws Error(DegenerateRow) if a barrier has Lgh = 0 while its constant
/// side is negative.
QPProblem assemble_cbf_clf_qp(const ControlAffineEval& dyn, const CertificateEval& clf,
                              std::span<const CertificateEval> barriers, const CbfClfParams& params);

}  // namespace cbfmeta

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace coxq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Per-dimension variances of the diagonal Gaussian target policy.
struct DiagCovariance {
  Vec diag;

  explicit DiagCovariance(Vec d) : diag(std::move(d)) {
    for (int i = 0; i < diag.size(); ++i) {
      if (!(diag[i] > 0.0))
        throw std::invalid_argument("DiagCovariance: entries must be strictly positive");
    }
  }

  static DiagCovariance identity(int n) { return DiagCovariance(Vec::Ones(n)); }

  int dim() const { return static_cast<int>(diag.size()); }
};

void check_finite(const Vec& v, const char* what);

/// Inner product induced by the policy covariance: sum_i a_i * sigma_i * b_i.
double sigma_inner(const Vec& a, const Vec& b, const DiagCovariance& sigma);

inline double sigma_norm2(const Vec& a, const DiagCovariance& sigma) {
  return sigma_inner(a, a, sigma);
}

/// Gram entries of the constraint pair (g_r, -g_c) plus correlations with the
/// raw direction g_raw.
struct GramScalars {
  double s_rr = 0, s_rc = 0, s_cc = 0;
  double v_r = 0, v_c = 0;

  double det() const { return s_rr * s_cc - s_rc * s_rc; }
};

GramScalars gram_scalars(const Vec& g_r, const Vec& g_c, const Vec& g_raw,
                         const DiagCovariance& sigma);

struct ConflictReport {
  double v_r = 0;  // <g_r, g_raw>_Sigma
  double v_c = 0;  // <-g_c, g_raw>_Sigma
  bool conflicting = false;
};

/// Flags an exploration gradient conflict: g_raw = g_r - lambda*g_c leaves the
/// cone where return improves and cost decreases to first order.
ConflictReport detect_conflict(const Vec& g_r, const Vec& g_c, const Vec& g_raw,
                               const DiagCovariance& sigma);

enum class ProjectionCase {
  InCone,
  OnlyReturnActive,
  OnlyCostActive,
  BothActive,
  ColinearHalfSpace,
  ColinearHyperplane,
  DegenerateZero,
};

const char* to_string(ProjectionCase c);

struct ConeProjection {
  Vec g_star;
  ProjectionCase case_id = ProjectionCase::InCone;
  double mu_r = 0;  // KKT multiplier of the return constraint
  double mu_c = 0;  // KKT multiplier of the cost constraint
};

/// Sigma-metric projection of g_raw = g_r - lambda*g_c onto
/// K = {u : <g_r,u>_S >= 0, <-g_c,u>_S >= 0}, solved by enumerating the KKT
/// active sets and keeping the feasible candidate with the smallest objective.
/// Near-colinear constraint normals fall through to the half-space /
/// hyperplane branches; a vanishing constraint normal is dropped from K.
ConeProjection project_mgda(const Vec& g_r, const Vec& g_c, double lambda,
                            const DiagCovariance& sigma);

}  // namespace coxq

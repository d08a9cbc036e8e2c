#include "coxq/sigma_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coxq {

namespace {

constexpr double kDroppedNormalNorm = 1e-12;   // ||g||_Sigma below this drops the constraint
constexpr double kColinearRelDet = 1e-10;      // det <= rel * s_rr * s_cc => colinear
constexpr double kFeasRelTol = 1e-9;

}  // namespace

void check_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

double sigma_inner(const Vec& a, const Vec& b, const DiagCovariance& sigma) {
  if (a.size() != b.size() || a.size() != sigma.diag.size())
    throw std::invalid_argument("sigma_inner: dimension mismatch");
  return (a.array() * sigma.diag.array() * b.array()).sum();
}

GramScalars gram_scalars(const Vec& g_r, const Vec& g_c, const Vec& g_raw,
                         const DiagCovariance& sigma) {
  // Appendix-convention pair: g_1 = g_r, g_2 = -g_c.
  GramScalars g;
  g.s_rr = sigma_inner(g_r, g_r, sigma);
  g.s_cc = sigma_inner(g_c, g_c, sigma);
  g.s_rc = sigma_inner(g_r, -g_c, sigma);
  g.v_r = sigma_inner(g_r, g_raw, sigma);
  g.v_c = sigma_inner(-g_c, g_raw, sigma);
  return g;
}

ConflictReport detect_conflict(const Vec& g_r, const Vec& g_c, const Vec& g_raw,
                               const DiagCovariance& sigma) {
  ConflictReport rep;
  rep.v_r = sigma_inner(g_r, g_raw, sigma);
  rep.v_c = sigma_inner(-g_c, g_raw, sigma);
  rep.conflicting = (rep.v_r < 0.0) || (rep.v_c < 0.0);
  return rep;
}

const char* to_string(ProjectionCase c) {
  switch (c) {
    case ProjectionCase::InCone: return "InCone";
    case ProjectionCase::OnlyReturnActive: return "OnlyReturnActive";
    case ProjectionCase::OnlyCostActive: return "OnlyCostActive";
    case ProjectionCase::BothActive: return "BothActive";
    case ProjectionCase::ColinearHalfSpace: return "ColinearHalfSpace";
    case ProjectionCase::ColinearHyperplane: return "ColinearHyperplane";
    case ProjectionCase::DegenerateZero: return "DegenerateZero";
  }
  return "?";
}

ConeProjection project_mgda(const Vec& g_r, const Vec& g_c, double lambda,
                            const DiagCovariance& sigma) {
  check_finite(g_r, "project_mgda g_r");
  check_finite(g_c, "project_mgda g_c");
  if (lambda < 0.0) throw std::invalid_argument("project_mgda: lambda must be >= 0");

  const Vec g1 = g_r;        // return constraint normal
  const Vec g2 = -g_c;       // cost constraint normal
  const Vec g_raw = g_r - lambda * g_c;

  ConeProjection out;
  out.g_star = g_raw;

  if (std::sqrt(sigma_norm2(g_raw, sigma)) < kDroppedNormalNorm) {
    out.g_star = Vec::Zero(g_raw.size());
    out.case_id = ProjectionCase::DegenerateZero;
    return out;
  }

  const double n1 = std::sqrt(sigma_norm2(g1, sigma));
  const double n2 = std::sqrt(sigma_norm2(g2, sigma));
  const bool has1 = n1 >= kDroppedNormalNorm;
  const bool has2 = n2 >= kDroppedNormalNorm;

  const double s11 = sigma_inner(g1, g1, sigma);
  const double s22 = sigma_inner(g2, g2, sigma);
  const double s12 = sigma_inner(g1, g2, sigma);
  const double v1 = sigma_inner(g1, g_raw, sigma);
  const double v2 = sigma_inner(g2, g_raw, sigma);

  if (!has1 && !has2) {
    out.case_id = ProjectionCase::InCone;  // vacuous cone
    return out;
  }

  // g_raw already feasible: return it untouched (idempotence).
  if ((!has1 || v1 >= 0.0) && (!has2 || v2 >= 0.0)) {
    out.case_id = ProjectionCase::InCone;
    return out;
  }

  if (has1 && !has2) {
    const double mu = std::max(0.0, -v1 / s11);
    out.g_star = g_raw + mu * g1;
    out.mu_r = mu;
    out.case_id = ProjectionCase::OnlyReturnActive;
    return out;
  }
  if (!has1 && has2) {
    const double mu = std::max(0.0, -v2 / s22);
    out.g_star = g_raw + mu * g2;
    out.mu_c = mu;
    out.case_id = ProjectionCase::OnlyCostActive;
    return out;
  }

  const double det = s11 * s22 - s12 * s12;
  if (det <= kColinearRelDet * s11 * s22) {
    // g1 = alpha * g2 up to tolerance; sign of alpha = sign of s12.
    if (s12 > 0.0) {
      // Same half-space twice.
      const double mu = std::max(0.0, -v1 / s11);
      out.g_star = g_raw + mu * g1;
      out.mu_r = mu;
      out.case_id = ProjectionCase::ColinearHalfSpace;
    } else {
      // Opposite normals: K degenerates to the hyperplane <g1,u>_S = 0.
      out.g_star = g_raw - (v1 / s11) * g1;
      out.mu_r = std::max(0.0, -v1 / s11);
      out.mu_c = std::max(0.0, v1 / s11 * (n1 / n2));
      out.case_id = ProjectionCase::ColinearHyperplane;
    }
    return out;
  }

  // Enumerate the three non-trivial active sets and keep the feasible
  // candidate with smallest Sigma-distance to g_raw.
  struct Candidate {
    Vec u;
    double mu1, mu2;
    ProjectionCase case_id;
    double obj;
    bool feasible;
  };

  const double scale = std::max({std::abs(s11), std::abs(s22), std::abs(s12),
                                 std::abs(v1), std::abs(v2)});
  const double ftol = kFeasRelTol * std::max(scale, 1.0);

  auto make = [&](double mu1, double mu2, ProjectionCase c) {
    Candidate cand;
    cand.mu1 = mu1;
    cand.mu2 = mu2;
    cand.case_id = c;
    cand.u = g_raw + mu1 * g1 + mu2 * g2;
    const double r1 = v1 + mu1 * s11 + mu2 * s12;  // <g1, u>_S
    const double r2 = v2 + mu1 * s12 + mu2 * s22;  // <g2, u>_S
    cand.feasible = mu1 >= -ftol && mu2 >= -ftol && r1 >= -ftol && r2 >= -ftol;
    cand.obj = sigma_norm2(cand.u - g_raw, sigma);
    return cand;
  };

  Candidate best;
  best.feasible = false;
  best.obj = std::numeric_limits<double>::infinity();

  const Candidate cands[] = {
      make(-v1 / s11, 0.0, ProjectionCase::OnlyReturnActive),
      make(0.0, -v2 / s22, ProjectionCase::OnlyCostActive),
      make((-s22 * v1 + s12 * v2) / det, (s12 * v1 - s11 * v2) / det,
           ProjectionCase::BothActive),
  };
  for (const Candidate& c : cands) {
    if (c.feasible && c.obj < best.obj) best = c;
  }

  if (!best.feasible) {
    // Should not happen for a nonempty cone; fall back to the origin of K.
    out.g_star = Vec::Zero(g_raw.size());
    out.case_id = ProjectionCase::DegenerateZero;
    return out;
  }

  out.g_star = best.u;
  out.mu_r = std::max(0.0, best.mu1);
  out.mu_c = std::max(0.0, best.mu2);
  out.case_id = best.case_id;
  return out;
}

}  // namespace coxq

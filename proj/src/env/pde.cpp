#include "dtc/env/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dtc::env {

std::string to_string(PdeKind kind) { return kind == PdeKind::kBurgers ? "burgers" : "cdr"; }

PdeKind pde_kind_from_string(const std::string& name) {
  if (name == "burgers") return PdeKind::kBurgers;
  if (name == "cdr") return PdeKind::kCdr;
  throw ContractViolation("unknown PDE kind '" + name + "' (expected burgers or cdr)");
}

void PdeSpec::validate() const {
  require(std::isfinite(nu) && nu > 0.0, "PdeSpec: nu must be > 0");
  require(std::isfinite(L) && L > 0.0, "PdeSpec: L must be > 0");
  require(std::isfinite(phi) && phi > 0.0 && phi <= L, "PdeSpec: phi must lie in (0, L]");
  require(std::isfinite(c) && std::isfinite(zeta), "PdeSpec: c and zeta must be finite");
  require(n_s >= 3, "PdeSpec: n_s must be >= 3");
  require(n_a >= 1, "PdeSpec: n_a must be >= 1");
  require(n_o >= 1 && n_o <= n_s, "PdeSpec: n_o must lie in [1, n_s]");
  require(std::isfinite(sample_time) && sample_time > 0.0, "PdeSpec: sample_time must be > 0");
  require(process_noise_cov >= 0.0 && sensor_noise_cov >= 0.0, "PdeSpec: noise covariances must be >= 0");
  require(n_steps >= 1, "PdeSpec: n_steps must be >= 1");
  require(target_field.size() == n_s, "PdeSpec: target_field must have length n_s");
  require(target_field.allFinite(), "PdeSpec: target_field must be finite");
  require(divergence_bound > 0.0, "PdeSpec: divergence_bound must be > 0");
}

Vec grid_points(int n_s, double L) {
  Vec x(n_s);
  for (int i = 0; i < n_s; ++i) x[i] = L * i / n_s;
  return x;
}

Vec burgers_target(int n_s, double L) {
  const Vec x = grid_points(n_s, L);
  return x.unaryExpr([L](double xi) { return -0.1 * std::cos(2.0 * std::numbers::pi * xi / L); });
}

Vec cdr_target(int n_s, double L) {
  const Vec x = grid_points(n_s, L);
  return x.unaryExpr([L](double xi) { return 0.5 - 0.5 / std::cosh(20.0 * xi - 10.0 * L); });
}

PdeSpec burgers_spec(double nu, double phi) {
  PdeSpec s;
  s.kind = PdeKind::kBurgers;
  s.nu = nu;
  s.phi = phi;
  s.sample_time = 0.05;
  s.target_field = burgers_target(s.n_s, s.L);
  return s;
}

PdeSpec cdr_spec(double nu, double c, double zeta, double phi) {
  PdeSpec s;
  s.kind = PdeKind::kCdr;
  s.nu = nu;
  s.c = c;
  s.zeta = zeta;
  s.phi = phi;
  s.sample_time = 0.1;
  s.target_field = cdr_target(s.n_s, s.L);
  return s;
}

Mat make_actuation_matrix(int n_s, int n_a, double phi, double L) {
  require(n_s >= 1 && n_a >= 1, "make_actuation_matrix: n_s and n_a must be >= 1");
  require(phi > 0.0 && phi <= L, "make_actuation_matrix: phi must lie in (0, L]");
  const double dx = L / n_s;
  const int width = std::clamp(static_cast<int>(std::lround(phi / dx)), 1, n_s);
  Mat phi_mat = Mat::Zero(n_s, n_a);
  for (int j = 0; j < n_a; ++j) {
    const double center = (j + 0.5) * L / n_a / dx;
    const long start = std::lround(center - 0.5 * (width - 1));
    for (int k = 0; k < width; ++k) {
      const long idx = ((start + k) % n_s + n_s) % n_s;
      phi_mat(idx, j) = 1.0;
    }
  }
  return phi_mat;
}

std::vector<int> sensor_indices(int n_s, int n_o) {
  require(n_o >= 1 && n_o <= n_s, "sensor_indices: need 1 <= n_o <= n_s");
  std::vector<int> idx(n_o);
  for (int i = 0; i < n_o; ++i) idx[i] = static_cast<int>((static_cast<long>(i) * n_s) / n_o);
  return idx;
}

Vec observe_field(const Vec& u, const PdeSpec& spec, Rng& rng) {
  const auto idx = sensor_indices(spec.n_s, spec.n_o);
  const double sd = std::sqrt(spec.sensor_noise_cov);
  Vec o(spec.n_o);
  for (int i = 0; i < spec.n_o; ++i) o[i] = u[idx[i]] + sd * rng.normal();
  return o;
}

int pde_substeps(const Vec& u, const PdeSpec& spec) {
  const double speed = std::max({u.cwiseAbs().maxCoeff(), std::abs(spec.c), 1.0});
  const double dt_max = 0.2 * spec.dx() / speed;
  return std::max(1, static_cast<int>(std::ceil(spec.sample_time / dt_max - 1e-12)));
}

Vec solve_periodic_tridiagonal(double diag, double off, const Vec& rhs) {
  // Sherman-Morrison reduction of the cyclic system to two tridiagonal solves.
  const Eigen::Index n = rhs.size();
  require(n >= 3, "solve_periodic_tridiagonal: need at least 3 unknowns");
  const double gamma = -diag;
  Vec b = Vec::Constant(n, diag);
  b[0] = diag - gamma;
  b[n - 1] = diag - off * off / gamma;

  // Thomas algorithm on (off, b, off); the factorization is shared by both solves.
  Vec cp(n), denom(n);
  denom[0] = b[0];
  cp[0] = off / denom[0];
  for (Eigen::Index i = 1; i < n; ++i) {
    denom[i] = b[i] - off * cp[i - 1];
    cp[i] = off / denom[i];
  }
  auto thomas = [&](const Vec& d) {
    Vec x(n);
    x[0] = d[0] / denom[0];
    for (Eigen::Index i = 1; i < n; ++i) x[i] = (d[i] - off * x[i - 1]) / denom[i];
    for (Eigen::Index i = n - 2; i >= 0; --i) x[i] -= cp[i] * x[i + 1];
    return x;
  };

  const Vec x = thomas(rhs);
  Vec u = Vec::Zero(n);
  u[0] = gamma;
  u[n - 1] = off;
  const Vec z = thomas(u);
  const double fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + z[0] + off * z[n - 1] / gamma);
  return x - fact * z;
}

namespace {

constexpr int kMaxSubsteps = 100000;
constexpr int kMaxMidpointIterations = 200;

// Flux-form convection term evaluated at w; Burgers uses the
// energy-conserving flux (w_i^2 + w_i w_{i+1} + w_{i+1}^2) / 6.
void convection(const Vec& w, const PdeSpec& spec, Vec& out) {
  const Eigen::Index n = w.size();
  const double inv_dx = 1.0 / spec.dx();
  if (spec.kind == PdeKind::kBurgers) {
    auto flux = [&](Eigen::Index i) {
      const double a = w[i], b = w[(i + 1) % n];
      return (a * a + a * b + b * b) / 6.0;
    };
    double left = flux(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double right = flux(i);
      out[i] = (right - left) * inv_dx;
      left = right;
    }
  } else {
    const double k = 0.5 * spec.c * inv_dx;
    for (Eigen::Index i = 0; i < n; ++i) out[i] = k * (w[(i + 1) % n] - w[(i + n - 1) % n]);
  }
}

// Implicit midpoint u* = u - dt C((u + u*) / 2) by fixed-point iteration.
void convect_midpoint(Vec& u, double dt, const PdeSpec& spec, int step) {
  const double tol = 1e-14 * std::max(1.0, u.cwiseAbs().maxCoeff());
  Vec v = u, w(u.size()), cw(u.size());
  for (int it = 0; it < kMaxMidpointIterations; ++it) {
    w = 0.5 * (u + v);
    convection(w, spec, cw);
    Vec next = u - dt * cw;
    const double change = (next - v).cwiseAbs().maxCoeff();
    v.swap(next);
    if (!(change > tol)) {
      if (!std::isfinite(change)) break;
      u.swap(v);
      return;
    }
  }
  throw DivergenceFault("convection substep did not converge", step);
}

}  // namespace

int advance_field(Vec& u, const Vec& a, const PdeSpec& spec, const Mat& actuation) {
  return advance_field_at(u, a, spec, actuation, -1);
}

int advance_field_at(Vec& u, const Vec& a, const PdeSpec& spec, const Mat& actuation, int step) {
  if (!u.allFinite() || u.cwiseAbs().maxCoeff() > spec.divergence_bound)
    throw DivergenceFault("PDE field out of bounds", step);
  const int n_sub = pde_substeps(u, spec);
  if (n_sub > kMaxSubsteps) throw DivergenceFault("PDE substep budget exceeded", step);
  const double dt = spec.sample_time / n_sub;
  const double r = dt * spec.nu / (spec.dx() * spec.dx());
  const Vec forcing = actuation * a;
  for (int k = 0; k < n_sub; ++k) {
    convect_midpoint(u, dt, spec, step);
    if (spec.zeta != 0.0) u += (dt * spec.zeta) * u;
    u += dt * forcing;
    u = solve_periodic_tridiagonal(1.0 + 2.0 * r, -r, u);
    if (!u.allFinite() || u.cwiseAbs().maxCoeff() > spec.divergence_bound)
      throw DivergenceFault("PDE field out of bounds", step);
  }
  return n_sub;
}

}  // namespace dtc::env

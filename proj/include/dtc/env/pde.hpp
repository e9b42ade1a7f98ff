#pragma once

#include <string>
#include <vector>

#include "dtc/common.hpp"

namespace dtc::env {

enum class PdeKind { kBurgers, kCdr };

std::string to_string(PdeKind kind);
PdeKind pde_kind_from_string(const std::string& name);

/// Periodic 1-D PDE task on [0, L):
///   Burgers  u_t = nu u_xx - u u_x + Phi a
///   CDR      u_t = nu u_xx - c u_x + zeta u + Phi a
struct PdeSpec {
  PdeKind kind = PdeKind::kBurgers;
  double nu = 1e-2;
  double c = 0.0;
  double zeta = 0.0;
  double phi = 0.1;
  double L = 1.0;
  int n_s = 64;
  int n_a = 5;
  int n_o = 10;
  double sample_time = 0.05;
  double process_noise_cov = 0.0;
  double sensor_noise_cov = 0.25;
  int n_steps = 100;
  Vec target_field;
  /// |u|_inf above this is reported as a divergence fault.
  double divergence_bound = 1e6;

  double dx() const { return L / n_s; }
  void validate() const;
};

/// Grid coordinates x_i = i L / n_s.
Vec grid_points(int n_s, double L);
/// -0.1 cos(2 pi x / L)
Vec burgers_target(int n_s, double L);
/// 0.5 - 0.5 sech(20 x - 10 L)
Vec cdr_target(int n_s, double L);

/// Burgers defaults (64 cells, 5 actuators, 10 sensors, 100 steps of 0.05).
PdeSpec burgers_spec(double nu, double phi);
/// CDR defaults (64 cells, 5 actuators, 10 sensors, 100 steps of 0.1).
PdeSpec cdr_spec(double nu, double c, double zeta, double phi);

/// Column j is the indicator of the round(phi / dx) cells whose centroid is
/// nearest to x_j = (j + 1/2) L / n_a, wrapped periodically.
Mat make_actuation_matrix(int n_s, int n_a, double phi, double L);

/// floor(i n_s / n_o) for i = 0..n_o-1.
std::vector<int> sensor_indices(int n_s, int n_o);

/// Field samples at the sensor indices plus N(0, sensor_noise_cov) noise.
Vec observe_field(const Vec& u, const PdeSpec& spec, Rng& rng);

/// Number of internal substeps for one environment step from field `u`:
/// ceil(sample_time / dt_max), dt_max = 0.2 dx / max(|u|_inf, |c|, 1).
int pde_substeps(const Vec& u, const PdeSpec& spec);

/// Advances `u` by one sample time without process noise. Each substep applies
/// energy-conserving implicit-midpoint convection, explicit reaction and
/// actuation, then backward-Euler diffusion. Returns the substep count used.
int advance_field(Vec& u, const Vec& a, const PdeSpec& spec, const Mat& actuation);
/// As advance_field; faults carry `step` as the environment step index.
int advance_field_at(Vec& u, const Vec& a, const PdeSpec& spec, const Mat& actuation, int step);

/// Solves the periodic constant-coefficient system
///   diag * x_i + off * (x_{i-1} + x_{i+1}) = rhs_i   (indices mod n).
Vec solve_periodic_tridiagonal(double diag, double off, const Vec& rhs);

}  // namespace dtc::env

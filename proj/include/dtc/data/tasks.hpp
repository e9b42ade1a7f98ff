#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dtc/env/task.hpp"

namespace dtc::data {

/// Frobenius norms of the dynamics and input perturbations.
struct PerturbationSizes {
  double delta_a = 0.0;
  double delta_b = 0.0;
};

/// Training / in-distribution sizes for he1, ac4, cm3; nullopt for other names.
std::optional<PerturbationSizes> in_dist_sizes(const std::string& nominal_id);
std::optional<PerturbationSizes> out_dist_sizes(const std::string& nominal_id);

/// A + dA, B2 + dB with i.i.d. standard Gaussian entries rescaled to the given
/// Frobenius norms. A zero size leaves that matrix untouched.
env::TaskSpec perturb_linear_task(const env::TaskSpec& nominal, PerturbationSizes sizes, std::uint64_t seed);

/// Rebuilds a perturbed task from its provenance and the nominal.
env::TaskSpec reconstruct_task(const env::TaskSpec& nominal, const env::Provenance& provenance);

enum class SampleMode { kTrain, kInDist, kOutDist };

std::string to_string(SampleMode mode);

/// Number of fixed out-of-distribution parameter sets per PDE kind.
constexpr int kPdeOutDistCount = 9;

/// Burgers: nu log-uniform on [1e-3, 1e-1], phi uniform on [0.09, 0.16]; out of
/// distribution the 3x3 grid nu in {1e-3, 5.5e-4, 1e-4} x phi in {0.09, 0.08,
/// 0.07}, row-major (index = 3 * nu_index + phi_index).
/// CDR: nu log-uniform on [1e-3, 1e-1], c on [0, 0.2], zeta on [-0.1, 0.1], phi on
/// [0.08, 0.12]; out of distribution a fixed list of 9 tuples.
/// `index` is only used (and checked) in kOutDist mode.
env::TaskSpec sample_pde_task(env::PdeKind kind, SampleMode mode, int index, std::uint64_t seed);

struct TaskSuite {
  std::vector<env::TaskSpec> train;
  std::vector<env::TaskSpec> in_dist;
  std::vector<env::TaskSpec> out_dist;
};

/// Training and test tasks around a nominal. Linear nominals are perturbed
/// with the in-distribution sizes (train, in_dist) and the out-of-distribution
/// sizes (out_dist); `sizes_override` replaces both when the nominal has no
/// tabulated sizes. PDE nominals use sample_pde_task; n_out is capped at 9.
TaskSuite build_task_suite(const env::TaskSpec& nominal, int n_train, int n_in, int n_out, std::uint64_t seed,
                           std::optional<std::pair<PerturbationSizes, PerturbationSizes>> sizes_override = {});

}  // namespace dtc::data

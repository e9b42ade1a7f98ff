#include "dtc/data/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "dtc/env/io.hpp"

namespace dtc::data {
namespace {

struct SizeRow {
  const char* name;
  PerturbationSizes in, out;
};

constexpr std::array<SizeRow, 3> kSizes{{
    {"he1", {0.05, 0.05}, {0.15, 0.15}},
    {"ac4", {0.1, 0.1}, {0.2, 0.2}},
    {"cm3", {0.1, 0.1}, {0.15, 0.15}},
}};

struct CdrTuple {
  double nu, c, zeta, phi;
};

constexpr std::array<CdrTuple, kPdeOutDistCount> kCdrOut{{
    {5e-4, 0.25, 0.15, 0.1},
    {5e-4, 0.25, 0.2, 0.1},
    {5e-4, 0.3, 0.15, 0.1},
    {5e-4, 0.3, 0.2, 0.1},
    {1e-4, 0.25, 0.15, 0.1},
    {1e-4, 0.25, 0.2, 0.1},
    {1e-4, 0.3, 0.15, 0.1},
    {1e-4, 0.3, 0.2, 0.1},
    {1e-4, 0.3, 0.2, 0.08},
}};

constexpr std::array<double, 3> kBurgersOutNu{1e-3, 5.5e-4, 1e-4};
constexpr std::array<double, 3> kBurgersOutPhi{0.09, 0.08, 0.07};

Mat gaussian_with_norm(Rng& rng, Eigen::Index r, Eigen::Index c, double size) {
  Mat d(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) d(i, j) = rng.normal();
  if (size == 0.0) return Mat::Zero(r, c);
  return d * (size / d.norm());
}

std::string hex_seed(std::uint64_t seed) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(seed));
  return buf;
}

std::string indexed(const std::string& base, const char* part, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return base + "-" + part + "-" + buf;
}

}  // namespace

std::optional<PerturbationSizes> in_dist_sizes(const std::string& nominal_id) {
  for (const auto& row : kSizes)
    if (nominal_id == row.name) return row.in;
  return std::nullopt;
}

std::optional<PerturbationSizes> out_dist_sizes(const std::string& nominal_id) {
  for (const auto& row : kSizes)
    if (nominal_id == row.name) return row.out;
  return std::nullopt;
}

env::TaskSpec perturb_linear_task(const env::TaskSpec& nominal, PerturbationSizes sizes, std::uint64_t seed) {
  require(nominal.is_linear(), "perturb_linear_task: nominal '" + nominal.task_id + "' is not linear");
  require(sizes.delta_a >= 0.0 && sizes.delta_b >= 0.0, "perturb_linear_task: sizes must be non-negative");
  env::TaskSpec out = nominal;
  auto& sys = out.linear();
  Rng rng(seed);
  // Both draws happen regardless of the sizes so each matrix's noise is tied to the seed alone.
  const Mat dA = gaussian_with_norm(rng, sys.A.rows(), sys.A.cols(), sizes.delta_a);
  const Mat dB = gaussian_with_norm(rng, sys.B2.rows(), sys.B2.cols(), sizes.delta_b);
  sys.A += dA;
  sys.B2 += dB;
  out.task_id = nominal.task_id + "-pert-" + hex_seed(seed);
  out.provenance = env::Perturbed{nominal.task_id, sizes.delta_a, sizes.delta_b, seed};
  return out;
}

env::TaskSpec reconstruct_task(const env::TaskSpec& nominal, const env::Provenance& provenance) {
  if (std::holds_alternative<env::Nominal>(provenance)) return nominal;
  if (const auto* p = std::get_if<env::Perturbed>(&provenance)) {
    require(p->nominal_id == nominal.task_id,
            "reconstruct_task: provenance names nominal '" + p->nominal_id + "', got '" + nominal.task_id + "'");
    return perturb_linear_task(nominal, {p->delta_a_norm, p->delta_b_norm}, p->seed);
  }
  const auto& s = std::get<env::Sampled>(provenance);
  require(!nominal.is_linear(), "reconstruct_task: sampled provenance needs a PDE nominal");
  SampleMode mode = SampleMode::kTrain;
  int index = 0;
  if (s.mode == "in_dist") {
    mode = SampleMode::kInDist;
  } else if (s.mode.rfind("out_dist:", 0) == 0) {
    mode = SampleMode::kOutDist;
    index = std::stoi(s.mode.substr(9));
  } else {
    require(s.mode == "train", "reconstruct_task: unknown sampling mode '" + s.mode + "'");
  }
  return sample_pde_task(nominal.pde().kind, mode, index, s.seed);
}

std::string to_string(SampleMode mode) {
  switch (mode) {
    case SampleMode::kTrain: return "train";
    case SampleMode::kInDist: return "in_dist";
    case SampleMode::kOutDist: return "out_dist";
  }
  return "?";
}

env::TaskSpec sample_pde_task(env::PdeKind kind, SampleMode mode, int index, std::uint64_t seed) {
  env::Sampled prov;
  prov.seed = seed;
  prov.mode = to_string(mode);
  env::PdeSpec spec;
  if (mode == SampleMode::kOutDist) {
    require(index >= 0 && index < kPdeOutDistCount,
            "sample_pde_task: out-of-distribution index " + std::to_string(index) + " outside [0, 9)");
    prov.mode += ":" + std::to_string(index);
    if (kind == env::PdeKind::kBurgers) {
      spec = env::burgers_spec(kBurgersOutNu[index / 3], kBurgersOutPhi[index % 3]);
    } else {
      const auto& t = kCdrOut[index];
      spec = env::cdr_spec(t.nu, t.c, t.zeta, t.phi);
    }
  } else {
    Rng rng(seed);
    const double nu = std::pow(10.0, rng.uniform(-3.0, -1.0));
    if (kind == env::PdeKind::kBurgers) {
      const double phi = rng.uniform(0.09, 0.16);
      spec = env::burgers_spec(nu, phi);
    } else {
      const double c = rng.uniform(0.0, 0.2);
      const double zeta = rng.uniform(-0.1, 0.1);
      const double phi = rng.uniform(0.08, 0.12);
      spec = env::cdr_spec(nu, c, zeta, phi);
    }
  }
  prov.params = {{"nu", spec.nu}, {"phi", spec.phi}};
  if (kind == env::PdeKind::kCdr) prov.params = {{"nu", spec.nu}, {"c", spec.c}, {"zeta", spec.zeta}, {"phi", spec.phi}};
  env::TaskSpec task{env::to_string(kind) + "-" + prov.mode + "-" + hex_seed(seed), spec,
                     env::default_pde_reward(spec), prov};
  if (mode == SampleMode::kOutDist) task.task_id = env::to_string(kind) + "-out_dist-" + std::to_string(index);
  return task;
}

TaskSuite build_task_suite(const env::TaskSpec& nominal, int n_train, int n_in, int n_out, std::uint64_t seed,
                           std::optional<std::pair<PerturbationSizes, PerturbationSizes>> sizes_override) {
  require(n_train >= 0 && n_in >= 0 && n_out >= 0, "build_task_suite: counts must be non-negative");
  TaskSuite suite;
  // Stream layout: 0 = train, 1 = in_dist, 2 = out_dist; task i of a split uses sub-stream i.
  auto stream_seed = [&](std::uint64_t split, int i) { return derive_seed(derive_seed(seed, split), i); };
  if (nominal.is_linear()) {
    PerturbationSizes in, out;
    if (sizes_override) {
      std::tie(in, out) = *sizes_override;
    } else {
      const auto a = in_dist_sizes(nominal.task_id);
      const auto b = out_dist_sizes(nominal.task_id);
      if (!a || !b)
        throw ValidationError("no tabulated perturbation sizes for task '" + nominal.task_id +
                              "'; supply them explicitly");
      in = *a;
      out = *b;
    }
    auto fill = [&](std::vector<env::TaskSpec>& dst, int n, std::uint64_t split, PerturbationSizes sz,
                    const char* part) {
      for (int i = 0; i < n; ++i) {
        auto t = perturb_linear_task(nominal, sz, stream_seed(split, i));
        t.task_id = indexed(nominal.task_id, part, i);
        dst.push_back(std::move(t));
      }
    };
    fill(suite.train, n_train, 0, in, "train");
    fill(suite.in_dist, n_in, 1, in, "in");
    fill(suite.out_dist, n_out, 2, out, "out");
    return suite;
  }
  const auto kind = nominal.pde().kind;
  for (int i = 0; i < n_train; ++i) {
    auto t = sample_pde_task(kind, SampleMode::kTrain, 0, stream_seed(0, i));
    t.task_id = indexed(nominal.task_id, "train", i);
    suite.train.push_back(std::move(t));
  }
  for (int i = 0; i < n_in; ++i) {
    auto t = sample_pde_task(kind, SampleMode::kInDist, 0, stream_seed(1, i));
    t.task_id = indexed(nominal.task_id, "in", i);
    suite.in_dist.push_back(std::move(t));
  }
  for (int i = 0; i < std::min(n_out, kPdeOutDistCount); ++i) {
    auto t = sample_pde_task(kind, SampleMode::kOutDist, i, 0);
    t.task_id = indexed(nominal.task_id, "out", i);
    suite.out_dist.push_back(std::move(t));
  }
  return suite;
}

}  // namespace dtc::data

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "dtc/control/static_gain.hpp"
#include "dtc/data/dataset.hpp"
#include "dtc/data/tasks.hpp"
#include "dtc/data/windows.hpp"
#include "dtc/env/io.hpp"

using namespace dtc;
using namespace dtc::data;
namespace fs = std::filesystem;

namespace {

// Sup distance between the empirical CDF of `x` and the uniform CDF on [lo, hi].
double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = (x[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

Trajectory random_traj(Rng& rng, int len, int n_o, int n_a) {
  Trajectory t;
  t.task_id = "test";
  t.obs = testutil::random_matrix(rng, len, n_o);
  t.act = testutil::random_matrix(rng, len, n_a);
  t.rew = rng.normal_vector(len);
  return t;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dtc_test_data";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Returns a NaN action with probability `p`, otherwise zero.
class FlakyPolicy final : public env::Policy {
 public:
  FlakyPolicy(int n_a, double p) : n_a_(n_a), p_(p) {}
  void reset(std::uint64_t seed) override {
    rng_ = Rng(seed);
    broken_ = rng_.uniform() < p_;
  }
  Vec act(const Vec&) override { return Vec::Constant(n_a_, broken_ ? NAN : 0.0); }
  std::unique_ptr<env::Policy> clone() const override { return std::make_unique<FlakyPolicy>(*this); }
  std::string name() const override { return "flaky"; }

 private:
  int n_a_;
  double p_;
  bool broken_ = false;
  Rng rng_;
};

}  // namespace

TEST_CASE("reward_to_go: hand examples") {
  Vec r(3);
  r << 1, 1, 1;
  const Vec g = reward_to_go(r);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 2.0);
  CHECK(g[2] == 1.0);
  Vec one(1);
  one << -4.25;
  CHECK(reward_to_go(one)[0] == -4.25);
  CHECK_THROWS_AS(reward_to_go(Vec()), ContractViolation);
}

TEST_CASE("reward_to_go: brute-force suffix sums, linearity, first entry is the return") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec r = rng.normal_vector(50, 3.0);
    const Vec g = reward_to_go(r);
    REQUIRE(g.size() == 50);
    for (int t = 0; t < 50; ++t) {
      double s = 0.0;
      for (int u = t; u < 50; ++u) s += r[u];
      CHECK(std::abs(g[t] - s) <= 1e-12);
    }
    CHECK(std::abs(g[0] - r.sum()) <= 1e-12);
    const double alpha = rng.normal();
    CHECK((reward_to_go(alpha * r) - alpha * g).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("make_windows: counts and padding") {
  Rng rng(5);
  const Trajectory tr = random_traj(rng, 50, 3, 2);
  const auto ws = make_windows(tr, 20);
  REQUIRE(ws.size() == 50);
  CHECK(ws[0].K() == 20);
  CHECK(20 - ws[0].n_real() == 19);
  for (std::size_t t = 0; t < ws.size(); ++t) {
    const auto& w = ws[t];
    for (int k = 0; k < 20; ++k) CHECK(w.timesteps[k] == k);
    if (t >= 19) CHECK(w.n_real() == 20);
    // Padding is zero-filled and contiguous on the left.
    const int pad = 20 - w.n_real();
    CHECK(w.n_real() >= 1);
    for (int k = 0; k < 20; ++k) {
      CHECK(w.mask[k] == (k >= pad));
      if (k < pad) {
        CHECK(w.rtg[k] == 0.0);
        CHECK(w.obs.row(k).isZero(0.0));
        CHECK(w.act.row(k).isZero(0.0));
      }
    }
  }
  CHECK_THROWS_AS(make_windows(tr, 0), ContractViolation);
}

TEST_CASE("make_windows: unpadded tails reconstruct the trajectory") {
  Rng rng(6);
  for (int K : {1, 3, 20, 60}) {
    const Trajectory tr = random_traj(rng, 50, 4, 1);
    const Vec rtg = reward_to_go(tr.rew);
    const auto ws = make_windows(tr, K);
    Trajectory rec;
    rec.obs.resize(50, 4);
    rec.act.resize(50, 1);
    Vec rec_rtg(50);
    std::vector<int> seen(50, 0);
    for (const auto& w : ws) {
      // The last real slot of each window is the step it ends at.
      rec.obs.row(w.end) = w.obs.row(K - 1);
      rec.act.row(w.end) = w.act.row(K - 1);
      rec_rtg[w.end] = w.rtg[K - 1];
      // Every real slot matches the source step it claims to hold.
      const int pad = K - w.n_real();
      for (int k = pad; k < K; ++k) {
        const int t = w.end - (K - 1 - k);
        ++seen[t];
        CHECK((w.obs.row(k) - tr.obs.row(t)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(w.rtg[k] - rtg[t]) <= 1e-12);
      }
    }
    CHECK((rec.obs - tr.obs).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((rec.act - tr.act).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((rec_rtg - rtg).cwiseAbs().maxCoeff() <= 1e-12);
    for (int t = 0; t < 50; ++t) CHECK(seen[t] == std::min(K, 50 - t));
  }
}

TEST_CASE("normalize_score: anchor endpoints and midpoint") {
  const NormalizationAnchors a(-10.0, -30.0);
  CHECK(std::abs(normalize_score(-10.0, a) - 1.0) <= 1e-12);
  CHECK(std::abs(normalize_score(-30.0, a) - 0.0) <= 1e-12);
  CHECK(std::abs(normalize_score(-20.0, a) - 0.5) <= 1e-12);
  CHECK(normalize_score(0.0, a) > 1.0);
  CHECK(normalize_score(-40.0, a) < 0.0);
  CHECK_THROWS_AS(NormalizationAnchors(-30.0, -10.0), ValidationError);
  CHECK_THROWS_AS(NormalizationAnchors(1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(NormalizationAnchors(NAN, 1.0), ValidationError);
}

TEST_CASE("normalize_score: affine and order preserving") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const double lo = rng.normal(0, 10), hi = lo + std::abs(rng.normal(0, 5)) + 1e-3;
    const NormalizationAnchors a(hi, lo);
    const double j1 = rng.normal(0, 20), j2 = rng.normal(0, 20), w = rng.uniform();
    const double mix = normalize_score(w * j1 + (1 - w) * j2, a);
    CHECK(std::abs(mix - (w * normalize_score(j1, a) + (1 - w) * normalize_score(j2, a))) <= 1e-9);
    if (j1 > j2) CHECK(normalize_score(j1, a) > normalize_score(j2, a));
  }
}

TEST_CASE("cap_score clamps into the interval") {
  CHECK(cap_score(5.0, -1.0, 2.0) == 2.0);
  CHECK(cap_score(-3.0, -1.0, 2.0) == -1.0);
  CHECK(cap_score(0.7, -1.0, 2.0) == 0.7);
}

TEST_CASE("perturb_linear_task: zero sizes keep the nominal") {
  const auto he1 = env::builtin_task("he1");
  const auto t = perturb_linear_task(he1, {0.0, 0.0}, 11);
  CHECK(t.linear().A == he1.linear().A);
  CHECK(t.linear().B2 == he1.linear().B2);
  const auto* p = std::get_if<env::Perturbed>(&t.provenance);
  REQUIRE(p != nullptr);
  CHECK(p->nominal_id == "he1");
  CHECK(p->seed == 11);
}

TEST_CASE("perturb_linear_task: tabulated Frobenius sizes are exact") {
  struct Row {
    const char* name;
    bool out;
    double a, b;
  };
  for (const Row& r : {Row{"he1", false, 0.05, 0.05}, Row{"he1", true, 0.15, 0.15}, Row{"ac4", false, 0.1, 0.1},
                       Row{"ac4", true, 0.2, 0.2}, Row{"cm3", false, 0.1, 0.1}, Row{"cm3", true, 0.15, 0.15}}) {
    const auto nominal = env::builtin_task(r.name);
    const auto sizes = r.out ? out_dist_sizes(r.name) : in_dist_sizes(r.name);
    REQUIRE(sizes.has_value());
    CHECK(sizes->delta_a == r.a);
    CHECK(sizes->delta_b == r.b);
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      const auto t = perturb_linear_task(nominal, *sizes, seed);
      CHECK(std::abs((t.linear().A - nominal.linear().A).norm() - r.a) <= 1e-12);
      CHECK(std::abs((t.linear().B2 - nominal.linear().B2).norm() - r.b) <= 1e-12);
      const auto again = reconstruct_task(nominal, t.provenance);
      CHECK(again.linear().A == t.linear().A);
      CHECK(again.linear().B2 == t.linear().B2);
    }
  }
  CHECK_FALSE(in_dist_sizes("burgers").has_value());
  CHECK_THROWS_AS(perturb_linear_task(env::builtin_task("burgers"), {0.1, 0.1}, 1), ContractViolation);
}

TEST_CASE("perturb_linear_task: direction is rotation invariant in distribution") {
  // For a uniformly distributed direction, the projection onto any fixed unit
  // vector has the same law. Compare a coordinate axis with a random axis.
  const auto nominal = env::builtin_task("he1");
  const Mat A0 = nominal.linear().A;
  Rng rng(42);
  Vec u = rng.normal_vector(A0.size());
  u.normalize();
  std::vector<double> axis, rotated;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto t = perturb_linear_task(nominal, {1.0, 1.0}, derive_seed(7, i));
    const Mat d = t.linear().A - A0;
    const Eigen::Map<const Vec> v(d.data(), d.size());
    axis.push_back(v[3]);
    rotated.push_back(u.dot(v));
  }
  // 1% critical value of the two-sample statistic.
  CHECK(ks_two_sample(axis, rotated) < 1.628 * std::sqrt(2.0 / n));
}

TEST_CASE("sample_pde_task: out-of-distribution tables") {
  const auto cdr0 = sample_pde_task(env::PdeKind::kCdr, SampleMode::kOutDist, 0, 0);
  CHECK(cdr0.pde().nu == 5e-4);
  CHECK(cdr0.pde().c == 0.25);
  CHECK(cdr0.pde().zeta == 0.15);
  CHECK(cdr0.pde().phi == 0.1);
  const double expect[9][4] = {{5e-4, 0.25, 0.15, 0.1}, {5e-4, 0.25, 0.2, 0.1}, {5e-4, 0.3, 0.15, 0.1},
                               {5e-4, 0.3, 0.2, 0.1},   {1e-4, 0.25, 0.15, 0.1}, {1e-4, 0.25, 0.2, 0.1},
                               {1e-4, 0.3, 0.15, 0.1},  {1e-4, 0.3, 0.2, 0.1},  {1e-4, 0.3, 0.2, 0.08}};
  for (int i = 0; i < 9; ++i) {
    const auto t = sample_pde_task(env::PdeKind::kCdr, SampleMode::kOutDist, i, 123);
    CHECK(t.pde().nu == expect[i][0]);
    CHECK(t.pde().c == expect[i][1]);
    CHECK(t.pde().zeta == expect[i][2]);
    CHECK(t.pde().phi == expect[i][3]);
    CHECK(t.pde().process_noise_cov == 0.0);
    CHECK(t.pde().sensor_noise_cov == 0.25);
  }
  const auto b8 = sample_pde_task(env::PdeKind::kBurgers, SampleMode::kOutDist, 8, 0);
  CHECK(b8.pde().nu == 1e-4);
  CHECK(b8.pde().phi == 0.07);
  const auto b1 = sample_pde_task(env::PdeKind::kBurgers, SampleMode::kOutDist, 1, 0);
  CHECK(b1.pde().nu == 1e-3);
  CHECK(b1.pde().phi == 0.08);
  CHECK_THROWS_AS(sample_pde_task(env::PdeKind::kBurgers, SampleMode::kOutDist, 9, 0), ContractViolation);
  CHECK_THROWS_AS(sample_pde_task(env::PdeKind::kCdr, SampleMode::kOutDist, -1, 0), ContractViolation);
}

TEST_CASE("sample_pde_task: training draws lie in their ranges and reproduce") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto b = sample_pde_task(env::PdeKind::kBurgers, SampleMode::kTrain, 0, s);
    CHECK(b.pde().nu >= 1e-3);
    CHECK(b.pde().nu <= 1e-1);
    CHECK(b.pde().phi >= 0.09);
    CHECK(b.pde().phi <= 0.16);
    const auto c = sample_pde_task(env::PdeKind::kCdr, SampleMode::kInDist, 0, s);
    CHECK(c.pde().c >= 0.0);
    CHECK(c.pde().c <= 0.2);
    CHECK(c.pde().zeta >= -0.1);
    CHECK(c.pde().zeta <= 0.1);
    CHECK(c.pde().phi >= 0.08);
    CHECK(c.pde().phi <= 0.12);
    const auto again = reconstruct_task(env::builtin_task("cdr"), c.provenance);
    CHECK(again.pde().nu == c.pde().nu);
    CHECK(again.pde().zeta == c.pde().zeta);
  }
}

TEST_CASE("sample_pde_task: log10(nu) is uniform on [-3, -1]") {
  std::vector<double> x;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    x.push_back(std::log10(sample_pde_task(env::PdeKind::kBurgers, SampleMode::kTrain, 0, derive_seed(5, i)).pde().nu));
  CHECK(ks_uniform(x, -3.0, -1.0) < 1.628 / std::sqrt(double(n)));
}

TEST_CASE("build_task_suite: shapes, unique ids, sizes") {
  const auto suite = build_task_suite(env::builtin_task("he1"), 30, 9, 9, 17);
  CHECK(suite.train.size() == 30);
  CHECK(suite.in_dist.size() == 9);
  CHECK(suite.out_dist.size() == 9);
  std::vector<std::string> ids;
  for (const auto* v : {&suite.train, &suite.in_dist, &suite.out_dist})
    for (const auto& t : *v) ids.push_back(t.task_id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  const Mat A0 = env::builtin_task("he1").linear().A;
  CHECK(std::abs((suite.out_dist[3].linear().A - A0).norm() - 0.15) <= 1e-12);
  CHECK(std::abs((suite.train[3].linear().A - A0).norm() - 0.05) <= 1e-12);

  const auto pde = build_task_suite(env::builtin_task("cdr"), 4, 2, 12, 1);
  REQUIRE(pde.out_dist.size() == 9);
  CHECK(pde.out_dist[8].pde().phi == 0.08);
  CHECK_THROWS_AS(build_task_suite(testutil::linear_task(Mat::Identity(2, 2), Mat::Identity(2, 1),
                                                         Mat::Identity(1, 2), 0.01, 5),
                                   1, 1, 1, 1),
                  ValidationError);
}

TEST_CASE("rollout_collect: empty, constant observations, lengths") {
  const auto task = testutil::linear_task(Mat::Identity(3, 3), Mat::Identity(3, 1), Mat::Identity(3, 3), 0.0, 20);
  env::ZeroPolicy zero(1);
  CHECK(rollout_collect(task, zero, 0, 1).empty());
  CollectStats st;
  const auto trajs = rollout_collect(task, zero, 5, 1, &st);
  REQUIRE(trajs.size() == 5);
  CHECK(st.collected == 5);
  CHECK(st.discarded == 0);
  for (const auto& tr : trajs) {
    CHECK(tr.length() == 20);
    for (int t = 1; t < tr.length(); ++t) CHECK(tr.obs.row(t) == tr.obs.row(0));
  }
  CHECK(trajs[0].obs.row(0) != trajs[1].obs.row(0));
}

TEST_CASE("rollout_collect: diverging episodes are resampled and counted") {
  const auto task = testutil::linear_task(Mat::Identity(2, 2), Mat::Identity(2, 1), Mat::Identity(2, 2), 0.01, 10);
  FlakyPolicy flaky(1, 0.3);
  CollectStats st;
  const auto trajs = rollout_collect(task, flaky, 40, 9, &st);
  CHECK(trajs.size() == 40);
  CHECK(st.discarded > 0);
  for (const auto& tr : trajs) {
    CHECK_FALSE(tr.faulted);
    CHECK(tr.length() == 10);
  }
  FlakyPolicy hopeless(1, 0.9);
  CHECK_THROWS_AS(rollout_collect(task, hopeless, 20, 9), DivergenceFault);
}

TEST_CASE("dataset: round trip, empty file, byte-identical reruns") {
  const auto task = env::builtin_task("he1");
  control::StaticGainPolicy pol(control::StaticGain::zero(task.n_a(), task.n_o()), 0.1);
  Dataset ds;
  ds.header.tasks = {task};
  ds.header.anchors.emplace("he1", NormalizationAnchors(-10.0, -20.0));
  ds.header.behavior_policy = "static_gain_noisy";
  ds.header.seed = 77;
  ds.trajectories = rollout_collect(task, pol, 6, 77);
  const fs::path p1 = temp_file("a.djsonl"), p2 = temp_file("b.djsonl");
  write_dataset(p1, ds);
  Dataset again = ds;
  again.trajectories = rollout_collect(task, pol, 6, 77);
  write_dataset(p2, again);
  CHECK(slurp(p1) == slurp(p2));

  const Dataset back = read_dataset(p1);
  CHECK(back.header.seed == 77);
  CHECK(back.header.behavior_policy == "static_gain_noisy");
  CHECK(back.header.anchors.at("he1").j_expert() == -10.0);
  CHECK(back.header.tasks.at(0).linear().A == task.linear().A);
  REQUIRE(back.trajectories.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(back.trajectories[i].obs == ds.trajectories[i].obs);
    CHECK(back.trajectories[i].act == ds.trajectories[i].act);
    CHECK(back.trajectories[i].rew == ds.trajectories[i].rew);
  }

  Dataset empty = ds;
  empty.trajectories.clear();
  const fs::path pe = temp_file("empty.djsonl");
  write_dataset(pe, empty);
  const std::string text = slurp(pe);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(read_dataset(pe).trajectories.empty());
}

TEST_CASE("dataset: corruption and mismatch diagnostics") {
  const auto task = env::builtin_task("he1");
  Dataset ds;
  ds.header.tasks = {task};
  ds.header.behavior_policy = "zero";
  ds.trajectories = rollout_collect(task, env::ZeroPolicy(task.n_a()), 3, 1);
  const fs::path p = temp_file("c.djsonl");
  write_dataset(p, ds);
  std::string text = slurp(p);

  const fs::path trunc = temp_file("trunc.djsonl");
  {
    std::ofstream(trunc, std::ios::binary) << text.substr(0, text.size() - 40);
  }
  try {
    read_dataset(trunc);
    FAIL("truncated file accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }

  // Drop one observation column from the first trajectory's first row.
  const auto obs_pos = text.find("\"obs\":[[");
  REQUIRE(obs_pos != std::string::npos);
  std::string bad = text;
  const auto close = bad.find(']', obs_pos);
  bad.insert(close, ",0.5");
  const fs::path pm = temp_file("mismatch.djsonl");
  {
    std::ofstream(pm, std::ios::binary) << bad;
  }
  try {
    read_dataset(pm);
    FAIL("dimension mismatch accepted");
  } catch (const ParseError&) {
    FAIL("mismatch reported as a parse error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::string unknown = text;
  unknown.replace(unknown.find("\"task_id\":\"he1\"", unknown.find('\n')), 15, "\"task_id\":\"xx1\"");
  const fs::path pu = temp_file("unknown.djsonl");
  {
    std::ofstream(pu, std::ios::binary) << unknown;
  }
  CHECK_THROWS_AS(read_dataset(pu), ValidationError);
}

#include "dtc/env/io.hpp"

#include <fstream>

#ifndef DTC_DATA_DIR
#define DTC_DATA_DIR "data"
#endif

namespace dtc::env {
namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing key '" + key + "'");
  return *it;
}

double number(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

int integer(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_integer()) throw ValidationError(where + ": '" + key + "' must be an integer");
  return v.get<int>();
}

std::uint64_t seed_value(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ValidationError(where + ": '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

// Validation problems from the core types surface as file validation errors.
template <typename F>
auto validated(const std::string& where, F&& make) {
  try {
    return make();
  } catch (const ContractViolation& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw ValidationError(name + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Mat(0, 0);
  if (!j[0].is_array()) throw ValidationError(name + ": expected an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError(name + ": row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (!row[k].is_number()) throw ValidationError(name + ": non-numeric entry");
      m(i, k) = row[k].get<double>();
    }
  }
  if (!m.allFinite()) throw ValidationError(name + ": non-finite entry");
  return m;
}

json vector_to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vector_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw ValidationError(name + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(name + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  if (!v.allFinite()) throw ValidationError(name + ": non-finite entry");
  return v;
}

json reward_to_json(const RewardSpec& r) {
  return {{"Q1", matrix_to_json(r.q1())},
          {"Q2", matrix_to_json(r.q2())},
          {"Q3", matrix_to_json(r.q3())},
          {"s_r", vector_to_json(r.s_r())}};
}

RewardSpec reward_from_json(const json& j) {
  const std::string where = "reward";
  Mat q1 = matrix_from_json(field(j, "Q1", where), "Q1");
  Mat q2 = matrix_from_json(field(j, "Q2", where), "Q2");
  Mat q3 = matrix_from_json(field(j, "Q3", where), "Q3");
  if (q3.size() == 0) q3 = Mat::Zero(q1.rows(), q2.rows());
  Vec s_r = vector_from_json(field(j, "s_r", where), "s_r");
  return validated(where, [&] { return RewardSpec(q1, q2, q3, s_r); });
}

json linear_file_to_json(const LinearSystemSpec& sys, const RewardSpec& reward) {
  json j = reward_to_json(reward);
  j["A"] = matrix_to_json(sys.A);
  j["B2"] = matrix_to_json(sys.B2);
  j["C"] = matrix_to_json(sys.C);
  j["noise_cov"] = sys.noise_cov;
  j["n_steps"] = sys.n_steps;
  j["init_std"] = sys.init_std;
  return j;
}

TaskSpec linear_task_from_json(const json& j, const std::string& task_id) {
  const std::string where = "linear system '" + task_id + "'";
  LinearSystemSpec sys;
  sys.A = matrix_from_json(field(j, "A", where), "A");
  sys.B2 = matrix_from_json(field(j, "B2", where), "B2");
  sys.C = matrix_from_json(field(j, "C", where), "C");
  sys.noise_cov = number(j, "noise_cov", where);
  sys.n_steps = integer(j, "n_steps", where);
  sys.init_std = number(j, "init_std", where);
  validated(where, [&] { sys.validate(); return 0; });
  TaskSpec task{task_id, sys, reward_from_json(j), Nominal{}};
  validated(where, [&] { task.validate(); return 0; });
  return task;
}

json pde_to_json(const PdeSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"nu", s.nu},
          {"c", s.c},
          {"zeta", s.zeta},
          {"phi", s.phi},
          {"L", s.L},
          {"n_s", s.n_s},
          {"n_a", s.n_a},
          {"n_o", s.n_o},
          {"sample_time", s.sample_time},
          {"process_noise_cov", s.process_noise_cov},
          {"sensor_noise_cov", s.sensor_noise_cov},
          {"n_steps", s.n_steps},
          {"target_field", vector_to_json(s.target_field)},
          {"divergence_bound", s.divergence_bound}};
}

PdeSpec pde_from_json(const json& j) {
  const std::string where = "pde spec";
  const json& kind = field(j, "kind", where);
  if (!kind.is_string()) throw ValidationError(where + ": 'kind' must be a string");
  PdeSpec s = validated(where, [&] {
    const PdeKind k = pde_kind_from_string(kind.get<std::string>());
    return k == PdeKind::kBurgers ? burgers_spec(1e-2, 0.125) : cdr_spec(1e-2, 0.1, 0.0, 0.1);
  });
  // Every field except kind and nu is optional and falls back to the kind defaults.
  s.nu = number(j, "nu", where);
  auto opt_num = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = number(j, key, where);
  };
  auto opt_int = [&](const char* key, int& dst) {
    if (j.contains(key)) dst = integer(j, key, where);
  };
  opt_num("c", s.c);
  opt_num("zeta", s.zeta);
  opt_num("phi", s.phi);
  opt_num("L", s.L);
  opt_int("n_s", s.n_s);
  opt_int("n_a", s.n_a);
  opt_int("n_o", s.n_o);
  opt_num("sample_time", s.sample_time);
  opt_num("process_noise_cov", s.process_noise_cov);
  opt_num("sensor_noise_cov", s.sensor_noise_cov);
  opt_int("n_steps", s.n_steps);
  opt_num("divergence_bound", s.divergence_bound);
  if (j.contains("target_field")) {
    s.target_field = vector_from_json(j["target_field"], "target_field");
  } else if (s.n_s >= 1 && s.L > 0.0) {
    s.target_field = s.kind == PdeKind::kBurgers ? burgers_target(s.n_s, s.L) : cdr_target(s.n_s, s.L);
  }
  validated(where, [&] { s.validate(); return 0; });
  return s;
}

json provenance_to_json(const Provenance& p) {
  if (std::holds_alternative<Nominal>(p)) return {{"type", "nominal"}};
  if (const auto* q = std::get_if<Perturbed>(&p)) {
    return {{"type", "perturbed"},
            {"nominal_id", q->nominal_id},
            {"delta_a_norm", q->delta_a_norm},
            {"delta_b_norm", q->delta_b_norm},
            {"seed", q->seed}};
  }
  const auto& s = std::get<Sampled>(p);
  json params = json::array();
  for (const auto& [name, value] : s.params) params.push_back({{"name", name}, {"value", value}});
  return {{"type", "sampled"}, {"mode", s.mode}, {"seed", s.seed}, {"params", params}};
}

Provenance provenance_from_json(const json& j) {
  const std::string where = "provenance";
  const json& type = field(j, "type", where);
  if (type == "nominal") return Nominal{};
  if (type == "perturbed") {
    Perturbed p;
    p.nominal_id = field(j, "nominal_id", where).get<std::string>();
    p.delta_a_norm = number(j, "delta_a_norm", where);
    p.delta_b_norm = number(j, "delta_b_norm", where);
    p.seed = seed_value(j, "seed", where);
    return p;
  }
  if (type == "sampled") {
    Sampled s;
    s.mode = field(j, "mode", where).get<std::string>();
    s.seed = seed_value(j, "seed", where);
    for (const json& e : field(j, "params", where))
      s.params.emplace_back(field(e, "name", where).get<std::string>(), number(e, "value", where));
    return s;
  }
  throw ValidationError(where + ": unknown type " + type.dump());
}

json task_to_json(const TaskSpec& task) {
  json env;
  if (task.is_linear()) {
    const auto& sys = task.linear();
    env = {{"type", "linear"},
           {"A", matrix_to_json(sys.A)},
           {"B2", matrix_to_json(sys.B2)},
           {"C", matrix_to_json(sys.C)},
           {"noise_cov", sys.noise_cov},
           {"n_steps", sys.n_steps},
           {"init_std", sys.init_std}};
  } else {
    env = pde_to_json(task.pde());
    env["type"] = "pde";
  }
  return {{"task_id", task.task_id},
          {"env", env},
          {"reward", reward_to_json(task.reward)},
          {"provenance", provenance_to_json(task.provenance)}};
}

TaskSpec task_from_json(const json& j) {
  const json& id = field(j, "task_id", "task");
  if (!id.is_string()) throw ValidationError("task: 'task_id' must be a string");
  const std::string task_id = id.get<std::string>();
  const std::string where = "task '" + task_id + "'";
  const json& env = field(j, "env", where);
  const json& type = field(env, "type", where + " env");
  RewardSpec reward = reward_from_json(field(j, "reward", where));
  Provenance prov = j.contains("provenance") ? provenance_from_json(j["provenance"]) : Provenance{Nominal{}};
  TaskSpec task = [&]() -> TaskSpec {
    if (type == "linear") {
      json flat = env;
      flat.update(reward_to_json(reward));
      return linear_task_from_json(flat, task_id);
    }
    if (type == "pde") return TaskSpec{task_id, pde_from_json(env), reward, Nominal{}};
    throw ValidationError(where + ": unknown env type " + type.dump());
  }();
  task.reward = reward;
  task.provenance = std::move(prov);
  validated(where, [&] { task.validate(); return 0; });
  return task;
}

RewardSpec default_pde_reward(const PdeSpec& spec) {
  return RewardSpec(Mat::Identity(spec.n_s, spec.n_s), 0.1 * Mat::Identity(spec.n_a, spec.n_a),
                    Mat::Zero(spec.n_s, spec.n_a), spec.target_field);
}

TaskSpec load_task_file(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw ValidationError(path.string() + ": expected a JSON object");
  if (j.contains("A")) return linear_task_from_json(j, path.stem().string());
  if (j.contains("kind") && j.contains("nu")) {
    PdeSpec spec = pde_from_json(j);
    return TaskSpec{path.stem().string(), spec, default_pde_reward(spec), Nominal{}};
  }
  return task_from_json(j);
}

void save_task_file(const std::filesystem::path& path, const TaskSpec& task) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << task_to_json(task).dump(2) << '\n';
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

std::filesystem::path data_dir() { return std::filesystem::path(DTC_DATA_DIR); }

TaskSpec builtin_task(const std::string& name) {
  if (name == "he1" || name == "ac4" || name == "cm3") {
    TaskSpec t = load_task_file(data_dir() / "systems" / (name + ".json"));
    t.task_id = name;
    return t;
  }
  if (name == "burgers") {
    PdeSpec spec = burgers_spec(1e-2, 0.125);
    return TaskSpec{name, spec, default_pde_reward(spec), Nominal{}};
  }
  if (name == "cdr") {
    PdeSpec spec = cdr_spec(1e-2, 0.1, 0.0, 0.1);
    return TaskSpec{name, spec, default_pde_reward(spec), Nominal{}};
  }
  throw ValidationError("unknown task '" + name + "' (expected he1, ac4, cm3, burgers or cdr)");
}

TaskSpec resolve_task(const std::string& name_or_path) {
  if (name_or_path == "he1" || name_or_path == "ac4" || name_or_path == "cm3" ||
      name_or_path == "burgers" || name_or_path == "cdr")
    return builtin_task(name_or_path);
  return load_task_file(name_or_path);
}

}  // namespace dtc::env

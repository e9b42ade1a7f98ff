#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "dtc/env/task.hpp"

namespace dtc::env {

using json = nlohmann::json;

json matrix_to_json(const Mat& m);
Mat matrix_from_json(const json& j, const std::string& name);
json vector_to_json(const Vec& v);
Vec vector_from_json(const json& j, const std::string& name);

json reward_to_json(const RewardSpec& r);
RewardSpec reward_from_json(const json& j);

/// Flat matrix-file document: A, B2, C, noise_cov, n_steps, init_std, Q1, Q2, Q3, s_r.
json linear_file_to_json(const LinearSystemSpec& sys, const RewardSpec& reward);
TaskSpec linear_task_from_json(const json& j, const std::string& task_id);

json pde_to_json(const PdeSpec& spec);
PdeSpec pde_from_json(const json& j);

json provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const json& j);

/// Self-contained task document used in dataset headers and run configs.
json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const json& j);

/// Loads a task file. A document with an "A" key is read as a matrix file,
/// one with "kind"+"nu" as a PdeSpec (default reward), otherwise as a task document.
TaskSpec load_task_file(const std::filesystem::path& path);
void save_task_file(const std::filesystem::path& path, const TaskSpec& task);

/// Named tasks: he1, ac4, cm3 (stand-in matrix files under the data
/// directory), burgers, cdr (nominal PDE parameters).
TaskSpec builtin_task(const std::string& name);

/// Task from a builtin name or a path to a task file.
TaskSpec resolve_task(const std::string& name_or_path);

/// Directory holding the shipped stand-in systems.
std::filesystem::path data_dir();

/// Default PDE reward: Q1 = I, Q2 = 0.1 I, Q3 = 0, s_r = target field.
RewardSpec default_pde_reward(const PdeSpec& spec);

}  // namespace dtc::env

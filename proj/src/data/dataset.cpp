#include "dtc/data/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dtc/env/io.hpp"

namespace dtc::data {
namespace {

using nlohmann::json;

void put_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

void put_rows(std::ostream& out, const Mat& m) {
  out << '[';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out << ',';
    out << '[';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      put_double(out, m(i, j));
    }
    out << ']';
  }
  out << ']';
}

Mat rows_from_json(const json& j, int cols, const char* name, std::size_t line) {
  if (!j.is_array()) throw ParseError(std::string("'") + name + "' is not an array", line);
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_array()) throw ParseError(std::string("'") + name + "' row is not an array", line);
    if (static_cast<int>(row.size()) != cols)
      throw ValidationError("line " + std::to_string(line) + ": '" + name + "' row " + std::to_string(i) +
                            " has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    for (int k = 0; k < cols; ++k) {
      if (!row[k].is_number()) throw ParseError(std::string("'") + name + "' holds a non-number", line);
      m(static_cast<Eigen::Index>(i), k) = row[k].get<double>();
    }
  }
  return m;
}

json header_to_json(const DatasetHeader& h) {
  json tasks = json::array();
  for (const auto& t : h.tasks) tasks.push_back(env::task_to_json(t));
  json anchors = json::object();
  for (const auto& [id, a] : h.anchors) anchors[id] = anchors_to_json(a);
  return {{"format_version", h.format_version},
          {"tasks", tasks},
          {"anchors", anchors},
          {"behavior_policy", h.behavior_policy},
          {"seed", h.seed}};
}

DatasetHeader header_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("header is not a JSON object", 1);
  for (const char* key : {"format_version", "tasks", "anchors", "behavior_policy", "seed"})
    if (!j.contains(key)) throw ParseError(std::string("header lacks '") + key + "'", 1);
  DatasetHeader h;
  h.format_version = j["format_version"].get<int>();
  if (h.format_version != kDatasetFormatVersion)
    throw ValidationError("unsupported dataset format_version " + std::to_string(h.format_version));
  for (const auto& t : j["tasks"]) h.tasks.push_back(env::task_from_json(t));
  for (std::size_t i = 0; i < h.tasks.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (h.tasks[i].task_id == h.tasks[k].task_id)
        throw ValidationError("duplicate task_id '" + h.tasks[i].task_id + "' in dataset header");
  for (const auto& [id, a] : j["anchors"].items()) h.anchors.emplace(id, anchors_from_json(a));
  h.behavior_policy = j["behavior_policy"].get<std::string>();
  h.seed = j["seed"].get<std::uint64_t>();
  return h;
}

}  // namespace

void write_json_17(std::ostream& out, const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      out << '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out << ',';
        first = false;
        out << json(k).dump() << ':';
        write_json_17(out, v);
      }
      out << '}';
      break;
    }
    case json::value_t::array: {
      out << '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out << ',';
        write_json_17(out, j[i]);
      }
      out << ']';
      break;
    }
    case json::value_t::number_float:
      put_double(out, j.get<double>());
      break;
    default:
      out << j.dump();
  }
}

std::vector<Trajectory> rollout_collect(const env::TaskSpec& task, const env::Policy& policy, int n_traj,
                                        std::uint64_t seed, CollectStats* stats) {
  require(n_traj >= 0, "rollout_collect: n_traj must be non-negative");
  std::vector<Trajectory> out;
  out.reserve(n_traj);
  CollectStats st;
  if (n_traj > 0) {
    env::Environment environment(task);
    auto p = policy.clone();
    for (std::uint64_t attempt = 0; st.collected < n_traj; ++attempt) {
      Trajectory tr = env::run_episode(environment, *p, derive_seed(seed, 2 * attempt), derive_seed(seed, 2 * attempt + 1));
      if (tr.faulted) {
        ++st.discarded;
        if (st.discarded > n_traj)
          throw DivergenceFault("rollout_collect on '" + task.task_id + "': more than half of the episodes diverged (" +
                                    std::to_string(st.discarded) + " discarded)",
                                tr.fault_step);
        continue;
      }
      out.push_back(std::move(tr));
      ++st.collected;
    }
  }
  if (stats) *stats = st;
  return out;
}

double mean_return(const env::TaskSpec& task, const env::Policy& policy, int episodes, std::uint64_t seed) {
  require(episodes >= 1, "mean_return: episodes must be >= 1");
  env::Environment environment(task);
  auto p = policy.clone();
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    const auto e = static_cast<std::uint64_t>(i);
    total += env::run_episode(environment, *p, derive_seed(seed, 2 * e), derive_seed(seed, 2 * e + 1)).total_return();
  }
  return total / episodes;
}

const env::TaskSpec& DatasetHeader::task(const std::string& task_id) const {
  for (const auto& t : tasks)
    if (t.task_id == task_id) return t;
  throw ValidationError("task_id '" + task_id + "' is not declared in the dataset header");
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_json_17(out, header_to_json(ds.header));
  out << '\n';
  for (const auto& tr : ds.trajectories) {
    tr.validate();
    ds.header.task(tr.task_id);
    out << "{\"task_id\":" << json(tr.task_id).dump() << ",\"obs\":";
    put_rows(out, tr.obs);
    out << ",\"act\":";
    put_rows(out, tr.act);
    out << ",\"rew\":[";
    for (Eigen::Index t = 0; t < tr.rew.size(); ++t) {
      if (t) out << ',';
      put_double(out, tr.rew[t]);
    }
    out << ']';
    out << "}\n";
  }
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path.string() + "'");
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!have_header) {
      try {
        ds.header = header_from_json(j);
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), lineno);
      }
      have_header = true;
      continue;
    }
    if (!j.is_object() || !j.contains("task_id") || !j.contains("obs") || !j.contains("act") ||
        !j.contains("rew") || !j["task_id"].is_string())
      throw ParseError("trajectory record needs task_id, obs, act, rew", lineno);
    Trajectory tr;
    tr.task_id = j["task_id"].get<std::string>();
    const env::TaskSpec* task = nullptr;
    try {
      task = &ds.header.task(tr.task_id);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    tr.obs = rows_from_json(j["obs"], task->n_o(), "obs", lineno);
    tr.act = rows_from_json(j["act"], task->n_a(), "act", lineno);
    const json& rew = j["rew"];
    if (!rew.is_array()) throw ParseError("'rew' is not an array", lineno);
    tr.rew.resize(static_cast<Eigen::Index>(rew.size()));
    for (std::size_t t = 0; t < rew.size(); ++t) {
      if (!rew[t].is_number()) throw ParseError("'rew' holds a non-number", lineno);
      tr.rew[static_cast<Eigen::Index>(t)] = rew[t].get<double>();
    }
    try {
      tr.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    ds.trajectories.push_back(std::move(tr));
  }
  if (!have_header) throw ParseError("empty dataset file", 1);
  return ds;
}

}  // namespace dtc::data

#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtc::cli {

using nlohmann::json;

/// Where a command writes and how it reports.
struct RunContext {
  std::filesystem::path dir;
  std::filesystem::path base;  // relative input paths resolve against this (the working directory)
  int jobs = 1;
  std::ostream* out = nullptr;

  /// Resolved-config snapshot; call once the configuration is fully parsed.
  void write_resolved(const json& cfg) const;
  std::filesystem::path input(const json& v) const;
};

enum class FlagKind { kString, kInt, kUInt, kReal, kBool, kList };

struct FlagSpec {
  std::string flag;     // e.g. "--task"
  std::string pointer;  // JSON pointer into the config, e.g. "/train/epochs"
  FlagKind kind;
  std::string help;
};

struct CommandSpec {
  std::string name;
  std::string help;
  bool stochastic = true;
  /// Every allowed top-level key with its default (null = unset).
  json defaults;
  std::vector<FlagSpec> flags;
  void (*run)(json& cfg, const RunContext& ctx) = nullptr;
};

const std::vector<CommandSpec>& commands();

// Shared file helpers.
json read_json_file(const std::filesystem::path& p);
void write_json_file(const std::filesystem::path& p, const json& j);
void write_text_file(const std::filesystem::path& p, const std::string& s);

}  // namespace dtc::cli

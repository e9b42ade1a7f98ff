#include "dtc/cli.hpp"

#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"

#include "cli/commands.hpp"
#include "dtc/common.hpp"
#include "dtc/model/transformer.hpp"

namespace dtc::cli {

namespace fs = std::filesystem;

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), 0);
  }
}

void write_text_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
  if (!out) throw Error("cannot write '" + p.string() + "'");
}

void write_json_file(const fs::path& p, const json& j) { write_text_file(p, j.dump(2) + "\n"); }

void RunContext::write_resolved(const json& cfg) const { write_json_file(dir / "resolved_config.json", cfg); }

fs::path RunContext::input(const json& v) const {
  if (!v.is_string() || v.get<std::string>().empty()) throw ValidationError("expected a path, got " + v.dump());
  const fs::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

namespace {

// One storage slot per declared flag; CLI11 parses into the member of the right type.
struct FlagValue {
  std::string s;
  long long i = 0;
  std::uint64_t u = 0;
  double d = 0.0;
  bool b = false;
  std::vector<std::string> list;
  CLI::Option* opt = nullptr;
};

struct Common {
  std::string config;
  std::string outdir = "runs";
  std::string run_name;
  bool overwrite = false;
  FlagValue seed;
  FlagValue jobs;
};

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

json merged_config(const CommandSpec& spec, const Common& common, const std::vector<FlagValue>& flags) {
  json cfg = spec.defaults;
  if (spec.stochastic) cfg["seed"] = nullptr;
  cfg["jobs"] = 1;
  if (!common.config.empty()) {
    const json file = read_json_file(common.config);
    if (!file.is_object()) throw ValidationError("config file must hold a JSON object");
    for (const auto& [k, v] : file.items()) {
      if (k == "command") {
        if (v != spec.name) throw ValidationError("config file is for command " + v.dump() + ", not '" + spec.name + "'");
        continue;
      }
      if (!cfg.contains(k)) throw ValidationError("unknown config key '" + k + "' for command '" + spec.name + "'");
      if (cfg[k].is_object() && v.is_object()) cfg[k].merge_patch(v);
      else cfg[k] = v;
    }
  }
  for (std::size_t i = 0; i < spec.flags.size(); ++i) {
    const FlagValue& f = flags[i];
    if (f.opt->count() == 0) continue;
    json& slot = cfg[json::json_pointer(spec.flags[i].pointer)];
    switch (spec.flags[i].kind) {
      case FlagKind::kString: slot = f.s; break;
      case FlagKind::kInt: slot = f.i; break;
      case FlagKind::kUInt: slot = f.u; break;
      case FlagKind::kReal: slot = f.d; break;
      case FlagKind::kBool: slot = f.b; break;
      case FlagKind::kList: slot = f.list; break;
    }
  }
  if (common.seed.opt && common.seed.opt->count() > 0) cfg["seed"] = common.seed.u;
  if (common.jobs.opt->count() > 0) cfg["jobs"] = common.jobs.i;
  if (spec.stochastic && cfg["seed"].is_null())
    throw ValidationError("--seed is required for '" + spec.name + "'");
  if (!cfg["jobs"].is_number_integer() || cfg["jobs"].get<int>() < 1) throw ValidationError("--jobs must be >= 1");
  cfg["command"] = spec.name;
  return cfg;
}

fs::path prepare_run_dir(const std::string& command, const Common& common) {
  const fs::path dir = fs::path(common.outdir) / (command + "-" + (common.run_name.empty() ? utc_stamp() : common.run_name));
  if (fs::exists(dir)) {
    if (!common.overwrite)
      throw ValidationError("output directory '" + dir.string() + "' exists; pass --overwrite to replace it");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Return-conditioned transformer control experiments", "dtctl"};
  app.require_subcommand(1);
  const auto& specs = commands();
  std::vector<Common> common(specs.size());
  std::vector<std::vector<FlagValue>> flags(specs.size());
  std::vector<CLI::App*> subs;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const CommandSpec& spec = specs[c];
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    Common& cm = common[c];
    sub->add_option("--config", cm.config, "JSON configuration; explicit flags take precedence");
    sub->add_option("--outdir", cm.outdir, "parent directory of the run directory")->capture_default_str();
    sub->add_option("--run-name", cm.run_name, "run directory suffix instead of the UTC timestamp");
    sub->add_flag("--overwrite", cm.overwrite, "replace an existing run directory");
    cm.jobs.opt = sub->add_option("--jobs", cm.jobs.i, "worker threads (1 = bit-reproducible)");
    if (spec.stochastic) cm.seed.opt = sub->add_option("--seed", cm.seed.u, "base seed (required)");
    flags[c].resize(spec.flags.size());
    for (std::size_t i = 0; i < spec.flags.size(); ++i) {
      const FlagSpec& f = spec.flags[i];
      FlagValue& v = flags[c][i];
      switch (f.kind) {
        case FlagKind::kString: v.opt = sub->add_option(f.flag, v.s, f.help); break;
        case FlagKind::kInt: v.opt = sub->add_option(f.flag, v.i, f.help); break;
        case FlagKind::kUInt: v.opt = sub->add_option(f.flag, v.u, f.help); break;
        case FlagKind::kReal: v.opt = sub->add_option(f.flag, v.d, f.help); break;
        case FlagKind::kBool: v.opt = sub->add_flag(f.flag, v.b, f.help); break;
        case FlagKind::kList: v.opt = sub->add_option(f.flag, v.list, f.help); break;
      }
    }
    subs.push_back(sub);
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kInvalid;
  }

  std::size_t c = 0;
  while (!subs[c]->parsed()) ++c;
  const CommandSpec& spec = specs[c];
  fs::path created;
  // Inputs that fail validation leave no run directory behind.
  auto invalid = [&](const std::string& msg) {
    err << "error: " << msg << "\n";
    if (!created.empty()) fs::remove_all(created);
    return kInvalid;
  };
  try {
    json cfg = merged_config(spec, common[c], flags[c]);
    RunContext ctx;
    ctx.dir = prepare_run_dir(spec.name, common[c]);
    created = ctx.dir;
    ctx.base = fs::current_path();
    ctx.jobs = cfg["jobs"].get<int>();
    ctx.out = &out;
    spec.run(cfg, ctx);
    out << ctx.dir.string() << "\n";
    return kOk;
  } catch (const ValidationError& e) {
    return invalid(e.what());
  } catch (const ContractViolation& e) {
    return invalid(e.what());
  } catch (const json::exception& e) {
    return invalid(std::string("malformed configuration: ") + e.what());
  } catch (const std::exception& e) {
    err << "fault: " << e.what() << "\n";
    return kFault;
  }
}

}  // namespace dtc::cli

#include "dtc/model/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "dtc/model/transformer.hpp"

namespace dtc::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

using nlohmann::json;

void append(json& entries, std::ofstream& out, std::uint64_t& offset, const std::string& group,
            const TensorList<float>& list) {
  for (const auto& t : list) {
    const std::uint64_t bytes = sizeof(float) * static_cast<std::uint64_t>(t.value.size());
    entries.push_back({{"group", group},
                       {"name", t.name},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"offset", offset},
                       {"bytes", bytes},
                       {"decay", t.decay}});
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  check_shapes(ckpt.config, ckpt.params, ckpt.adapters ? &*ckpt.adapters : nullptr);
  std::filesystem::create_directories(dir);
  std::ofstream payload(dir / "payload.bin", std::ios::binary);
  if (!payload) throw Error("cannot write '" + (dir / "payload.bin").string() + "'");
  json entries = json::array();
  std::uint64_t offset = 0;
  append(entries, payload, offset, "params", ckpt.params);
  if (ckpt.adapters) append(entries, payload, offset, "adapters", *ckpt.adapters);
  if (ckpt.opt_state) {
    append(entries, payload, offset, "opt.m", ckpt.opt_state->m);
    append(entries, payload, offset, "opt.v", ckpt.opt_state->v);
  }
  payload.close();
  if (!payload) throw Error("write to '" + (dir / "payload.bin").string() + "' failed");
  json manifest{{"format_version", kCheckpointFormatVersion},
                {"config", config_to_json(ckpt.config)},
                {"dtype", "float32"},
                {"endianness", "little"},
                {"has_adapters", ckpt.adapters.has_value()},
                {"payload_bytes", offset},
                {"tensors", entries},
                {"meta", ckpt.meta}};
  if (ckpt.opt_state) manifest["opt_step"] = ckpt.opt_state->step;
  std::ofstream(dir / "manifest.json") << manifest.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ValidationError("checkpoint '" + dir.string() + "' has no manifest.json");
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 0);
  }
  Checkpoint ck;
  std::vector<char> bytes;
  {
    std::ifstream pf(dir / "payload.bin", std::ios::binary);
    if (!pf) throw ValidationError("checkpoint '" + dir.string() + "' has no payload.bin");
    bytes.assign(std::istreambuf_iterator<char>(pf), std::istreambuf_iterator<char>());
  }
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ValidationError("unsupported checkpoint format_version");
    if (manifest.at("dtype").get<std::string>() != "float32") throw ValidationError("checkpoint dtype must be float32");
    ck.config = config_from_json(manifest.at("config"));
    const auto declared = manifest.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() < declared)
      throw ValidationError("checkpoint payload truncated: " + std::to_string(bytes.size()) + " of " +
                            std::to_string(declared) + " bytes");
    TensorList<float> adapters, m, v;
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto group = e.at("group").get<std::string>();
      const auto shape = e.at("shape");
      const long rows = shape.at(0).get<long>(), cols = shape.at(1).get<long>();
      const auto off = e.at("offset").get<std::uint64_t>();
      const std::uint64_t need = sizeof(float) * static_cast<std::uint64_t>(rows) * cols;
      if (rows < 0 || cols < 0 || e.at("bytes").get<std::uint64_t>() != need)
        throw ValidationError("tensor '" + name + "': manifest shape disagrees with its byte count");
      if (off + need > bytes.size()) throw ValidationError("checkpoint payload truncated inside tensor '" + name + "'");
      MatR<float> value(rows, cols);
      std::memcpy(value.data(), bytes.data() + off, need);
      const bool decay = e.at("decay").get<bool>();
      if (group == "params") {
        ck.params.add(name, std::move(value), decay);
      } else if (group == "adapters") {
        adapters.add(name, std::move(value), decay);
      } else if (group == "opt.m") {
        m.add(name, std::move(value), decay);
      } else if (group == "opt.v") {
        v.add(name, std::move(value), decay);
      } else {
        throw ValidationError("tensor '" + name + "' has unknown group '" + group + "'");
      }
    }
    if (manifest.at("has_adapters").get<bool>()) ck.adapters = std::move(adapters);
    if (!m.empty()) ck.opt_state = AdamWState<float>{manifest.at("opt_step").get<long>(), std::move(m), std::move(v)};
    if (manifest.contains("meta")) ck.meta = manifest["meta"];
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint manifest: " + std::string(e.what()));
  }
  check_shapes(ck.config, ck.params, ck.adapters ? &*ck.adapters : nullptr);
  return ck;
}

}  // namespace dtc::model

#include "seqmtl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace seqmtl {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

std::vector<std::size_t> shape_of(const nlohmann::json& j) { return j.get<std::vector<std::size_t>>(); }

}  // namespace

std::string serialize_checkpoint(Model& model, const nlohmann::json& config) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["spec"] = model.spec().to_json();
  manifest["vocab"] = model.vocab().to_json();
  manifest["vocab_sha256"] = model.vocab().fingerprint();
  manifest["lm_vocab"] = model.spec().lm_mode == LmMode::none ? nlohmann::json(nullptr)
                                                              : model.lm_vocab().to_json();
  manifest["config"] = config;
  nlohmann::json params = nlohmann::json::array();
  std::uint64_t offset = 0;
  const ParameterList ps = model.parameters();
  for (const Parameter* p : ps) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset},
                      {"trainable", p->trainable}});
    offset += p->value.size();
  }
  manifest["parameters"] = params;
  manifest["scalar_count"] = offset;

  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * offset);
  for (const Parameter* p : ps) {
    for (double v : p->value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

void save_checkpoint(Model& model, const std::string& path, const nlohmann::json& config) {
  const std::string bytes = serialize_checkpoint(model, config);
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw Error("short write on checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0) {
    throw Error("not a checkpoint (bad magic)");
  }
  const std::uint64_t length = get_u64(bytes, 8);
  if (length > bytes.size() - 16) throw Error("checkpoint manifest truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, length));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint manifest unreadable: ") + e.what());
  }
  if (manifest.value("format_version", 0) != kCheckpointVersion) {
    throw Error("unsupported checkpoint version");
  }
  const ModelSpec spec = ModelSpec::from_json(manifest.at("spec"));
  const Vocabulary vocab = Vocabulary::from_json(manifest.at("vocab"));
  if (vocab.fingerprint() != manifest.at("vocab_sha256").get<std::string>()) {
    throw Error("checkpoint vocabulary hash mismatch");
  }
  Model model = Model::build(spec, vocab, 0);
  if (spec.lm_mode != LmMode::none &&
      model.lm_vocab().to_json() != manifest.at("lm_vocab")) {
    throw Error("checkpoint LM vocabulary does not match the rebuilt model");
  }

  const auto& entries = manifest.at("parameters");
  ParameterList ps = model.parameters();
  if (entries.size() != ps.size()) {
    throw Error("checkpoint has " + std::to_string(entries.size()) + " parameters, model expects " +
                std::to_string(ps.size()));
  }
  const std::uint64_t scalars = manifest.at("scalar_count").get<std::uint64_t>();
  const std::size_t payload = 16 + length;
  if (bytes.size() != payload + 8 * scalars) throw Error("checkpoint payload size mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = *ps[i];
    const auto& e = entries[i];
    const std::string name = e.at("name").get<std::string>();
    if (name != p.name) throw Error("checkpoint parameter " + name + " where " + p.name + " was expected");
    if (shape_of(e.at("shape")) != p.value.shape()) {
      throw Error("checkpoint parameter " + name + " has the wrong shape");
    }
    const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
    if (offset + p.value.size() > scalars) throw Error("checkpoint parameter " + name + " out of bounds");
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      p.value[k] = std::bit_cast<double>(get_u64(bytes, payload + 8 * (offset + k)));
    }
    p.zero_grad();
  }
  nlohmann::json config = manifest.at("config");
  return LoadedCheckpoint{std::move(model), std::move(manifest), std::move(config)};
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace seqmtl

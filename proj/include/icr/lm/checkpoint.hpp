#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "icr/error.hpp"
#include "icr/lm/model.hpp"

namespace icr::lm {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(c.mode);
  j["vocab_size"] = c.vocab_size;
  j["context_len"] = c.context_len;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["mlp_ratio"] = c.mlp_ratio;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<int>();
  c.context_len = j.at("context_len").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  return c;
}

// Checkpoint file: one JSON header line (format version, model config,
// vocabulary fingerprint, creation seed, parameter count) followed by the
// parameters as raw little-endian IEEE-754 doubles in layout order.
inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "icr-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = config_to_json(model.config);
  header["vocab_fingerprint"] = model.vocab_fingerprint;
  header["seed"] = model.seed;
  header["num_params"] = model.params.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  for (double p : model.params) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(p);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) fail(ErrorKind::io, "short write on checkpoint " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_record, path.string() + ":1: bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "icr-checkpoint")
    fail(ErrorKind::malformed_record, path.string() + ":1: not a checkpoint file");
  if (header.value("version", -1) != kCheckpointVersion)
    fail(ErrorKind::version_mismatch, path.string() + ": checkpoint version " + header["version"].dump());
  Model model(config_from_json(header.at("config")));
  model.vocab_fingerprint = header.at("vocab_fingerprint").get<std::string>();
  model.seed = header.at("seed").get<std::uint64_t>();
  if (header.at("num_params").get<std::size_t>() != model.params.size())
    fail(ErrorKind::shape_mismatch, path.string() + ": parameter count disagrees with config layout");
  for (double& p : model.params) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
      fail(ErrorKind::malformed_record, path.string() + ": truncated parameter blob");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    p = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof())
    fail(ErrorKind::malformed_record, path.string() + ": trailing bytes after parameter blob");
  model.check_finite();
  return model;
}

}  // namespace icr::lm

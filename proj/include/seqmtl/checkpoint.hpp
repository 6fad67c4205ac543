#pragma once

#include <string>

#include <json.hpp>

#include "seqmtl/model.hpp"

namespace seqmtl {

// File layout: the 8 bytes "SEQMTLCK", a little-endian u64 manifest length,
// the JSON manifest (spec, vocabulary and its SHA-256, LM vocabulary,
// parameter names/shapes/offsets, run config), then every parameter value as
// little-endian float64 in manifest order.
inline constexpr char kCheckpointMagic[9] = "SEQMTLCK";
inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(Model& model, const nlohmann::json& config = nlohmann::json::object());

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(Model& model, const std::string& path,
                     const nlohmann::json& config = nlohmann::json::object());

struct LoadedCheckpoint {
  Model model;
  nlohmann::json manifest;
  nlohmann::json config;
};

// Rebuilds the model from the manifest and checks every parameter name and
// shape against it before copying values.
LoadedCheckpoint deserialize_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace seqmtl

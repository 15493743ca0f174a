#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "dib/model/dib_model.hpp"

namespace dib {

struct Checkpoint {
  DibModel model;
  nlohmann::json metadata;
};

// Binary layout: 8-byte magic "DIBCKPT1", little-endian u64 header length,
// UTF-8 JSON header {"version", "model", "parameters": [{name, shape}], "metadata"},
// then every parameter's doubles in header order, little-endian IEEE-754.
// Weights round-trip bit for bit. Written to a temporary file and renamed.
void save_checkpoint(const std::filesystem::path& path, const DibModel& model,
                     const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dib

#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vio/nn.hpp"

namespace vio {

// Checkpoint container: a flat JSON object mapping parameter names to shape +
// row-major values.
//
//   {
//     "format": "vio-checkpoint",
//     "version": 1,
//     "params": { "<name>": { "shape": [..], "data": [..] }, ... }
//   }
//
// Doubles are serialized with shortest round-trip precision, so save followed
// by load reproduces every value bit-identically.

inline constexpr const char* kCheckpointFormat = "vio-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamMap& params) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    p[name] = {{"shape", t.shape()}, {"data", t.values()}};
  }
  j["params"] = std::move(p);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump();
  out.put('\n');
  if (!out) throw IoError("write failed: " + path);
}

// Parses and validates a checkpoint without touching any model. Returns
// name -> (shape, values).
inline std::map<std::string, std::pair<Shape, std::vector<double>>> read_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw FormatError("checkpoint " + path + " has wrong format marker");
  if (j.value("version", 0) != kCheckpointVersion)
    throw FormatError("checkpoint " + path + " has unsupported version");
  if (!j.contains("params") || !j["params"].is_object())
    throw FormatError("checkpoint " + path + " lacks a params object");

  std::map<std::string, std::pair<Shape, std::vector<double>>> out;
  for (const auto& [name, entry] : j["params"].items()) {
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data"))
      throw FormatError("checkpoint entry '" + name + "' lacks shape/data");
    Shape shape = entry["shape"].get<Shape>();
    std::vector<double> data = entry["data"].get<std::vector<double>>();
    if (static_cast<int>(data.size()) != shape_numel(shape))
      throw FormatError("checkpoint entry '" + name + "': data length " +
                        std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    out[name] = {std::move(shape), std::move(data)};
  }
  return out;
}

// Loads a checkpoint into an existing ParamMap. The whole file is validated
// against the map before any parameter is written, so a failing load leaves
// the model untouched.
inline void load_checkpoint(const std::string& path, ParamMap& params) {
  auto entries = read_checkpoint(path);

  std::string missing;
  for (const auto& [name, t] : params)
    if (!entries.count(name)) missing += missing.empty() ? name : ", " + name;
  if (!missing.empty())
    throw FormatError("checkpoint " + path + " is missing parameters: " + missing);
  std::string extra;
  for (const auto& [name, e] : entries)
    if (!params.count(name)) extra += extra.empty() ? name : ", " + name;
  if (!extra.empty())
    throw FormatError("checkpoint " + path + " has unknown parameters: " + extra);
  for (const auto& [name, e] : entries) {
    const Tensor& t = params.at(name);
    if (e.first != t.shape())
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_str(e.first) +
                        ", model expects " + shape_str(t.shape()));
  }

  for (auto& [name, t] : params) {
    const auto& e = entries.at(name);
    std::copy(e.second.begin(), e.second.end(), t.data());
  }
}

}  // namespace vio

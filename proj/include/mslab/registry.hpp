#pragma once

// Named model catalogue loaded from JSON. Each entry:
//   { "name": ..., "type": "mixture" | "ring", "true_clusters": int,
//     "reconstruction": bool, "description": optional string, "params": {...} }
// mixture params: { "components": [ { "weight", "mean": [..], "cov": [[..], ..] } ] }
// ring params:    { "segments": [ { "weight", "center": [x, y], "radius",
//                                   "angles_deg": [from, to], "sigma" } ],
//                   "blobs": [ mixture-style components ] }

#include "mslab/models.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace mslab {

std::shared_ptr<const DensityModel> model_from_json(const nlohmann::json& entry);

class ModelRegistry {
 public:
  ModelRegistry() = default;
  explicit ModelRegistry(const nlohmann::json& document);

  static ModelRegistry from_file(const std::string& path);
  // The catalogue compiled into the library (data/models.json).
  static const ModelRegistry& builtin();

  std::vector<std::string> names() const;
  bool contains(const std::string& name) const;
  std::shared_ptr<const DensityModel> get(const std::string& name) const;
  const nlohmann::json& entry(const std::string& name) const;

  void add(const nlohmann::json& entry);

 private:
  struct Item {
    nlohmann::json entry;
    std::shared_ptr<const DensityModel> model;
  };
  std::vector<Item> items_;
};

}  // namespace mslab

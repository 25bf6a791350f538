#include "mslab/registry.hpp"

#include "builtin_models.inc"

#include <fstream>
#include <numbers>

namespace mslab {

using nlohmann::json;

namespace {

Vector to_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix to_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw std::invalid_argument("empty matrix in model registry");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw std::invalid_argument("ragged matrix in model registry");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  }
  return m;
}

std::vector<NormalComponent> components_from(const json& list) {
  std::vector<NormalComponent> out;
  for (const auto& c : list) {
    out.push_back({c.at("weight").get<double>(), to_vector(c.at("mean")), to_matrix(c.at("cov"))});
  }
  return out;
}

}  // namespace

std::shared_ptr<const DensityModel> model_from_json(const json& entry) {
  try {
    const auto type = entry.at("type").get<std::string>();
    const auto& params = entry.at("params");
    std::shared_ptr<DensityModel> model;
    if (type == "mixture") {
      model = std::make_shared<MixtureModel>(components_from(params.at("components")));
    } else if (type == "ring") {
      std::vector<RingSegment> segments;
      for (const auto& s : params.value("segments", json::array())) {
        const auto angles = s.at("angles_deg").get<std::vector<double>>();
        if (angles.size() != 2) throw std::invalid_argument("angles_deg needs two values");
        const double deg = std::numbers::pi / 180.0;
        segments.push_back({s.at("weight").get<double>(), to_vector(s.at("center")),
                            s.at("radius").get<double>(), angles[0] * deg, angles[1] * deg,
                            s.at("sigma").get<double>()});
      }
      model = std::make_shared<RingSegmentModel>(std::move(segments),
                                                 components_from(params.value("blobs", json::array())));
    } else {
      throw std::invalid_argument("unknown model type '" + type + "'");
    }
    ModelInfo info{entry.at("name").get<std::string>(), entry.at("true_clusters").get<int>(),
                   entry.value("reconstruction", false)};
    if (info.true_clusters < 1) throw std::invalid_argument("true_clusters must be positive");
    model->set_info(std::move(info));
    return model;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed model entry: ") + e.what());
  }
}

ModelRegistry::ModelRegistry(const json& document) {
  const json& list = document.is_object() ? document.at("models") : document;
  for (const auto& entry : list) add(entry);
}

ModelRegistry ModelRegistry::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model registry '" + path + "'");
  try {
    return ModelRegistry(json::parse(in));
  } catch (const json::exception& e) {
    throw std::invalid_argument("cannot parse model registry '" + path + "': " + e.what());
  }
}

const ModelRegistry& ModelRegistry::builtin() {
  static const ModelRegistry registry(json::parse(kBuiltinModels));
  return registry;
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& item : items_) out.push_back(item.entry.at("name").get<std::string>());
  return out;
}

bool ModelRegistry::contains(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.entry.at("name") == name) return true;
  }
  return false;
}

std::shared_ptr<const DensityModel> ModelRegistry::get(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.entry.at("name") == name) return item.model;
  }
  throw std::invalid_argument("unknown model '" + name + "'");
}

const json& ModelRegistry::entry(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.entry.at("name") == name) return item.entry;
  }
  throw std::invalid_argument("unknown model '" + name + "'");
}

void ModelRegistry::add(const json& entry) {
  auto model = model_from_json(entry);
  if (contains(model->info().name)) {
    throw std::invalid_argument("duplicate model name '" + model->info().name + "'");
  }
  items_.push_back({entry, std::move(model)});
}

}  // namespace mslab

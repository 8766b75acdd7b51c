#pragma once

// Model snapshots as JSON: trunk/head layer dims plus flat value arrays.
// Loading reconstructs the net against the same env/config and overwrites
// parameter values in place.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfn/io_util.hpp"
#include "gfn/model.hpp"
#include "gfn/version.hpp"

namespace gfn {

inline void save_model_json(const std::filesystem::path& path, const MlpGfn& model) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["dims"] = model.net().dims();
  j["flow_mode"] = to_string(model.flow_mode());
  j["backward_mode"] = to_string(model.backward_mode());
  nlohmann::json layers = nlohmann::json::array();
  const auto& net = model.net();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    nlohmann::json layer;
    layer["w"] = net.weight(l)->values;
    layer["b"] = net.bias(l)->values;
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  write_file(path, j.dump(2) + "\n");
}

inline void load_model_json(const std::filesystem::path& path, MlpGfn& model) {
  const auto j = nlohmann::json::parse(read_file(path));
  const auto dims = j.at("dims").get<std::vector<std::size_t>>();
  if (dims != model.net().dims())
    throw std::runtime_error("model snapshot dims do not match the configured model");
  const auto& layers = j.at("layers");
  if (layers.size() != model.net().layer_count())
    throw std::runtime_error("model snapshot layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].at("w").get<std::vector<double>>();
    auto b = layers[l].at("b").get<std::vector<double>>();
    auto& net = model.net();
    if (w.size() != net.weight(l)->values.size() || b.size() != net.bias(l)->values.size())
      throw std::runtime_error("model snapshot layer size mismatch");
    net.weight(l)->values = std::move(w);
    net.bias(l)->values = std::move(b);
  }
}

}  // namespace gfn

#pragma once

// Checkpoint format: a JSON manifest listing each named tensor with its
// shape and byte offset, plus one blob of little-endian float64 values,
// row-major, tensors back to back in manifest order.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "baae/io.hpp"
#include "baae/networks.hpp"

namespace baae {

struct NamedTensor {
  std::string name;
  const Tensor* tensor;
};

inline std::vector<NamedTensor> named_tensors(const BaaeParams& p) {
  std::vector<NamedTensor> out;
  auto add_mlp = [&](const MlpParams& m, const std::string& prefix) {
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      const std::string base = prefix + "." + std::to_string(k);
      out.push_back({base + ".weight", &m.layers[k].weight});
      out.push_back({base + ".bias", &m.layers[k].bias});
    }
  };
  add_mlp(p.generator, "generator");
  for (std::size_t h = 0; h < p.inference.heads.size(); ++h) {
    add_mlp(p.inference.heads[h], "inference." + std::to_string(h));
  }
  add_mlp(p.visual_disc, "visual_disc");
  add_mlp(p.semantic_disc, "semantic_disc");
  out.push_back({"classifier.weight", &p.classifier.weight});
  if (p.classifier.bias) out.push_back({"classifier.bias", &*p.classifier.bias});
  return out;
}

namespace detail {

inline io::json activations_of(const MlpParams& m) {
  io::json a = io::json::array();
  for (const Layer& l : m.layers) a.push_back(std::string(activation_name(l.activation)));
  return a;
}

inline MlpParams assemble_mlp(const io::json& activations, const std::string& prefix,
                              std::map<std::string, Tensor>& tensors) {
  MlpParams m;
  for (std::size_t k = 0; k < activations.size(); ++k) {
    const std::string base = prefix + "." + std::to_string(k);
    auto take = [&](const std::string& name) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError("tensors", "missing tensor '" + name + "'");
      Tensor t = std::move(it->second);
      tensors.erase(it);
      return t;
    };
    Layer l;
    l.weight = take(base + ".weight");
    l.bias = take(base + ".bias");
    l.activation = parse_activation(activations[k].get<std::string>());
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

}  // namespace detail

/// Writes `<stem>.json` and `<stem>.f64` next to each other. `metadata` is
/// embedded verbatim under "metadata".
inline void save_checkpoint(const std::filesystem::path& manifest_path, const BaaeParams& p,
                            const io::json& metadata = io::json::object()) {
  std::filesystem::path blob_path = manifest_path;
  blob_path.replace_extension(".f64");

  io::json manifest;
  manifest["format"] = "baae-checkpoint";
  manifest["version"] = 1;
  manifest["blob"] = blob_path.filename().string();
  manifest["dims"] = {{"visual", p.dims.visual},
                      {"semantic", p.dims.semantic},
                      {"noise", p.dims.noise},
                      {"classes", p.dims.classes}};
  io::json heads = io::json::array();
  for (const MlpParams& h : p.inference.heads) heads.push_back(detail::activations_of(h));
  manifest["networks"] = {{"generator", detail::activations_of(p.generator)},
                          {"inference", heads},
                          {"visual_disc", detail::activations_of(p.visual_disc)},
                          {"semantic_disc", detail::activations_of(p.semantic_disc)},
                          {"classifier_bias", p.classifier.bias.has_value()}};

  std::string blob;
  io::json entries = io::json::array();
  for (const auto& [name, t] : named_tensors(p)) {
    entries.push_back({{"name", name}, {"shape", t->shape()}, {"offset", blob.size()}});
    blob += io::encode_f64(t->values());
  }
  manifest["tensors"] = entries;
  manifest["metadata"] = metadata;

  io::write_file_atomic(blob_path, blob);
  io::write_json(manifest_path, manifest);
}

struct LoadedCheckpoint {
  BaaeParams params;
  io::json metadata;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  const io::json m = io::read_json(manifest_path);
  if (io::field<std::string>(m, "format", "checkpoint") != "baae-checkpoint") {
    throw DataError("checkpoint.format", "not a baae checkpoint");
  }
  const std::string blob =
      io::read_file(manifest_path.parent_path() / io::field<std::string>(m, "blob", "checkpoint"));

  std::map<std::string, Tensor> tensors;
  for (const auto& e : io::field<io::json>(m, "tensors", "checkpoint")) {
    const auto name = io::field<std::string>(e, "name", "checkpoint.tensors");
    const auto shape = io::field<Tensor::Shape>(e, "shape", "checkpoint.tensors." + name);
    const auto offset = io::field<std::size_t>(e, "offset", "checkpoint.tensors." + name);
    const std::size_t bytes = Tensor::element_count(shape) * 8;
    if (offset + bytes > blob.size()) {
      throw DataError("checkpoint.tensors." + name, "extends past the end of the blob");
    }
    tensors.emplace(name, Tensor(shape, io::decode_f64(std::string_view(blob).substr(offset, bytes),
                                                       "checkpoint.tensors." + name)));
  }

  LoadedCheckpoint out;
  BaaeParams& p = out.params;
  const io::json dims = io::field<io::json>(m, "dims", "checkpoint");
  p.dims = {io::field<std::size_t>(dims, "visual", "checkpoint.dims"),
            io::field<std::size_t>(dims, "semantic", "checkpoint.dims"),
            io::field<std::size_t>(dims, "noise", "checkpoint.dims"),
            io::field<std::size_t>(dims, "classes", "checkpoint.dims")};
  const io::json nets = io::field<io::json>(m, "networks", "checkpoint");
  p.generator = detail::assemble_mlp(nets.at("generator"), "generator", tensors);
  const io::json& heads = nets.at("inference");
  for (std::size_t h = 0; h < heads.size(); ++h) {
    p.inference.heads.push_back(
        detail::assemble_mlp(heads[h], "inference." + std::to_string(h), tensors));
  }
  p.visual_disc = detail::assemble_mlp(nets.at("visual_disc"), "visual_disc", tensors);
  p.semantic_disc = detail::assemble_mlp(nets.at("semantic_disc"), "semantic_disc", tensors);
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint.tensors", "missing tensor '" + name + "'");
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  p.classifier.weight = take("classifier.weight");
  if (nets.value("classifier_bias", false)) p.classifier.bias = take("classifier.bias");
  if (!tensors.empty()) {
    throw DataError("checkpoint.tensors", "unexpected tensor '" + tensors.begin()->first + "'");
  }
  out.metadata = m.value("metadata", io::json::object());
  return out;
}

}  // namespace baae

#pragma once

// Snapshot data model: the trained network as the engine sees it, plus the
// layer grouping that decides which layers are displayed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cnnvis/error.hpp"

namespace cnnvis {

using json = nlohmann::ordered_json;

inline constexpr int kSnapshotVersion = 1;

enum class LayerKind { conv, activation, pooling, fully_connected, normalization, output };

constexpr std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::activation: return "activation";
    case LayerKind::pooling: return "pooling";
    case LayerKind::fully_connected: return "fully-connected";
    case LayerKind::normalization: return "normalization";
    case LayerKind::output: return "output";
  }
  return "conv";
}

inline std::optional<LayerKind> layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::conv, LayerKind::activation, LayerKind::pooling,
                 LayerKind::fully_connected, LayerKind::normalization, LayerKind::output}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, width * height

  bool operator==(const Raster&) const = default;
};

struct PatchRef {
  std::string image_id;
  double activation_score = 0.0;
  std::optional<Raster> pixels;

  bool operator==(const PatchRef&) const = default;
};

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<std::string> neurons;

  bool operator==(const Layer&) const = default;
};

struct WeightedEdge {
  std::string id;
  std::string source;
  std::string target;
  double weight = 0.0;

  bool operator==(const WeightedEdge&) const = default;
};

/// Raw snapshot contents. Tables that are keyed by edge or neuron in the file
/// are stored densely here: `gradients` / `prev_weights` align with `edges`,
/// `activations` and `contributions` align with the global neuron order
/// (layers concatenated in declaration order).
struct SnapshotData {
  std::string id;
  std::vector<Layer> layers;
  std::vector<WeightedEdge> edges;
  std::vector<std::string> classes;
  std::vector<double> activations;  // neuron-major, classes.size() per neuron
  std::optional<std::vector<double>> gradients;
  std::optional<std::vector<double>> prev_weights;
  std::optional<std::vector<double>> contributions;
  std::map<std::string, std::vector<PatchRef>> patches;

  bool operator==(const SnapshotData&) const = default;
};

struct LayerGroup {
  std::vector<std::size_t> member_layers;  // indices into layers, in order
  std::size_t display_layer = 0;

  bool operator==(const LayerGroup&) const = default;
};

namespace detail {

inline std::size_t last_non_norm(const std::vector<std::size_t>& members,
                                 const std::vector<Layer>& layers) {
  for (auto it = members.rbegin(); it != members.rend(); ++it) {
    if (layers[*it].kind != LayerKind::normalization) return *it;
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace detail

/// Pairs every conv / fully-connected layer with the activation (or output)
/// layer that follows it and picks the group's display layer: the last
/// activation layer, else the output, else the pooling, else the FC layer.
inline LayerGroup merge_conv_activation(const LayerGroup& group, const std::vector<Layer>& layers) {
  const auto& m = group.member_layers;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Layer& l = layers[m[i]];
    if (l.kind != LayerKind::conv && l.kind != LayerKind::fully_connected) continue;
    std::size_t j = i + 1;
    while (j < m.size() && layers[m[j]].kind == LayerKind::normalization) ++j;
    if (j == m.size()) continue;
    const Layer& next = layers[m[j]];
    const bool pairs = next.kind == LayerKind::activation ||
                       (l.kind == LayerKind::fully_connected && next.kind == LayerKind::output);
    if (pairs && next.neurons.size() != l.neurons.size()) {
      throw Error(Errc::mapping_mismatch, "layer '" + l.name + "' has " +
                                              std::to_string(l.neurons.size()) + " neurons but '" +
                                              next.name + "' has " +
                                              std::to_string(next.neurons.size()));
    }
  }

  LayerGroup out = group;
  for (auto kind : {LayerKind::activation, LayerKind::output, LayerKind::pooling,
                    LayerKind::fully_connected}) {
    for (auto it = m.rbegin(); it != m.rend(); ++it) {
      if (layers[*it].kind == kind) {
        out.display_layer = *it;
        return out;
      }
    }
  }
  throw Error(Errc::malformed_file,
              "layer group starting at '" + layers[m.front()].name + "' has no displayable layer");
}

/// Splits the layer list into groups closed at each pooling layer. Fully
/// connected layers open their own group; an output layer joins a preceding
/// FC layer.
inline std::vector<LayerGroup> group_layers(const std::vector<Layer>& layers) {
  std::vector<LayerGroup> groups;
  std::vector<std::size_t> cur;
  auto close = [&] {
    if (!cur.empty()) groups.push_back(merge_conv_activation(LayerGroup{cur, 0}, layers));
    cur.clear();
  };
  auto cur_has_fc = [&] {
    for (auto i : cur)
      if (layers[i].kind == LayerKind::fully_connected) return true;
    return false;
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    switch (layers[i].kind) {
      case LayerKind::fully_connected:
        close();
        cur.push_back(i);
        break;
      case LayerKind::conv:
        if (cur_has_fc()) close();
        cur.push_back(i);
        break;
      case LayerKind::normalization:
        cur.push_back(i);
        break;
      case LayerKind::activation: {
        const auto prev = detail::last_non_norm(cur, layers);
        if (prev == static_cast<std::size_t>(-1) ||
            (layers[prev].kind != LayerKind::conv &&
             layers[prev].kind != LayerKind::fully_connected)) {
          throw Error(Errc::orphan_activation,
                      "activation layer '" + layers[i].name + "' has no preceding conv/FC layer");
        }
        cur.push_back(i);
        break;
      }
      case LayerKind::pooling:
        cur.push_back(i);
        close();
        break;
      case LayerKind::output: {
        const auto prev = detail::last_non_norm(cur, layers);
        if (prev == static_cast<std::size_t>(-1) ||
            layers[prev].kind != LayerKind::fully_connected) {
          close();
        }
        cur.push_back(i);
        close();
        break;
      }
    }
  }
  close();
  return groups;
}

/// Immutable, validated snapshot. Construct through `NetworkSnapshot::build`
/// or `parse_snapshot`; share as `std::shared_ptr<const NetworkSnapshot>`.
class NetworkSnapshot {
 public:
  static NetworkSnapshot build(SnapshotData data) {
    NetworkSnapshot s;
    s.data_ = std::move(data);
    s.index();
    s.validate();
    return s;
  }

  const SnapshotData& data() const noexcept { return data_; }
  const std::string& id() const noexcept { return data_.id; }
  const std::vector<Layer>& layers() const noexcept { return data_.layers; }
  const std::vector<WeightedEdge>& edges() const noexcept { return data_.edges; }
  const std::vector<std::string>& classes() const noexcept { return data_.classes; }
  std::size_t class_count() const noexcept { return data_.classes.size(); }
  std::size_t neuron_count() const noexcept { return neuron_ids_.size(); }
  const std::vector<LayerGroup>& groups() const noexcept { return groups_; }

  /// Global neuron index range of a layer: [first, first + size).
  std::size_t layer_offset(std::size_t layer) const { return layer_offsets_.at(layer); }
  std::size_t layer_size(std::size_t layer) const { return data_.layers.at(layer).neurons.size(); }
  std::size_t layer_of(std::size_t neuron) const { return neuron_layer_.at(neuron); }
  const std::string& neuron_id(std::size_t neuron) const { return neuron_ids_.at(neuron); }

  std::optional<std::size_t> find_neuron(std::string_view id) const {
    auto it = neuron_lookup_.find(std::string(id));
    if (it == neuron_lookup_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_edge(std::string_view id) const {
    auto it = edge_lookup_.find(std::string(id));
    if (it == edge_lookup_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_layer(std::string_view name) const {
    for (std::size_t i = 0; i < data_.layers.size(); ++i)
      if (data_.layers[i].name == name) return i;
    return std::nullopt;
  }

  std::span<const double> activation(std::size_t neuron) const {
    const auto m = class_count();
    return std::span<const double>(data_.activations).subspan(neuron * m, m);
  }

  /// Endpoints of an edge as global neuron indices.
  std::size_t edge_source(std::size_t edge) const { return edge_src_.at(edge); }
  std::size_t edge_target(std::size_t edge) const { return edge_dst_.at(edge); }

  /// Index of the group whose display layer is `layer`, if any.
  std::optional<std::size_t> display_group_of(std::size_t layer) const {
    for (std::size_t g = 0; g < groups_.size(); ++g)
      if (groups_[g].display_layer == layer) return g;
    return std::nullopt;
  }

  bool operator==(const NetworkSnapshot& other) const { return data_ == other.data_; }

 private:
  void index() {
    std::size_t n = 0;
    std::set<std::string> names;
    for (std::size_t l = 0; l < data_.layers.size(); ++l) {
      const Layer& layer = data_.layers[l];
      if (layer.name.empty() || !names.insert(layer.name).second)
        throw Error(Errc::malformed_file, "layer names must be non-empty and unique");
      if (layer.neurons.empty())
        throw Error(Errc::malformed_file, "layer '" + layer.name + "' has no neurons");
      layer_offsets_.push_back(n);
      for (const auto& id : layer.neurons) {
        if (!neuron_lookup_.emplace(id, n).second)
          throw Error(Errc::malformed_file, "duplicate neuron id '" + id + "'");
        neuron_ids_.push_back(id);
        neuron_layer_.push_back(l);
        ++n;
      }
    }
    for (std::size_t e = 0; e < data_.edges.size(); ++e) {
      const auto& edge = data_.edges[e];
      if (!edge_lookup_.emplace(edge.id, e).second)
        throw Error(Errc::malformed_file, "duplicate edge id '" + edge.id + "'");
      auto s = find_neuron(edge.source);
      auto t = find_neuron(edge.target);
      if (!s || !t)
        throw Error(Errc::dangling_reference,
                    "edge '" + edge.id + "' references unknown neuron '" +
                        (!s ? edge.source : edge.target) + "'");
      edge_src_.push_back(*s);
      edge_dst_.push_back(*t);
    }
  }

  void validate() {
    if (data_.layers.empty()) throw Error(Errc::malformed_file, "snapshot has no layers");
    if (data_.classes.empty()) throw Error(Errc::malformed_file, "class list is empty");
    if (std::set<std::string>(data_.classes.begin(), data_.classes.end()).size() !=
        data_.classes.size())
      throw Error(Errc::malformed_file, "class list has duplicates");

    if (data_.activations.size() != neuron_count() * class_count())
      throw Error(Errc::missing_activation, "activation table does not cover every neuron/class");
    for (double a : data_.activations)
      if (!std::isfinite(a)) throw Error(Errc::malformed_file, "non-finite activation");

    groups_ = group_layers(data_.layers);

    for (std::size_t e = 0; e < data_.edges.size(); ++e) {
      const auto& edge = data_.edges[e];
      if (!std::isfinite(edge.weight))
        throw Error(Errc::malformed_file, "edge '" + edge.id + "' has a non-finite weight");
      const auto ls = neuron_layer_[edge_src_[e]];
      const auto lt = neuron_layer_[edge_dst_[e]];
      if (ls >= lt)
        throw Error(Errc::malformed_file,
                    "edge '" + edge.id + "' does not go from an earlier to a later layer");
      auto gs = display_group_of(ls);
      auto gt = display_group_of(lt);
      if (!gs || !gt || *gt != *gs + 1)
        throw Error(Errc::malformed_file,
                    "edge '" + edge.id + "' does not connect adjacent display layers");
    }

    auto check_edge_table = [&](const std::optional<std::vector<double>>& t, const char* name) {
      if (!t) return;
      if (t->size() != data_.edges.size())
        throw Error(Errc::malformed_file, std::string(name) + " must cover every edge");
      for (double v : *t)
        if (!std::isfinite(v)) throw Error(Errc::malformed_file, std::string(name) + " non-finite");
    };
    check_edge_table(data_.gradients, "gradients");
    check_edge_table(data_.prev_weights, "prev_weights");
    if (data_.contributions) {
      if (data_.contributions->size() != neuron_count())
        throw Error(Errc::malformed_file, "contributions must cover every neuron");
      for (double v : *data_.contributions)
        if (!std::isfinite(v)) throw Error(Errc::malformed_file, "contributions non-finite");
    }
    for (const auto& [nid, refs] : data_.patches) {
      if (!find_neuron(nid))
        throw Error(Errc::dangling_reference, "patches reference unknown neuron '" + nid + "'");
      for (const auto& p : refs) {
        if (!std::isfinite(p.activation_score))
          throw Error(Errc::malformed_file, "patch score for '" + nid + "' is not finite");
        if (p.pixels && (p.pixels->width <= 0 || p.pixels->height <= 0 ||
                         p.pixels->values.size() !=
                             static_cast<std::size_t>(p.pixels->width * p.pixels->height)))
          throw Error(Errc::malformed_file, "patch raster for '" + nid + "' has bad dimensions");
      }
    }
  }

  SnapshotData data_;
  std::vector<std::size_t> layer_offsets_;
  std::vector<std::string> neuron_ids_;
  std::vector<std::size_t> neuron_layer_;
  std::unordered_map<std::string, std::size_t> neuron_lookup_;
  std::unordered_map<std::string, std::size_t> edge_lookup_;
  std::vector<std::size_t> edge_src_;
  std::vector<std::size_t> edge_dst_;
  std::vector<LayerGroup> groups_;
};

inline std::vector<LayerGroup> group_layers(const NetworkSnapshot& s) { return group_layers(s.layers()); }

// ---------------------------------------------------------------------------
// File format

namespace detail {

[[noreturn]] inline void malformed(const std::string& what) { throw Error(Errc::malformed_file, what); }

inline const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) malformed(std::string("missing key '") + key + "'");
  return obj.at(key);
}

inline std::string as_string(const json& v, const char* what) {
  if (!v.is_string()) malformed(std::string(what) + " must be a string");
  return v.get<std::string>();
}

inline double as_number(const json& v, const char* what) {
  if (!v.is_number()) malformed(std::string(what) + " must be a number");
  return v.get<double>();
}

inline std::map<std::string, double> as_number_table(const json& v, const char* what) {
  if (!v.is_object()) malformed(std::string(what) + " must be an object");
  std::map<std::string, double> out;
  for (const auto& [k, x] : v.items()) out[k] = as_number(x, what);
  return out;
}

}  // namespace detail

inline NetworkSnapshot snapshot_from_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) malformed("snapshot must be an object");
  const auto& version = require(doc, "version");
  if (!version.is_number_integer() || version.get<int>() != kSnapshotVersion)
    malformed("unsupported snapshot version");

  SnapshotData d;
  d.id = doc.contains("id") ? as_string(doc.at("id"), "id") : std::string("snapshot");

  const auto& classes = require(doc, "classes");
  if (!classes.is_array()) malformed("classes must be an array");
  for (const auto& c : classes) d.classes.push_back(as_string(c, "class label"));

  const auto& layers = require(doc, "layers");
  if (!layers.is_array()) malformed("layers must be an array");
  for (const auto& l : layers) {
    Layer layer;
    layer.name = as_string(require(l, "name"), "layer name");
    auto kind = layer_kind_from_string(as_string(require(l, "kind"), "layer kind"));
    if (!kind) malformed("unknown layer kind in '" + layer.name + "'");
    layer.kind = *kind;
    const auto& neurons = require(l, "neurons");
    if (!neurons.is_array()) malformed("neurons must be an array");
    for (const auto& n : neurons) layer.neurons.push_back(as_string(n, "neuron id"));
    d.layers.push_back(std::move(layer));
  }

  const auto& edges = require(doc, "edges");
  if (!edges.is_array()) malformed("edges must be an array");
  for (const auto& e : edges) {
    d.edges.push_back(WeightedEdge{as_string(require(e, "id"), "edge id"),
                                   as_string(require(e, "source"), "edge source"),
                                   as_string(require(e, "target"), "edge target"),
                                   as_number(require(e, "weight"), "edge weight")});
  }

  // Activations: one dense block per layer in the block's declared order.
  const std::size_t m = d.classes.size();
  std::unordered_map<std::string, std::size_t> global;
  std::size_t total = 0;
  for (const auto& l : d.layers)
    for (const auto& n : l.neurons) global.emplace(n, total++);
  d.activations.assign(total * m, 0.0);
  std::vector<char> seen(total, 0);
  const auto& acts = require(doc, "activations");
  if (!acts.is_object()) malformed("activations must be an object");
  for (const auto& [layer_name, block] : acts.items()) {
    const auto& neurons = require(block, "neurons");
    const auto& values = require(block, "values");
    if (!neurons.is_array() || !values.is_array()) malformed("activation block must hold arrays");
    if (values.size() != neurons.size() * m)
      malformed("activation block '" + layer_name + "' has wrong value count");
    for (std::size_t i = 0; i < neurons.size(); ++i) {
      const auto nid = as_string(neurons[i], "neuron id");
      auto it = global.find(nid);
      if (it == global.end())
        throw Error(Errc::dangling_reference, "activations reference unknown neuron '" + nid + "'");
      if (seen[it->second]) malformed("neuron '" + nid + "' has two activation rows");
      seen[it->second] = 1;
      for (std::size_t c = 0; c < m; ++c)
        d.activations[it->second * m + c] = as_number(values[i * m + c], "activation");
    }
  }
  for (std::size_t i = 0; i < total; ++i)
    if (!seen[i]) throw Error(Errc::missing_activation, "neuron without an activation row");

  auto edge_table = [&](const char* key) -> std::optional<std::vector<double>> {
    if (!doc.contains(key)) return std::nullopt;
    auto table = as_number_table(doc.at(key), key);
    std::vector<double> out;
    out.reserve(d.edges.size());
    for (const auto& e : d.edges) {
      auto it = table.find(e.id);
      if (it == table.end()) malformed(std::string(key) + " missing edge '" + e.id + "'");
      out.push_back(it->second);
      table.erase(it);
    }
    if (!table.empty())
      throw Error(Errc::dangling_reference,
                  std::string(key) + " references unknown edge '" + table.begin()->first + "'");
    return out;
  };
  d.gradients = edge_table("gradients");
  d.prev_weights = edge_table("prev_weights");

  if (doc.contains("contributions")) {
    auto table = as_number_table(doc.at("contributions"), "contributions");
    std::vector<double> out(total, 0.0);
    for (const auto& [nid, v] : table) {
      auto it = global.find(nid);
      if (it == global.end())
        throw Error(Errc::dangling_reference, "contributions reference unknown neuron '" + nid + "'");
      out[it->second] = v;
    }
    if (table.size() != total) malformed("contributions must cover every neuron");
    d.contributions = std::move(out);
  }

  if (doc.contains("patches")) {
    const auto& patches = doc.at("patches");
    if (!patches.is_object()) malformed("patches must be an object");
    for (const auto& [nid, list] : patches.items()) {
      if (!list.is_array()) malformed("patch list must be an array");
      auto& refs = d.patches[nid];
      for (const auto& p : list) {
        PatchRef ref;
        ref.image_id = as_string(require(p, "image_id"), "image_id");
        ref.activation_score = as_number(require(p, "activation_score"), "activation_score");
        if (p.contains("pixels")) {
          const auto& px = p.at("pixels");
          Raster r;
          r.width = static_cast<int>(as_number(require(px, "width"), "width"));
          r.height = static_cast<int>(as_number(require(px, "height"), "height"));
          const auto& vals = require(px, "values");
          if (!vals.is_array()) malformed("pixel values must be an array");
          for (const auto& v : vals) r.values.push_back(as_number(v, "pixel"));
          ref.pixels = std::move(r);
        }
        refs.push_back(std::move(ref));
      }
    }
  }

  return NetworkSnapshot::build(std::move(d));
}

/// Parses and validates a snapshot document.
inline NetworkSnapshot parse_snapshot(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_file, e.what());
  }
  try {
    return snapshot_from_json(doc);
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_file, e.what());
  }
}

inline json snapshot_to_json(const NetworkSnapshot& s) {
  const auto& d = s.data();
  json doc;
  doc["version"] = kSnapshotVersion;
  doc["id"] = d.id;
  doc["classes"] = d.classes;
  json layers = json::array();
  for (const auto& l : d.layers)
    layers.push_back({{"name", l.name}, {"kind", std::string(to_string(l.kind))}, {"neurons", l.neurons}});
  doc["layers"] = std::move(layers);
  json edges = json::array();
  for (const auto& e : d.edges)
    edges.push_back({{"id", e.id}, {"source", e.source}, {"target", e.target}, {"weight", e.weight}});
  doc["edges"] = std::move(edges);

  const auto m = s.class_count();
  json acts = json::object();
  for (std::size_t l = 0; l < d.layers.size(); ++l) {
    const auto off = s.layer_offset(l);
    const auto n = s.layer_size(l);
    json values = json::array();
    for (std::size_t i = 0; i < n * m; ++i) values.push_back(d.activations[off * m + i]);
    acts[d.layers[l].name] = {{"neurons", d.layers[l].neurons}, {"values", std::move(values)}};
  }
  doc["activations"] = std::move(acts);

  auto edge_table = [&](const std::optional<std::vector<double>>& t, const char* key) {
    if (!t) return;
    json obj = json::object();
    for (std::size_t e = 0; e < d.edges.size(); ++e) obj[d.edges[e].id] = (*t)[e];
    doc[key] = std::move(obj);
  };
  edge_table(d.gradients, "gradients");
  edge_table(d.prev_weights, "prev_weights");
  if (d.contributions) {
    json obj = json::object();
    for (std::size_t n = 0; n < s.neuron_count(); ++n) obj[s.neuron_id(n)] = (*d.contributions)[n];
    doc["contributions"] = std::move(obj);
  }
  if (!d.patches.empty()) {
    json obj = json::object();
    for (const auto& [nid, refs] : d.patches) {
      json list = json::array();
      for (const auto& p : refs) {
        json item = {{"image_id", p.image_id}, {"activation_score", p.activation_score}};
        if (p.pixels)
          item["pixels"] = {{"width", p.pixels->width},
                            {"height", p.pixels->height},
                            {"values", p.pixels->values}};
        list.push_back(std::move(item));
      }
      obj[nid] = std::move(list);
    }
    doc["patches"] = std::move(obj);
  }
  return doc;
}

inline std::string serialize_snapshot(const NetworkSnapshot& s) { return snapshot_to_json(s).dump(); }

/// The top-5 patch references of a neuron: descending score, ties by image id.
inline std::vector<PatchRef> top_patches(const NetworkSnapshot& s, std::string_view neuron,
                                         std::size_t count = 5) {
  if (!s.find_neuron(neuron)) throw Error(Errc::unknown_neuron, std::string(neuron));
  auto it = s.data().patches.find(std::string(neuron));
  if (it == s.data().patches.end()) return {};
  auto refs = it->second;
  std::stable_sort(refs.begin(), refs.end(), [](const PatchRef& a, const PatchRef& b) {
    if (a.activation_score != b.activation_score) return a.activation_score > b.activation_score;
    return a.image_id < b.image_id;
  });
  if (refs.size() > count) refs.resize(count);
  return refs;
}

}  // namespace cnnvis

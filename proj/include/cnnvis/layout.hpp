#pragma once

// Assembles the hybrid visualization: one column per display layer holding
// cluster nodes (packed features, seriated matrix, optional contribution
// bars), in-between columns of bicluster nodes, and the debug series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cnnvis/bicluster.hpp"
#include "cnnvis/cluster.hpp"
#include "cnnvis/error.hpp"
#include "cnnvis/pack.hpp"
#include "cnnvis/seriation.hpp"
#include "cnnvis/snapshot.hpp"

namespace cnnvis {

inline constexpr const char* kLayoutSchema = "layout.v1";
inline constexpr double kColumnSpacing = 300.0;
inline constexpr double kNodeWidth = 120.0;
inline constexpr double kRowUnit = 16.0;
inline constexpr double kNodePadding = 16.0;
inline constexpr double kNodeGap = 24.0;

enum class ClusterMethod { meanshift, kmeans };
enum class Facet { features, matrix, contribution };
enum class DebugKind { avg_gradient, avg_rel_change };

inline const char* to_string(ClusterMethod m) { return m == ClusterMethod::kmeans ? "kmeans" : "meanshift"; }
inline const char* to_string(Facet f) {
  switch (f) {
    case Facet::features: return "features";
    case Facet::matrix: return "matrix";
    case Facet::contribution: return "contribution";
  }
  return "?";
}
inline const char* to_string(EdgeFacet f) {
  switch (f) {
    case EdgeFacet::weight: return "weight";
    case EdgeFacet::gradient: return "gradient";
    case EdgeFacet::relative_change: return "relativeChange";
  }
  return "?";
}
inline const char* to_string(DebugKind k) { return k == DebugKind::avg_gradient ? "avgGradient" : "avgRelChange"; }
inline const char* to_string(ImportanceMode m) {
  switch (m) {
    case ImportanceMode::avg_activation: return "avgActivation";
    case ImportanceMode::max_activation: return "maxActivation";
    case ImportanceMode::contribution: return "contribution";
  }
  return "?";
}

inline Facet facet_from_string(std::string_view s) {
  if (s == "features") return Facet::features;
  if (s == "matrix") return Facet::matrix;
  if (s == "contribution") return Facet::contribution;
  throw Error(Errc::invalid_argument, "unknown facet '" + std::string(s) + "'");
}
inline EdgeFacet edge_facet_from_string(std::string_view s) {
  if (s == "weight") return EdgeFacet::weight;
  if (s == "gradient") return EdgeFacet::gradient;
  if (s == "relativeChange") return EdgeFacet::relative_change;
  throw Error(Errc::invalid_argument, "unknown edge facet '" + std::string(s) + "'");
}
inline DebugKind debug_kind_from_string(std::string_view s) {
  if (s == "avgGradient") return DebugKind::avg_gradient;
  if (s == "avgRelChange") return DebugKind::avg_rel_change;
  throw Error(Errc::invalid_argument, "unknown debug series '" + std::string(s) + "'");
}
inline ImportanceMode importance_from_string(std::string_view s) {
  if (s == "avgActivation") return ImportanceMode::avg_activation;
  if (s == "maxActivation") return ImportanceMode::max_activation;
  if (s == "contribution") return ImportanceMode::contribution;
  throw Error(Errc::invalid_argument, "unknown importance mode '" + std::string(s) + "'");
}

struct LayoutParams {
  ClusterMethod method = ClusterMethod::meanshift;
  std::optional<std::size_t> kmeans_k;  // default_k per layer when empty
  std::optional<double> bandwidth;      // default_bandwidth per layer when empty
  std::uint64_t seed = 1;
  std::size_t representatives = kDefaultRepresentatives;
  ImportanceMode importance = ImportanceMode::avg_activation;
  std::size_t pack_limit = kPackLimit;
  std::size_t hk_limit = kHeldKarpLimit;
  double highlight_quantile = 0.25;

  bool operator==(const LayoutParams&) const = default;
};

struct ViewState {
  Facet facet = Facet::features;
  EdgeFacet edge_facet = EdgeFacet::weight;
  std::vector<std::size_t> classes;  // sorted class indices; empty = all
  std::optional<double> tau;
  std::optional<double> stop;

  bool operator==(const ViewState&) const = default;
};

struct ClusterPayload {
  Packing packing;
  RowOrder order;
  std::optional<std::vector<std::pair<std::size_t, double>>> contribution;  // representative, score

  bool operator==(const ClusterPayload&) const = default;
};

struct ColumnState {
  std::size_t group = 0;
  std::size_t layer = 0;
  double x = 0.0;
  LayerClustering clustering;
  std::map<std::size_t, ClusterPayload> payloads;  // by cluster id
  std::vector<std::size_t> order;                  // cluster ids top to bottom
  std::map<std::size_t, Region> bounds;            // by cluster id
  std::set<std::size_t> highlighted;               // global neuron ids

  bool operator==(const ColumnState&) const = default;
};

struct GapState {
  std::vector<std::size_t> edges;  // snapshot edge indices between the two columns
  std::vector<ClusterEdge> connections;
  BundleSet bundles;
  BundleGeometry geometry;

  bool operator==(const GapState&) const = default;
};

struct LayoutDocument {
  std::string snapshot_id;
  LayoutParams params;
  ViewState view;
  std::vector<ColumnState> columns;
  std::vector<GapState> gaps;  // gaps[i] joins columns i and i + 1
  std::optional<std::vector<std::optional<double>>> avg_gradient;
  std::optional<std::vector<std::optional<double>>> avg_rel_change;

  bool operator==(const LayoutDocument&) const = default;
};

using ClusteringOverrides = std::map<std::size_t, LayerClustering>;

// ---------------------------------------------------------------------------
// Building blocks

inline RowMatrix layer_vectors(const NetworkSnapshot& s, std::size_t layer, std::vector<std::size_t>& neurons) {
  const auto first = s.layer_offset(layer), n = s.layer_size(layer);
  RowMatrix v(n, s.class_count());
  neurons.clear();
  for (std::size_t i = 0; i < n; ++i) {
    neurons.push_back(first + i);
    auto a = s.activation(first + i);
    std::copy(a.begin(), a.end(), v.row(i).begin());
  }
  return v;
}

inline LayerClustering cluster_layer(const NetworkSnapshot& s, std::size_t layer, const LayoutParams& p) {
  std::vector<std::size_t> neurons;
  RowMatrix v = layer_vectors(s, layer, neurons);
  Assignment a;
  if (p.method == ClusterMethod::kmeans) {
    // A global k larger than a small layer is clamped to that layer's size.
    const std::size_t k = std::min(p.kmeans_k.value_or(default_k(v.rows)), v.rows);
    a = kmeans(v, k, p.seed);
  } else {
    a = meanshift(v, p.bandwidth.value_or(default_bandwidth(v)));
  }
  return LayerClustering(layer, std::move(neurons), std::move(v), a.labels, p.representatives);
}

inline std::vector<std::optional<double>> debug_series(const NetworkSnapshot& s, DebugKind kind) {
  const auto& d = s.data();
  const auto& table = kind == DebugKind::avg_gradient ? d.gradients : d.prev_weights;
  if (!table) throw Error(Errc::missing_facet_data, std::string("snapshot lacks data for ") + to_string(kind));
  std::vector<double> w(d.edges.size());
  for (std::size_t e = 0; e < w.size(); ++e) w[e] = d.edges[e].weight;
  const auto values = edge_facet(w, d.gradients, d.prev_weights,
                                 kind == DebugKind::avg_gradient ? EdgeFacet::gradient : EdgeFacet::relative_change);
  std::vector<std::vector<double>> incoming(s.groups().size());
  for (std::size_t e = 0; e < values.size(); ++e) {
    const auto g = s.display_group_of(s.layer_of(s.edge_target(e)));
    incoming[*g].push_back(values[e]);
  }
  std::vector<std::optional<double>> out;
  for (const auto& xs : incoming) out.push_back(xs.empty() ? std::nullopt : std::optional<double>(mean(xs)));
  return out;
}

namespace detail {

inline bool all_classes(const ViewState& v, std::size_t m) { return v.classes.empty() || v.classes.size() == m; }

inline Packing cluster_packing(const NetworkSnapshot& s, const LayerClustering& lc, const NeuronCluster& c,
                               const LayoutParams& p, const ViewState& v) {
  ClusterPackInput in;
  in.vectors = RowMatrix(c.representatives.size(), s.class_count());
  std::vector<double> imp;
  const auto& contrib = s.data().contributions;
  for (std::size_t i = 0; i < c.representatives.size(); ++i) {
    const auto n = c.representatives[i];
    in.neurons.push_back(n);
    auto a = lc.vector_of(n);
    std::copy(a.begin(), a.end(), in.vectors.row(i).begin());
    imp.push_back(importance(a, v.classes, p.importance,
                             contrib ? std::optional<double>((*contrib)[n]) : std::nullopt));
  }
  in.sides = quantize_sizes(imp);
  return pack_cluster(in, p.pack_limit);
}

inline RowOrder cluster_order(const LayerClustering& lc, const NeuronCluster& c, const LayoutParams& p) {
  RowMatrix v(c.members.size(), lc.vectors().cols);
  for (std::size_t i = 0; i < c.members.size(); ++i) {
    auto a = lc.vector_of(c.members[i]);
    std::copy(a.begin(), a.end(), v.row(i).begin());
  }
  return dnc_order(c.members, v, p.hk_limit);
}

inline std::optional<std::vector<std::pair<std::size_t, double>>> cluster_contribution(const NetworkSnapshot& s,
                                                                                       const NeuronCluster& c,
                                                                                       const ViewState& v) {
  if (v.facet != Facet::contribution) return std::nullopt;
  const auto& contrib = s.data().contributions;
  if (!contrib) throw Error(Errc::missing_contribution_data, "snapshot has no contribution scores");
  std::vector<std::pair<std::size_t, double>> out;
  for (auto n : c.representatives) out.emplace_back(n, (*contrib)[n]);
  return out;
}

struct PayloadParts {
  bool packing = true;
  bool order = true;
  bool contribution = true;
};

inline void refresh_payload(const NetworkSnapshot& s, ColumnState& col, std::size_t cluster_id, const LayoutParams& p,
                            const ViewState& v, PayloadParts parts = {}) {
  const auto& c = col.clustering.cluster(cluster_id);
  auto& pl = col.payloads[cluster_id];
  if (parts.packing) pl.packing = cluster_packing(s, col.clustering, c, p, v);
  if (parts.order) pl.order = cluster_order(col.clustering, c, p);
  if (parts.contribution) pl.contribution = cluster_contribution(s, c, v);
}

inline void refresh_highlight(ColumnState& col, const ViewState& v, const LayoutParams& p, std::size_t m) {
  if (all_classes(v, m)) {
    col.highlighted = std::set<std::size_t>(col.clustering.neurons().begin(), col.clustering.neurons().end());
  } else {
    col.highlighted = filter_by_classes(col.clustering, v.classes, p.highlight_quantile);
  }
}

inline void refresh_connections(const NetworkSnapshot& s, const std::vector<ColumnState>& cols, std::size_t g,
                                GapState& gap) {
  std::vector<MemberEdge> members;
  for (auto e : gap.edges) {
    const auto src = cols[g].clustering.cluster_of(s.edge_source(e));
    const auto dst = cols[g + 1].clustering.cluster_of(s.edge_target(e));
    members.push_back({e, *src, *dst, s.edges()[e].weight});
  }
  gap.connections = aggregate_connections(members);
}

inline void refresh_bundles(GapState& gap, const ViewState& v) {
  gap.bundles = extract_biclusters(gap.connections, BiclusterParams{v.tau, v.stop});
}

// Cluster order inside a column: column 0 by id; later columns by the
// barycenter of connected clusters in the previous column, weighted by the
// summed absolute weight of the member edges. Unconnected clusters go last.
inline void order_columns(std::vector<ColumnState>& cols, const std::vector<GapState>& gaps) {
  for (std::size_t c = 0; c < cols.size(); ++c) {
    auto& col = cols[c];
    col.order.clear();
    if (c == 0) {
      for (const auto& cl : col.clustering.clusters()) col.order.push_back(cl.id);
      std::sort(col.order.begin(), col.order.end());
      continue;
    }
    std::map<std::size_t, double> rank;
    for (std::size_t r = 0; r < cols[c - 1].order.size(); ++r) rank[cols[c - 1].order[r]] = static_cast<double>(r);
    std::map<std::size_t, std::pair<double, double>> acc;  // weighted rank sum, weight
    for (const auto& ce : gaps[c - 1].connections) {
      const double w = ce.w_pos * static_cast<double>(ce.n_pos) - ce.w_neg * static_cast<double>(ce.n_neg);
      auto& a = acc[ce.target];
      a.first += rank.at(ce.source) * w;
      a.second += w;
    }
    std::vector<std::tuple<int, double, std::size_t>> keyed;
    for (const auto& cl : col.clustering.clusters()) {
      auto it = acc.find(cl.id);
      if (it == acc.end() || it->second.second <= 0.0)
        keyed.emplace_back(1, 0.0, cl.id);
      else
        keyed.emplace_back(0, it->second.first / it->second.second, cl.id);
    }
    std::sort(keyed.begin(), keyed.end());
    for (const auto& k : keyed) col.order.push_back(std::get<2>(k));
  }
}

inline void place_nodes(std::vector<ColumnState>& cols) {
  for (auto& col : cols) {
    col.bounds.clear();
    double y = 0.0;
    for (auto id : col.order) {
      const auto shown = static_cast<double>(col.clustering.cluster(id).representatives.size());
      const double h = kRowUnit * shown + kNodePadding;
      col.bounds[id] = Region{col.x - kNodeWidth / 2.0, y, kNodeWidth, h};
      y += h + kNodeGap;
    }
  }
}

}  // namespace detail

/// Positions, in-between nodes and curves from the current clusterings,
/// payloads and bundles. Shared by the full and the incremental path.
inline void finalize_geometry(const NetworkSnapshot& s, LayoutDocument& doc) {
  detail::order_columns(doc.columns, doc.gaps);
  detail::place_nodes(doc.columns);

  const auto& d = s.data();
  std::vector<double> w(d.edges.size());
  for (std::size_t e = 0; e < w.size(); ++e) w[e] = d.edges[e].weight;
  const auto facet = edge_facet(w, d.gradients, d.prev_weights, doc.view.edge_facet);
  const bool raw = doc.view.edge_facet == EdgeFacet::weight;

  for (std::size_t g = 0; g < doc.gaps.size(); ++g) {
    auto& gap = doc.gaps[g];
    std::map<std::size_t, double> sy, ty;
    for (const auto& [id, r] : doc.columns[g].bounds) sy[id] = r.y + r.height / 2.0;
    for (const auto& [id, r] : doc.columns[g + 1].bounds) ty[id] = r.y + r.height / 2.0;
    auto facet_of = [&](const ClusterEdge& ce) -> std::pair<double, double> {
      if (raw) return {ce.w_pos, ce.w_neg};
      double pos = 0.0, neg = 0.0;
      std::size_t np = 0, nn = 0;
      for (auto e : ce.member_edges) {
        if (w[e] > 0.0) {
          pos += facet[e];
          ++np;
        } else if (w[e] < 0.0) {
          neg += facet[e];
          ++nn;
        }
      }
      return {np ? pos / static_cast<double>(np) : 0.0, nn ? neg / static_cast<double>(nn) : 0.0};
    };
    gap.geometry = bundle_geometry(gap.bundles, gap.connections, sy, ty, doc.columns[g].x, doc.columns[g + 1].x, facet_of);
  }
}

namespace detail {

inline std::vector<std::size_t> gap_edges(const NetworkSnapshot& s, std::size_t g) {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < s.edges().size(); ++e)
    if (s.display_group_of(s.layer_of(s.edge_source(e))) == g) out.push_back(e);
  return out;
}

inline void normalize_view(ViewState& v, std::size_t m) {
  std::sort(v.classes.begin(), v.classes.end());
  v.classes.erase(std::unique(v.classes.begin(), v.classes.end()), v.classes.end());
  for (auto c : v.classes)
    if (c >= m) throw Error(Errc::invalid_argument, "class index out of range");
  if (v.tau && !(*v.tau > 0.0)) throw Error(Errc::invalid_argument, "tau must be positive");
  if (v.stop && !(*v.stop > 0.0)) throw Error(Errc::invalid_argument, "stop must be positive");
}

}  // namespace detail

/// Full computation. Clusterings listed in `overrides` (by column) replace
/// the clustering step so edited states can be recomputed from scratch.
inline LayoutDocument assemble(const NetworkSnapshot& s, const LayoutParams& params, ViewState view,
                               const ClusteringOverrides& overrides = {}) {
  if (params.representatives < 1) throw Error(Errc::count_underflow, "representative count must be >= 1");
  if (params.pack_limit < 2 || params.hk_limit < 2) throw Error(Errc::invalid_argument, "limits must be >= 2");
  detail::normalize_view(view, s.class_count());
  LayoutDocument doc;
  doc.snapshot_id = s.id();
  doc.params = params;
  doc.view = view;

  for (std::size_t g = 0; g < s.groups().size(); ++g) {
    ColumnState col;
    col.group = g;
    col.layer = s.groups()[g].display_layer;
    col.x = kColumnSpacing * static_cast<double>(g);
    auto it = overrides.find(g);
    col.clustering = it != overrides.end() ? it->second : cluster_layer(s, col.layer, params);
    for (const auto& c : col.clustering.clusters()) detail::refresh_payload(s, col, c.id, params, view);
    detail::refresh_highlight(col, view, params, s.class_count());
    doc.columns.push_back(std::move(col));
  }
  for (std::size_t g = 0; g + 1 < doc.columns.size(); ++g) {
    GapState gap;
    gap.edges = detail::gap_edges(s, g);
    detail::refresh_connections(s, doc.columns, g, gap);
    detail::refresh_bundles(gap, view);
    doc.gaps.push_back(std::move(gap));
  }
  if (s.data().gradients) doc.avg_gradient = debug_series(s, DebugKind::avg_gradient);
  if (s.data().prev_weights) doc.avg_rel_change = debug_series(s, DebugKind::avg_rel_change);
  finalize_geometry(s, doc);
  return doc;
}

inline ClusteringOverrides clusterings_of(const LayoutDocument& doc) {
  ClusteringOverrides out;
  for (std::size_t c = 0; c < doc.columns.size(); ++c) out.emplace(c, doc.columns[c].clustering);
  return out;
}

// ---------------------------------------------------------------------------
// Interactions

struct MoveNeuron {
  std::string neuron;
  std::optional<std::size_t> target;  // empty = new cluster
};
struct SetFacet {
  Facet facet = Facet::features;
};
struct SelectClasses {
  std::vector<std::string> classes;  // empty = all
};
struct SetTau {
  std::optional<double> tau;
  std::optional<double> stop;
};
struct SetEdgeFacet {
  EdgeFacet facet = EdgeFacet::weight;
};
struct ResizeCluster {
  std::string layer;
  std::size_t cluster = 0;
  long delta = 0;
};

using Command = std::variant<MoveNeuron, SetFacet, SelectClasses, SetTau, SetEdgeFacet, ResizeCluster>;

inline std::size_t column_of_layer(const LayoutDocument& doc, std::size_t layer) {
  for (std::size_t c = 0; c < doc.columns.size(); ++c)
    if (doc.columns[c].layer == layer) return c;
  throw Error(Errc::not_found, "layer is not displayed");
}

/// Applies one command, recomputing only what depends on it.
inline LayoutDocument apply_interaction(const NetworkSnapshot& s, const LayoutDocument& doc, const Command& cmd) {
  LayoutDocument out = doc;
  const auto& p = out.params;
  const std::size_t m = s.class_count();

  if (const auto* mv = std::get_if<MoveNeuron>(&cmd)) {
    const auto n = s.find_neuron(mv->neuron);
    if (!n) throw Error(Errc::unknown_neuron, "unknown neuron '" + mv->neuron + "'");
    std::size_t c = 0;
    try {
      c = column_of_layer(out, s.layer_of(*n));
    } catch (const Error&) {
      throw Error(Errc::unknown_neuron, "neuron '" + mv->neuron + "' is not in a display layer");
    }
    auto& col = out.columns[c];
    const auto source = *col.clustering.cluster_of(*n);
    const auto fresh = col.clustering.next_id();
    col.clustering = col.clustering.move_neuron(*n, mv->target, p.representatives);
    std::set<std::size_t> touched{source, mv->target.value_or(fresh)};
    for (auto id : touched) {
      bool alive = false;
      for (const auto& cl : col.clustering.clusters()) alive = alive || cl.id == id;
      if (alive)
        detail::refresh_payload(s, col, id, p, out.view);
      else
        col.payloads.erase(id);
    }
    if (c > 0) {
      detail::refresh_connections(s, out.columns, c - 1, out.gaps[c - 1]);
      detail::refresh_bundles(out.gaps[c - 1], out.view);
    }
    if (c + 1 < out.columns.size()) {
      detail::refresh_connections(s, out.columns, c, out.gaps[c]);
      detail::refresh_bundles(out.gaps[c], out.view);
    }
  } else if (const auto* sf = std::get_if<SetFacet>(&cmd)) {
    const bool had = out.view.facet == Facet::contribution, has = sf->facet == Facet::contribution;
    out.view.facet = sf->facet;
    if (had != has)
      for (auto& col : out.columns)
        for (const auto& cl : col.clustering.clusters())
          detail::refresh_payload(s, col, cl.id, p, out.view, {false, false, true});
  } else if (const auto* sc = std::get_if<SelectClasses>(&cmd)) {
    ViewState v = out.view;
    v.classes.clear();
    for (const auto& name : sc->classes) {
      auto it = std::find(s.classes().begin(), s.classes().end(), name);
      if (it == s.classes().end()) throw Error(Errc::invalid_argument, "unknown class '" + name + "'");
      v.classes.push_back(static_cast<std::size_t>(it - s.classes().begin()));
    }
    detail::normalize_view(v, m);
    out.view = v;
    for (auto& col : out.columns) {
      for (const auto& cl : col.clustering.clusters())
        detail::refresh_payload(s, col, cl.id, p, out.view, {true, false, false});
      detail::refresh_highlight(col, out.view, p, m);
    }
  } else if (const auto* st = std::get_if<SetTau>(&cmd)) {
    ViewState v = out.view;
    v.tau = st->tau;
    v.stop = st->stop;
    detail::normalize_view(v, m);
    out.view = v;
    for (auto& gap : out.gaps) detail::refresh_bundles(gap, out.view);
  } else if (const auto* ef = std::get_if<SetEdgeFacet>(&cmd)) {
    const auto& d = s.data();
    if (ef->facet == EdgeFacet::gradient && !d.gradients)
      throw Error(Errc::missing_facet_data, "snapshot has no gradients");
    if (ef->facet == EdgeFacet::relative_change && !d.prev_weights)
      throw Error(Errc::missing_facet_data, "snapshot has no previous weights");
    out.view.edge_facet = ef->facet;
  } else if (const auto* rc = std::get_if<ResizeCluster>(&cmd)) {
    const auto layer = s.find_layer(rc->layer);
    if (!layer) throw Error(Errc::not_found, "unknown layer '" + rc->layer + "'");
    auto& col = out.columns[column_of_layer(out, *layer)];
    col.clustering = col.clustering.resize_cluster_view(rc->cluster, rc->delta);
    detail::refresh_payload(s, col, rc->cluster, p, out.view);
  }
  finalize_geometry(s, out);
  return out;
}

// ---------------------------------------------------------------------------
// layout.v1 serialization

namespace detail {

inline json region_json(const Region& r) { return json{{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}}; }

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json series_json(const std::optional<std::vector<std::optional<double>>>& s) {
  if (!s) return json(nullptr);
  json a = json::array();
  for (const auto& v : *s) a.push_back(opt_json(v));
  return a;
}

}  // namespace detail

inline json layout_to_json(const NetworkSnapshot& s, const LayoutDocument& doc) {
  const auto nid = [&](std::size_t n) { return s.neuron_id(n); };
  json j;
  j["schema"] = kLayoutSchema;
  j["snapshotId"] = doc.snapshot_id;
  j["classes"] = s.classes();

  const auto& p = doc.params;
  json params;
  params["method"] = to_string(p.method);
  params["kmeansK"] = p.kmeans_k ? json(*p.kmeans_k) : json(nullptr);
  params["bandwidth"] = detail::opt_json(p.bandwidth);
  params["seed"] = p.seed;
  params["representatives"] = p.representatives;
  params["importance"] = to_string(p.importance);
  params["packLimit"] = p.pack_limit;
  params["hkLimit"] = p.hk_limit;
  params["highlightQuantile"] = p.highlight_quantile;
  j["params"] = params;

  json view;
  view["facet"] = to_string(doc.view.facet);
  view["edgeFacet"] = to_string(doc.view.edge_facet);
  json sel = json::array();
  for (auto c : doc.view.classes) sel.push_back(s.classes()[c]);
  view["classes"] = sel;
  view["tau"] = detail::opt_json(doc.view.tau);
  view["stop"] = detail::opt_json(doc.view.stop);
  j["view"] = view;

  json columns = json::array();
  for (std::size_t c = 0; c < doc.columns.size(); ++c) {
    const auto& col = doc.columns[c];
    json cj;
    cj["index"] = c;
    cj["layer"] = s.layers()[col.layer].name;
    cj["kind"] = to_string(s.layers()[col.layer].kind);
    cj["x"] = col.x;
    json clusters = json::array();
    for (auto id : col.order) {
      const auto& cl = col.clustering.cluster(id);
      const auto& pl = col.payloads.at(id);
      json k;
      k["id"] = id;
      k["bounds"] = detail::region_json(col.bounds.at(id));
      json members = json::array(), reps = json::array(), translucent = json::array();
      for (auto n : cl.members) {
        members.push_back(nid(n));
        if (!col.highlighted.count(n)) translucent.push_back(nid(n));
      }
      for (auto n : cl.representatives) reps.push_back(nid(n));
      k["members"] = members;
      k["representatives"] = reps;
      k["translucent"] = translucent;
      k["centroid"] = cl.centroid;
      json rects = json::array();
      for (const auto& r : pl.packing.rects)
        rects.push_back(json{{"neuron", nid(r.neuron)}, {"side", r.side}, {"x", r.x}, {"y", r.y}, {"size", r.size}});
      k["packing"] = json{{"width", pl.packing.width}, {"height", pl.packing.height}, {"rects", rects}};
      json rows = json::array(), cells = json::array();
      for (auto n : pl.order.order) {
        rows.push_back(nid(n));
        auto a = col.clustering.vector_of(n);
        cells.push_back(std::vector<double>(a.begin(), a.end()));
      }
      k["matrix"] = json{{"rows", rows}, {"objective", pl.order.objective}, {"cells", cells}};
      if (pl.contribution) {
        json bars = json::array();
        for (const auto& [n, v] : *pl.contribution) bars.push_back(json{{"neuron", nid(n)}, {"value", v}});
        k["contribution"] = bars;
      }
      clusters.push_back(k);
    }
    cj["clusters"] = clusters;
    columns.push_back(cj);
  }
  j["columns"] = columns;

  json between = json::array(), curves = json::array(), direct = json::array();
  for (std::size_t g = 0; g < doc.gaps.size(); ++g) {
    const auto& gap = doc.gaps[g];
    std::map<std::pair<std::size_t, std::size_t>, const ClusterEdge*> by_pair;
    for (const auto& ce : gap.connections) by_pair[{ce.source, ce.target}] = &ce;
    if (!gap.bundles.biclusters.empty()) {
      json nodes = json::array();
      for (std::size_t i = 0; i < gap.bundles.biclusters.size(); ++i) {
        const auto& b = gap.bundles.biclusters[i];
        const auto& node = gap.geometry.nodes[i];
        json pairs = json::array();
        for (const auto& [a, t] : b.member_edges) pairs.push_back(json::array({a, t}));
        nodes.push_back(json{{"id", b.id},
                             {"round", b.round},
                             {"x", node.position.x},
                             {"y", node.position.y},
                             {"sign", to_string(b.sign)},
                             {"anchorWeight", b.anchor_weight},
                             {"posNegRatio", b.pos_neg_ratio},
                             {"inputs", b.inputs},
                             {"outputs", b.outputs},
                             {"memberEdges", pairs}});
      }
      json col;
      col["gap"] = g;
      col["x"] = (doc.columns[g].x + doc.columns[g + 1].x) / 2.0;
      col["tau"] = gap.bundles.tau;
      col["stop"] = gap.bundles.stop;
      col["nodes"] = nodes;
      between.push_back(col);
    }
    for (const auto& cv : gap.geometry.curves)
      curves.push_back(json{{"gap", g},
                            {"bicluster", cv.bicluster},
                            {"direction", cv.incoming ? "in" : "out"},
                            {"cluster", cv.cluster},
                            {"positive", detail::opt_json(cv.positive)},
                            {"negative", detail::opt_json(cv.negative)}});
    for (const auto& r : gap.bundles.residual)
      direct.push_back(json{{"gap", g},
                            {"source", r.edge.source},
                            {"target", r.edge.target},
                            {"sign", to_string(r.edge.sign)},
                            {"weight", r.edge.sign == Sign::positive ? r.edge.magnitude : -r.edge.magnitude},
                            {"memberCount", r.edge.sign == Sign::positive ? by_pair.at({r.edge.source, r.edge.target})->n_pos
                                                                          : by_pair.at({r.edge.source, r.edge.target})->n_neg},
                            {"hidden", r.hidden}});
  }
  j["inBetweenColumns"] = between;
  j["curves"] = curves;
  j["directEdges"] = direct;
  j["debugSeries"] = json{{"avgGradient", detail::series_json(doc.avg_gradient)},
                          {"avgRelChange", detail::series_json(doc.avg_rel_change)}};
  return j;
}

inline std::string serialize_layout(const NetworkSnapshot& s, const LayoutDocument& doc) {
  return layout_to_json(s, doc).dump();
}

// ---------------------------------------------------------------------------
// Command JSON

inline Command command_from_json(const json& c) {
  if (!c.is_object() || !c.contains("type") || !c["type"].is_string())
    throw Error(Errc::invalid_argument, "command needs a string 'type'");
  const auto type = c["type"].get<std::string>();
  try {
    if (type == "moveNeuron") {
      MoveNeuron m{c.at("neuron").get<std::string>(), std::nullopt};
      const auto& t = c.at("target");
      if (!(t.is_string() && t.get<std::string>() == "new")) m.target = t.get<std::size_t>();
      return m;
    }
    if (type == "setFacet") return SetFacet{facet_from_string(c.at("facet").get<std::string>())};
    if (type == "selectClasses") return SelectClasses{c.at("classes").get<std::vector<std::string>>()};
    if (type == "setTau") {
      SetTau t;
      if (c.contains("tau") && !c["tau"].is_null()) t.tau = c["tau"].get<double>();
      if (c.contains("stop") && !c["stop"].is_null()) t.stop = c["stop"].get<double>();
      return t;
    }
    if (type == "setEdgeFacet") return SetEdgeFacet{edge_facet_from_string(c.at("edgeFacet").get<std::string>())};
    if (type == "resizeCluster")
      return ResizeCluster{c.at("layer").get<std::string>(), c.at("cluster").get<std::size_t>(), c.at("delta").get<long>()};
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad command: ") + e.what());
  }
  throw Error(Errc::invalid_argument, "unknown command type '" + type + "'");
}

inline json command_to_json(const Command& cmd) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MoveNeuron>)
          return json{{"type", "moveNeuron"}, {"neuron", c.neuron}, {"target", c.target ? json(*c.target) : json("new")}};
        else if constexpr (std::is_same_v<T, SetFacet>)
          return json{{"type", "setFacet"}, {"facet", to_string(c.facet)}};
        else if constexpr (std::is_same_v<T, SelectClasses>)
          return json{{"type", "selectClasses"}, {"classes", c.classes}};
        else if constexpr (std::is_same_v<T, SetTau>)
          return json{{"type", "setTau"}, {"tau", detail::opt_json(c.tau)}, {"stop", detail::opt_json(c.stop)}};
        else if constexpr (std::is_same_v<T, SetEdgeFacet>)
          return json{{"type", "setEdgeFacet"}, {"edgeFacet", to_string(c.facet)}};
        else
          return json{{"type", "resizeCluster"}, {"layer", c.layer}, {"cluster", c.cluster}, {"delta", c.delta}};
      },
      cmd);
}

}  // namespace cnnvis

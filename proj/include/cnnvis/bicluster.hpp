#pragma once

// Edge bundling by weighted biclustering: aggregate neuron edges per cluster
// pair, then repeatedly take the strongest remaining connection, select the
// same-sign connections of similar strength and promote their closed
// itemsets to in-between nodes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "cnnvis/error.hpp"

namespace cnnvis {

enum class Sign { positive, negative };

inline const char* to_string(Sign s) { return s == Sign::positive ? "positive" : "negative"; }

struct MemberEdge {
  std::size_t index = 0;   // caller's edge index
  std::size_t source = 0;  // source cluster id
  std::size_t target = 0;  // target cluster id
  double weight = 0.0;
};

struct ClusterEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  double w_pos = 0.0;
  double w_neg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::vector<std::size_t> member_edges;  // caller's edge indices, ascending

  bool operator==(const ClusterEdge&) const = default;
};

/// Group member edges by (source cluster, target cluster); positive and
/// negative weights are averaged separately and zero weights are ignored.
inline std::vector<ClusterEdge> aggregate_connections(std::span<const MemberEdge> edges) {
  std::map<std::pair<std::size_t, std::size_t>, ClusterEdge> acc;
  for (const auto& e : edges) {
    auto& ce = acc[{e.source, e.target}];
    ce.source = e.source;
    ce.target = e.target;
    ce.member_edges.push_back(e.index);
    if (e.weight > 0.0) {
      ce.w_pos += e.weight;
      ++ce.n_pos;
    } else if (e.weight < 0.0) {
      ce.w_neg += e.weight;
      ++ce.n_neg;
    }
  }
  std::vector<ClusterEdge> out;
  for (auto& [key, ce] : acc) {
    if (ce.n_pos) ce.w_pos /= static_cast<double>(ce.n_pos);
    if (ce.n_neg) ce.w_neg /= static_cast<double>(ce.n_neg);
    std::sort(ce.member_edges.begin(), ce.member_edges.end());
    out.push_back(std::move(ce));
  }
  return out;
}

/// One signed half of a cluster edge, the unit the rounds work on.
struct SignedEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  Sign sign = Sign::positive;
  double magnitude = 0.0;

  auto key() const { return std::tuple(source, target, sign); }
  bool operator==(const SignedEdge&) const = default;
};

inline std::vector<SignedEdge> signed_edges(std::span<const ClusterEdge> edges) {
  std::vector<SignedEdge> out;
  for (const auto& e : edges) {
    if (e.n_pos) out.push_back({e.source, e.target, Sign::positive, e.w_pos});
    if (e.n_neg) out.push_back({e.source, e.target, Sign::negative, -e.w_neg});
  }
  return out;
}

struct Biclique {
  std::vector<std::size_t> inputs;   // sorted
  std::vector<std::size_t> outputs;  // sorted

  bool operator==(const Biclique&) const = default;
  auto operator<=>(const Biclique&) const = default;
};

using PairSet = std::set<std::pair<std::size_t, std::size_t>>;

namespace detail {

inline std::vector<std::size_t> common_inputs(const std::map<std::size_t, std::set<std::size_t>>& out_of,
                                              const std::vector<std::size_t>& outputs) {
  std::vector<std::size_t> inputs;
  for (const auto& [in, outs] : out_of)
    if (std::all_of(outputs.begin(), outputs.end(), [&](std::size_t o) { return outs.count(o) != 0; }))
      inputs.push_back(in);
  return inputs;
}

inline std::vector<std::size_t> common_outputs(const std::map<std::size_t, std::set<std::size_t>>& out_of,
                                               const std::vector<std::size_t>& inputs) {
  std::vector<std::size_t> outputs;
  if (inputs.empty()) return outputs;
  for (auto o : out_of.at(inputs.front()))
    if (std::all_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return out_of.at(i).count(o) != 0; }))
      outputs.push_back(o);
  return outputs;
}

inline std::map<std::size_t, std::set<std::size_t>> adjacency(const PairSet& edges) {
  std::map<std::size_t, std::set<std::size_t>> out_of;
  for (const auto& [s, t] : edges) out_of[s].insert(t);
  return out_of;
}

}  // namespace detail

inline constexpr std::size_t kAprioriLevelCap = 65536;

/// Closed itemsets via intersection closure: every closed output set is the
/// intersection of the neighbourhoods of some nonempty set of inputs.
inline std::vector<Biclique> closed_bicliques_by_closure(const PairSet& edges) {
  const auto out_of = detail::adjacency(edges);
  std::set<std::vector<std::size_t>> closed;
  for (const auto& [in, outs] : out_of) {
    std::vector<std::size_t> base(outs.begin(), outs.end());
    std::set<std::vector<std::size_t>> fresh{base};
    for (const auto& c : closed) {
      std::vector<std::size_t> inter;
      std::set_intersection(c.begin(), c.end(), base.begin(), base.end(), std::back_inserter(inter));
      if (!inter.empty()) fresh.insert(inter);
    }
    closed.insert(fresh.begin(), fresh.end());
  }
  std::vector<Biclique> out;
  for (const auto& outputs : closed) out.push_back({detail::common_inputs(out_of, outputs), outputs});
  std::sort(out.begin(), out.end());
  return out;
}

/// Closed itemsets by Apriori level-wise growth. Items are output clusters,
/// transactions are input clusters; every itemset with nonempty support is
/// grown and kept when no single extra item preserves its support. Falls back
/// to the closure route if a level grows past kAprioriLevelCap candidates.
inline std::vector<Biclique> closed_bicliques(const PairSet& edges) {
  const auto out_of = detail::adjacency(edges);
  std::set<std::size_t> items;
  for (const auto& [s, t] : edges) items.insert(t);

  std::vector<Biclique> out;
  std::vector<std::vector<std::size_t>> level;
  for (auto i : items) level.push_back({i});
  while (!level.empty()) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& itemset : level) {
      const auto support = detail::common_inputs(out_of, itemset);
      if (support.empty()) continue;
      next.push_back(itemset);
    }
    // `next` holds the frequent itemsets of this level, lexicographically sorted.
    for (const auto& itemset : next) {
      const auto support = detail::common_inputs(out_of, itemset);
      if (detail::common_outputs(out_of, support).size() == itemset.size()) out.push_back({support, itemset});
    }
    std::vector<std::vector<std::size_t>> grown;
    for (std::size_t a = 0; a < next.size(); ++a)
      for (std::size_t b = a + 1; b < next.size(); ++b) {
        const auto& x = next[a];
        const auto& y = next[b];
        if (!std::equal(x.begin(), x.end() - 1, y.begin())) break;
        auto cand = x;
        cand.push_back(y.back());
        grown.push_back(std::move(cand));
        if (grown.size() > kAprioriLevelCap) return closed_bicliques_by_closure(edges);
      }
    level = std::move(grown);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Bicluster {
  std::size_t id = 0;
  std::size_t round = 0;
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> outputs;
  Sign sign = Sign::positive;
  double anchor_weight = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> member_edges;  // covered (source, target) pairs
  double pos_neg_ratio = 1.0;

  bool operator==(const Bicluster&) const = default;
};

struct ResidualEdge {
  SignedEdge edge;
  bool hidden = true;  // below the stop threshold

  bool operator==(const ResidualEdge&) const = default;
};

struct BundleSet {
  std::vector<Bicluster> biclusters;
  std::vector<ResidualEdge> residual;
  double tau = 0.0;
  double stop = 0.0;

  bool operator==(const BundleSet&) const = default;
};

struct BiclusterParams {
  std::optional<double> tau;   // default 0.25 * first-round w_max
  std::optional<double> stop;  // default 0.1 * first-round w_max
};

/// Round-based extraction. `miner` maps the selected edge set of a round to
/// its closed bicliques; tests swap in a brute-force enumerator.
template <class Miner>
BundleSet extract_biclusters_with(std::span<const ClusterEdge> edges, const BiclusterParams& params, Miner&& miner) {
  BundleSet out;
  auto remaining = signed_edges(edges);
  // Strongest first; ties: positive before negative, then (source, target).
  std::sort(remaining.begin(), remaining.end(), [](const SignedEdge& a, const SignedEdge& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    if (a.sign != b.sign) return a.sign == Sign::positive;
    return std::pair(a.source, a.target) < std::pair(b.source, b.target);
  });
  const double initial = remaining.empty() ? 0.0 : remaining.front().magnitude;
  out.tau = params.tau.value_or(0.25 * initial);
  out.stop = params.stop.value_or(0.1 * initial);
  if (!(out.tau > 0.0) && !remaining.empty()) throw Error(Errc::invalid_argument, "tau must be positive");
  if (!(out.stop > 0.0) && !remaining.empty()) throw Error(Errc::invalid_argument, "stop must be positive");

  std::map<std::pair<std::size_t, std::size_t>, const ClusterEdge*> by_pair;
  for (const auto& e : edges) by_pair[{e.source, e.target}] = &e;

  std::size_t round = 0;
  while (!remaining.empty() && remaining.front().magnitude >= out.stop) {
    const SignedEdge anchor = remaining.front();
    PairSet selected;
    for (const auto& e : remaining)
      if (e.sign == anchor.sign && std::abs(e.magnitude - anchor.magnitude) < out.tau) selected.insert({e.source, e.target});

    auto found = miner(selected);
    std::erase_if(found, [](const Biclique& b) { return b.inputs.size() < 2 && b.outputs.size() < 2; });
    std::stable_sort(found.begin(), found.end(), [](const Biclique& a, const Biclique& b) {
      return a.inputs.size() * a.outputs.size() > b.inputs.size() * b.outputs.size();
    });

    PairSet covered;
    for (const auto& b : found) {
      Bicluster bc;
      for (auto i : b.inputs)
        for (auto o : b.outputs)
          if (!covered.count({i, o})) bc.member_edges.emplace_back(i, o);
      if (bc.member_edges.empty()) continue;
      covered.insert(bc.member_edges.begin(), bc.member_edges.end());
      bc.id = out.biclusters.size();
      bc.round = round;
      bc.inputs = b.inputs;
      bc.outputs = b.outputs;
      bc.sign = anchor.sign;
      bc.anchor_weight = anchor.magnitude;
      std::size_t pos = 0, all = 0;
      for (const auto& pr : bc.member_edges) {
        const auto* ce = by_pair.at(pr);
        pos += ce->n_pos;
        all += ce->n_pos + ce->n_neg;
      }
      bc.pos_neg_ratio = all ? static_cast<double>(pos) / static_cast<double>(all) : 0.0;
      out.biclusters.push_back(std::move(bc));
    }

    const bool anchor_covered = covered.count({anchor.source, anchor.target}) != 0;
    std::erase_if(remaining, [&](const SignedEdge& e) {
      return e.sign == anchor.sign && covered.count({e.source, e.target}) != 0;
    });
    if (!anchor_covered) {
      // Nothing bundles the anchor: it stays a plain, visible edge.
      out.residual.push_back({anchor, false});
      remaining.erase(remaining.begin());
    }
    ++round;
  }
  for (const auto& e : remaining) out.residual.push_back({e, true});
  return out;
}

inline BundleSet extract_biclusters(std::span<const ClusterEdge> edges, const BiclusterParams& params = {}) {
  return extract_biclusters_with(edges, params, [](const PairSet& s) { return closed_bicliques(s); });
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct BundleNode {
  std::size_t bicluster = 0;
  Point position;
  double pos_neg_ratio = 1.0;
  Sign sign = Sign::positive;

  bool operator==(const BundleNode&) const = default;
};

struct Curve {
  std::size_t bicluster = 0;
  bool incoming = true;   // input cluster -> node, otherwise node -> output cluster
  std::size_t cluster = 0;
  std::optional<double> positive;  // aggregated weight of the positive curve
  std::optional<double> negative;  // aggregated weight of the negative curve

  bool operator==(const Curve&) const = default;
};

struct BundleGeometry {
  std::vector<BundleNode> nodes;
  std::vector<Curve> curves;

  bool operator==(const BundleGeometry&) const = default;
};

/// In-between nodes sit midway between the two columns; their height is the
/// mean of the member cluster heights weighted by covered-edge incidence.
/// `facet_value` maps a ClusterEdge to the (positive, negative) scalars its
/// curves carry; absent halves leave the curve side empty.
template <class Facet>
BundleGeometry bundle_geometry(const BundleSet& bundles, std::span<const ClusterEdge> edges,
                               const std::map<std::size_t, double>& source_y, const std::map<std::size_t, double>& target_y,
                               double source_x, double target_x, Facet&& facet_value) {
  std::map<std::pair<std::size_t, std::size_t>, const ClusterEdge*> by_pair;
  for (const auto& e : edges) by_pair[{e.source, e.target}] = &e;
  auto lookup = [](const std::map<std::size_t, double>& m, std::size_t id) {
    auto it = m.find(id);
    if (it == m.end()) throw Error(Errc::missing_position, "cluster " + std::to_string(id) + " has no position");
    return it->second;
  };

  BundleGeometry g;
  for (const auto& b : bundles.biclusters) {
    std::map<std::size_t, std::size_t> in_deg, out_deg;
    for (const auto& [s, t] : b.member_edges) {
      ++in_deg[s];
      ++out_deg[t];
    }
    double wy = 0.0, w = 0.0;
    for (const auto& [id, d] : in_deg) {
      wy += lookup(source_y, id) * static_cast<double>(d);
      w += static_cast<double>(d);
    }
    for (const auto& [id, d] : out_deg) {
      wy += lookup(target_y, id) * static_cast<double>(d);
      w += static_cast<double>(d);
    }
    g.nodes.push_back({b.id, {(source_x + target_x) / 2.0, wy / w}, b.pos_neg_ratio, b.sign});

    auto side = [&](bool incoming, const std::map<std::size_t, std::size_t>& deg) {
      for (const auto& [id, d] : deg) {
        double pos = 0.0, neg = 0.0;
        std::size_t np = 0, nn = 0;
        for (const auto& pr : b.member_edges) {
          if ((incoming ? pr.first : pr.second) != id) continue;
          const auto* ce = by_pair.at(pr);
          const auto [fp, fn] = facet_value(*ce);
          if (ce->n_pos) {
            pos += fp;
            ++np;
          }
          if (ce->n_neg) {
            neg += fn;
            ++nn;
          }
        }
        Curve c{b.id, incoming, id, std::nullopt, std::nullopt};
        if (np) c.positive = pos / static_cast<double>(np);
        if (nn) c.negative = neg / static_cast<double>(nn);
        g.curves.push_back(c);
      }
    };
    side(true, in_deg);
    side(false, out_deg);
  }
  return g;
}

enum class EdgeFacet { weight, gradient, relative_change };

inline constexpr double kRelativeChangeEps = 1e-12;

/// Per-edge scalar for colour encoding. `prev` and `gradients` align with
/// `weights`; the facet's table must be present.
inline std::vector<double> edge_facet(std::span<const double> weights, const std::optional<std::vector<double>>& gradients,
                                      const std::optional<std::vector<double>>& prev, EdgeFacet facet) {
  std::vector<double> out(weights.size());
  switch (facet) {
    case EdgeFacet::weight:
      std::copy(weights.begin(), weights.end(), out.begin());
      break;
    case EdgeFacet::gradient:
      if (!gradients) throw Error(Errc::missing_facet_data, "snapshot has no gradients");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs((*gradients)[i]);
      break;
    case EdgeFacet::relative_change:
      if (!prev) throw Error(Errc::missing_facet_data, "snapshot has no previous weights");
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::abs(weights[i] - (*prev)[i]) / (std::abs((*prev)[i]) + kRelativeChangeEps);
      break;
  }
  return out;
}

}  // namespace cnnvis

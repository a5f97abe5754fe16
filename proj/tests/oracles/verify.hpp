#pragma once

// The oracle suite behind `cnnvis verify`: every derived property checked
// against an independent reference at a size that runs in seconds.

#include <chrono>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cnnvis/bicluster.hpp"
#include "cnnvis/cluster.hpp"
#include "cnnvis/fixture.hpp"
#include "cnnvis/layout.hpp"
#include "cnnvis/modularity.hpp"
#include "cnnvis/pack.hpp"
#include "cnnvis/seriation.hpp"
#include "cnnvis/snapshot.hpp"
#include "oracles/oracles.hpp"

namespace cnnvis::verify {

using Rng = std::mt19937_64;

struct Check {
  std::string name;
  std::function<std::string()> run;  // empty string = pass
};

inline RowMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RowMatrix m(rows, cols);
  for (double& v : m.values) v = u(rng);
  return m;
}

inline RowMatrix random_similarity(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s(i, j) = s(j, i) = u(rng);
  return s;
}

inline std::vector<SquareItem> random_squares(Rng& rng, std::size_t max_n) {
  std::uniform_int_distribution<std::size_t> count(1, max_n);
  std::uniform_int_distribution<int> side(1, 3);
  std::vector<SquareItem> items;
  const auto n = count(rng);
  for (std::size_t i = 0; i < n; ++i) items.push_back({i, side(rng)});
  return items;
}

/// Random cluster-edge graph over <= 5 x 5 clusters with <= `max_edges`
/// connections; weights drawn from a few levels so that ties and tolerance
/// windows actually occur.
inline std::vector<ClusterEdge> random_cluster_edges(Rng& rng, std::size_t max_edges) {
  std::uniform_int_distribution<std::size_t> side(1, 5), count(1, max_edges);
  std::uniform_int_distribution<int> level(1, 4), signs(0, 5);
  const auto ni = side(rng), no = side(rng);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < ni; ++i)
    for (std::size_t o = 0; o < no; ++o) all.emplace_back(i, o);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(all.size(), count(rng)));
  std::sort(all.begin(), all.end());
  std::vector<ClusterEdge> out;
  for (const auto& [i, o] : all) {
    ClusterEdge e;
    e.source = i;
    e.target = 100 + o;
    const int s = signs(rng);
    if (s != 0) {
      e.n_pos = 1;
      e.w_pos = 0.25 * level(rng);
    }
    if (s <= 1) {
      e.n_neg = 1;
      e.w_neg = -0.25 * level(rng);
    }
    out.push_back(e);
  }
  return out;
}

inline std::string same_bundles(const BundleSet& got, const oracle::OracleBundles& want) {
  std::vector<oracle::OracleBicluster> g;
  for (const auto& b : got.biclusters) g.push_back({b.inputs, b.outputs, b.sign, b.member_edges});
  auto w = want.biclusters;
  std::sort(g.begin(), g.end());
  std::sort(w.begin(), w.end());
  if (g != w) return "bicluster sets differ (" + std::to_string(g.size()) + " vs " + std::to_string(w.size()) + ")";
  if (got.residual.size() != want.residual.size()) return "residual sizes differ";
  for (std::size_t i = 0; i < want.residual.size(); ++i) {
    const auto& r = got.residual[i];
    if (std::make_tuple(r.edge.source, r.edge.target, r.edge.sign, r.hidden) != want.residual[i])
      return "residual edge " + std::to_string(i) + " differs";
  }
  return {};
}

inline std::string check_seriation(Rng& rng, std::size_t trials) {
  std::uniform_int_distribution<std::size_t> size(2, 9);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto sim = random_similarity(rng, size(rng));
    const auto got = held_karp_order(sim);
    const double want = oracle::best_path_objective(sim);
    if (std::abs(got.objective - want) > 1e-12) return "objective " + std::to_string(got.objective) + " vs " + std::to_string(want);
    auto sorted = got.order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (sorted[i] != i) return "order is not a permutation";
  }
  return {};
}

inline std::string check_pack_exact(Rng& rng, std::size_t trials) {
  for (std::size_t t = 0; t < trials; ++t) {
    const auto items = random_squares(rng, 6);
    const auto p = pack_exact(items);
    std::vector<int> sides;
    for (const auto& it : items) sides.push_back(it.side);
    const int want = oracle::min_enclosing_area(sides);
    if (static_cast<int>(p.area()) != want) return "area " + std::to_string(p.area()) + " vs " + std::to_string(want);
    if (auto v = oracle::packing_violation(p); !v.empty()) return v;
    if (p.rects.size() != items.size()) return "lost a rectangle";
  }
  return {};
}

inline ClusterPackInput random_pack_input(Rng& rng, std::size_t n) {
  ClusterPackInput in;
  in.vectors = random_matrix(rng, n, 4);
  std::vector<double> imp;
  for (std::size_t i = 0; i < n; ++i) {
    in.neurons.push_back(i * 3 + 1);
    imp.push_back(in.vectors(i, 0));
  }
  in.sides = quantize_sizes(imp);
  return in;
}

inline std::string check_pack_cluster(Rng& rng, std::size_t trials) {
  std::uniform_int_distribution<std::size_t> size(1, 40);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto in = random_pack_input(rng, size(rng));
    const auto p = pack_cluster(in);
    if (auto v = oracle::packing_violation(p); !v.empty()) return v;
    if (p.rects.size() != in.neurons.size()) return "lost a rectangle";
  }
  return {};
}

inline std::string check_biclusters(Rng& rng, std::size_t trials) {
  for (std::size_t t = 0; t < trials; ++t) {
    const auto edges = random_cluster_edges(rng, 12);
    const auto got = extract_biclusters(edges);
    const auto want = oracle::bundles(edges, got.tau, got.stop);
    if (auto v = same_bundles(got, want); !v.empty()) return "trial " + std::to_string(t) + ": " + v;
  }
  return {};
}

inline std::string check_activation_means(std::uint64_t seed, std::size_t nets) {
  const char* shapes[] = {"c3k3-r-p-f4-r-f3-o", "c2k3-r-p-c3k3-r-p-f3-o", "f5-r-f3-o", "c4k2-r-n-p-f3-o"};
  const std::size_t inputs[] = {6, 10, 4, 7};
  for (std::size_t k = 0; k < nets; ++k) {
    fixture::FixtureSpec f;
    f.shape = shapes[k % 4];
    f.input_size = inputs[k % 4];
    f.classes = 3;
    f.per_class = 1 + k % 4;
    f.seed = seed + k;
    const auto fx = fixture::generate(f);
    const auto want = oracle::class_means(fx.net, fx.data);
    const auto& got = fx.snapshot.data().activations;
    if (got.size() != want.size()) return "table sizes differ";
    for (std::size_t i = 0; i < got.size(); ++i)
      if (std::abs(got[i] - want[i]) > 1e-12 * std::max(1.0, std::abs(want[i])))
        return "net " + std::to_string(k) + " entry " + std::to_string(i) + " differs";
  }
  return {};
}

/// Random nets with at most 500 parameters and their worst gradient error.
inline double gradient_error(std::uint64_t seed, std::size_t nets, std::size_t* max_params = nullptr) {
  const char* shapes[] = {"f6-r-f3-o", "c3k3-r-p-f5-r-f3-o", "c2k3-r-p-c3k3-r-p-f4-r-f3-o", "c3k3-r-p-f4-r-f1-o",
                          "c4k2-r-n-p-f5-r-f1-o"};
  const std::size_t inputs[] = {4, 6, 10, 6, 7};
  const fixture::LossKind losses[] = {fixture::LossKind::cross_entropy, fixture::LossKind::cross_entropy,
                                      fixture::LossKind::cross_entropy, fixture::LossKind::hinge,
                                      fixture::LossKind::hinge};
  double worst = 0;
  for (std::size_t k = 0; k < nets; ++k) {
    const auto j = k % 5;
    const std::size_t classes = losses[j] == fixture::LossKind::hinge ? 2 : 3;
    fixture::TinyNet net(inputs[j], fixture::parse_shape(shapes[j]), classes, losses[j]);
    net.randomize(seed + k);
    if (max_params) *max_params = std::max(*max_params, net.parameter_count());
    const auto data = fixture::make_dataset(inputs[j], classes, 1, seed + 7 * k);
    const auto& img = data[k % data.size()];
    const auto analytic = fixture::backward(net, img).flat();
    const auto numeric = oracle::numeric_gradient(net, img, 1e-5);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  }
  return worst;
}

inline std::vector<Check> checks() {
  std::vector<Check> out;
  auto add = [&](std::string name, std::function<std::string()> f) { out.push_back({std::move(name), std::move(f)}); };

  add("convolve matches direct double loop", [] {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
      const auto in = random_matrix(rng, 6, 6, -1, 1);
      const auto w = random_matrix(rng, 3, 3, -1, 1);
      fixture::Grid gi(6, 6, in.values), gw(3, 3, w.values);
      const auto a = fixture::convolve(gi, gw), b = oracle::convolve(gi, gw);
      for (std::size_t i = 0; i < a.values.size(); ++i)
        if (std::abs(a.values[i] - b.values[i]) > 1e-12) return std::string("convolution differs");
    }
    return std::string();
  });
  add("max_pool matches brute-force window max", [] {
    Rng rng(12);
    for (int t = 0; t < 20; ++t) {
      fixture::Grid g(8, 6, random_matrix(rng, 8, 6, -1, 1).values);
      if (fixture::max_pool(g).values != oracle::max_pool(g).values) return std::string("pooling differs");
    }
    return std::string();
  });
  add("cross-entropy gradient equals o - t", [] {
    Rng rng(13);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> z(4), onehot(4, 0.0);
      for (double& v : z) v = u(rng);
      onehot[static_cast<std::size_t>(t % 4)] = 1;
      const auto o = fixture::softmax(z);
      for (std::size_t i = 0; i < 4; ++i) {
        auto zp = z, zm = z;
        zp[i] += 1e-6;
        zm[i] -= 1e-6;
        const double num =
            (fixture::cross_entropy(fixture::softmax(zp), onehot).value - fixture::cross_entropy(fixture::softmax(zm), onehot).value) /
            2e-6;
        if (std::abs(num - (o[i] - onehot[i])) > 1e-6) return std::string("logit gradient differs");
      }
    }
    return std::string();
  });
  add("backward matches central differences", [] {
    const double err = gradient_error(21, 5);
    return err < 1e-4 ? std::string() : "relative error " + std::to_string(err);
  });
  add("snapshot activations are per-class means", [] { return check_activation_means(31, 4); });
  add("fixture snapshot round-trips through the file format", [] {
    fixture::FixtureSpec f;
    f.emit.patch_pixels = true;
    const auto fx = fixture::generate(f);
    return parse_snapshot(serialize_snapshot(fx.snapshot)) == fx.snapshot ? std::string() : std::string("round trip changed the snapshot");
  });
  add("kmeans finds the exhaustive 2-partition", [] {
    RowMatrix v(4, 2);
    v.values = {1, 0, 0.9, 0.1, 0, 1, 0.1, 0.9};
    const auto a = kmeans(v, 2, 1);
    std::vector<std::size_t> best;
    const double want = oracle::best_sse(v, 2, &best);
    if (std::abs(a.sse - want) > 1e-12) return std::string("SSE is not minimal");
    Rng rng(41);
    for (int t = 0; t < 10; ++t) {
      const auto m = random_matrix(rng, 7, 2);
      const auto r = kmeans(m, 1, 3);
      if (std::abs(r.sse - oracle::best_sse(m, 1)) > 1e-9) return std::string("k=1 SSE differs");
    }
    return std::string();
  });
  add("meanshift matches fixed-point iteration", [] {
    Rng rng(42);
    std::uniform_real_distribution<double> u(0, 10);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> xs(8);
      for (double& x : xs) x = u(rng);
      RowMatrix v(xs.size(), 1);
      v.values = xs;
      const auto got = meanshift(v, 1.0).labels;
      const auto want = oracle::meanshift_1d(xs, 1.0);
      for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < xs.size(); ++j)
          if ((got[i] == got[j]) != (want[i] == want[j])) return std::string("partitions differ");
    }
    return std::string();
  });
  add("representatives are the sorted-distance prefix", [] {
    Rng rng(43);
    for (int t = 0; t < 10; ++t) {
      const auto v = random_matrix(rng, 12, 3);
      std::vector<std::size_t> ids(12), labels(12, 0);
      std::iota(ids.begin(), ids.end(), 100);
      LayerClustering lc(0, ids, v, labels, 12);
      const auto& c = lc.clusters()[0];
      std::vector<std::pair<double, std::size_t>> full;
      for (std::size_t i = 0; i < 12; ++i) {
        double d = 0;
        for (std::size_t k = 0; k < 3; ++k) d += (v(i, k) - c.centroid[k]) * (v(i, k) - c.centroid[k]);
        full.emplace_back(std::sqrt(d), ids[i]);
      }
      std::sort(full.begin(), full.end());
      for (std::size_t r = 1; r <= 12; ++r) {
        const auto reps = select_representatives(lc, c, r);
        for (std::size_t i = 0; i < r; ++i)
          if (reps[i] != full[i].second) return std::string("prefix differs");
      }
    }
    return std::string();
  });
  add("moved neuron's target centroid is the member mean", [] {
    Rng rng(44);
    const auto v = random_matrix(rng, 10, 3);
    std::vector<std::size_t> ids(10), labels(10);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < 10; ++i) labels[i] = i % 3;
    LayerClustering lc(0, ids, v, labels);
    lc = lc.move_neuron(4, 0);
    const auto& c = lc.cluster(0);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0;
      for (auto n : c.members) s += v(n, k);
      if (std::abs(s / c.members.size() - c.centroid[k]) > 1e-12) return std::string("centroid differs");
    }
    return std::string();
  });
  add("class filter matches sort-and-cut", [] {
    Rng rng(45);
    for (int t = 0; t < 10; ++t) {
      const auto v = random_matrix(rng, 15, 4);
      std::vector<std::size_t> ids(15), labels(15, 0);
      std::iota(ids.begin(), ids.end(), 0);
      LayerClustering lc(0, ids, v, labels);
      const std::vector<std::size_t> cls{1, 3};
      const auto got = filter_by_classes(lc, cls, 0.3);
      std::vector<std::pair<double, std::size_t>> s;
      for (std::size_t i = 0; i < 15; ++i) s.emplace_back(-std::max(v(i, 1), v(i, 3)), i);
      std::sort(s.begin(), s.end());
      std::set<std::size_t> want;
      for (std::size_t i = 0; i < 5; ++i) want.insert(s[i].second);
      if (got != want) return std::string("highlight set differs");
    }
    return std::string();
  });
  add("quantized sizes are monotone in importance", [] {
    Rng rng(46);
    std::uniform_int_distribution<int> u(0, 5);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> imp(11);
      for (double& x : imp) x = u(rng);
      const auto s = quantize_sizes(imp);
      for (std::size_t i = 0; i < imp.size(); ++i)
        for (std::size_t j = 0; j < imp.size(); ++j)
          if (imp[i] > imp[j] && s[i] < s[j]) return std::string("monotonicity violated");
    }
    return std::string();
  });
  add("modularity split matches the best partition on two blobs", [] {
    RowMatrix v(6, 2);
    v.values = {1, 0.05, 0.95, 0.1, 0.9, 0.02, 0.05, 1, 0.1, 0.95, 0.02, 0.9};
    const auto w = similarity_graph(v);
    const auto [q, labels] = oracle::best_partition(w);
    const auto parts = greedy_modularity(w);
    std::vector<std::size_t> got(6);
    for (std::size_t p = 0; p < parts.size(); ++p)
      for (auto i : parts[p]) got[i] = p;
    if (std::abs(modularity(w, got) - q) > 1e-12) return std::string("modularity below the optimum");
    const auto tree = split_cluster({0, 1, 2, 3, 4, 5}, v, 4);
    if (tree.children.size() != 2 || tree.children[0].items != std::vector<std::size_t>{0, 1, 2})
      return std::string("split is not at the blob boundary");
    return std::string();
  });
  add("treemap regions tile the bounds", [] {
    Rng rng(47);
    for (int t = 0; t < 20; ++t) {
      const auto v = random_matrix(rng, 30, 3);
      std::vector<std::size_t> ids(30);
      std::iota(ids.begin(), ids.end(), 0);
      const auto tree = split_cluster(ids, v, 5);
      std::vector<const SplitNode*> leaves;
      collect_leaves(tree, leaves);
      std::vector<double> demand;
      for (const auto* l : leaves) demand.push_back(static_cast<double>(l->items.size()));
      const Region b{0, 0, 6, 6};
      if (!oracle::tiles(allocate_areas(tree, demand, b), b)) return std::string("regions do not tile");
    }
    return std::string();
  });
  add("pack_exact is area-optimal for up to 6 squares", [] {
    Rng rng(48);
    return check_pack_exact(rng, 20);
  });
  add("pack_cluster output never overlaps", [] {
    Rng rng(49);
    return check_pack_cluster(rng, 40);
  });
  add("Held-Karp equals exhaustive permutation optimum", [] {
    Rng rng(50);
    return check_seriation(rng, 30);
  });
  add("divide and conquer never loses to the baseline", [] {
    Rng rng(51);
    for (int t = 0; t < 5; ++t) {
      const auto v = random_matrix(rng, 40, 5);
      std::vector<std::size_t> ids(40);
      std::iota(ids.begin(), ids.end(), 0);
      const auto got = dnc_order(ids, v, 8);
      const auto parts = split_once(v);
      std::vector<std::size_t> base;
      for (const auto& p : parts) {
        RowMatrix sub(p.size(), v.cols);
        for (std::size_t i = 0; i < p.size(); ++i)
          std::copy(v.row(p[i]).begin(), v.row(p[i]).end(), sub.row(i).begin());
        for (auto id : dnc_order(p, sub, 8).order) base.push_back(id);
      }
      double b = 0;
      for (std::size_t r = 1; r < base.size(); ++r) b += cosine_sim(v.row(base[r - 1]), v.row(base[r]));
      if (got.objective + 1e-9 < b) return std::string("objective below the concatenation baseline");
    }
    return std::string();
  });
  add("connection aggregation matches group-by-and-mean", [] {
    Rng rng(52);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<std::size_t> c(0, 3);
    std::vector<MemberEdge> edges;
    for (std::size_t i = 0; i < 60; ++i) edges.push_back({i, c(rng), c(rng), i % 7 == 0 ? 0.0 : u(rng)});
    const auto want = oracle::group_means(edges);
    const auto got = aggregate_connections(edges);
    if (got.size() != want.size()) return std::string("pair count differs");
    for (const auto& ce : got) {
      const auto& w = want.at({ce.source, ce.target});
      if (std::abs(ce.w_pos - w.first) > 1e-12 || std::abs(ce.w_neg - w.second) > 1e-12) return std::string("means differ");
    }
    return std::string();
  });
  add("biclusters equal brute-force maximal bicliques", [] {
    Rng rng(53);
    return check_biclusters(rng, 50);
  });
  add("closure and Apriori miners agree", [] {
    Rng rng(54);
    for (int t = 0; t < 50; ++t) {
      PairSet s;
      for (const auto& e : random_cluster_edges(rng, 12)) s.insert({e.source, e.target});
      if (closed_bicliques(s) != closed_bicliques_by_closure(s)) return std::string("miners disagree");
    }
    return std::string();
  });
  add("gradient facet equals fixture backward output", [] {
    fixture::FixtureSpec f;
    const auto fx = fixture::generate(f);
    const auto& d = fx.snapshot.data();
    std::vector<double> w;
    for (const auto& e : d.edges) w.push_back(e.weight);
    const auto facet = edge_facet(w, d.gradients, d.prev_weights, EdgeFacet::gradient);
    // Recompute one edge's gradient from scratch: mean over images of the
    // window-summed weight gradient.
    const auto& st = fx.net.stages();
    std::size_t si = 0;
    while (st[si].name != "conv2") ++si;
    const auto per = st[si].weights.size() / (st[si].out.channels * st[si].in.channels);
    double g = 0;
    for (const auto& img : fx.data) {
      const auto b = fixture::backward(fx.net, img);
      for (std::size_t k = 0; k < per; ++k) g += b.weight_grads[si][(1 * st[si].in.channels + 2) * per + k];
    }
    g /= static_cast<double>(fx.data.size());
    const auto e = fx.snapshot.find_edge("e:conv2:2:1");
    if (!e || std::abs(facet[*e] - std::abs(g)) > 1e-12) return std::string("gradient facet differs");
    return std::string();
  });
  add("debug series equals per-layer brute-force mean", [] {
    fixture::FixtureSpec f;
    const auto fx = fixture::generate(f);
    const auto series = debug_series(fx.snapshot, DebugKind::avg_gradient);
    const auto& s = fx.snapshot;
    for (std::size_t g = 0; g < s.groups().size(); ++g) {
      double sum = 0;
      std::size_t n = 0;
      for (std::size_t e = 0; e < s.edges().size(); ++e)
        if (s.layer_of(s.edge_target(e)) == s.groups()[g].display_layer) {
          sum += std::abs((*s.data().gradients)[e]);
          ++n;
        }
      if (n == 0 ? series[g].has_value() : std::abs(*series[g] - sum / n) > 1e-12) return std::string("series differs");
    }
    return std::string();
  });
  add("barycenter sweep removes the single crossing", [] {
    SnapshotData d;
    d.id = "cross";
    d.classes = {"a", "b"};
    d.layers = {{"in", LayerKind::pooling, {"x0", "x1"}}, {"out", LayerKind::output, {"y0", "y1"}}};
    d.activations = {1, 0, 0, 1, 0, 1, 1, 0};
    d.edges = {{"e0", "x0", "y1", 1.0}, {"e1", "x1", "y0", 1.0}};
    const auto s = NetworkSnapshot::build(d);
    LayoutParams p;
    p.method = ClusterMethod::kmeans;
    p.kmeans_k = 2;
    const auto doc = assemble(s, p, {});
    std::map<std::size_t, std::size_t> lr, rr;
    for (std::size_t r = 0; r < doc.columns[0].order.size(); ++r) lr[doc.columns[0].order[r]] = r;
    for (std::size_t r = 0; r < doc.columns[1].order.size(); ++r) rr[doc.columns[1].order[r]] = r;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& ce : doc.gaps[0].connections) pairs.emplace_back(ce.source, ce.target);
    return oracle::crossings(pairs, lr, rr) == 0 ? std::string() : std::string("a crossing remains");
  });
  add("incremental moves equal full reassembly", [] {
    fixture::FixtureSpec f;
    const auto fx = fixture::generate(f);
    LayoutParams p;
    auto doc = assemble(fx.snapshot, p, {});
    Rng rng(55);
    for (int step = 0; step < 6; ++step) {
      auto& col = doc.columns[static_cast<std::size_t>(step) % doc.columns.size()];
      const auto& neurons = col.clustering.neurons();
      const auto n = neurons[rng() % neurons.size()];
      const auto& cl = col.clustering.clusters();
      std::optional<std::size_t> target;
      if (rng() % 3 != 0) target = cl[rng() % cl.size()].id;
      doc = apply_interaction(fx.snapshot, doc, MoveNeuron{fx.snapshot.neuron_id(n), target});
      const auto full = assemble(fx.snapshot, p, doc.view, clusterings_of(doc));
      if (serialize_layout(fx.snapshot, full) != serialize_layout(fx.snapshot, doc)) return std::string("documents differ");
    }
    return std::string();
  });
  add("setFacet round trip restores the document", [] {
    fixture::FixtureSpec f;
    const auto fx = fixture::generate(f);
    const auto doc = assemble(fx.snapshot, {}, {});
    const auto there = apply_interaction(fx.snapshot, doc, SetFacet{Facet::matrix});
    const auto back = apply_interaction(fx.snapshot, there, SetFacet{Facet::features});
    return serialize_layout(fx.snapshot, back) == serialize_layout(fx.snapshot, doc) ? std::string()
                                                                                      : std::string("document changed");
  });
  return out;
}

/// Runs every check, one line per check; true when all pass.
inline bool run_all(std::ostream& os) {
  bool ok = true;
  for (const auto& c : checks()) {
    std::string msg;
    try {
      msg = c.run();
    } catch (const std::exception& e) {
      msg = std::string("threw: ") + e.what();
    }
    os << (msg.empty() ? "PASS " : "FAIL ") << c.name << (msg.empty() ? "" : " -- " + msg) << '\n';
    ok = ok && msg.empty();
  }
  return ok;
}

}  // namespace cnnvis::verify

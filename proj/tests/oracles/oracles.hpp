#pragma once

// Independent reference implementations used only for checking: exhaustive
// enumerations, direct double loops and finite differences. None of these
// reuse the engine's algorithms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <vector>

#include "cnnvis/bicluster.hpp"
#include "cnnvis/fixture.hpp"
#include "cnnvis/pack.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis::oracle {

// ---------------------------------------------------------------------------
// Seriation

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb);
}

/// Best Eq. 6.1 objective over all n! row orders.
inline double best_path_objective(const RowMatrix& sim) {
  std::vector<std::size_t> p(sim.rows);
  std::iota(p.begin(), p.end(), 0);
  double best = -1e300;
  do {
    double s = 0;
    for (std::size_t r = 1; r < p.size(); ++r) s += sim(p[r - 1], p[r]);
    best = std::max(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return p.size() <= 1 ? 0.0 : best;
}

// ---------------------------------------------------------------------------
// Packing

namespace detail {

inline bool place_all(std::vector<char>& grid, int w, int h, const std::vector<int>& sides, std::size_t k,
                      int min_pos_same) {
  if (k == sides.size()) return true;
  const int s = sides[k];
  // Equal squares are interchangeable: only try positions after the previous one.
  const int start = (k > 0 && sides[k - 1] == s) ? min_pos_same : 0;
  for (int pos = start; pos < w * h; ++pos) {
    const int y = pos / w, x = pos % w;
    if (x + s > w || y + s > h) continue;
    bool free = true;
    for (int i = y; i < y + s && free; ++i)
      for (int j = x; j < x + s && free; ++j) free = !grid[static_cast<std::size_t>(i * w + j)];
    if (!free) continue;
    for (int i = y; i < y + s; ++i)
      for (int j = x; j < x + s; ++j) grid[static_cast<std::size_t>(i * w + j)] = 1;
    if (place_all(grid, w, h, sides, k + 1, pos + 1)) return true;
    for (int i = y; i < y + s; ++i)
      for (int j = x; j < x + s; ++j) grid[static_cast<std::size_t>(i * w + j)] = 0;
  }
  return false;
}

}  // namespace detail

/// Smallest enclosing area over every integer rectangle within the aspect
/// cap, feasibility decided by trying every grid position for every square.
inline int min_enclosing_area(std::vector<int> sides, int max_aspect = 4) {
  if (sides.empty()) return 0;
  std::sort(sides.rbegin(), sides.rend());
  int total = 0, sum = 0;
  for (int s : sides) {
    total += s * s;
    sum += s;
  }
  std::vector<std::pair<int, int>> rects;
  for (int w = 1; w <= sum; ++w)
    for (int h = 1; h <= sum; ++h)
      if (w * h >= total && std::max(w, h) <= max_aspect * std::min(w, h)) rects.emplace_back(w * h, w);
  std::sort(rects.begin(), rects.end());
  for (const auto& [area, w] : rects) {
    const int h = area / w;
    if (sides.front() > w || sides.front() > h) continue;
    std::vector<char> grid(static_cast<std::size_t>(area), 0);
    if (detail::place_all(grid, w, h, sides, 0, 0)) return area;
  }
  return -1;
}

/// Pairwise overlap and containment check; returns an empty string when fine.
inline std::string packing_violation(const Packing& p, double eps = 1e-9) {
  for (std::size_t i = 0; i < p.rects.size(); ++i) {
    const auto& a = p.rects[i];
    if (a.x < -eps || a.y < -eps || a.x + a.size > p.width + eps || a.y + a.size > p.height + eps)
      return "rect " + std::to_string(i) + " leaves the bounds";
    for (std::size_t j = i + 1; j < p.rects.size(); ++j) {
      const auto& b = p.rects[j];
      const double ox = std::min(a.x + a.size, b.x + b.size) - std::max(a.x, b.x);
      const double oy = std::min(a.y + a.size, b.y + b.size) - std::max(a.y, b.y);
      if (ox > eps && oy > eps) return "rects " + std::to_string(i) + " and " + std::to_string(j) + " overlap";
    }
  }
  return {};
}

/// Regions tile `bounds`: contained, pairwise disjoint, areas adding up.
inline bool tiles(const std::vector<Region>& regions, const Region& bounds, double eps = 1e-9) {
  double total = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& a = regions[i];
    if (a.x < bounds.x - eps || a.y < bounds.y - eps || a.x + a.width > bounds.x + bounds.width + eps ||
        a.y + a.height > bounds.y + bounds.height + eps)
      return false;
    total += a.width * a.height;
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      const auto& b = regions[j];
      const double ox = std::min(a.x + a.width, b.x + b.width) - std::max(a.x, b.x);
      const double oy = std::min(a.y + a.height, b.y + b.height) - std::max(a.y, b.y);
      if (ox > eps && oy > eps) return false;
    }
  }
  return std::abs(total - bounds.width * bounds.height) <= eps * std::max(1.0, total);
}

// ---------------------------------------------------------------------------
// Biclustering

struct OracleBicluster {
  std::vector<std::size_t> inputs, outputs;
  Sign sign = Sign::positive;
  std::vector<std::pair<std::size_t, std::size_t>> covered;
  bool operator<(const OracleBicluster& o) const {
    return std::tie(inputs, outputs, sign, covered) < std::tie(o.inputs, o.outputs, o.sign, o.covered);
  }
  bool operator==(const OracleBicluster& o) const = default;
};

/// Every maximal complete sub-bipartite graph of `edges`, by subset enumeration.
inline std::vector<Biclique> maximal_bicliques(const PairSet& edges) {
  std::vector<std::size_t> ins, outs;
  for (const auto& [s, t] : edges) {
    ins.push_back(s);
    outs.push_back(t);
  }
  std::sort(ins.begin(), ins.end());
  ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
  std::sort(outs.begin(), outs.end());
  outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
  auto complete = [&](const std::vector<std::size_t>& I, const std::vector<std::size_t>& O) {
    for (auto i : I)
      for (auto o : O)
        if (!edges.count({i, o})) return false;
    return true;
  };
  std::vector<Biclique> out;
  for (unsigned mi = 1; mi < (1u << ins.size()); ++mi)
    for (unsigned mo = 1; mo < (1u << outs.size()); ++mo) {
      std::vector<std::size_t> I, O;
      for (std::size_t k = 0; k < ins.size(); ++k)
        if (mi >> k & 1) I.push_back(ins[k]);
      for (std::size_t k = 0; k < outs.size(); ++k)
        if (mo >> k & 1) O.push_back(outs[k]);
      if (!complete(I, O)) continue;
      bool maximal = true;
      for (std::size_t k = 0; k < ins.size() && maximal; ++k)
        if (!(mi >> k & 1)) maximal = !complete({ins[k]}, O);
      for (std::size_t k = 0; k < outs.size() && maximal; ++k)
        if (!(mo >> k & 1)) maximal = !complete(I, {outs[k]});
      if (maximal) out.push_back({I, O});
    }
  return out;
}

struct OracleBundles {
  std::vector<OracleBicluster> biclusters;
  std::vector<std::tuple<std::size_t, std::size_t, Sign, bool>> residual;  // source, target, sign, hidden
};

/// The round procedure written out directly over a flat list of signed
/// connections, with maximal bicliques from subset enumeration.
inline OracleBundles bundles(const std::vector<ClusterEdge>& edges, double tau, double stop) {
  struct Item {
    std::size_t s, t;
    Sign sign;
    double mag;
    bool alive = true;
  };
  std::vector<Item> items;
  for (const auto& e : edges) {
    if (e.n_pos) items.push_back({e.source, e.target, Sign::positive, e.w_pos});
    if (e.n_neg) items.push_back({e.source, e.target, Sign::negative, -e.w_neg});
  }
  OracleBundles out;
  for (;;) {
    Item* anchor = nullptr;
    for (auto& it : items) {
      if (!it.alive) continue;
      if (!anchor || it.mag > anchor->mag ||
          (it.mag == anchor->mag &&
           std::make_tuple(it.sign != Sign::positive, it.s, it.t) < std::make_tuple(anchor->sign != Sign::positive, anchor->s, anchor->t)))
        anchor = &it;
    }
    if (!anchor || anchor->mag < stop) break;
    PairSet selected;
    for (const auto& it : items)
      if (it.alive && it.sign == anchor->sign && std::abs(it.mag - anchor->mag) < tau) selected.insert({it.s, it.t});
    auto found = maximal_bicliques(selected);
    std::vector<Biclique> kept;
    for (auto& b : found)
      if (b.inputs.size() >= 2 || b.outputs.size() >= 2) kept.push_back(b);
    std::sort(kept.begin(), kept.end(), [](const Biclique& a, const Biclique& b) {
      const auto ca = a.inputs.size() * a.outputs.size(), cb = b.inputs.size() * b.outputs.size();
      if (ca != cb) return ca > cb;
      return std::tie(a.inputs, a.outputs) < std::tie(b.inputs, b.outputs);
    });
    PairSet covered;
    for (const auto& b : kept) {
      OracleBicluster ob{b.inputs, b.outputs, anchor->sign, {}};
      for (auto i : b.inputs)
        for (auto o : b.outputs)
          if (!covered.count({i, o})) ob.covered.emplace_back(i, o);
      if (ob.covered.empty()) continue;
      covered.insert(ob.covered.begin(), ob.covered.end());
      out.biclusters.push_back(ob);
    }
    const Sign sign = anchor->sign;
    const bool anchor_done = covered.count({anchor->s, anchor->t}) != 0;
    if (!anchor_done) {
      out.residual.emplace_back(anchor->s, anchor->t, anchor->sign, false);
      anchor->alive = false;
    }
    for (auto& it : items)
      if (it.alive && it.sign == sign && covered.count({it.s, it.t})) it.alive = false;
  }
  std::vector<std::size_t> left;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].alive) left.push_back(i);
  std::stable_sort(left.begin(), left.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = items[a];
    const auto& y = items[b];
    if (x.mag != y.mag) return x.mag > y.mag;
    if (x.sign != y.sign) return x.sign == Sign::positive;
    return std::make_pair(x.s, x.t) < std::make_pair(y.s, y.t);
  });
  for (auto i : left) out.residual.emplace_back(items[i].s, items[i].t, items[i].sign, true);
  return out;
}

/// Group-by-and-mean over (source, target) for the connection aggregation.
inline std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> group_means(
    const std::vector<MemberEdge>& edges) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> pos, neg;
  std::set<std::pair<std::size_t, std::size_t>> keys;
  for (const auto& e : edges) {
    keys.insert({e.source, e.target});
    if (e.weight > 0) pos[{e.source, e.target}].push_back(e.weight);
    if (e.weight < 0) neg[{e.source, e.target}].push_back(e.weight);
  }
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> out;
  for (const auto& k : keys) {
    double p = 0, n = 0;
    for (double v : pos[k]) p += v;
    for (double v : neg[k]) n += v;
    out[k] = {pos[k].empty() ? 0.0 : p / pos[k].size(), neg[k].empty() ? 0.0 : n / neg[k].size()};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering and modularity

/// Minimum SSE over every labelling of the points into exactly `k` nonempty groups.
inline double best_sse(const RowMatrix& v, std::size_t k, std::vector<std::size_t>* best_labels = nullptr) {
  const std::size_t n = v.rows;
  std::vector<std::size_t> labels(n, 0);
  double best = 1e300;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      if (used != k) return;
      double sse = 0;
      for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> mu(v.cols, 0.0);
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < n; ++p)
          if (labels[p] == c) {
            ++cnt;
            for (std::size_t d = 0; d < v.cols; ++d) mu[d] += v(p, d);
          }
        for (double& x : mu) x /= static_cast<double>(cnt);
        for (std::size_t p = 0; p < n; ++p)
          if (labels[p] == c)
            for (std::size_t d = 0; d < v.cols; ++d) sse += (v(p, d) - mu[d]) * (v(p, d) - mu[d]);
      }
      if (sse < best) {
        best = sse;
        if (best_labels) *best_labels = labels;
      }
      return;
    }
    for (std::size_t c = 0; c <= std::min(used, k - 1); ++c) {
      labels[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  return best;
}

/// Flat-kernel mean shift by plain fixed-point iteration from every point;
/// points whose converged modes are within h/2 share a label.
inline std::vector<std::size_t> meanshift_1d(const std::vector<double>& xs, double h) {
  std::vector<double> modes;
  for (double x : xs) {
    double m = x;
    for (int it = 0; it < 1000; ++it) {
      double s = 0;
      int c = 0;
      for (double y : xs)
        if (std::abs(y - m) <= h) {
          s += y;
          ++c;
        }
      const double next = s / c;
      if (next == m) break;
      m = next;
    }
    modes.push_back(m);
  }
  std::vector<std::size_t> labels(xs.size());
  std::vector<double> heads;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t l = heads.size();
    for (std::size_t k = 0; k < heads.size(); ++k)
      if (std::abs(heads[k] - modes[i]) < h / 2) {
        l = k;
        break;
      }
    if (l == heads.size()) heads.push_back(modes[i]);
    labels[i] = l;
  }
  return labels;
}

/// Best modularity over every partition of a small graph (Bell-number enumeration).
inline std::pair<double, std::vector<std::size_t>> best_partition(const RowMatrix& w) {
  const std::size_t n = w.rows;
  double two_m = 0;
  for (double x : w.values) two_m += x;
  std::vector<std::size_t> labels(n, 0), best_labels;
  double best = -1e300;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      double q = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          if (labels[a] != labels[b]) continue;
          double ka = 0, kb = 0;
          for (std::size_t c = 0; c < n; ++c) {
            ka += w(a, c);
            kb += w(b, c);
          }
          q += w(a, b) - ka * kb / two_m;
        }
      q /= two_m;
      if (q > best + 1e-12) {
        best = q;
        best_labels = labels;
      }
      return;
    }
    for (std::size_t c = 0; c <= used; ++c) {
      labels[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  return {best, best_labels};
}

// ---------------------------------------------------------------------------
// Layered layout

/// Crossings between two adjacent columns given the vertical rank of every
/// node and the list of (left, right) connections.
inline std::size_t crossings(const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                             const std::map<std::size_t, std::size_t>& left_rank,
                             const std::map<std::size_t, std::size_t>& right_rank) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < edges.size(); ++i)
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      const long a = static_cast<long>(left_rank.at(edges[i].first)) - static_cast<long>(left_rank.at(edges[j].first));
      const long b =
          static_cast<long>(right_rank.at(edges[i].second)) - static_cast<long>(right_rank.at(edges[j].second));
      if ((a < 0 && b > 0) || (a > 0 && b < 0)) ++c;
    }
  return c;
}

// ---------------------------------------------------------------------------
// Fixture network

/// Loss of `img` after overwriting the parameters.
inline double loss_at(fixture::TinyNet net, const std::vector<double>& params, const fixture::LabeledImage& img) {
  net.set_parameters(params);
  return fixture::forward(net, img).loss;
}

/// Central differences for every parameter.
inline std::vector<double> numeric_gradient(const fixture::TinyNet& net, const fixture::LabeledImage& img, double h) {
  const auto base = net.parameters();
  std::vector<double> out(base.size());
  auto p = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    p[i] = base[i] + h;
    const double up = loss_at(net, p, img);
    p[i] = base[i] - h;
    const double down = loss_at(net, p, img);
    p[i] = base[i];
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

/// Max relative error |a - n| / max(|a|, |n|, floor) between two gradients.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), floor}));
  return worst;
}

/// Per-class mean of every neuron's spatially averaged output, by plain loops
/// over a fresh forward pass per image.
inline std::vector<double> class_means(const fixture::TinyNet& net, const std::vector<fixture::LabeledImage>& data) {
  const std::size_t m = net.classes();
  std::size_t neurons = 0;
  for (const auto& st : net.stages()) neurons += st.out.channels;
  std::vector<double> sum(neurons * m, 0.0);
  std::vector<double> count(m, 0.0);
  for (const auto& img : data) {
    const auto fwd = fixture::forward(net, img);
    std::size_t row = 0;
    for (const auto& t : fwd.outputs)
      for (std::size_t ch = 0; ch < t.shape.channels; ++ch, ++row) {
        double s = 0;
        for (std::size_t r = 0; r < t.shape.rows; ++r)
          for (std::size_t c = 0; c < t.shape.cols; ++c) s += t.at(ch, r, c);
        sum[row * m + img.label] += s / static_cast<double>(t.shape.rows * t.shape.cols);
      }
    count[img.label] += 1;
  }
  for (std::size_t r = 0; r < neurons; ++r)
    for (std::size_t c = 0; c < m; ++c) sum[r * m + c] /= count[c];
  return sum;
}

inline fixture::Grid convolve(const fixture::Grid& in, const fixture::Grid& w) {
  fixture::Grid out(in.rows - w.rows + 1, in.cols - w.cols + 1);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      for (std::size_t i = 0; i < w.rows; ++i)
        for (std::size_t j = 0; j < w.cols; ++j) out(r, c) += in(r + i, c + j) * w(i, j);
  return out;
}

inline fixture::Grid max_pool(const fixture::Grid& in) {
  fixture::Grid out(in.rows / 2, in.cols / 2);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out(r, c) = std::max({in(2 * r, 2 * c), in(2 * r + 1, 2 * c), in(2 * r, 2 * c + 1), in(2 * r + 1, 2 * c + 1)});
  return out;
}

}  // namespace cnnvis::oracle

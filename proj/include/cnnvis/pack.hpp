#pragma once

// Hierarchical packing of learned-feature patches inside a cluster node:
// split the cluster, give every leaf a treemap region, pack each leaf exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/modularity.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis {

inline constexpr std::size_t kPackLimit = 12;
inline constexpr int kMaxAspect = 4;
inline constexpr double kAreaSlack = 1.2;

enum class ImportanceMode { avg_activation, max_activation, contribution };

/// Importance of one neuron over the selected classes (all when empty).
inline double importance(std::span<const double> activation, std::span<const std::size_t> classes,
                         ImportanceMode mode, std::optional<double> contribution = std::nullopt) {
  if (mode == ImportanceMode::contribution) {
    if (!contribution) throw Error(Errc::missing_contribution_data, "snapshot has no contribution scores");
    return *contribution;
  }
  std::vector<double> picked;
  if (classes.empty()) {
    picked.assign(activation.begin(), activation.end());
  } else {
    for (auto c : classes) {
      if (c >= activation.size()) throw Error(Errc::invalid_argument, "class index out of range");
      picked.push_back(activation[c]);
    }
  }
  if (picked.empty()) return 0.0;
  if (mode == ImportanceMode::max_activation) return *std::max_element(picked.begin(), picked.end());
  return mean(picked);
}

/// Three size tiers by tercile of rank: side = 1 + floor(3 * #smaller / n).
/// A degenerate (all equal) distribution maps to the middle tier.
inline std::vector<int> quantize_sizes(std::span<const double> importances) {
  const std::size_t n = importances.size();
  std::vector<int> out(n, 2);
  if (n == 0) return out;
  const auto [lo, hi] = std::minmax_element(importances.begin(), importances.end());
  if (*lo == *hi) return out;
  std::vector<double> sorted(importances.begin(), importances.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto smaller = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), importances[i]) -
                                                  sorted.begin());
    out[i] = 1 + static_cast<int>((3 * smaller) / n);
  }
  return out;
}

struct PatchRect {
  std::size_t neuron = 0;
  int side = 1;        // size tier
  double x = 0.0;      // top-left corner
  double y = 0.0;
  double size = 1.0;   // rendered edge length (== side for exact packings)

  bool operator==(const PatchRect&) const = default;
};

struct Packing {
  std::vector<PatchRect> rects;
  double width = 0.0;
  double height = 0.0;

  double area() const { return width * height; }
  bool operator==(const Packing&) const = default;
};

struct Region {
  double x = 0.0, y = 0.0, width = 0.0, height = 0.0;
  double area() const { return width * height; }
  bool operator==(const Region&) const = default;
};

struct SquareItem {
  std::size_t neuron = 0;
  int side = 1;
};

/// Enclosing rectangles in the order pack_exact tries them: area ascending,
/// then closest to square, then width ascending; only integer sizes whose long side is at most
/// `max_aspect` times the short side and that can hold the largest square.
inline std::vector<std::pair<int, int>> candidate_bounds(std::span<const SquareItem> items, int max_aspect = kMaxAspect) {
  int total = 0, largest = 0, sum = 0;
  for (const auto& it : items) {
    total += it.side * it.side;
    largest = std::max(largest, it.side);
    sum += it.side;
  }
  std::vector<std::pair<int, int>> out;
  for (int w = largest; w <= sum; ++w)
    for (int h = largest; h <= sum; ++h) {
      if (w * h < total) continue;
      if (std::max(w, h) > max_aspect * std::min(w, h)) continue;
      out.emplace_back(w, h);
    }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    const int aa = a.first * a.second, ab = b.first * b.second;
    if (aa != ab) return aa < ab;
    const int sa = std::abs(a.first - a.second), sb = std::abs(b.first - b.second);
    return sa != sb ? sa < sb : a.first < b.first;
  });
  return out;
}

namespace detail {

// Anchor-point search: the first empty cell in row-major order receives
// either the top-left corner of an unplaced square or one unit of waste.
class GridPacker {
 public:
  GridPacker(int w, int h, std::vector<SquareItem> items) : w_(w), h_(h), grid_(static_cast<std::size_t>(w * h), 0) {
    std::stable_sort(items.begin(), items.end(), [](const SquareItem& a, const SquareItem& b) {
      return a.side != b.side ? a.side > b.side : a.neuron < b.neuron;
    });
    for (const auto& it : items) {
      if (sides_.empty() || sides_.back() != it.side) {
        sides_.push_back(it.side);
        queues_.emplace_back();
      }
      queues_.back().push_back(it.neuron);
    }
    next_.assign(sides_.size(), 0);
    int total = 0;
    for (const auto& it : items) total += it.side * it.side;
    waste_ = w * h - total;
    remaining_ = items.size();
  }

  bool solve() { return waste_ >= 0 && search(0); }
  const std::vector<PatchRect>& placed() const { return placed_; }

 private:
  bool free_block(int r, int c, int s) const {
    if (r + s > h_ || c + s > w_) return false;
    for (int i = r; i < r + s; ++i)
      for (int j = c; j < c + s; ++j)
        if (grid_[static_cast<std::size_t>(i * w_ + j)]) return false;
    return true;
  }
  void fill(int r, int c, int s, char v) {
    for (int i = r; i < r + s; ++i)
      for (int j = c; j < c + s; ++j) grid_[static_cast<std::size_t>(i * w_ + j)] = v;
  }

  bool search(int pos) {
    if (remaining_ == 0) return true;
    while (pos < w_ * h_ && grid_[static_cast<std::size_t>(pos)]) ++pos;
    if (pos == w_ * h_) return false;
    const int r = pos / w_, c = pos % w_;

    int largest_left = 0;
    for (std::size_t k = 0; k < sides_.size(); ++k)
      if (next_[k] < queues_[k].size()) largest_left = std::max(largest_left, sides_[k]);
    if (largest_left > h_ - r) return false;

    for (std::size_t k = 0; k < sides_.size(); ++k) {
      if (next_[k] == queues_[k].size()) continue;
      const int s = sides_[k];
      if (!free_block(r, c, s)) continue;
      fill(r, c, s, 1);
      placed_.push_back(PatchRect{queues_[k][next_[k]], s, static_cast<double>(c), static_cast<double>(r),
                                  static_cast<double>(s)});
      ++next_[k];
      --remaining_;
      if (search(pos + s)) return true;
      ++remaining_;
      --next_[k];
      placed_.pop_back();
      fill(r, c, s, 0);
    }
    if (waste_ > 0) {
      --waste_;
      grid_[static_cast<std::size_t>(pos)] = 2;
      if (search(pos + 1)) return true;
      grid_[static_cast<std::size_t>(pos)] = 0;
      ++waste_;
    }
    return false;
  }

  int w_, h_;
  std::vector<char> grid_;
  std::vector<int> sides_;
  std::vector<std::vector<std::size_t>> queues_;
  std::vector<std::size_t> next_;
  std::vector<PatchRect> placed_;
  int waste_ = 0;
  std::size_t remaining_ = 0;
};

}  // namespace detail

/// Minimum-area enclosing rectangle for a small set of squares (at most
/// `limit`), trying candidate rectangles in increasing area and returning
/// the first one the anchor-point search can fill.
inline Packing pack_exact(std::span<const SquareItem> items, std::size_t limit = kPackLimit, int max_aspect = kMaxAspect) {
  if (items.size() > limit)
    throw Error(Errc::invalid_argument, "pack_exact takes at most " + std::to_string(limit) + " squares");
  for (const auto& it : items)
    if (it.side < 1) throw Error(Errc::invalid_argument, "square sides must be positive");
  if (items.empty()) return {};
  for (const auto& [w, h] : candidate_bounds(items, max_aspect)) {
    detail::GridPacker packer(w, h, std::vector<SquareItem>(items.begin(), items.end()));
    if (packer.solve()) {
      Packing p;
      p.rects = packer.placed();
      std::sort(p.rects.begin(), p.rects.end(),
                [](const PatchRect& a, const PatchRect& b) { return a.neuron < b.neuron; });
      p.width = w;
      p.height = h;
      return p;
    }
  }
  throw Error(Errc::invalid_argument, "no feasible packing");  // unreachable: the sum-of-sides square always fits
}

inline double leaf_demand(std::span<const int> sides) {
  double s = 0.0;
  for (int x : sides) s += static_cast<double>(x) * x;
  return s * kAreaSlack;
}

namespace detail {

inline double subtree_demand(const SplitNode& node, const std::vector<const SplitNode*>& leaves,
                             std::span<const double> demands) {
  if (node.leaf()) {
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i] == &node) return demands[i];
    return 0.0;
  }
  double s = 0.0;
  for (const auto& c : node.children) s += subtree_demand(c, leaves, demands);
  return s;
}

inline void slice(const SplitNode& node, const Region& r, int depth, const std::vector<const SplitNode*>& leaves,
                  std::span<const double> demands, std::vector<Region>& out) {
  if (node.leaf()) {
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i] == &node) out[i] = r;
    return;
  }
  const double total = subtree_demand(node, leaves, demands);
  double offset = 0.0;
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    const double share = total > 0.0 ? subtree_demand(node.children[k], leaves, demands) / total
                                     : 1.0 / static_cast<double>(node.children.size());
    Region sub = r;
    const bool last = k + 1 == node.children.size();
    if (depth % 2 == 0) {
      sub.x = r.x + offset;
      sub.width = last ? r.x + r.width - sub.x : r.width * share;
      offset += sub.width;
    } else {
      sub.y = r.y + offset;
      sub.height = last ? r.y + r.height - sub.y : r.height * share;
      offset += sub.height;
    }
    slice(node.children[k], sub, depth + 1, leaves, demands, out);
  }
}

}  // namespace detail

/// Slice-and-dice treemap: vertical cuts at even depth, horizontal at odd,
/// region areas proportional to leaf demand. Regions follow the depth-first
/// leaf order and tile `bounds` exactly.
inline std::vector<Region> allocate_areas(const SplitNode& hierarchy, std::span<const double> demands, const Region& bounds) {
  std::vector<const SplitNode*> leaves;
  collect_leaves(hierarchy, leaves);
  if (leaves.size() != demands.size()) throw Error(Errc::invalid_argument, "one demand per leaf");
  double total = 0.0;
  for (double d : demands) total += d;
  if (bounds.area() + 1e-9 < total)
    throw Error(Errc::insufficient_area, "cluster bounds are smaller than the leaves' demand");
  std::vector<Region> out(leaves.size());
  detail::slice(hierarchy, bounds, 0, leaves, demands, out);
  return out;
}

struct ClusterPackInput {
  std::vector<std::size_t> neurons;  // representatives
  std::vector<int> sides;            // aligned with neurons
  RowMatrix vectors;                 // aligned with neurons, used for splitting
};

/// Split, allocate, pack, then offset each leaf packing into its region. All
/// patches share one scale so sizes stay comparable across leaves.
inline Packing pack_cluster(const ClusterPackInput& in, std::size_t limit = kPackLimit) {
  const std::size_t n = in.neurons.size();
  if (n == 0) throw Error(Errc::invalid_argument, "cluster has no representatives");
  if (in.sides.size() != n || in.vectors.rows != n) throw Error(Errc::invalid_argument, "inputs disagree in length");
  std::vector<SquareItem> items;
  for (std::size_t i = 0; i < n; ++i) items.push_back({in.neurons[i], in.sides[i]});
  if (n <= limit) return pack_exact(items, limit);

  const SplitNode tree = split_cluster(in.neurons, in.vectors, limit);
  std::vector<const SplitNode*> leaves;
  collect_leaves(tree, leaves);
  std::vector<Packing> leaf_packs;
  std::vector<double> demands;
  double total = 0.0;
  for (const auto* leaf : leaves) {
    std::vector<SquareItem> sub;
    std::vector<int> sides;
    for (auto id : leaf->items)
      for (const auto& it : items)
        if (it.neuron == id) {
          sub.push_back(it);
          sides.push_back(it.side);
        }
    leaf_packs.push_back(pack_exact(sub, limit));
    demands.push_back(leaf_demand(sides));
    total += demands.back();
  }

  // Pick the bounds aspect that lets the leaf packings keep the largest scale.
  static constexpr std::array<double, 7> aspects = {1.0, 4.0 / 3.0, 3.0 / 4.0, 3.0 / 2.0, 2.0 / 3.0, 2.0, 0.5};
  double best_scale = -1.0;
  Region best_bounds;
  std::vector<Region> best_regions;
  for (double aspect : aspects) {
    const Region bounds{0.0, 0.0, std::sqrt(total * aspect), std::sqrt(total / aspect)};
    auto regions = allocate_areas(tree, demands, bounds);
    double scale = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < leaves.size(); ++i)
      scale = std::min({scale, regions[i].width / leaf_packs[i].width, regions[i].height / leaf_packs[i].height});
    if (scale > best_scale + 1e-12) {
      best_scale = scale;
      best_bounds = bounds;
      best_regions = std::move(regions);
    }
  }

  Packing out;
  out.width = best_bounds.width;
  out.height = best_bounds.height;
  for (std::size_t i = 0; i < leaves.size(); ++i)
    for (const auto& r : leaf_packs[i].rects)
      out.rects.push_back(PatchRect{r.neuron, r.side, best_regions[i].x + best_scale * r.x,
                                    best_regions[i].y + best_scale * r.y, best_scale * r.size});
  std::sort(out.rects.begin(), out.rects.end(), [](const PatchRect& a, const PatchRect& b) { return a.neuron < b.neuron; });
  return out;
}

}  // namespace cnnvis

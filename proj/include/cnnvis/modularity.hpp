#pragma once

// Greedy modularity maximisation (agglomerative, Newman-style) on a dense
// similarity graph, and the recursive splitter built on it.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis {

/// Weighted adjacency with w_ij = max(0, cos(v_i, v_j)) and an empty diagonal.
inline RowMatrix similarity_graph(const RowMatrix& vectors) {
  RowMatrix w(vectors.rows, vectors.rows);
  for (std::size_t i = 0; i < vectors.rows; ++i)
    for (std::size_t j = i + 1; j < vectors.rows; ++j) {
      const double s = std::max(0.0, cosine_sim(vectors.row(i), vectors.row(j)));
      w(i, j) = s;
      w(j, i) = s;
    }
  return w;
}

/// Q = sum_c (e_cc - a_c^2) for a labelling of the nodes of `w`.
inline double modularity(const RowMatrix& w, const std::vector<std::size_t>& labels) {
  double two_m = 0.0;
  for (double x : w.values) two_m += x;
  if (two_m == 0.0) return 0.0;
  std::size_t k = 0;
  for (auto l : labels) k = std::max(k, l + 1);
  std::vector<double> inside(k, 0.0), degree(k, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i)
    for (std::size_t j = 0; j < w.cols; ++j) {
      degree[labels[i]] += w(i, j);
      if (labels[i] == labels[j]) inside[labels[i]] += w(i, j);
    }
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) q += inside[c] / two_m - (degree[c] / two_m) * (degree[c] / two_m);
  return q;
}

/// Repeatedly merges the pair of communities with the largest modularity
/// gain while the gain is positive. Communities come back as sorted local
/// index lists ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> greedy_modularity(const RowMatrix& w) {
  const std::size_t n = w.rows;
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  double two_m = 0.0;
  for (double x : w.values) two_m += x;
  if (n <= 1 || two_m <= 0.0) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return n == 0 ? std::vector<std::vector<std::size_t>>{} : std::vector<std::vector<std::size_t>>{all};
  }

  RowMatrix e(n, n);
  for (std::size_t i = 0; i < n * n; ++i) e.values[i] = w.values[i] / two_m;
  std::vector<double> a(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i] += e(i, j);
  std::vector<char> alive(n, 1);

  for (;;) {
    double best = 1e-12;
    std::size_t bi = n, bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j] || e(i, j) <= 0.0) continue;
        const double gain = 2.0 * (e(i, j) - a[i] * a[j]);
        if (gain > best) {
          best = gain;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n) break;
    const double eij = e(bi, bj);
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      e(bi, k) += e(bj, k);
      e(k, bi) = e(bi, k);
    }
    e(bi, bi) += e(bj, bj) + 2.0 * eij;
    a[bi] += a[bj];
    alive[bj] = 0;
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    groups[bj].clear();
  }

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) {
      std::sort(groups[i].begin(), groups[i].end());
      out.push_back(std::move(groups[i]));
    }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return out;
}

/// One level of splitting: modularity communities, or two halves in the
/// given order when the graph has no community structure to exploit.
inline std::vector<std::vector<std::size_t>> split_once(const RowMatrix& vectors) {
  auto parts = greedy_modularity(similarity_graph(vectors));
  if (parts.size() >= 2) return parts;
  const std::size_t n = vectors.rows, half = n / 2;
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < n; ++i) (i < half ? left : right).push_back(i);
  return {left, right};
}

struct SplitNode {
  std::vector<std::size_t> items;  // caller-provided ids
  std::vector<SplitNode> children;

  bool leaf() const { return children.empty(); }
  bool operator==(const SplitNode&) const = default;
};

/// Splits until every leaf holds fewer than `threshold` items. Row i of
/// `vectors` belongs to items[i].
inline SplitNode split_cluster(const std::vector<std::size_t>& items, const RowMatrix& vectors, std::size_t threshold) {
  if (threshold < 2) throw Error(Errc::invalid_argument, "split threshold must be >= 2");
  if (items.size() != vectors.rows) throw Error(Errc::invalid_argument, "one vector per item");
  SplitNode node{items, {}};
  if (items.size() < threshold) return node;
  for (const auto& part : split_once(vectors)) {
    std::vector<std::size_t> sub_items;
    RowMatrix sub(part.size(), vectors.cols);
    for (std::size_t i = 0; i < part.size(); ++i) {
      sub_items.push_back(items[part[i]]);
      std::copy(vectors.row(part[i]).begin(), vectors.row(part[i]).end(), sub.row(i).begin());
    }
    node.children.push_back(split_cluster(sub_items, sub, threshold));
  }
  return node;
}

/// Leaves in depth-first order.
inline void collect_leaves(const SplitNode& node, std::vector<const SplitNode*>& out) {
  if (node.leaf()) {
    out.push_back(&node);
    return;
  }
  for (const auto& c : node.children) collect_leaves(c, out);
}

}  // namespace cnnvis

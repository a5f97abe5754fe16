#pragma once

// Row seriation for activation matrices: maximise the summed cosine
// similarity of adjacent rows. Exact Held-Karp for small clusters,
// divide-and-conquer on top of the modularity splitter for large ones.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/modularity.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis {

inline constexpr std::size_t kHeldKarpLimit = 18;

struct RowOrder {
  std::vector<std::size_t> order;  // ids in row order
  double objective = 0.0;

  bool operator==(const RowOrder&) const = default;
};

inline RowMatrix cosine_matrix(const RowMatrix& vectors) {
  RowMatrix s(vectors.rows, vectors.rows);
  for (std::size_t i = 0; i < vectors.rows; ++i)
    for (std::size_t j = i; j < vectors.rows; ++j) {
      const double v = i == j ? 1.0 : cosine_sim(vectors.row(i), vectors.row(j));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

/// Sum of similarities of consecutive entries of `path` (local indices).
inline double path_objective(const RowMatrix& sim, const std::vector<std::size_t>& path) {
  double s = 0.0;
  for (std::size_t r = 1; r < path.size(); ++r) s += sim(path[r - 1], path[r]);
  return s;
}

/// Maximum-weight Hamiltonian path with free endpoints. Among optimal paths
/// the lexicographically smallest one is returned, which also makes it the
/// orientation that starts at the smaller index.
inline RowOrder held_karp_order(const RowMatrix& sim, std::size_t limit = kHeldKarpLimit) {
  const std::size_t n = sim.rows;
  if (n > limit) throw Error(Errc::too_many_rows, std::to_string(n) + " rows exceed the Held-Karp limit");
  if (n == 0) return {};
  if (n == 1) return {{0}, 0.0};

  // best[mask * n + v]: best path that starts at v and visits exactly mask.
  const std::size_t full = (std::size_t{1} << n) - 1;
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best((full + 1) * n, kNone);
  for (std::size_t v = 0; v < n; ++v) best[(std::size_t{1} << v) * n + v] = 0.0;
  for (std::size_t mask = 1; mask <= full; ++mask) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!(mask >> v & 1) || mask == (std::size_t{1} << v)) continue;
      const std::size_t rest = mask ^ (std::size_t{1} << v);
      double b = kNone;
      for (std::size_t u = 0; u < n; ++u) {
        if (!(rest >> u & 1)) continue;
        const double cand = sim(v, u) + best[rest * n + u];
        if (cand > b) b = cand;
      }
      best[mask * n + v] = b;
    }
  }

  double opt = kNone;
  for (std::size_t v = 0; v < n; ++v) opt = std::max(opt, best[full * n + v]);
  constexpr double eps = 1e-12;
  RowOrder out;
  out.objective = opt;
  std::size_t mask = full;
  double need = opt;
  std::size_t cur = n;
  for (std::size_t v = 0; v < n; ++v)
    if (best[full * n + v] >= opt - eps) {
      cur = v;
      break;
    }
  out.order.push_back(cur);
  while (mask != (std::size_t{1} << cur)) {
    const std::size_t rest = mask ^ (std::size_t{1} << cur);
    for (std::size_t u = 0; u < n; ++u) {
      if (!(rest >> u & 1)) continue;
      if (sim(cur, u) + best[rest * n + u] >= need - eps) {
        need = best[rest * n + u];
        mask = rest;
        cur = u;
        break;
      }
    }
    out.order.push_back(cur);
  }
  out.objective = path_objective(sim, out.order);
  return out;
}

namespace detail {

inline RowMatrix take_rows(const RowMatrix& m, const std::vector<std::size_t>& rows) {
  RowMatrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

// Local-index order over all rows of `vectors`.
inline std::vector<std::size_t> dnc_local(const RowMatrix& vectors, std::size_t limit) {
  const std::size_t n = vectors.rows;
  if (n <= limit) return held_karp_order(cosine_matrix(vectors), limit).order;

  const auto parts = split_once(vectors);
  std::vector<std::vector<std::size_t>> segments;
  RowMatrix centroids(parts.size(), vectors.cols);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto sub = dnc_local(take_rows(vectors, parts[p]), limit);
    std::vector<std::size_t> seg;
    for (auto i : sub) seg.push_back(parts[p][i]);
    segments.push_back(std::move(seg));
    for (auto i : parts[p])
      for (std::size_t d = 0; d < vectors.cols; ++d) centroids(p, d) += vectors(i, d) / static_cast<double>(parts[p].size());
  }

  const auto sim = [&](std::size_t a, std::size_t b) { return cosine_sim(vectors.row(a), vectors.row(b)); };
  const auto objective = [&](const std::vector<std::size_t>& path) {
    double s = 0.0;
    for (std::size_t r = 1; r < path.size(); ++r) s += sim(path[r - 1], path[r]);
    return s;
  };

  std::vector<std::size_t> baseline;
  for (const auto& seg : segments) baseline.insert(baseline.end(), seg.begin(), seg.end());

  // Segment order from centroid similarity, then orientations: the first
  // junction is settled by trying all four combinations, the rest greedily.
  const auto seg_order = dnc_local(centroids, limit);
  std::vector<std::vector<std::size_t>> ordered;
  for (auto s : seg_order) ordered.push_back(segments[s]);
  auto reversed = [](std::vector<std::size_t> v) {
    std::reverse(v.begin(), v.end());
    return v;
  };
  double best_junction = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> merged;
  for (int fa = 0; fa < 2; ++fa)
    for (int fb = 0; fb < 2; ++fb) {
      const auto a = fa ? reversed(ordered[0]) : ordered[0];
      const auto b = fb ? reversed(ordered[1]) : ordered[1];
      const double j = sim(a.back(), b.front());
      if (j > best_junction + 1e-15) {
        best_junction = j;
        merged = a;
        merged.insert(merged.end(), b.begin(), b.end());
      }
    }
  for (std::size_t k = 2; k < ordered.size(); ++k) {
    const auto& seg = ordered[k];
    const bool flip = sim(merged.back(), seg.back()) > sim(merged.back(), seg.front()) + 1e-15;
    if (flip)
      merged.insert(merged.end(), seg.rbegin(), seg.rend());
    else
      merged.insert(merged.end(), seg.begin(), seg.end());
  }
  return objective(merged) + 1e-12 >= objective(baseline) ? merged : baseline;
}

}  // namespace detail

/// Row order for a cluster; row i of `vectors` belongs to ids[i].
inline RowOrder dnc_order(const std::vector<std::size_t>& ids, const RowMatrix& vectors,
                          std::size_t limit = kHeldKarpLimit) {
  if (ids.size() != vectors.rows) throw Error(Errc::invalid_argument, "one vector per id");
  if (limit < 2) throw Error(Errc::invalid_argument, "Held-Karp limit must be >= 2");
  RowOrder out;
  const auto local = detail::dnc_local(vectors, limit);
  for (std::size_t r = 0; r < local.size(); ++r) {
    out.order.push_back(ids[local[r]]);
    if (r > 0) out.objective += cosine_sim(vectors.row(local[r - 1]), vectors.row(local[r]));
  }
  return out;
}

struct ActivationMatrix {
  std::vector<std::size_t> rows;  // neuron ids in display order
  std::size_t cols = 0;           // classes, always in snapshot order
  RowMatrix cells;

  bool operator==(const ActivationMatrix&) const = default;
};

template <class Lookup>
ActivationMatrix build_matrix(const std::vector<std::size_t>& order, std::size_t classes, Lookup&& vector_of) {
  ActivationMatrix m{order, classes, RowMatrix(order.size(), classes)};
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto v = vector_of(order[r]);
    if (v.size() != classes) throw Error(Errc::invalid_argument, "activation vector has the wrong length");
    std::copy(v.begin(), v.end(), m.cells.row(r).begin());
  }
  return m;
}

}  // namespace cnnvis

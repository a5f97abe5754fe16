#pragma once

// Activation vectors, neuron clustering (K-Means / MeanShift), representative
// selection and the user-driven edits applied to a layer's clustering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis {

inline constexpr std::size_t kDefaultRepresentatives = 9;
inline constexpr std::size_t kKMeansMaxIterations = 300;

/// Per-class average activation of every neuron. `per_sample` is neuron x
/// sample; `class_of[s]` gives the class of sample s.
inline RowMatrix average_activation(const RowMatrix& per_sample, std::span<const std::size_t> class_of,
                                    std::size_t classes) {
  if (class_of.size() != per_sample.cols)
    throw Error(Errc::invalid_argument, "every sample needs a class");
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t s = 0; s < class_of.size(); ++s) {
    if (class_of[s] >= classes) throw Error(Errc::invalid_argument, "sample class out of range");
    members[class_of[s]].push_back(s);
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (members[c].empty()) throw Error(Errc::empty_class, "class " + std::to_string(c) + " has no samples");

  RowMatrix out(per_sample.rows, classes);
  std::vector<double> buf;
  for (std::size_t n = 0; n < per_sample.rows; ++n)
    for (std::size_t c = 0; c < classes; ++c) {
      buf.clear();
      for (auto s : members[c]) buf.push_back(per_sample(n, s));
      out(n, c) = mean(buf);
    }
  return out;
}

struct Assignment {
  std::vector<std::size_t> labels;  // compacted: clusters numbered by first appearance
  std::size_t clusters = 0;
  double sse = 0.0;
  std::vector<double> sse_history;  // kmeans only: SSE after every assignment step

  bool operator==(const Assignment&) const = default;
};

namespace detail {

inline void compact_labels(Assignment& a) {
  std::map<std::size_t, std::size_t> remap;
  for (auto& l : a.labels) {
    auto [it, inserted] = remap.emplace(l, remap.size());
    l = it->second;
  }
  a.clusters = remap.size();
}

inline double assignment_sse(const RowMatrix& v, const std::vector<std::size_t>& labels, std::size_t k) {
  RowMatrix centers(k, v.cols);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < v.rows; ++i) {
    ++counts[labels[i]];
    for (std::size_t d = 0; d < v.cols; ++d) centers(labels[i], d) += v(i, d);
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0)
      for (std::size_t d = 0; d < v.cols; ++d) centers(c, d) /= static_cast<double>(counts[c]);
  double sse = 0.0;
  for (std::size_t i = 0; i < v.rows; ++i) sse += squared_distance(v.row(i), centers.row(labels[i]));
  return sse;
}

}  // namespace detail

inline std::size_t default_k(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n) / 2.0))));
}

/// Lloyd iterations from k-means++ seeding; stops at an assignment fixpoint
/// or after `max_iterations`. Distance ties go to the lower center index.
inline Assignment kmeans(const RowMatrix& v, std::size_t k, std::uint64_t seed,
                         std::size_t max_iterations = kKMeansMaxIterations) {
  const std::size_t n = v.rows;
  if (k < 1 || k > n) throw Error(Errc::invalid_k, "k must be in [1, " + std::to_string(n) + "]");

  std::mt19937_64 rng(seed);
  RowMatrix centers(k, v.cols);
  std::vector<char> chosen(n, 0);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy(v.row(first).begin(), v.row(first).end(), centers.row(0).begin());
  chosen[first] = 1;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(v.row(i), centers.row(c - 1)));
      total += chosen[i] ? 0.0 : d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        target -= d2[i];
        pick = i;
        if (target < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = 1;
    std::copy(v.row(pick).begin(), v.row(pick).end(), centers.row(c).begin());
  }

  Assignment res;
  std::vector<std::size_t> labels(n, k);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = squared_distance(v.row(i), centers.row(c));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      sse += best_d;
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    res.sse_history.push_back(sse);
    if (!changed) break;
    RowMatrix next(k, v.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t d = 0; d < v.cols; ++d) next(labels[i], d) += v(i, d);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < v.cols; ++d) centers(c, d) = next(c, d) / static_cast<double>(counts[c]);
    }
  }
  res.labels = labels;
  detail::compact_labels(res);
  res.sse = detail::assignment_sse(v, res.labels, res.clusters);
  return res;
}

/// Median pairwise Euclidean distance (lower median); falls back to the
/// maximum distance, then to 1, when the median is zero.
inline double default_bandwidth(const RowMatrix& v) {
  std::vector<double> d;
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = i + 1; j < v.rows; ++j) d.push_back(euclidean_distance(v.row(i), v.row(j)));
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (*mid > 0.0) return *mid;
  const double mx = *std::max_element(d.begin(), d.end());
  return mx > 0.0 ? mx : 1.0;
}

/// Flat-kernel mean shift. Every point climbs to its mode; modes closer than
/// bandwidth / 2 to an earlier cluster's mode join that cluster.
inline Assignment meanshift(const RowMatrix& v, double bandwidth, std::size_t max_iterations = 500) {
  if (!(bandwidth > 0.0)) throw Error(Errc::non_positive_bandwidth, "bandwidth must be positive");
  const std::size_t n = v.rows, dim = v.cols;
  const double tol = std::isfinite(bandwidth) ? 1e-9 * std::max(1.0, bandwidth) : 1e-9;

  RowMatrix modes(n, dim);
  std::vector<double> x(dim), next(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(v.row(i).begin(), v.row(i).end(), x.begin());
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
      std::fill(next.begin(), next.end(), 0.0);
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (euclidean_distance(v.row(j), x) <= bandwidth) {
          ++count;
          for (std::size_t d = 0; d < dim; ++d) next[d] += v(j, d);
        }
      }
      if (count == 0) break;
      for (double& c : next) c /= static_cast<double>(count);
      const double shift = euclidean_distance(next, x);
      x.swap(next);
      if (shift <= tol) break;
    }
    std::copy(x.begin(), x.end(), modes.row(i).begin());
  }

  Assignment res;
  res.labels.assign(n, 0);
  std::vector<std::size_t> heads;  // index of the mode that founded each cluster
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t label = heads.size();
    for (std::size_t c = 0; c < heads.size(); ++c)
      if (euclidean_distance(modes.row(i), modes.row(heads[c])) < bandwidth / 2.0) {
        label = c;
        break;
      }
    if (label == heads.size()) heads.push_back(i);
    res.labels[i] = label;
  }
  res.clusters = heads.size();
  res.sse = detail::assignment_sse(v, res.labels, res.clusters);
  return res;
}

// ---------------------------------------------------------------------------
// Layer clustering value object

struct NeuronCluster {
  std::size_t id = 0;
  std::vector<std::size_t> members;          // global neuron ids, ascending
  std::vector<std::size_t> representatives;  // closest to centroid first
  std::vector<double> centroid;
  std::size_t requested = kDefaultRepresentatives;  // how many representatives the view asks for

  bool operator==(const NeuronCluster&) const = default;
};

/// Members ordered by Euclidean distance to `centroid`, ties by neuron id.
template <class Lookup>
std::vector<std::size_t> rank_by_centroid(std::span<const std::size_t> members, std::span<const double> centroid,
                                          Lookup&& vector_of) {
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(members.size());
  for (auto n : members) keyed.emplace_back(euclidean_distance(vector_of(n), centroid), n);
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(k.second);
  return out;
}

class LayerClustering {
 public:
  LayerClustering() = default;

  /// `neurons` are the layer's global ids; row i of `vectors` is the
  /// activation vector of neurons[i]. `labels` come from kmeans/meanshift.
  LayerClustering(std::size_t layer, std::vector<std::size_t> neurons, RowMatrix vectors,
                  const std::vector<std::size_t>& labels, std::size_t representatives = kDefaultRepresentatives)
      : layer_(layer), neurons_(std::move(neurons)), vectors_(std::move(vectors)) {
    if (neurons_.size() != vectors_.rows || labels.size() != neurons_.size())
      throw Error(Errc::invalid_argument, "clustering inputs disagree in length");
    if (representatives < 1) throw Error(Errc::count_underflow, "representative count must be >= 1");
    for (std::size_t i = 0; i < neurons_.size(); ++i) row_of_.emplace(neurons_[i], i);
    std::map<std::size_t, std::size_t> label_to_cluster;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = label_to_cluster.emplace(labels[i], clusters_.size());
      if (inserted) {
        NeuronCluster c;
        c.id = clusters_.size();
        c.requested = representatives;
        clusters_.push_back(std::move(c));
      }
      clusters_[it->second].members.push_back(neurons_[i]);
    }
    // Clusters are numbered in order of their smallest member.
    std::sort(clusters_.begin(), clusters_.end(),
              [](const NeuronCluster& a, const NeuronCluster& b) { return a.members.front() < b.members.front(); });
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      clusters_[c].id = c;
      std::sort(clusters_[c].members.begin(), clusters_[c].members.end());
      refresh(clusters_[c]);
    }
    next_id_ = clusters_.size();
  }

  std::size_t layer() const noexcept { return layer_; }
  const std::vector<std::size_t>& neurons() const noexcept { return neurons_; }
  const RowMatrix& vectors() const noexcept { return vectors_; }
  const std::vector<NeuronCluster>& clusters() const noexcept { return clusters_; }
  std::size_t next_id() const noexcept { return next_id_; }

  std::span<const double> vector_of(std::size_t neuron) const {
    auto it = row_of_.find(neuron);
    if (it == row_of_.end()) throw Error(Errc::unknown_neuron, "neuron " + std::to_string(neuron) + " not in layer");
    return vectors_.row(it->second);
  }

  bool contains(std::size_t neuron) const { return row_of_.count(neuron) != 0; }

  const NeuronCluster& cluster(std::size_t id) const {
    for (const auto& c : clusters_)
      if (c.id == id) return c;
    throw Error(Errc::unknown_target_cluster, "no cluster " + std::to_string(id));
  }

  std::optional<std::size_t> cluster_of(std::size_t neuron) const {
    for (const auto& c : clusters_)
      if (std::binary_search(c.members.begin(), c.members.end(), neuron)) return c.id;
    return std::nullopt;
  }

  /// Moves `neuron` into cluster `target`, or into a fresh cluster when
  /// `target` is empty. Only the source and target clusters change.
  LayerClustering move_neuron(std::size_t neuron, std::optional<std::size_t> target,
                              std::size_t new_cluster_representatives = kDefaultRepresentatives) const {
    const auto source = cluster_of(neuron);
    if (!source) throw Error(Errc::unknown_neuron, "neuron " + std::to_string(neuron) + " is not clustered here");
    if (target) (void)cluster(*target);
    if (target && *target == *source) return *this;

    LayerClustering out = *this;
    auto src_it = out.find(*source);
    src_it->members.erase(std::lower_bound(src_it->members.begin(), src_it->members.end(), neuron));

    if (target) {
      auto dst = out.find(*target);
      dst->members.insert(std::lower_bound(dst->members.begin(), dst->members.end(), neuron), neuron);
      out.refresh(*dst);
    } else {
      NeuronCluster c;
      c.id = out.next_id_++;
      c.members = {neuron};
      c.requested = new_cluster_representatives;
      out.refresh(c);
      out.clusters_.push_back(std::move(c));
    }
    src_it = out.find(*source);
    if (src_it->members.empty())
      out.clusters_.erase(src_it);
    else
      out.refresh(*src_it);
    return out;
  }

  /// Grows or shrinks the representative list of one cluster.
  LayerClustering resize_cluster_view(std::size_t cluster_id, long delta) const {
    LayerClustering out = *this;
    auto it = out.find(cluster_id);
    const long shown = static_cast<long>(it->representatives.size());
    const long want = shown + delta;
    if (want < 1) throw Error(Errc::count_underflow, "a cluster must show at least one neuron");
    it->requested = std::min<std::size_t>(static_cast<std::size_t>(want), it->members.size());
    out.refresh(*it);
    return out;
  }

  bool operator==(const LayerClustering& o) const {
    return layer_ == o.layer_ && neurons_ == o.neurons_ && vectors_ == o.vectors_ && clusters_ == o.clusters_ &&
           next_id_ == o.next_id_;
  }

 private:
  std::vector<NeuronCluster>::iterator find(std::size_t id) {
    for (auto it = clusters_.begin(); it != clusters_.end(); ++it)
      if (it->id == id) return it;
    throw Error(Errc::unknown_target_cluster, "no cluster " + std::to_string(id));
  }

  void refresh(NeuronCluster& c) const {
    c.centroid.assign(vectors_.cols, 0.0);
    for (auto n : c.members) {
      auto v = vector_of(n);
      for (std::size_t d = 0; d < v.size(); ++d) c.centroid[d] += v[d];
    }
    for (double& x : c.centroid) x /= static_cast<double>(c.members.size());
    auto ranked = rank_by_centroid(c.members, c.centroid, [this](std::size_t n) { return vector_of(n); });
    ranked.resize(std::min(c.requested, ranked.size()));
    c.representatives = std::move(ranked);
  }

  std::size_t layer_ = 0;
  std::vector<std::size_t> neurons_;
  RowMatrix vectors_;
  std::map<std::size_t, std::size_t> row_of_;
  std::vector<NeuronCluster> clusters_;
  std::size_t next_id_ = 0;
};

/// The `count` members closest to the cluster centroid, nearest first.
inline std::vector<std::size_t> select_representatives(const LayerClustering& lc, const NeuronCluster& c,
                                                       std::size_t count) {
  if (count < 1) throw Error(Errc::count_underflow, "representative count must be >= 1");
  auto ranked = rank_by_centroid(c.members, c.centroid, [&](std::size_t n) { return lc.vector_of(n); });
  ranked.resize(std::min(count, ranked.size()));
  return ranked;
}

/// Neurons whose maximum activation over `classes` lies in the top-q
/// fraction of the layer: the first max(1, ceil(q * n)) neurons when sorted by
/// score descending, ties by neuron id.
inline std::set<std::size_t> filter_by_classes(const LayerClustering& lc, std::span<const std::size_t> classes,
                                               double q) {
  if (classes.empty()) throw Error(Errc::empty_class_set, "select at least one class");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(Errc::invalid_argument, "quantile must be in [0, 1]");
  const auto& neurons = lc.neurons();
  std::vector<std::pair<double, std::size_t>> scored;
  for (auto n : neurons) {
    auto v = lc.vector_of(n);
    double best = -std::numeric_limits<double>::infinity();
    for (auto c : classes) {
      if (c >= v.size()) throw Error(Errc::invalid_argument, "class index out of range");
      best = std::max(best, v[c]);
    }
    scored.emplace_back(-best, n);
  }
  std::sort(scored.begin(), scored.end());
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(neurons.size()) - 1e-12)));
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < std::min(keep, scored.size()); ++i) out.insert(scored[i].second);
  return out;
}

}  // namespace cnnvis

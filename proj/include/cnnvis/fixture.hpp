#pragma once

// A desk-scale CNN evaluator used to produce honest snapshots: single input
// channel, valid padding, stride 1, 2x2 non-overlapping max pooling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnnvis/error.hpp"
#include "cnnvis/snapshot.hpp"
#include "cnnvis/stats.hpp"

namespace cnnvis::fixture {

struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Grid(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const Grid&) const = default;
};

/// Valid cross-correlation: out(r, c) = sum_{u,v} input(r+u, c+v) * window(u, v).
inline Grid convolve(const Grid& input, const Grid& window) {
  if (window.rows == 0 || window.cols == 0 || window.rows > input.rows || window.cols > input.cols)
    throw Error(Errc::window_too_large, "window does not fit inside the input");
  Grid out(input.rows - window.rows + 1, input.cols - window.cols + 1);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) {
      double s = 0.0;
      for (std::size_t u = 0; u < window.rows; ++u)
        for (std::size_t v = 0; v < window.cols; ++v) s += input(r + u, c + v) * window(u, v);
      out(r, c) = s;
    }
  return out;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline Grid max_pool(const Grid& input, std::size_t window = 2) {
  if (window == 0 || input.rows % window != 0 || input.cols % window != 0)
    throw Error(Errc::non_divisible_dims, "input dimensions are not divisible by the pool window");
  Grid out(input.rows / window, input.cols / window);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u < window; ++u)
        for (std::size_t v = 0; v < window; ++v) m = std::max(m, input(r * window + u, c * window + v));
      out(r, c) = m;
    }
  return out;
}

/// Max-shifted softmax.
inline std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double shift = *std::max_element(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i] - shift);
  const double z = pairwise_sum(out);
  for (double& v : out) v /= z;
  return out;
}

struct LossValue {
  double value = 0.0;
  bool clamped = false;  // true when the true-class probability hit the 1e-300 floor
};

inline constexpr double kProbabilityFloor = 1e-300;

inline LossValue cross_entropy(std::span<const double> o, std::span<const double> t) {
  LossValue out;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (t[i] == 0.0) continue;
    double p = o[i];
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      out.clamped = true;
    }
    out.value -= t[i] * std::log(p);
  }
  return out;
}

/// Two-class hinge loss; t must be -1 or +1.
inline double hinge(double o, double t) {
  if (t != 1.0 && t != -1.0) throw Error(Errc::invalid_argument, "hinge label must be +1 or -1");
  return std::max(0.0, 1.0 - t * o);
}

// ---------------------------------------------------------------------------
// Network

enum class LossKind { cross_entropy, hinge };
enum class StageKind { conv, relu, pool, fc, norm, output };

struct LayerSpec {
  StageKind kind = StageKind::relu;
  std::size_t size = 0;    // channels (conv) or units (fc)
  std::size_t window = 0;  // conv only
};

/// Parses a compact shape string such as "c8k3-r-p-c8k3-r-p-f16-r-f4-o".
/// Tokens: cNkK conv, r relu, p 2x2 max pool, fN fully connected, n
/// pass-through normalization, o output (softmax or identity by loss).
inline std::vector<LayerSpec> parse_shape(std::string_view shape) {
  std::vector<LayerSpec> specs;
  auto number = [&](std::string_view s, std::size_t& pos) {
    std::size_t v = 0, start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') v = v * 10 + static_cast<std::size_t>(s[pos++] - '0');
    if (pos == start) throw Error(Errc::invalid_argument, "expected a number in shape '" + std::string(s) + "'");
    return v;
  };
  std::size_t start = 0;
  while (start <= shape.size()) {
    auto end = shape.find('-', start);
    if (end == std::string_view::npos) end = shape.size();
    auto tok = shape.substr(start, end - start);
    if (tok.empty()) throw Error(Errc::invalid_argument, "empty token in shape");
    std::size_t pos = 1;
    LayerSpec spec;
    switch (tok[0]) {
      case 'c':
        spec.kind = StageKind::conv;
        spec.size = number(tok, pos);
        if (pos >= tok.size() || tok[pos] != 'k') throw Error(Errc::invalid_argument, "conv token needs kK");
        ++pos;
        spec.window = number(tok, pos);
        break;
      case 'f':
        spec.kind = StageKind::fc;
        spec.size = number(tok, pos);
        break;
      case 'r': spec.kind = StageKind::relu; break;
      case 'p': spec.kind = StageKind::pool; break;
      case 'n': spec.kind = StageKind::norm; break;
      case 'o': spec.kind = StageKind::output; break;
      default: throw Error(Errc::invalid_argument, "unknown shape token '" + std::string(tok) + "'");
    }
    if (pos != tok.size()) throw Error(Errc::invalid_argument, "trailing characters in '" + std::string(tok) + "'");
    specs.push_back(spec);
    start = end + 1;
  }
  return specs;
}

struct Shape {
  std::size_t channels = 0, rows = 0, cols = 0;
  std::size_t size() const { return channels * rows * cols; }
  bool operator==(const Shape&) const = default;
};

struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
  double& at(std::size_t ch, std::size_t r, std::size_t c) { return values[(ch * shape.rows + r) * shape.cols + c]; }
  double at(std::size_t ch, std::size_t r, std::size_t c) const { return values[(ch * shape.rows + r) * shape.cols + c]; }
  Grid channel(std::size_t ch) const {
    const auto n = shape.rows * shape.cols;
    return Grid(shape.rows, shape.cols,
                std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(ch * n),
                                    values.begin() + static_cast<std::ptrdiff_t>((ch + 1) * n)));
  }
  bool operator==(const Tensor&) const = default;
};

struct Stage {
  LayerSpec spec;
  std::string name;
  Shape in;
  Shape out;
  std::vector<double> weights;  // conv: [out][in][k][k]; fc: [out][in_flat]
  std::vector<double> bias;
};

struct LabeledImage {
  Grid pixels;
  std::size_t label = 0;
};

class TinyNet {
 public:
  TinyNet(std::size_t input_size, std::vector<LayerSpec> specs, std::size_t classes, LossKind loss)
      : input_size_(input_size), classes_(classes), loss_(loss) {
    if (specs.empty() || specs.back().kind != StageKind::output)
      throw Error(Errc::invalid_argument, "network must end with an output stage");
    if (classes < 2) throw Error(Errc::invalid_argument, "need at least two classes");
    if (loss == LossKind::hinge && classes != 2)
      throw Error(Errc::invalid_argument, "hinge loss is two-class only");

    Shape cur{1, input_size, input_size};
    std::size_t counters[6] = {0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < specs.size(); ++i) {
      Stage st;
      st.spec = specs[i];
      st.in = cur;
      const auto k = static_cast<std::size_t>(specs[i].kind);
      const auto idx = std::to_string(++counters[k]);
      switch (specs[i].kind) {
        case StageKind::conv:
          if (st.spec.size == 0 || st.spec.window == 0 || st.spec.window > cur.rows || st.spec.window > cur.cols)
            throw Error(Errc::window_too_large, "conv stage " + idx + " window does not fit");
          st.name = "conv" + idx;
          st.out = {st.spec.size, cur.rows - st.spec.window + 1, cur.cols - st.spec.window + 1};
          st.weights.assign(st.spec.size * cur.channels * st.spec.window * st.spec.window, 0.0);
          st.bias.assign(st.spec.size, 0.0);
          break;
        case StageKind::relu:
          st.name = "relu" + idx;
          st.out = cur;
          break;
        case StageKind::norm:
          st.name = "norm" + idx;
          st.out = cur;
          break;
        case StageKind::pool:
          if (cur.rows % 2 != 0 || cur.cols % 2 != 0)
            throw Error(Errc::non_divisible_dims, "pool stage " + idx + " input is not divisible by 2");
          st.name = "pool" + idx;
          st.out = {cur.channels, cur.rows / 2, cur.cols / 2};
          break;
        case StageKind::fc:
          if (st.spec.size == 0) throw Error(Errc::invalid_argument, "fc stage needs units");
          st.name = "fc" + idx;
          st.out = {st.spec.size, 1, 1};
          st.weights.assign(st.spec.size * cur.size(), 0.0);
          st.bias.assign(st.spec.size, 0.0);
          break;
        case StageKind::output: {
          const std::size_t want = loss == LossKind::hinge ? 1 : classes;
          if (i == 0 || specs[i - 1].kind != StageKind::fc || cur.channels != want || cur.rows != 1)
            throw Error(Errc::invalid_argument,
                        "output must follow an fc stage with " + std::to_string(want) + " units");
          st.name = "out";
          st.out = cur;
          break;
        }
      }
      cur = st.out;
      stages_.push_back(std::move(st));
    }
  }

  std::size_t input_size() const { return input_size_; }
  std::size_t classes() const { return classes_; }
  LossKind loss() const { return loss_; }
  const std::vector<Stage>& stages() const { return stages_; }
  std::vector<Stage>& stages() { return stages_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : stages_) n += s.weights.size() + s.bias.size();
    return n;
  }

  /// Parameters flattened stage by stage, weights before biases.
  std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& s : stages_) {
      out.insert(out.end(), s.weights.begin(), s.weights.end());
      out.insert(out.end(), s.bias.begin(), s.bias.end());
    }
    return out;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw Error(Errc::invalid_argument, "parameter count mismatch");
    std::size_t i = 0;
    for (auto& s : stages_) {
      for (double& w : s.weights) w = p[i++];
      for (double& b : s.bias) b = p[i++];
    }
  }

  /// He-normal initialisation. With `dead_relu`, every weight stage from the
  /// `dead_from`-th one up to (not including) the output projection is forced
  /// mostly negative: all units but unit 0 receive only non-positive weights
  /// and a negative bias, so their ReLUs never fire on non-negative input.
  /// Forced magnitudes are floored at sigma and doubled, the state a run is in
  /// after the oversized updates that kill the units.
  void randomize(std::uint64_t seed, bool dead_relu = false, std::size_t dead_from = 2) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> weight_stages;
    for (std::size_t i = 0; i < stages_.size(); ++i)
      if (!stages_[i].weights.empty()) weight_stages.push_back(i);

    for (std::size_t w = 0; w < weight_stages.size(); ++w) {
      Stage& s = stages_[weight_stages[w]];
      const std::size_t units = s.bias.size();
      const std::size_t fan_in = s.weights.size() / units;
      const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
      std::normal_distribution<double> normal(0.0, sigma);
      const bool forced = dead_relu && w >= dead_from && w + 1 < weight_stages.size();
      for (std::size_t j = 0; j < units; ++j) {
        for (std::size_t k = 0; k < fan_in; ++k) {
          double v = normal(rng);
          if (forced) {
            const double m = 2.0 * std::max(std::abs(v), sigma);
            v = j == 0 ? m : -m;
          }
          s.weights[j * fan_in + k] = v;
        }
        s.bias[j] = forced ? (j == 0 ? 0.1 : -0.1) : 0.01;
      }
    }
  }

 private:
  std::size_t input_size_;
  std::size_t classes_;
  LossKind loss_;
  std::vector<Stage> stages_;
};

struct ForwardResult {
  std::vector<Tensor> outputs;  // one per stage
  double loss = 0.0;
  bool clamped = false;
};

namespace detail {

// Hinge convention: class 0 is the +1 class.
inline double hinge_label(std::size_t label) { return label == 0 ? 1.0 : -1.0; }

}  // namespace detail

inline ForwardResult forward(const TinyNet& net, const LabeledImage& img) {
  if (img.pixels.rows != net.input_size() || img.pixels.cols != net.input_size())
    throw Error(Errc::invalid_argument, "image size does not match the network input");
  if (img.label >= net.classes()) throw Error(Errc::invalid_argument, "label out of range");

  ForwardResult res;
  Tensor cur(Shape{1, img.pixels.rows, img.pixels.cols});
  cur.values = img.pixels.values;

  for (const auto& st : net.stages()) {
    Tensor out(st.out);
    switch (st.spec.kind) {
      case StageKind::conv: {
        const auto k = st.spec.window;
        for (std::size_t j = 0; j < st.out.channels; ++j) {
          Grid acc(st.out.rows, st.out.cols, st.bias[j]);
          for (std::size_t i = 0; i < st.in.channels; ++i) {
            const auto off = (j * st.in.channels + i) * k * k;
            Grid window(k, k, std::vector<double>(st.weights.begin() + static_cast<std::ptrdiff_t>(off),
                                                  st.weights.begin() + static_cast<std::ptrdiff_t>(off + k * k)));
            const Grid part = convolve(cur.channel(i), window);
            for (std::size_t p = 0; p < acc.values.size(); ++p) acc.values[p] += part.values[p];
          }
          std::copy(acc.values.begin(), acc.values.end(),
                    out.values.begin() + static_cast<std::ptrdiff_t>(j * acc.values.size()));
        }
        break;
      }
      case StageKind::relu:
        for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] = relu(cur.values[p]);
        break;
      case StageKind::norm:
        out.values = cur.values;
        break;
      case StageKind::pool:
        for (std::size_t ch = 0; ch < st.out.channels; ++ch) {
          const Grid pooled = max_pool(cur.channel(ch), 2);
          std::copy(pooled.values.begin(), pooled.values.end(),
                    out.values.begin() + static_cast<std::ptrdiff_t>(ch * pooled.values.size()));
        }
        break;
      case StageKind::fc: {
        const auto n = st.in.size();
        for (std::size_t j = 0; j < st.out.channels; ++j) {
          double s = st.bias[j];
          for (std::size_t i = 0; i < n; ++i) s += st.weights[j * n + i] * cur.values[i];
          out.values[j] = s;
        }
        break;
      }
      case StageKind::output:
        if (net.loss() == LossKind::cross_entropy) {
          out.values = softmax(cur.values);
          std::vector<double> t(net.classes(), 0.0);
          t[img.label] = 1.0;
          auto l = cross_entropy(out.values, t);
          res.loss = l.value;
          res.clamped = l.clamped;
        } else {
          out.values = cur.values;
          res.loss = hinge(out.values[0], detail::hinge_label(img.label));
        }
        break;
    }
    res.outputs.push_back(out);
    cur = std::move(out);
  }
  return res;
}

struct BackwardResult {
  ForwardResult forward;
  std::vector<std::vector<double>> weight_grads;  // per stage, same layout as Stage::weights
  std::vector<std::vector<double>> bias_grads;
  std::vector<Tensor> output_grads;  // dL/d(stage output)

  /// Gradient flattened in TinyNet::parameters() order.
  std::vector<double> flat() const {
    std::vector<double> out;
    for (std::size_t s = 0; s < weight_grads.size(); ++s) {
      out.insert(out.end(), weight_grads[s].begin(), weight_grads[s].end());
      out.insert(out.end(), bias_grads[s].begin(), bias_grads[s].end());
    }
    return out;
  }
};

inline BackwardResult backward(const TinyNet& net, const LabeledImage& img) {
  BackwardResult res;
  res.forward = forward(net, img);
  const auto& stages = net.stages();
  const auto& outs = res.forward.outputs;
  const std::size_t n = stages.size();
  res.weight_grads.resize(n);
  res.bias_grads.resize(n);
  res.output_grads.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    res.weight_grads[s].assign(stages[s].weights.size(), 0.0);
    res.bias_grads[s].assign(stages[s].bias.size(), 0.0);
  }

  Tensor input_image(Shape{1, img.pixels.rows, img.pixels.cols});
  input_image.values = img.pixels.values;
  auto input_of = [&](std::size_t s) -> const Tensor& { return s == 0 ? input_image : outs[s - 1]; };

  // Gradient wrt the output stage's *input* (the logits / raw score).
  Tensor delta(stages[n - 1].in);
  {
    const auto& o = outs[n - 1].values;
    Tensor dout(stages[n - 1].out);
    if (net.loss() == LossKind::cross_entropy) {
      for (std::size_t i = 0; i < o.size(); ++i) {
        delta.values[i] = o[i] - (i == img.label ? 1.0 : 0.0);
        const double p = std::max(o[i], kProbabilityFloor);
        dout.values[i] = i == img.label ? -1.0 / p : 0.0;
      }
    } else {
      const double t = detail::hinge_label(img.label);
      const double g = 1.0 - t * o[0] > 0.0 ? -t : 0.0;
      delta.values[0] = g;
      dout.values[0] = g;
    }
    res.output_grads[n - 1] = dout;
  }

  for (std::size_t si = n - 1; si-- > 0;) {
    const Stage& st = stages[si];
    res.output_grads[si] = delta;
    const Tensor& in = input_of(si);
    Tensor din(st.in);
    switch (st.spec.kind) {
      case StageKind::conv: {
        const auto k = st.spec.window;
        for (std::size_t j = 0; j < st.out.channels; ++j) {
          for (std::size_t r = 0; r < st.out.rows; ++r)
            for (std::size_t c = 0; c < st.out.cols; ++c) {
              const double d = delta.at(j, r, c);
              if (d == 0.0) continue;
              res.bias_grads[si][j] += d;
              for (std::size_t i = 0; i < st.in.channels; ++i) {
                const auto off = (j * st.in.channels + i) * k * k;
                for (std::size_t u = 0; u < k; ++u)
                  for (std::size_t v = 0; v < k; ++v) {
                    res.weight_grads[si][off + u * k + v] += d * in.at(i, r + u, c + v);
                    din.at(i, r + u, c + v) += d * st.weights[off + u * k + v];
                  }
              }
            }
        }
        break;
      }
      case StageKind::relu:
        for (std::size_t p = 0; p < din.values.size(); ++p)
          din.values[p] = in.values[p] > 0.0 ? delta.values[p] : 0.0;
        break;
      case StageKind::norm:
        din.values = delta.values;
        break;
      case StageKind::pool:
        for (std::size_t ch = 0; ch < st.out.channels; ++ch)
          for (std::size_t r = 0; r < st.out.rows; ++r)
            for (std::size_t c = 0; c < st.out.cols; ++c) {
              std::size_t br = 2 * r, bc = 2 * c;
              for (std::size_t u = 0; u < 2; ++u)
                for (std::size_t v = 0; v < 2; ++v)
                  if (in.at(ch, 2 * r + u, 2 * c + v) > in.at(ch, br, bc)) {
                    br = 2 * r + u;
                    bc = 2 * c + v;
                  }
              din.at(ch, br, bc) += delta.at(ch, r, c);
            }
        break;
      case StageKind::fc: {
        const auto m = st.in.size();
        for (std::size_t j = 0; j < st.out.channels; ++j) {
          const double d = delta.values[j];
          res.bias_grads[si][j] += d;
          for (std::size_t i = 0; i < m; ++i) {
            res.weight_grads[si][j * m + i] += d * in.values[i];
            din.values[i] += d * st.weights[j * m + i];
          }
        }
        break;
      }
      case StageKind::output:
        break;  // only the last stage, handled above
    }
    delta = std::move(din);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dataset and snapshot emission

/// Class-prototype images: each class has a fixed random pattern, every
/// sample is 0.7 * pattern + 0.3 * noise, pixels in [0, 1].
inline std::vector<LabeledImage> make_dataset(std::size_t input_size, std::size_t classes,
                                              std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Grid> protos;
  for (std::size_t c = 0; c < classes; ++c) {
    Grid g(input_size, input_size);
    for (double& v : g.values) v = unit(rng);
    protos.push_back(std::move(g));
  }
  std::vector<LabeledImage> out;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledImage img{Grid(input_size, input_size), c};
      for (std::size_t p = 0; p < img.pixels.values.size(); ++p)
        img.pixels.values[p] = 0.7 * protos[c].values[p] + 0.3 * unit(rng);
      out.push_back(std::move(img));
    }
  return out;
}

struct EmitOptions {
  std::string id = "fixture";
  std::vector<std::string> class_names;  // defaults to class0..class{m-1}
  double learning_rate = 0.05;           // prev_weights = weights + lr * mean gradient
  std::size_t patches_per_neuron = 8;
  bool patch_pixels = false;
};

inline LayerKind snapshot_kind(StageKind k) {
  switch (k) {
    case StageKind::conv: return LayerKind::conv;
    case StageKind::relu: return LayerKind::activation;
    case StageKind::pool: return LayerKind::pooling;
    case StageKind::fc: return LayerKind::fully_connected;
    case StageKind::norm: return LayerKind::normalization;
    case StageKind::output: return LayerKind::output;
  }
  return LayerKind::conv;
}

inline std::string neuron_name(const Stage& st, std::size_t j) { return st.name + "/" + std::to_string(j); }

/// Per-sample scalar activation of every neuron: the spatial mean of its
/// channel. Rows follow the global neuron order, columns the samples.
inline RowMatrix per_sample_activations(const TinyNet& net, const std::vector<LabeledImage>& data,
                                        std::vector<ForwardResult>* keep = nullptr) {
  std::size_t total = 0;
  for (const auto& st : net.stages()) total += st.out.channels;
  RowMatrix out(total, data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto fwd = forward(net, data[s]);
    std::size_t row = 0;
    for (std::size_t si = 0; si < net.stages().size(); ++si) {
      const Tensor& t = fwd.outputs[si];
      const auto area = t.shape.rows * t.shape.cols;
      for (std::size_t ch = 0; ch < t.shape.channels; ++ch, ++row)
        out(row, s) = mean(std::span<const double>(t.values).subspan(ch * area, area));
    }
    if (keep) keep->push_back(std::move(fwd));
  }
  return out;
}

/// Runs the dataset through the net and writes a snapshot: per-class mean
/// activations, edges between adjacent display layers (weight = sum of the
/// weights the edge aggregates), mean gradients, previous weights one SGD
/// step back, contribution scores and top patch references.
inline NetworkSnapshot emit_snapshot(const TinyNet& net, const std::vector<LabeledImage>& data,
                                     const EmitOptions& opt = {}) {
  const std::size_t m = net.classes();
  std::vector<std::size_t> per_class(m, 0);
  for (const auto& img : data) {
    if (img.label >= m) throw Error(Errc::invalid_argument, "label out of range");
    ++per_class[img.label];
  }
  for (std::size_t c = 0; c < m; ++c)
    if (per_class[c] == 0) throw Error(Errc::empty_class, "class " + std::to_string(c) + " has no images");

  SnapshotData d;
  d.id = opt.id;
  d.classes = opt.class_names;
  if (d.classes.empty())
    for (std::size_t c = 0; c < m; ++c) d.classes.push_back("class" + std::to_string(c));
  if (d.classes.size() != m) throw Error(Errc::invalid_argument, "class name count mismatch");

  const auto& stages = net.stages();
  for (const auto& st : stages) {
    Layer l{st.name, snapshot_kind(st.spec.kind), {}};
    for (std::size_t j = 0; j < st.out.channels; ++j) l.neurons.push_back(neuron_name(st, j));
    d.layers.push_back(std::move(l));
  }

  // Activations: per-class means of the per-sample table.
  const RowMatrix samples = per_sample_activations(net, data);
  d.activations.assign(samples.rows * m, 0.0);
  std::vector<double> buf;
  for (std::size_t r = 0; r < samples.rows; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      buf.clear();
      for (std::size_t s = 0; s < data.size(); ++s)
        if (data[s].label == c) buf.push_back(samples(r, s));
      d.activations[r * m + c] = mean(buf);
    }

  // Mean gradients and contribution scores.
  std::vector<std::vector<double>> wgrad(stages.size());
  for (std::size_t s = 0; s < stages.size(); ++s) wgrad[s].assign(stages[s].weights.size(), 0.0);
  std::vector<double> contrib(samples.rows, 0.0);
  for (const auto& img : data) {
    auto b = backward(net, img);
    std::size_t row = 0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (std::size_t i = 0; i < wgrad[s].size(); ++i) wgrad[s][i] += b.weight_grads[s][i];
      const Tensor& a = b.forward.outputs[s];
      const Tensor& g = b.output_grads[s];
      const auto area = a.shape.rows * a.shape.cols;
      for (std::size_t ch = 0; ch < a.shape.channels; ++ch, ++row) {
        double acc = 0.0;
        for (std::size_t p = 0; p < area; ++p) acc += a.values[ch * area + p] * g.values[ch * area + p];
        contrib[row] += std::abs(acc);
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (auto& g : wgrad)
    for (double& v : g) v *= inv_n;
  for (double& v : contrib) v *= inv_n;

  // Edges between adjacent display layers.
  const auto groups = group_layers(d.layers);
  auto group_of = [&](std::size_t layer) {
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (auto l : groups[g].member_layers)
        if (l == layer) return g;
    return groups.size();
  };
  std::vector<double> grads, prevs;
  for (std::size_t si = 1; si < stages.size(); ++si) {
    const Stage& st = stages[si];
    if (st.weights.empty()) continue;
    const auto gp = group_of(si - 1);
    const auto gs = group_of(si);
    if (gs != gp + 1) continue;
    const Layer& src = d.layers[groups[gp].display_layer];
    const Layer& dst = d.layers[groups[gs].display_layer];
    if (src.neurons.size() != st.in.channels || dst.neurons.size() != st.out.channels) continue;
    const auto per_edge = st.weights.size() / (st.out.channels * st.in.channels);
    for (std::size_t j = 0; j < st.out.channels; ++j)
      for (std::size_t i = 0; i < st.in.channels; ++i) {
        const auto off = (j * st.in.channels + i) * per_edge;
        double w = 0.0, g = 0.0;
        for (std::size_t k = 0; k < per_edge; ++k) {
          w += st.weights[off + k];
          g += wgrad[si][off + k];
        }
        d.edges.push_back(WeightedEdge{"e:" + st.name + ":" + std::to_string(i) + ":" + std::to_string(j),
                                       src.neurons[i], dst.neurons[j], w});
        grads.push_back(g);
        prevs.push_back(w + opt.learning_rate * g);
      }
  }
  d.gradients = std::move(grads);
  d.prev_weights = std::move(prevs);
  d.contributions = std::move(contrib);

  // Top patches for display neurons: the images that excite them most.
  if (opt.patches_per_neuron > 0) {
    std::size_t row_base = 0;
    std::vector<std::size_t> offsets;
    for (const auto& st : stages) {
      offsets.push_back(row_base);
      row_base += st.out.channels;
    }
    for (const auto& g : groups) {
      const auto l = g.display_layer;
      for (std::size_t j = 0; j < d.layers[l].neurons.size(); ++j) {
        const auto row = offsets[l] + j;
        std::vector<std::size_t> order(data.size());
        for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return samples(row, a) > samples(row, b); });
        auto& refs = d.patches[d.layers[l].neurons[j]];
        for (std::size_t k = 0; k < std::min(opt.patches_per_neuron, order.size()); ++k) {
          PatchRef ref{"img-" + std::to_string(order[k]), samples(row, order[k]), std::nullopt};
          if (opt.patch_pixels) {
            const auto& px = data[order[k]].pixels;
            ref.pixels = Raster{static_cast<int>(px.cols), static_cast<int>(px.rows), px.values};
          }
          refs.push_back(std::move(ref));
        }
      }
    }
  }

  return NetworkSnapshot::build(std::move(d));
}

struct FixtureSpec {
  std::string shape = "c8k3-r-p-c8k3-r-p-f16-r-f4-o";
  std::size_t input_size = 14;
  std::size_t classes = 4;
  std::size_t per_class = 6;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::cross_entropy;
  bool dead_relu = false;
  std::size_t dead_from = 2;
  EmitOptions emit;
};

/// Preset reproducing the dying-ReLU failure: three conv blocks and two
/// hidden FC layers, weights forced negative from the third weight stage on.
inline FixtureSpec dead_relu_spec(std::uint64_t seed = 1) {
  FixtureSpec f;
  f.shape = "c16k3-r-p-c16k3-r-p-c16k3-r-p-f32-r-f32-r-f10-o";
  f.input_size = 22;
  f.classes = 10;
  f.per_class = 4;
  f.seed = seed;
  f.dead_relu = true;
  f.emit.id = "dead-relu";
  return f;
}

struct Fixture {
  TinyNet net;
  std::vector<LabeledImage> data;
  NetworkSnapshot snapshot;
};

inline Fixture generate(const FixtureSpec& f) {
  TinyNet net(f.input_size, parse_shape(f.shape), f.classes, f.loss);
  net.randomize(f.seed, f.dead_relu, f.dead_from);
  auto data = make_dataset(f.input_size, f.classes, f.per_class, f.seed);
  auto snap = emit_snapshot(net, data, f.emit);
  return Fixture{std::move(net), std::move(data), std::move(snap)};
}

}  // namespace cnnvis::fixture

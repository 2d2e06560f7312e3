#pragma once

// Declarative SigNet architecture and the shared-weight twin model.
//
// The twin is a single parameter set evaluated twice; there is no second copy
// of the weights to keep in sync.

#include <optional>

#include "signet/keyvalue.hpp"
#include "signet/layers.hpp"

namespace signet {

enum class LayerKind { conv, lrn, pool, pool_dropout, flatten, dense, dense_dropout };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::lrn: return "lrn";
    case LayerKind::pool: return "pool";
    case LayerKind::pool_dropout: return "pool_dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dense_dropout: return "dense_dropout";
  }
  return "?";
}

inline LayerKind layer_kind_from(std::string_view s) {
  for (auto k : {LayerKind::conv, LayerKind::lrn, LayerKind::pool, LayerKind::pool_dropout, LayerKind::flatten,
                 LayerKind::dense, LayerKind::dense_dropout}) {
    if (to_string(k) == s) return k;
  }
  fail("unknown layer kind '", s, "'");
}

/// One entry of the stack. Conv and dense layers carry an optional ReLU.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t units = 0;  // conv output channels or dense units
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool relu = true;
  LrnParams lrn{};
  PoolSpec pool{};
  double dropout = 0.0;

  static LayerSpec conv(std::size_t out, std::size_t kernel, std::size_t stride = 1, std::size_t pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.units = out;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec local_norm(LrnParams p = {}) {
    LayerSpec s;
    s.kind = LayerKind::lrn;
    s.lrn = p;
    return s;
  }
  static LayerSpec max_pool(std::size_t window, std::size_t stride, double rate = 0.0) {
    LayerSpec s;
    s.kind = rate > 0.0 ? LayerKind::pool_dropout : LayerKind::pool;
    s.pool = {window, window, stride};
    s.dropout = rate;
    return s;
  }
  static LayerSpec flat() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }
  static LayerSpec fully_connected(std::size_t units, double rate = 0.0, bool relu = true) {
    LayerSpec s;
    s.kind = rate > 0.0 ? LayerKind::dense_dropout : LayerKind::dense;
    s.units = units;
    s.dropout = rate;
    s.relu = relu;
    return s;
  }

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::dense || kind == LayerKind::dense_dropout; }

  friend bool operator==(const LayerSpec& a, const LayerSpec& b) {
    return a.kind == b.kind && a.units == b.units && a.kernel == b.kernel && a.stride == b.stride &&
           a.pad == b.pad && a.relu == b.relu && a.lrn.alpha == b.lrn.alpha && a.lrn.beta == b.lrn.beta &&
           a.lrn.k == b.lrn.k && a.lrn.n == b.lrn.n && a.pool.window_h == b.pool.window_h &&
           a.pool.window_w == b.pool.window_w && a.pool.stride == b.pool.stride && a.dropout == b.dropout;
  }
};

struct ArchitectureConfig {
  std::string name = "signet";
  std::size_t input_height = 155;
  std::size_t input_width = 220;
  std::vector<LayerSpec> layers;
  std::size_t embedding_dim = 128;

  /// The full network: 155x220 input, 128-d embedding.
  static ArchitectureConfig signet() {
    ArchitectureConfig c;
    c.name = "signet";
    c.input_height = 155;
    c.input_width = 220;
    c.embedding_dim = 128;
    c.layers = {
        LayerSpec::conv(96, 11, 1, 0),
        LayerSpec::local_norm(),
        LayerSpec::max_pool(3, 2),
        LayerSpec::conv(256, 5, 1, 2),
        LayerSpec::local_norm(),
        LayerSpec::max_pool(3, 2, 0.3),
        LayerSpec::conv(384, 3, 1, 1),
        LayerSpec::conv(256, 3, 1, 1),
        LayerSpec::max_pool(3, 2, 0.3),
        LayerSpec::flat(),
        LayerSpec::fully_connected(1024, 0.5),
        LayerSpec::fully_connected(128),
    };
    return c;
  }

  /// Desk-scale variant with the same layer pattern: two conv blocks,
  /// 32x48 input, 16-d embedding.
  static ArchitectureConfig signet_tiny() {
    ArchitectureConfig c;
    c.name = "signet-tiny";
    c.input_height = 32;
    c.input_width = 48;
    c.embedding_dim = 16;
    c.layers = {
        LayerSpec::conv(8, 5, 1, 2),
        LayerSpec::local_norm(),
        LayerSpec::max_pool(3, 2),
        LayerSpec::conv(16, 3, 1, 1),
        LayerSpec::local_norm(),
        LayerSpec::max_pool(3, 2, 0.3),
        LayerSpec::flat(),
        LayerSpec::fully_connected(64, 0.5),
        LayerSpec::fully_connected(16),
    };
    return c;
  }

  static ArchitectureConfig preset(std::string_view name) {
    if (name == "full" || name == "signet") return signet();
    if (name == "tiny" || name == "signet-tiny") return signet_tiny();
    fail("unknown architecture preset '", name, "' (expected full or tiny)");
  }

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Per-sample output shape of every layer ([C,H,W] or [D]), validating the chain.
/// Errors name the offending layer index.
inline std::vector<Shape> infer_shapes(const ArchitectureConfig& config) {
  if (config.input_height == 0 || config.input_width == 0) fail("architecture: empty input size");
  if (config.layers.empty()) fail("architecture: no layers");
  std::vector<Shape> out;
  Shape cur{1, config.input_height, config.input_width};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    auto bad = [&](const auto&... msg) { fail("architecture: layer ", i, " (", to_string(l.kind), "): ", msg...); };
    switch (l.kind) {
      case LayerKind::conv:
        if (cur.size() != 3) bad("expects a spatial input, got ", shape_str(cur));
        if (l.units == 0 || l.kernel == 0 || l.stride == 0) bad("invalid parameters");
        if (l.pad >= l.kernel) bad("pad must be smaller than kernel");
        if (cur[1] + 2 * l.pad < l.kernel || cur[2] + 2 * l.pad < l.kernel) {
          bad("kernel ", l.kernel, " does not fit input ", shape_str(cur));
        }
        cur = {l.units, conv_out_extent(cur[1], l.kernel, l.stride, l.pad),
               conv_out_extent(cur[2], l.kernel, l.stride, l.pad)};
        break;
      case LayerKind::lrn:
        if (cur.size() != 3) bad("expects a spatial input, got ", shape_str(cur));
        if (l.lrn.n == 0 || l.lrn.alpha <= 0 || l.lrn.beta <= 0) bad("invalid parameters");
        break;
      case LayerKind::pool:
      case LayerKind::pool_dropout:
        if (cur.size() != 3) bad("expects a spatial input, got ", shape_str(cur));
        if (l.pool.stride == 0 || l.pool.window_h == 0 || l.pool.window_w == 0) bad("invalid parameters");
        if (l.pool.window_h > cur[1] || l.pool.window_w > cur[2]) bad("window larger than input ", shape_str(cur));
        cur = {cur[0], pool_out_extent(cur[1], l.pool.window_h, l.pool.stride),
               pool_out_extent(cur[2], l.pool.window_w, l.pool.stride)};
        break;
      case LayerKind::flatten:
        if (cur.size() != 3) bad("expects a spatial input, got ", shape_str(cur));
        cur = {shape_numel(cur)};
        break;
      case LayerKind::dense:
      case LayerKind::dense_dropout:
        if (cur.size() != 1) bad("expects a flat input, got ", shape_str(cur), " (missing flatten?)");
        if (l.units == 0) bad("zero units");
        cur = {l.units};
        break;
    }
    if ((l.kind == LayerKind::pool_dropout || l.kind == LayerKind::dense_dropout) &&
        !(l.dropout >= 0.0 && l.dropout < 1.0)) {
      bad("dropout rate must be in [0,1)");
    }
    out.push_back(cur);
  }
  const auto& last = config.layers.back();
  if (last.kind != LayerKind::dense && last.kind != LayerKind::dense_dropout) {
    fail("architecture: last layer must be dense");
  }
  if (cur[0] != config.embedding_dim) {
    fail("architecture: layer ", config.layers.size() - 1, " (dense): has ", cur[0],
         " units but embedding_dim is ", config.embedding_dim);
  }
  return out;
}

struct ParamShape {
  std::string name;
  Shape shape;
};

/// Parameter names and shapes in model order: conv{i}.weight/bias, fc{j}.weight/bias.
inline std::vector<ParamShape> parameter_shapes(const ArchitectureConfig& config) {
  const auto shapes = infer_shapes(config);
  std::vector<ParamShape> out;
  Shape prev{1, config.input_height, config.input_width};
  std::size_t conv_i = 0, fc_i = 0;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    if (l.kind == LayerKind::conv) {
      const auto name = "conv" + std::to_string(++conv_i);
      out.push_back({name + ".weight", {l.units, prev[0], l.kernel, l.kernel}});
      out.push_back({name + ".bias", {l.units}});
    } else if (l.kind == LayerKind::dense || l.kind == LayerKind::dense_dropout) {
      const auto name = "fc" + std::to_string(++fc_i);
      out.push_back({name + ".weight", {prev[0], l.units}});
      out.push_back({name + ".bias", {l.units}});
    }
    prev = shapes[i];
  }
  return out;
}

inline std::size_t parameter_count(const ArchitectureConfig& config) {
  std::size_t total = 0;
  for (const auto& p : parameter_shapes(config)) total += shape_numel(p.shape);
  return total;
}

// ---------------------------------------------------------------------------
// Text form of the architecture (embedded in checkpoints).
// ---------------------------------------------------------------------------

inline std::string serialize_architecture(const ArchitectureConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"name", c.name},
      {"input_height", std::to_string(c.input_height)},
      {"input_width", std::to_string(c.input_width)},
      {"embedding_dim", std::to_string(c.embedding_dim)},
      {"layers", std::to_string(c.layers.size())},
  };
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto& l = c.layers[i];
    std::string v(to_string(l.kind));
    switch (l.kind) {
      case LayerKind::conv:
        v += concat(" out=", l.units, " kernel=", l.kernel, " stride=", l.stride, " pad=", l.pad, " relu=", l.relu);
        break;
      case LayerKind::lrn:
        v += concat(" alpha=", format_double(l.lrn.alpha), " beta=", format_double(l.lrn.beta),
                    " k=", format_double(l.lrn.k), " n=", l.lrn.n);
        break;
      case LayerKind::pool:
      case LayerKind::pool_dropout:
        v += concat(" window=", l.pool.window_h, "x", l.pool.window_w, " stride=", l.pool.stride);
        if (l.kind == LayerKind::pool_dropout) v += " rate=" + format_double(l.dropout);
        break;
      case LayerKind::flatten:
        break;
      case LayerKind::dense:
      case LayerKind::dense_dropout:
        v += concat(" units=", l.units, " relu=", l.relu);
        if (l.kind == LayerKind::dense_dropout) v += " rate=" + format_double(l.dropout);
        break;
    }
    kv.emplace_back("layer." + std::to_string(i), v);
  }
  return format_key_values(kv);
}

inline ArchitectureConfig parse_architecture(std::string_view text) {
  const auto kv = parse_key_values(text);
  ArchitectureConfig c;
  c.name = require_key(kv, "name");
  c.input_height = parse_uint(require_key(kv, "input_height"), "input_height");
  c.input_width = parse_uint(require_key(kv, "input_width"), "input_width");
  c.embedding_dim = parse_uint(require_key(kv, "embedding_dim"), "embedding_dim");
  const auto count = parse_uint(require_key(kv, "layers"), "layers");
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream in(require_key(kv, "layer." + std::to_string(i)));
    std::string kind_str;
    in >> kind_str;
    LayerSpec l;
    l.kind = layer_kind_from(kind_str);
    std::string tok;
    while (in >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("layer.", i, ": malformed field '", tok, "'");
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "out" || key == "units") l.units = parse_uint(val, key);
      else if (key == "kernel") l.kernel = parse_uint(val, key);
      else if (key == "stride") {
        l.stride = parse_uint(val, key);
        l.pool.stride = l.stride;
      } else if (key == "pad") l.pad = parse_uint(val, key);
      else if (key == "relu") l.relu = parse_uint(val, key) != 0;
      else if (key == "alpha") l.lrn.alpha = parse_double(val, key);
      else if (key == "beta") l.lrn.beta = parse_double(val, key);
      else if (key == "k") l.lrn.k = parse_double(val, key);
      else if (key == "n") l.lrn.n = parse_uint(val, key);
      else if (key == "rate") l.dropout = parse_double(val, key);
      else if (key == "window") {
        const auto x = val.find('x');
        if (x == std::string::npos) fail("layer.", i, ": window must be HxW");
        l.pool.window_h = parse_uint(val.substr(0, x), key);
        l.pool.window_w = parse_uint(val.substr(x + 1), key);
      } else {
        fail("layer.", i, ": unknown field '", key, "'");
      }
    }
    if (l.kind != LayerKind::pool && l.kind != LayerKind::pool_dropout) l.pool = PoolSpec{};
    if (l.kind == LayerKind::pool || l.kind == LayerKind::pool_dropout) l.stride = 1;
    c.layers.push_back(l);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <std::floating_point T>
class Model {
 public:
  Model(ArchitectureConfig config, std::vector<NamedTensor<T>> params)
      : config_(std::move(config)), params_(std::move(params)) {
    const auto expected = parameter_shapes(config_);
    if (expected.size() != params_.size()) {
      fail("model: expected ", expected.size(), " parameter tensors, got ", params_.size());
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (params_[i].name != expected[i].name) {
        fail("model: parameter ", i, " is '", params_[i].name, "', expected '", expected[i].name, "'");
      }
      if (params_[i].value.shape() != expected[i].shape) {
        fail("model: tensor '", expected[i].name, "' has shape ", shape_str(params_[i].value.shape()),
             ", architecture needs ", shape_str(expected[i].shape));
      }
      params_[i].value.set_requires_grad(true);
    }
    shapes_ = infer_shapes(config_);
  }

  const ArchitectureConfig& config() const { return config_; }
  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  std::vector<NamedTensor<T>>& parameters() { return params_; }
  const std::vector<Shape>& layer_shapes() const { return shapes_; }

  const Tensor<T>& parameter(std::string_view name) const {
    for (const auto& p : params_) {
      if (p.name == name) return p.value;
    }
    fail("model: no parameter named '", name, "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  /// Runs layers [0, upto) on a [N,1,H,W] batch.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode, Rng* rng, std::size_t upto) const {
    if (batch.rank() != 4 || batch.dim(1) != 1) {
      fail("embed: expected a [N,1,H,W] batch, got ", shape_str(batch.shape()));
    }
    if (batch.dim(2) != config_.input_height || batch.dim(3) != config_.input_width) {
      fail("embed: input is ", batch.dim(2), "x", batch.dim(3), ", model expects ", config_.input_height, "x",
           config_.input_width);
    }
    if (mode == Mode::train && rng == nullptr) fail("embed: train mode needs an RNG state");
    Tensor<T> x = batch;
    std::size_t p = 0;
    for (std::size_t i = 0; i < upto; ++i) {
      const auto& l = config_.layers[i];
      switch (l.kind) {
        case LayerKind::conv:
          x = conv2d(x, Conv2dParams<T>{params_[p].value, params_[p + 1].value, l.stride, l.pad});
          p += 2;
          if (l.relu) x = relu(x);
          break;
        case LayerKind::lrn:
          x = lrn(x, l.lrn);
          break;
        case LayerKind::pool:
          x = maxpool2d(x, l.pool);
          break;
        case LayerKind::pool_dropout:
          x = maxpool2d(x, l.pool);
          if (mode == Mode::train) x = dropout(x, DropoutSpec{l.dropout, mode}, *rng);
          break;
        case LayerKind::flatten:
          x = flatten(x);
          break;
        case LayerKind::dense:
        case LayerKind::dense_dropout:
          x = dense(x, params_[p].value, params_[p + 1].value);
          p += 2;
          if (l.relu) x = relu(x);
          if (l.kind == LayerKind::dense_dropout && mode == Mode::train) {
            x = dropout(x, DropoutSpec{l.dropout, mode}, *rng);
          }
          break;
      }
    }
    return x;
  }

 private:
  ArchitectureConfig config_;
  std::vector<NamedTensor<T>> params_;
  std::vector<Shape> shapes_;
};

/// Glorot-uniform weights, zero biases. Deterministic in the seed.
template <std::floating_point T = float>
Model<T> build_signet(const ArchitectureConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedTensor<T>> params;
  for (auto& ps : parameter_shapes(config)) {
    if (ps.shape.size() == 1) {
      params.push_back({ps.name, Tensor<T>::zeros(ps.shape)});
    } else {
      params.push_back({ps.name, glorot_init<T>(ps.shape, rng)});
    }
  }
  return Model<T>(config, std::move(params));
}

/// Maps a [N,1,H,W] batch to [N, embedding_dim]. Train mode applies dropout
/// and needs an RNG; infer mode is deterministic.
template <std::floating_point T>
Tensor<T> embed(const Model<T>& model, const Tensor<T>& batch, Mode mode, Rng* rng = nullptr) {
  return model.forward(batch, mode, rng, model.config().layers.size());
}

/// Row-wise Euclidean distance between two [N, D] embeddings.
template <std::floating_point T>
Tensor<T> pair_distance(const Tensor<T>& e1, const Tensor<T>& e2) {
  if (e1.shape() != e2.shape() || e1.rank() != 2) {
    fail("pair_distance: embeddings must share a [N,D] shape, got ", shape_str(e1.shape()), " and ",
         shape_str(e2.shape()));
  }
  return sqrt(row_sum(square(sub(e1, e2))));
}

struct ActivationMaps {
  std::size_t layer_index = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<float>> maps;  // one row-major map per channel
  std::vector<double> energy;            // sum of squares per channel
  std::vector<std::size_t> ranking;      // channels by descending energy, ties by index
};

/// Post-activation responses of a conv layer for a single [1,1,H,W] image.
template <std::floating_point T>
ActivationMaps activation_maps(const Model<T>& model, const Tensor<T>& image, std::size_t layer_index) {
  const auto& layers = model.config().layers;
  if (layer_index >= layers.size() || layers[layer_index].kind != LayerKind::conv) {
    fail("activation_maps: layer ", layer_index, " is not a conv layer");
  }
  if (image.rank() != 4 || image.dim(0) != 1) fail("activation_maps: expected a single [1,1,H,W] image");
  const Tensor<T> y = model.forward(image, Mode::infer, nullptr, layer_index + 1);
  ActivationMaps out;
  out.layer_index = layer_index;
  const std::size_t C = y.dim(1);
  out.height = y.dim(2);
  out.width = y.dim(3);
  const std::size_t hw = out.height * out.width;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<float> m(hw);
    double e = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      m[i] = static_cast<float>(y.data()[c * hw + i]);
      e += static_cast<double>(y.data()[c * hw + i]) * y.data()[c * hw + i];
    }
    out.maps.push_back(std::move(m));
    out.energy.push_back(e);
  }
  out.ranking.resize(C);
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return out.energy[a] > out.energy[b]; });
  return out;
}

/// Index of the last conv layer in the stack.
inline std::size_t last_conv_layer(const ArchitectureConfig& config) {
  std::optional<std::size_t> idx;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    if (config.layers[i].kind == LayerKind::conv) idx = i;
  }
  if (!idx) fail("architecture has no conv layer");
  return *idx;
}

}  // namespace signet

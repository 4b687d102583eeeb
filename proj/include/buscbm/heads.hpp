#pragma once

// Post-bottleneck cancer heads (linear, nonlinear, nonlinear with a side
// channel), their exact gradients and SGD training on frozen concept logits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/metrics.hpp"
#include "buscbm/random.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

enum class HeadVariant : std::uint8_t { linear, nonlinear, nonlinear_side };

inline constexpr std::array<std::string_view, 3> kHeadVariantNames = {"linear", "nonlinear",
                                                                      "nonlinear_side"};

inline std::string_view to_string(HeadVariant v) { return kHeadVariantNames[static_cast<std::size_t>(v)]; }

inline HeadVariant parse_head_variant(std::string_view s) {
  for (std::size_t i = 0; i < kHeadVariantNames.size(); ++i) {
    if (s == kHeadVariantNames[i]) return static_cast<HeadVariant>(i);
  }
  if (s == "nonlinear-side" || s == "side") return HeadVariant::nonlinear_side;
  throw InputError("unknown head variant '" + std::string(s) + "'");
}

inline constexpr std::array<int, 6> kHiddenWidths = {2048, 1024, 512, 256, 128, 64};
inline constexpr int kSideHiddenWidth = 32;

struct HeadConfig {
  HeadVariant variant = HeadVariant::linear;
  int hidden_width = 512;
  bool intermediate_sigmoid = false;
  int side_feature_dim = 0;
  double base_learning_rate = 4e-4;
  double momentum = 0.5;
  int batch_size = 16;
  int warmup_steps = 100;
  // Learning-rate multiplier at step 0 of the linear warmup.
  double warmup_factor = 0.001;
  int epochs = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (std::find(kHiddenWidths.begin(), kHiddenWidths.end(), hidden_width) == kHiddenWidths.end()) {
      throw InputError("hidden_width must be one of 64, 128, 256, 512, 1024, 2048");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
    if (batch_size < 1) throw InputError("batch_size must be >= 1");
    if (!(base_learning_rate >= 0.0) || !std::isfinite(base_learning_rate)) {
      throw InputError("base_learning_rate must be finite and non-negative");
    }
    if (warmup_steps < 0) throw InputError("warmup_steps must be >= 0");
    if (!(warmup_factor >= 0.0 && warmup_factor <= 1.0)) throw InputError("warmup_factor must lie in [0, 1]");
    if (epochs < 0) throw InputError("epochs must be >= 0");
    if (side_feature_dim < 0) throw InputError("side_feature_dim must be >= 0");
    if (variant == HeadVariant::nonlinear_side && side_feature_dim < 1) {
      throw InputError("nonlinear_side requires side_feature_dim >= 1");
    }
  }

  /// Width of the bottleneck fed to the post-bottleneck layers.
  int bottleneck_width() const {
    return static_cast<int>(kNumConcepts) + (variant == HeadVariant::nonlinear_side ? 1 : 0);
  }
};

/// Fully-connected layer; weights are out x in, row-major.
struct DenseLayer {
  std::string name;
  int in = 0;
  int out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double weight(int o, int i) const { return weights[static_cast<std::size_t>(o) * in + i]; }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (int o = 0; o < out; ++o) {
      double acc = bias[static_cast<std::size_t>(o)];
      const double* w = weights.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = acc;
    }
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerShape {
  std::string name;
  int in = 0;
  int out = 0;
};

/// Layer order per variant. The side subnetwork (when present) comes first
/// and produces the single extra bottleneck node.
inline std::vector<LayerShape> layer_shapes(const HeadConfig& config) {
  const int k = static_cast<int>(kNumConcepts);
  switch (config.variant) {
    case HeadVariant::linear:
      return {{"output", k, 1}};
    case HeadVariant::nonlinear:
      return {{"hidden", k, config.hidden_width}, {"output", config.hidden_width, 1}};
    case HeadVariant::nonlinear_side:
      return {{"side_hidden", config.side_feature_dim, kSideHiddenWidth},
              {"side_output", kSideHiddenWidth, 1},
              {"hidden", k + 1, config.hidden_width},
              {"output", config.hidden_width, 1}};
  }
  return {};
}

struct HeadParams {
  std::vector<DenseLayer> layers;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  // Flat views over every parameter, layer by layer, weights before bias.
  double& flat(std::size_t index) {
    for (auto& l : layers) {
      if (index < l.weights.size()) return l.weights[index];
      index -= l.weights.size();
      if (index < l.bias.size()) return l.bias[index];
      index -= l.bias.size();
    }
    throw InputError("parameter index out of range");
  }
  double flat(std::size_t index) const { return const_cast<HeadParams*>(this)->flat(index); }

  bool finite() const {
    for (const auto& l : layers) {
      for (double w : l.weights) if (!std::isfinite(w)) return false;
      for (double b : l.bias) if (!std::isfinite(b)) return false;
    }
    return true;
  }

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

inline HeadParams zero_params(const HeadConfig& config) {
  HeadParams p;
  for (const auto& s : layer_shapes(config)) {
    p.layers.push_back({s.name, s.in, s.out, std::vector<double>(static_cast<std::size_t>(s.in) * s.out, 0.0),
                        std::vector<double>(static_cast<std::size_t>(s.out), 0.0)});
  }
  return p;
}

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline HeadParams init_params(const HeadConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 1));
  HeadParams p = zero_params(config);
  for (auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (double& w : l.weights) w = rng.uniform(-limit, limit);
  }
  return p;
}

inline void check_shapes(const HeadParams& params, const HeadConfig& config) {
  const auto shapes = layer_shapes(config);
  if (params.layers.size() != shapes.size()) {
    throw InputError("head parameters have " + std::to_string(params.layers.size()) + " layers, variant " +
                     std::string(to_string(config.variant)) + " expects " + std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& l = params.layers[i];
    const auto& s = shapes[i];
    if (l.name != s.name || l.in != s.in || l.out != s.out ||
        l.weights.size() != static_cast<std::size_t>(s.in) * s.out ||
        l.bias.size() != static_cast<std::size_t>(s.out)) {
      throw InputError("layer '" + l.name + "' shape does not match config (expected " + s.name + " " +
                       std::to_string(s.in) + "x" + std::to_string(s.out) + ")");
    }
  }
}

struct TrainRecord {
  ConceptLogits concept_logits;
  std::vector<double> side_features;
  bool cancer_label = false;
  double weight = 1.0;
};

inline constexpr double kLossClamp = 1e-12;

namespace detail {

// Activations of one forward pass, kept for backpropagation.
struct HeadTrace {
  std::vector<double> bottleneck;  // concept inputs (+ side node)
  std::vector<double> side_pre;
  std::vector<double> side_act;
  std::vector<double> hidden_pre;
  std::vector<double> hidden_act;
  double z = 0.0;
};

inline void check_input(const HeadConfig& config, const ConceptLogits& logits,
                        std::span<const double> side) {
  if (config.variant == HeadVariant::nonlinear_side) {
    if (side.size() != static_cast<std::size_t>(config.side_feature_dim)) {
      throw InputError("side_features has length " + std::to_string(side.size()) + ", expected " +
                       std::to_string(config.side_feature_dim));
    }
  }
  if (!logits.finite()) throw InputError("non-finite concept logit");
}

inline double head_logit(const HeadParams& params, const HeadConfig& config, const ConceptLogits& logits,
                         std::span<const double> side, HeadTrace& t) {
  check_input(config, logits, side);
  t.bottleneck.assign(static_cast<std::size_t>(config.bottleneck_width()), 0.0);
  for (std::size_t i = 0; i < kNumConcepts; ++i) {
    t.bottleneck[i] = config.intermediate_sigmoid ? sigmoid(logits[i]) : logits[i];
  }
  std::size_t next = 0;
  if (config.variant == HeadVariant::nonlinear_side) {
    const auto& sh = params.layers[0];
    const auto& so = params.layers[1];
    t.side_pre.assign(static_cast<std::size_t>(sh.out), 0.0);
    sh.apply(side, t.side_pre);
    t.side_act = t.side_pre;
    for (double& v : t.side_act) v = std::max(0.0, v);
    double s = 0.0;
    so.apply(t.side_act, std::span<double>(&s, 1));
    t.bottleneck[kNumConcepts] = s;
    next = 2;
  }
  if (config.variant == HeadVariant::linear) {
    params.layers[next].apply(t.bottleneck, std::span<double>(&t.z, 1));
    return t.z;
  }
  const auto& hidden = params.layers[next];
  const auto& output = params.layers[next + 1];
  t.hidden_pre.assign(static_cast<std::size_t>(hidden.out), 0.0);
  hidden.apply(t.bottleneck, t.hidden_pre);
  t.hidden_act = t.hidden_pre;
  for (double& v : t.hidden_act) v = std::max(0.0, v);
  output.apply(t.hidden_act, std::span<double>(&t.z, 1));
  return t.z;
}

inline double clamp_probability(double p) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(p, lo, hi);
}

inline void accumulate_dense(DenseLayer& g, const DenseLayer& layer, std::span<const double> x,
                             std::span<const double> dy, std::span<double> dx) {
  for (int o = 0; o < layer.out; ++o) {
    const double d = dy[static_cast<std::size_t>(o)];
    if (d == 0.0) continue;
    g.bias[static_cast<std::size_t>(o)] += d;
    double* gw = g.weights.data() + static_cast<std::size_t>(o) * layer.in;
    const double* w = layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
    for (int i = 0; i < layer.in; ++i) {
      gw[i] += d * x[static_cast<std::size_t>(i)];
      if (!dx.empty()) dx[static_cast<std::size_t>(i)] += d * w[i];
    }
  }
}

inline void backprop(const HeadParams& params, const HeadConfig& config, const TrainRecord& r,
                     const HeadTrace& t, double dz, HeadParams& grad) {
  const bool side = config.variant == HeadVariant::nonlinear_side;
  const std::size_t next = side ? 2 : 0;
  std::vector<double> dbottleneck(t.bottleneck.size(), 0.0);
  if (config.variant == HeadVariant::linear) {
    accumulate_dense(grad.layers[next], params.layers[next], t.bottleneck, std::span<const double>(&dz, 1),
                     side ? std::span<double>(dbottleneck) : std::span<double>());
    return;
  }
  const auto& hidden = params.layers[next];
  const auto& output = params.layers[next + 1];
  std::vector<double> dhidden(static_cast<std::size_t>(hidden.out), 0.0);
  accumulate_dense(grad.layers[next + 1], output, t.hidden_act, std::span<const double>(&dz, 1), dhidden);
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (!(t.hidden_pre[i] > 0.0)) dhidden[i] = 0.0;
  }
  accumulate_dense(grad.layers[next], hidden, t.bottleneck, dhidden,
                   side ? std::span<double>(dbottleneck) : std::span<double>());
  if (!side) return;

  const double ds = dbottleneck[kNumConcepts];
  std::vector<double> dside(static_cast<std::size_t>(kSideHiddenWidth), 0.0);
  accumulate_dense(grad.layers[1], params.layers[1], t.side_act, std::span<const double>(&ds, 1), dside);
  for (std::size_t i = 0; i < dside.size(); ++i) {
    if (!(t.side_pre[i] > 0.0)) dside[i] = 0.0;
  }
  accumulate_dense(grad.layers[0], params.layers[0], r.side_features, dside, std::span<double>());
}

}  // namespace detail

/// Cancer probability in (0, 1) for one lesion's bottleneck outputs.
inline double forward(const HeadParams& params, const HeadConfig& config, const ConceptLogits& logits,
                      std::span<const double> side_features = {}) {
  check_shapes(params, config);
  detail::HeadTrace t;
  return detail::clamp_probability(sigmoid(detail::head_logit(params, config, logits, side_features, t)));
}

inline double forward(const HeadParams& params, const HeadConfig& config, const TrainRecord& input) {
  return forward(params, config, input.concept_logits, input.side_features);
}

inline double record_loss(double p, bool y) {
  const double q = std::clamp(p, kLossClamp, 1.0 - kLossClamp);
  return y ? -std::log(q) : -std::log(1.0 - q);
}

/// Weighted mean binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
inline double loss(const HeadParams& params, const HeadConfig& config, std::span<const TrainRecord> batch) {
  if (batch.empty()) throw InputError("loss: empty batch");
  check_shapes(params, config);
  detail::HeadTrace t;
  double total = 0.0;
  double weight = 0.0;
  for (const auto& r : batch) {
    const double p = sigmoid(detail::head_logit(params, config, r.concept_logits, r.side_features, t));
    total += r.weight * record_loss(p, r.cancer_label);
    weight += r.weight;
  }
  if (!(weight > 0.0)) throw InputError("loss: batch weights sum to zero");
  return total / weight;
}

struct LossAndGradient {
  double loss = 0.0;
  HeadParams gradient;
};

inline LossAndGradient loss_and_gradient(const HeadParams& params, const HeadConfig& config,
                                         std::span<const TrainRecord> batch) {
  if (batch.empty()) throw InputError("gradient: empty batch");
  check_shapes(params, config);
  LossAndGradient out;
  out.gradient = zero_params(config);
  double weight = 0.0;
  for (const auto& r : batch) weight += r.weight;
  if (!(weight > 0.0)) throw InputError("gradient: batch weights sum to zero");

  detail::HeadTrace t;
  for (const auto& r : batch) {
    const double p = sigmoid(detail::head_logit(params, config, r.concept_logits, r.side_features, t));
    out.loss += r.weight * record_loss(p, r.cancer_label);
    // Inside the clamp the loss is plain BCE-with-logits, outside it is flat.
    const bool clamped = p < kLossClamp || p > 1.0 - kLossClamp;
    const double dz = clamped ? 0.0 : (p - (r.cancer_label ? 1.0 : 0.0)) * r.weight / weight;
    if (dz != 0.0) detail::backprop(params, config, r, t, dz, out.gradient);
  }
  out.loss /= weight;
  return out;
}

inline HeadParams gradient(const HeadParams& params, const HeadConfig& config,
                           std::span<const TrainRecord> batch) {
  return loss_and_gradient(params, config, batch).gradient;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_auroc;
};

struct TrainResult {
  HeadParams params;
  std::vector<EpochLog> log;  // entry 0 describes the initialization
  int best_epoch = 0;
  std::optional<double> best_val_auroc;
  std::size_t steps = 0;
};

/// Learning rate at optimizer step `step` (0-based): linear ramp from
/// warmup_factor * base to base over warmup_steps, constant afterwards.
inline double learning_rate_at(const HeadConfig& config, std::size_t step) {
  if (config.warmup_steps <= 0 || step >= static_cast<std::size_t>(config.warmup_steps)) {
    return config.base_learning_rate;
  }
  const double alpha = static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  return config.base_learning_rate * (config.warmup_factor * (1.0 - alpha) + alpha);
}

inline std::vector<double> predict(const HeadParams& params, const HeadConfig& config,
                                   std::span<const TrainRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(forward(params, config, r));
  return out;
}

inline std::optional<double> validation_auroc(const HeadParams& params, const HeadConfig& config,
                                              std::span<const TrainRecord> val) {
  if (val.empty()) return std::nullopt;
  std::vector<bool> labels;
  for (const auto& r : val) labels.push_back(r.cancer_label);
  return auroc(predict(params, config, val), labels);
}

/// Mini-batch SGD with momentum on the head parameters only; the concept
/// logits are frozen inputs. Returns the parameters of the epoch with the best
/// validation AUROC (last epoch when there is no validation set).
inline TrainResult train(const HeadConfig& config, std::span<const TrainRecord> train_records,
                         std::span<const TrainRecord> val_records) {
  config.validate();
  if (train_records.empty()) throw InputError("train: empty training set");
  for (const auto& r : train_records) {
    detail::check_input(config, r.concept_logits, r.side_features);
    if (!std::isfinite(r.weight) || r.weight < 0.0) throw InputError("train: invalid record weight");
  }

  TrainResult result;
  HeadParams params = init_params(config);
  HeadParams velocity = zero_params(config);
  Rng shuffle_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.params = params;
  result.log.push_back({0, 0.0, loss(params, config, train_records), validation_auroc(params, config, val_records)});
  double best = -1.0;
  std::vector<TrainRecord> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  double lr = 0.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(train_records[order[k]]);
      lr = learning_rate_at(config, result.steps);
      auto lg = loss_and_gradient(params, config, batch);
      if (!std::isfinite(lg.loss)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(result.steps) + " (learning rate " + std::to_string(lr) + ")");
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        double& v = velocity.flat(i);
        v = config.momentum * v + lg.gradient.flat(i);
        params.flat(i) -= lr * v;
      }
      ++result.steps;
    }
    const double epoch_loss = loss(params, config, train_records);
    if (!std::isfinite(epoch_loss) || !params.finite()) {
      throw Error("train: non-finite loss or parameters after epoch " + std::to_string(epoch) +
                  " (learning rate " + std::to_string(lr) + ")");
    }
    const auto val = validation_auroc(params, config, val_records);
    result.log.push_back({epoch, lr, epoch_loss, val});
    const bool better = val ? *val > best : true;
    if (better) {
      best = val.value_or(best);
      result.params = params;
      result.best_epoch = epoch;
      result.best_val_auroc = val;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kHeadFormatVersion = 1;

inline Json head_config_to_json(const HeadConfig& c) {
  return Json{{"variant", to_string(c.variant)},
              {"hidden_width", c.hidden_width},
              {"intermediate_sigmoid", c.intermediate_sigmoid},
              {"side_feature_dim", c.side_feature_dim},
              {"base_learning_rate", c.base_learning_rate},
              {"momentum", c.momentum},
              {"batch_size", c.batch_size},
              {"warmup_steps", c.warmup_steps},
              {"warmup_factor", c.warmup_factor},
              {"epochs", c.epochs},
              {"seed", c.seed}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline HeadConfig head_config_from_json(const Json& j, HeadConfig base = {}) {
  if (!j.is_object()) throw InputError("head config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "variant") {
        base.variant = parse_head_variant(value.get<std::string>());
      } else if (key == "hidden_width") {
        base.hidden_width = value.get<int>();
      } else if (key == "intermediate_sigmoid") {
        base.intermediate_sigmoid = value.get<bool>();
      } else if (key == "side_feature_dim") {
        base.side_feature_dim = value.get<int>();
      } else if (key == "base_learning_rate") {
        base.base_learning_rate = value.get<double>();
      } else if (key == "momentum") {
        base.momentum = value.get<double>();
      } else if (key == "batch_size") {
        base.batch_size = value.get<int>();
      } else if (key == "warmup_steps") {
        base.warmup_steps = value.get<int>();
      } else if (key == "warmup_factor") {
        base.warmup_factor = value.get<double>();
      } else if (key == "epochs") {
        base.epochs = value.get<int>();
      } else if (key == "seed") {
        base.seed = value.get<std::uint64_t>();
      } else {
        throw InputError("unknown head config key '" + key + "'");
      }
    } catch (const Json::exception& e) {
      throw InputError("head config key '" + key + "': " + e.what());
    }
  }
  return base;
}

struct HeadModel {
  HeadConfig config;
  HeadParams params;
};

inline Json head_to_json(const HeadModel& model) {
  Json layers = Json::array();
  for (const auto& l : model.params.layers) {
    layers.push_back({{"name", l.name}, {"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  }
  return Json{{"format", "buscbm-head"},
              {"version", kHeadFormatVersion},
              {"config", head_config_to_json(model.config)},
              {"seed", model.config.seed},
              {"layers", layers}};
}

inline HeadModel head_from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != "buscbm-head") throw InputError("not a head parameter file");
    const int version = j.at("version").get<int>();
    if (version != kHeadFormatVersion) {
      throw InputError("unsupported head file version " + std::to_string(version));
    }
    HeadModel m;
    m.config = head_config_from_json(j.at("config"));
    m.config.validate();
    for (const auto& l : j.at("layers")) {
      m.params.layers.push_back({l.at("name").get<std::string>(), l.at("in").get<int>(), l.at("out").get<int>(),
                                 l.at("weights").get<std::vector<double>>(), l.at("bias").get<std::vector<double>>()});
    }
    check_shapes(m.params, m.config);
    if (!m.params.finite()) throw InputError("head parameters contain non-finite values");
    return m;
  } catch (const Json::exception& e) {
    throw InputError(std::string("head file: ") + e.what());
  }
}

}  // namespace buscbm

#pragma once

// Contrastive-loss training of the twin network with RMSprop.
//
// Label convention: y = 0 marks a similar (genuine, genuine) pair and y = 1 a
// dissimilar one, so the loss per pair is
//   alpha * (1 - y) * D^2 + beta * y * max(0, m - D)^2.

#include <chrono>
#include <filesystem>
#include <optional>

#include "signet/checkpoint.hpp"
#include "signet/data.hpp"
#include "signet/model.hpp"

namespace signet {

struct ContrastiveLossParams {
  double alpha = 0.5;
  double beta = 0.5;
  double margin = 1.0;
};

/// Mean contrastive loss over a batch of embedding pairs.
template <std::floating_point T>
Tensor<T> contrastive_loss(const Tensor<T>& e1, const Tensor<T>& e2, const std::vector<int>& y,
                           const ContrastiveLossParams& params) {
  if (!(params.margin > 0) || !(params.alpha > 0) || !(params.beta > 0)) {
    fail("contrastive_loss: alpha, beta and margin must be positive");
  }
  if (e1.shape() != e2.shape() || e1.rank() != 2) {
    fail("contrastive_loss: embeddings must share a [N,D] shape, got ", shape_str(e1.shape()), " and ",
         shape_str(e2.shape()));
  }
  const std::size_t n = e1.dim(0);
  if (y.size() != n) fail("contrastive_loss: ", y.size(), " labels for ", n, " pairs");
  std::vector<T> attract(n), repel(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) fail("contrastive_loss: label ", y[i], " at index ", i, " is not 0 or 1");
    attract[i] = static_cast<T>(params.alpha * (1 - y[i]));
    repel[i] = static_cast<T>(params.beta * y[i]);
  }
  const auto d2 = row_sum(square(sub(e1, e2)));
  const auto d = sqrt(d2);
  const auto hinge = max_with_scalar(add(scalar_mul(d, T(-1)), static_cast<T>(params.margin)), T(0));
  const auto per_pair = add(mul(d2, Tensor<T>({n}, std::move(attract))),
                            mul(square(hinge), Tensor<T>({n}, std::move(repel))));
  return mean(per_pair);
}

template <std::floating_point T>
struct RmspropState {
  double learning_rate = 1e-4;
  double rho = 0.9;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  /// Squared-gradient running averages, parallel to the model parameters.
  std::vector<NamedTensor<T>> accumulators;
};

/// g += wd * theta; acc = rho * acc + (1 - rho) * g^2; theta -= lr * g / (sqrt(acc) + eps).
template <std::floating_point T>
void rmsprop_step(std::vector<NamedTensor<T>>& params, const GradientMap<T>& grads, RmspropState<T>& state) {
  for (const auto& p : params) {
    if (!grads.contains(p.value)) fail("rmsprop_step: no gradient for parameter '", p.name, "'");
  }
  if (state.accumulators.empty()) {
    for (const auto& p : params) state.accumulators.push_back({p.name, Tensor<T>::zeros(p.value.shape())});
  }
  if (state.accumulators.size() != params.size()) fail("rmsprop_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& acc = state.accumulators[i];
    if (acc.name != p.name || acc.value.shape() != p.value.shape()) {
      fail("rmsprop_step: optimizer state for '", acc.name, "' does not match parameter '", p.name, "'");
    }
    const auto g = grads.at(p.value).data();
    auto theta = p.value.mutable_data();
    auto a = acc.value.mutable_data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = static_cast<double>(g[j]) + state.weight_decay * static_cast<double>(theta[j]);
      const double aj = state.rho * static_cast<double>(a[j]) + (1.0 - state.rho) * gj * gj;
      a[j] = static_cast<T>(aj);
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                state.learning_rate * gj / (std::sqrt(aj) + state.epsilon));
    }
  }
}

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  /// Learning rate is multiplied by lr_decay_factor after each listed epoch.
  std::vector<std::size_t> lr_decay_epochs{10};
  double lr_decay_factor = 0.1;
  /// Epochs already completed (when resuming); numbering continues from here.
  std::size_t start_epoch = 0;
  /// When set, epoch_NNN.sgnt and latest.sgnt are written here after each epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Extra metadata copied into every checkpoint.
  KeyValues checkpoint_meta;
  /// Mode used for the training forward pass (infer disables dropout).
  Mode mode = Mode::train;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<std::optional<double>> validation_accuracy;
  std::vector<double> wall_seconds;
};

/// One forward/backward/update step on a batch of pairs; returns the loss.
template <std::floating_point T>
double train_step(Model<T>& model, const Tensor<T>& batch_a, const Tensor<T>& batch_b, const std::vector<int>& y,
                  const ContrastiveLossParams& loss_params, RmspropState<T>& opt, Mode mode, Rng& rng) {
  Tape<T> tape;
  Tensor<T> loss;
  {
    typename Tape<T>::Scope scope(tape);
    const auto e1 = embed(model, batch_a, mode, &rng);
    const auto e2 = embed(model, batch_b, mode, &rng);
    loss = contrastive_loss(e1, e2, y, loss_params);
  }
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) return value;
  const auto grads = tape.backward(loss);
  rmsprop_step(model.parameters(), grads, opt);
  return value;
}

template <std::floating_point T>
std::vector<NamedTensor<T>> optimizer_tensors(const RmspropState<T>& opt) {
  return opt.accumulators;
}

template <std::floating_point T>
KeyValues optimizer_meta(const RmspropState<T>& opt) {
  return {{"opt.learning_rate", format_double(opt.learning_rate)},
          {"opt.rho", format_double(opt.rho)},
          {"opt.epsilon", format_double(opt.epsilon)},
          {"opt.weight_decay", format_double(opt.weight_decay)}};
}

/// Restores optimizer hyper-parameters and accumulators from a checkpoint.
template <std::floating_point T>
RmspropState<T> optimizer_from_checkpoint(const Checkpoint& ck, RmspropState<T> defaults = {}) {
  auto get = [&](const char* key, double fallback) {
    auto it = ck.meta.find(key);
    return it == ck.meta.end() ? fallback : parse_double(it->second, key);
  };
  defaults.learning_rate = get("opt.learning_rate", defaults.learning_rate);
  defaults.rho = get("opt.rho", defaults.rho);
  defaults.epsilon = get("opt.epsilon", defaults.epsilon);
  defaults.weight_decay = get("opt.weight_decay", defaults.weight_decay);
  defaults.accumulators.clear();
  for (const auto& o : ck.optimizer) defaults.accumulators.push_back({o.name, cast<T>(o.value)});
  return defaults;
}

using EpochValidator = std::function<double(std::size_t epoch)>;

/// Epoch loop: seeded shuffle, mini-batches of pairs through the twin,
/// contrastive loss, backward, RMSprop, then the LR schedule and an optional
/// checkpoint at each epoch boundary. Epoch e draws its shuffle and dropout
/// masks from derive_seed(seed, e), so a resumed run matches a continuous one.
template <std::floating_point T>
TrainHistory train(Model<T>& model, const std::vector<PairSample>& pairs, const std::vector<Tensor<float>>& images,
                   const TrainConfig& config, const ContrastiveLossParams& loss_params, RmspropState<T>& opt,
                   const EpochValidator& validate = {}) {
  if (pairs.empty()) fail("train: empty pair stream");
  if (config.epochs == 0) fail("train: epochs must be at least 1");
  if (config.batch_size == 0) fail("train: batch size must be at least 1");
  TrainHistory history;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = config.start_epoch + 1; epoch <= config.start_epoch + config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, epoch));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> ia, ib;
      std::vector<int> y;
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = pairs[order[k]];
        ia.push_back(p.image_a);
        ib.push_back(p.image_b);
        y.push_back(p.y);
      }
      const double loss = train_step(model, stack_images<T>(images, ia), stack_images<T>(images, ib), y,
                                     loss_params, opt, config.mode, rng);
      if (!std::isfinite(loss)) fail("train: non-finite loss in epoch ", epoch, " at batch index ", batches);
      loss_sum += loss;
      ++batches;
    }
    history.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    history.validation_accuracy.push_back(validate ? std::optional<double>(validate(epoch)) : std::nullopt);
    history.wall_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    if (std::find(config.lr_decay_epochs.begin(), config.lr_decay_epochs.end(), epoch) !=
        config.lr_decay_epochs.end()) {
      opt.learning_rate *= config.lr_decay_factor;
    }
    if (config.checkpoint_dir) {
      KeyValues meta = config.checkpoint_meta;
      for (auto& [k, v] : optimizer_meta(opt)) meta[k] = v;
      meta["epoch"] = std::to_string(epoch);
      meta["train.seed"] = std::to_string(config.seed);
      meta["train.loss"] = format_double(history.epoch_loss.back());
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.sgnt", epoch);
      const auto bytes = encode_checkpoint(model, meta, optimizer_tensors(opt));
      write_file_atomic(*config.checkpoint_dir / name, bytes);
      write_file_atomic(*config.checkpoint_dir / "latest.sgnt", bytes);
    }
  }
  return history;
}

}  // namespace signet

#include "kfbf/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/error.hpp"
#include "kfbf/parallel.hpp"

namespace kfbf::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(output_gain > 0.0)) throw ContractError("output_gain must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ContractError("val_fraction must lie in (0, 1)");
  }
}

void TrainConfig::store(KeyValues& kv) const {
  kv.set("learning_rate", learning_rate);
  kv.set("batch_size", batch_size);
  kv.set("epochs", epochs);
  kv.set("seed", std::to_string(seed));
  kv.set("beta1", beta1);
  kv.set("beta2", beta2);
  kv.set("adam_eps", adam_eps);
  kv.set("val_fraction", val_fraction);
  kv.set("output_gain", output_gain);
  kv.set("unit_kan_base", unit_kan_base ? std::string("true") : "false");
  kv.set("phase_augmentation", phase_augmentation ? std::string("true") : "false");
}

TrainConfig TrainConfig::load(const KeyValues& kv) {
  TrainConfig c;
  c.learning_rate = kv.real("learning_rate", c.learning_rate);
  c.batch_size = kv.count("batch_size", c.batch_size);
  c.epochs = kv.count("epochs", c.epochs);
  c.seed = kv.count("seed", c.seed);
  c.beta1 = kv.real("beta1", c.beta1);
  c.beta2 = kv.real("beta2", c.beta2);
  c.adam_eps = kv.real("adam_eps", c.adam_eps);
  c.val_fraction = kv.real("val_fraction", c.val_fraction);
  c.output_gain = kv.real("output_gain", c.output_gain);
  c.unit_kan_base = kv.flag("unit_kan_base", c.unit_kan_base);
  c.phase_augmentation = kv.flag("phase_augmentation", c.phase_augmentation);
  if (auto v = kv.get("dataset")) c.dataset = *v;
  if (auto v = kv.get("checkpoint_out")) c.checkpoint_out = *v;
  if (auto v = kv.get("fine_tune_from")) c.fine_tune_from = *v;
  return c;
}

void he_init(model::ParameterSet& params, std::uint64_t seed, const InitOptions& options) {
  std::mt19937_64 rng(seed);
  for (auto& p : params.entries()) {
    auto data = p.value.mutable_data();
    const double gain = p.output_layer ? options.output_gain : 1.0;
    auto draw = [&](double stddev) {
      std::normal_distribution<double> normal(0.0, stddev);
      for (auto& v : data) v = normal(rng);
    };
    switch (p.role) {
      case model::ParamRole::kWeight:
        draw(gain * std::sqrt(2.0 / static_cast<double>(p.fan_in)));
        break;
      case model::ParamRole::kBias:
        std::ranges::fill(data, 0.0);
        break;
      case model::ParamRole::kKanBase:
        if (options.unit_kan_base) {
          std::ranges::fill(data, 1.0);
        } else {
          draw(gain * std::sqrt(2.0 / static_cast<double>(p.fan_in)));
        }
        break;
      case model::ParamRole::kKanScale:
        std::ranges::fill(data, 1.0);
        break;
      case model::ParamRole::kKanSpline:
        draw(gain * 0.1);
        break;
    }
  }
}

ad::Tensor loss(ad::Tape& tape, const model::Model& model, const sys::SystemConfig& system,
                std::span<const sys::ChannelSample* const> batch) {
  const auto rows = model.forward_rows(tape, batch, system.p_max);
  const auto ee = sys::energy_efficiency_graph(tape, system, batch, rows);
  return ad::scale(tape, ad::reduce_mean(tape, ee), -1.0);
}

void adam_step(model::ParameterSet& params, AdamState& state, const AdamOptions& options) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& p : entries) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw ContractError("Adam state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& tensor = entries[i].value;
    const auto grad = tensor.grad();
    auto data = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t q = 0; q < data.size(); ++q) {
      const double g = grad.empty() ? 0.0 : grad[q];
      m[q] = options.beta1 * m[q] + (1.0 - options.beta1) * g;
      v[q] = options.beta2 * v[q] + (1.0 - options.beta2) * g * g;
      const double m_hat = m[q] / c1;
      const double v_hat = v[q] / c2;
      data[q] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

std::vector<double> energy_efficiencies(const model::Model& model, const sys::SystemConfig& system,
                                        std::span<const sys::ChannelSample> samples) {
  constexpr std::size_t kChunk = 64;
  std::vector<double> out(samples.size());
  const std::size_t chunks = (samples.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<const sys::ChannelSample*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
    const auto ws = model.forward_batch(batch, system.p_max);
    for (std::size_t i = begin; i < end; ++i)
      out[i] = sys::energy_efficiency(system, samples[i], ws[i - begin]);
  });
  return out;
}

double mean_energy_efficiency(const model::Model& model, const sys::SystemConfig& system,
                              std::span<const sys::ChannelSample> samples) {
  if (samples.empty()) throw ContractError("mean_energy_efficiency: no samples");
  const auto ee = energy_efficiencies(model, system, samples);
  // index-order summation keeps the result independent of thread count
  double total = 0.0;
  for (double v : ee) total += v;
  return total / static_cast<double>(ee.size());
}

TrainResult run_epochs(model::Model& model, const sys::Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.config.n_t != model.n_t()) {
    throw ContractError("dataset has n_t=" + std::to_string(data.config.n_t) +
                        " but the model was built for n_t=" + std::to_string(model.n_t()));
  }
  const std::size_t total = data.samples.size();
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(total))));
  if (total < n_val + 1) throw ContractError("dataset too small for a train/validation split");
  const std::size_t n_train = total - n_val;
  const std::span<const sys::ChannelSample> val(data.samples.data() + n_train, n_val);

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 phase_rng(config.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<sys::ChannelSample> rotated;

  AdamState adam;
  const AdamOptions options{config.learning_rate, config.beta1, config.beta2, config.adam_eps};
  auto& params = model.parameters();
  model::ParameterSet best = params.clone();

  TrainResult result;
  result.best_val_ee = -1.0;
  std::vector<const sys::ChannelSample*> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n_train; b += config.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(n_train, b + config.batch_size); ++i)
        batch.push_back(&data.samples[order[i]]);
      if (config.phase_augmentation) {
        rotated.clear();
        for (const auto* sample : batch) {
          auto r = *sample;
          for (std::size_t u = 0; u < r.k; ++u) {
            const auto turn = std::polar(1.0, angle(phase_rng));
            for (std::size_t n = 0; n < r.n_t; ++n) r.h[u * r.n_t + n] *= turn;
          }
          rotated.push_back(std::move(r));
        }
        for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = &rotated[i];
      }
      params.zero_grad();
      ad::Tape tape;
      const auto value = loss(tape, model, data.config, batch);
      tape.backward(value);
      adam_step(params, adam, options);
      loss_sum += value.item();
      ++batches;
    }
    const double val_ee = mean_energy_efficiency(model, data.config, val);
    const auto stop = std::chrono::steady_clock::now();
    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), val_ee,
                          std::chrono::duration<double, std::milli>(stop - start).count()});
    if (val_ee > result.best_val_ee) {
      result.best_val_ee = val_ee;
      result.best_epoch = epoch;
      best.assign_values(params);
    }
  }
  params.assign_values(best);
  params.zero_grad();
  return result;
}

TrainResult train(model::Model& model, const sys::Dataset& data, const TrainConfig& config) {
  he_init(model.parameters(), config.seed, {config.output_gain, config.unit_kan_base});
  return run_epochs(model, data, config);
}

TrainResult fine_tune(model::Model& model, const sys::Dataset& data, const TrainConfig& config,
                      std::size_t epochs) {
  if (epochs == 0) return {};
  TrainConfig c = config;
  c.epochs = epochs;
  return run_epochs(model, data, c);
}

void write_log_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "epoch,train_loss,val_ee,wall_ms\n";
  out.precision(17);
  for (const auto& row : result.log) {
    out << row.epoch << ',' << row.train_loss << ',' << row.val_ee << ',' << row.wall_ms << '\n';
  }
}

}  // namespace kfbf::train

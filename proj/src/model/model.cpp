#include "kfbf/model/model.hpp"

#include <optional>
#include <string>

#include "kfbf/binary_io.hpp"
#include "kfbf/error.hpp"

namespace kfbf::model {
namespace {

std::string indexed(const char* prefix, std::size_t i, const char* leaf) {
  return std::string(prefix) + std::to_string(i) + "." + leaf;
}

}  // namespace

Model::Model(ModelConfig config, std::size_t n_t, std::size_t fixed_k)
    : config_(std::move(config)), n_t_(n_t), fixed_k_(fixed_k) {
  config_.validate();
  if (n_t_ == 0) throw ContractError("model needs n_t >= 1");
  const std::size_t io = 2 * n_t_;

  if (config_.architecture == Architecture::kPlainMlp) {
    if (fixed_k_ == 0) throw ContractError("the flat MLP baseline needs a fixed user count");
    std::vector<std::size_t> dims{fixed_k_ * io};
    dims.insert(dims.end(), config_.mlp_hidden.begin(), config_.mlp_hidden.end());
    dims.push_back(fixed_k_ * io);
    for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
      const bool last = t + 2 == dims.size();
      params_.add(indexed("plain", t, "w"), {dims[t], dims[t + 1]}, ParamRole::kWeight, dims[t], last);
      params_.add(indexed("plain", t, "b"), {1, dims[t + 1]}, ParamRole::kBias, dims[t], last);
    }
    return;
  }

  grid_ = ad::SplineGrid::uniform(config_.grid_lo, config_.grid_hi, config_.spline_count,
                                  config_.spline_degree);
  const std::size_t d = config_.d;
  params_.add("w0", {io, d}, ParamRole::kWeight, io);
  for (std::size_t l = 0; l < config_.l_layers; ++l) {
    if (config_.encoder == EncoderKind::kTransformer) {
      params_.add(indexed("tel", l, "w_q"), {d, d}, ParamRole::kWeight, d);
      params_.add(indexed("tel", l, "w_k"), {d, d}, ParamRole::kWeight, d);
      params_.add(indexed("tel", l, "w_v"), {d, d}, ParamRole::kWeight, d);
      params_.add(indexed("tel", l, "w_ma"), {d, d}, ParamRole::kWeight, d);
      params_.add(indexed("tel", l, "w_1"), {d, config_.d_ff}, ParamRole::kWeight, d);
      params_.add(indexed("tel", l, "w_2"), {config_.d_ff, d}, ParamRole::kWeight, config_.d_ff);
    } else {
      const std::size_t m = config_.heads[l];
      params_.add(indexed("gat", l, "w"), {d, d}, ParamRole::kWeight, d);
      params_.add(indexed("gat", l, "a_src"), {m, d / m}, ParamRole::kWeight, 2 * (d / m));
      params_.add(indexed("gat", l, "a_dst"), {m, d / m}, ParamRole::kWeight, 2 * (d / m));
    }
  }

  std::vector<std::size_t> widths{d};
  widths.insert(widths.end(), config_.kan_hidden_dims.begin(), config_.kan_hidden_dims.end());
  widths.push_back(io);
  const std::size_t pc = config_.spline_count;
  for (std::size_t t = 0; t + 1 < widths.size(); ++t) {
    const std::size_t fin = widths[t], fout = widths[t + 1];
    const bool last = t + 2 == widths.size();
    if (config_.decoder == DecoderKind::kKan) {
      params_.add(indexed("kdl", t, "beta"), {fout, fin}, ParamRole::kKanBase, fin, last);
      params_.add(indexed("kdl", t, "gamma"), {fout, fin}, ParamRole::kKanScale, fin, last);
      params_.add(indexed("kdl", t, "coef"), {fout, fin * pc}, ParamRole::kKanSpline, fin, last);
    } else {
      params_.add(indexed("mlp", t, "w"), {fin, fout}, ParamRole::kWeight, fin, last);
      params_.add(indexed("mlp", t, "b"), {1, fout}, ParamRole::kBias, fin, last);
    }
  }
}

TelWeights Model::tel(std::size_t l) const {
  return {params_.get(indexed("tel", l, "w_q")),  params_.get(indexed("tel", l, "w_k")),
          params_.get(indexed("tel", l, "w_v")),  params_.get(indexed("tel", l, "w_ma")),
          params_.get(indexed("tel", l, "w_1")),  params_.get(indexed("tel", l, "w_2")),
          config_.heads[l]};
}

GatWeights Model::gat(std::size_t l) const {
  return {params_.get(indexed("gat", l, "w")), params_.get(indexed("gat", l, "a_src")),
          params_.get(indexed("gat", l, "a_dst")), config_.heads[l], config_.leaky_slope};
}

KdlWeights Model::kdl(std::size_t t) const {
  return {params_.get(indexed("kdl", t, "beta")), params_.get(indexed("kdl", t, "gamma")),
          params_.get(indexed("kdl", t, "coef"))};
}

std::vector<DenseWeights> Model::dense(const char* prefix, std::size_t layers) const {
  std::vector<DenseWeights> out;
  for (std::size_t t = 0; t < layers; ++t)
    out.push_back({params_.get(indexed(prefix, t, "w")), params_.get(indexed(prefix, t, "b"))});
  return out;
}

void Model::check_input(std::span<const sys::ChannelSample* const> samples) const {
  if (samples.empty()) throw ContractError("empty sample batch");
  for (const auto* s : samples) {
    if (s->n_t != n_t_) {
      throw ContractError("model was built for n_t=" + std::to_string(n_t_) +
                          " but a sample has n_t=" + std::to_string(s->n_t));
    }
  }
  if (!scalable() && samples.front()->k != fixed_k_) {
    throw DimensionError("flat MLP baseline was built for K=" + std::to_string(fixed_k_) +
                         " and cannot accept K=" + std::to_string(samples.front()->k));
  }
}

ad::Tensor Model::plain_mlp_forward(ad::Tape& tape,
                                    std::span<const sys::ChannelSample* const> samples) const {
  const std::size_t width = fixed_k_ * 2 * n_t_;
  const auto flat = ad::reshape(tape, channel_rows(samples), {samples.size(), width});
  const auto layers = dense("plain", config_.mlp_hidden.size() + 1);
  const auto out = mlp_forward(tape, flat, layers);
  return ad::reshape(tape, out, {samples.size() * fixed_k_, 2 * n_t_});
}

ad::Tensor Model::decode(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples) const {
  check_input(samples);
  if (!scalable()) return plain_mlp_forward(tape, samples);

  const std::size_t users = samples.front()->k;
  ad::Tensor h = preprocess(tape, samples, params_.get("w0"));
  for (std::size_t l = 0; l < config_.l_layers; ++l) {
    h = config_.encoder == EncoderKind::kTransformer
            ? tel_forward(tape, h, tel(l), users, config_.conventional_residual)
            : gat_encoder_forward(tape, h, gat(l), users);
  }
  if (config_.decoder == DecoderKind::kMlp) return mlp_forward(tape, h, dense("mlp", config_.t_layers));
  for (std::size_t t = 0; t < config_.t_layers; ++t) h = kdl_forward(tape, h, kdl(t), grid_);
  return h;
}

ad::Tensor Model::forward_rows(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples,
                               double p_max) const {
  return postprocess_rows(tape, decode(tape, samples), samples.front()->k, p_max);
}

sys::BeamformingMatrix Model::forward(const sys::ChannelSample& sample, double p_max) const {
  const sys::ChannelSample* one[] = {&sample};
  return forward_batch(one, p_max).front();
}

std::vector<sys::BeamformingMatrix> Model::forward_batch(
    std::span<const sys::ChannelSample* const> samples, double p_max) const {
  ad::Tape tape(ad::Tape::Mode::kInference);
  const auto rows = forward_rows(tape, samples, p_max);
  return to_beamformers(rows, samples.front()->k, n_t_);
}

namespace {
constexpr char kCheckpointMagic[] = "KFCK";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  KeyValues kv;
  model.config().store(kv);
  kv.set("n_t", model.n_t());
  kv.set("fixed_k", model.fixed_k());
  kv.set("k_train", model.trained_k());
  const std::string text = kv.to_text();

  const auto& params = model.parameters().entries();
  std::uint64_t data_offset = 4 + 4 + 4 + 8;
  for (const auto& p : params) data_offset += 4 + p.name.size() + 8 + 8 + 8;

  io::ByteWriter out;
  out.bytes({kCheckpointMagic, 4});
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(params.size()));
  const std::size_t config_offset_at = out.size();
  out.u64(0);
  std::uint64_t offset = data_offset;
  for (const auto& p : params) {
    out.u32(static_cast<std::uint32_t>(p.name.size()));
    out.bytes(p.name);
    out.u64(p.value.rows());
    out.u64(p.value.cols());
    out.u64(offset);
    offset += p.value.size() * sizeof(double);
  }
  for (const auto& p : params) out.f64s(p.value.data());
  out.patch_u64(config_offset_at, out.size());
  out.u64(text.size());
  out.bytes(text);
  out.save(path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  auto in = io::ByteReader::load(path);
  const auto magic = in.bytes(4, "magic");
  if (magic != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("bad checkpoint magic '" + magic + "'", 0);
  }
  const auto version_at = in.offset();
  const auto version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto count = in.u32("parameter count");
  const auto config_offset = in.u64("config offset");

  struct Entry {
    std::string name;
    std::uint64_t rows, cols, offset, at;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.at = in.offset();
    const auto len = in.u32("name length");
    e.name = in.bytes(len, "parameter name");
    e.rows = in.u64("rows");
    e.cols = in.u64("cols");
    e.offset = in.u64("data offset");
    manifest.push_back(std::move(e));
  }

  in.seek(config_offset, "config section");
  const auto text_len = in.u64("config length");
  const auto text_at = in.offset();
  KeyValues kv;
  ModelConfig config;
  try {
    kv = KeyValues::parse(in.bytes(text_len, "config text"));
    config = ModelConfig::load(kv);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), text_at);
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after config section", in.offset());

  std::optional<Model> built;
  try {
    built.emplace(config, kv.count("n_t", 0), kv.count("fixed_k", 0));
    built->set_trained_k(kv.count("k_train", 0));
  } catch (const Error& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), text_at);
  }
  Model& model = *built;
  auto& params = model.parameters().entries();
  if (params.size() != manifest.size()) {
    throw FormatError("checkpoint lists " + std::to_string(manifest.size()) +
                          " parameters, config implies " + std::to_string(params.size()),
                      12);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = manifest[i];
    auto& p = params[i];
    if (e.name != p.name || e.rows != p.value.rows() || e.cols != p.value.cols()) {
      throw FormatError("manifest entry '" + e.name + "' does not match expected '" + p.name +
                            "' " + p.value.shape().str(),
                        e.at);
    }
    in.seek(e.offset, "parameter data");
    in.f64s(p.value.mutable_data(), "parameter data");
  }
  return std::move(*built);
}

}  // namespace kfbf::model

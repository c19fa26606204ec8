#include "kfbf/model/config.hpp"

#include "kfbf/error.hpp"

namespace kfbf::model {

std::string to_string(Architecture a) {
  return a == Architecture::kPlainMlp ? "plain_mlp" : "encoder_decoder";
}
std::string to_string(EncoderKind e) { return e == EncoderKind::kGat ? "gat" : "transformer"; }
std::string to_string(DecoderKind d) { return d == DecoderKind::kMlp ? "mlp" : "kan"; }

EncoderKind parse_encoder(const std::string& s) {
  if (s == "transformer") return EncoderKind::kTransformer;
  if (s == "gat") return EncoderKind::kGat;
  throw ContractError("unknown encoder '" + s + "' (expected transformer or gat)");
}

DecoderKind parse_decoder(const std::string& s) {
  if (s == "kan") return DecoderKind::kKan;
  if (s == "mlp") return DecoderKind::kMlp;
  throw ContractError("unknown decoder '" + s + "' (expected kan or mlp)");
}

void ModelConfig::validate() const {
  if (architecture == Architecture::kPlainMlp) return;
  if (d == 0 || d_ff == 0) throw ContractError("d and d_ff must be positive");
  if (l_layers == 0 || t_layers == 0) throw ContractError("l_layers and t_layers must be >= 1");
  if (heads.size() != l_layers) {
    throw ContractError("heads lists " + std::to_string(heads.size()) + " entries for " +
                        std::to_string(l_layers) + " encoder layers");
  }
  for (auto m : heads) {
    if (m == 0 || d % m != 0) {
      throw ContractError("d=" + std::to_string(d) + " is not divisible by " + std::to_string(m) +
                          " heads");
    }
  }
  if (kan_hidden_dims.size() + 1 != t_layers) {
    throw ContractError("kan_hidden_dims needs t_layers - 1 = " + std::to_string(t_layers - 1) +
                        " entries");
  }
  for (auto f : kan_hidden_dims)
    if (f == 0) throw ContractError("decoder widths must be positive");
  if (spline_degree < 1) throw ContractError("spline_degree must be >= 1");
  if (spline_count <= static_cast<std::size_t>(spline_degree)) {
    throw ContractError("spline_count must exceed spline_degree");
  }
  if (!(grid_lo < grid_hi)) throw ContractError("grid_lo must be < grid_hi");
}

void ModelConfig::store(KeyValues& kv) const {
  kv.set("architecture", to_string(architecture));
  kv.set("encoder", to_string(encoder));
  kv.set("decoder", to_string(decoder));
  kv.set("d", d);
  kv.set("d_ff", d_ff);
  kv.set("l_layers", l_layers);
  kv.set("t_layers", t_layers);
  kv.set("heads", heads);
  kv.set("kan_hidden_dims", kan_hidden_dims);
  kv.set("spline_count", spline_count);
  kv.set("spline_degree", static_cast<std::size_t>(spline_degree));
  kv.set("grid_lo", grid_lo);
  kv.set("grid_hi", grid_hi);
  kv.set("conventional_residual", conventional_residual ? std::string("true") : "false");
  kv.set("leaky_slope", leaky_slope);
  kv.set("mlp_hidden", mlp_hidden);
}

ModelConfig ModelConfig::load(const KeyValues& kv) {
  ModelConfig c;
  const auto arch = kv.str("architecture", to_string(c.architecture));
  if (arch == "plain_mlp") {
    c.architecture = Architecture::kPlainMlp;
  } else if (arch != "encoder_decoder") {
    throw ContractError("unknown architecture '" + arch + "'");
  }
  c.encoder = parse_encoder(kv.str("encoder", to_string(c.encoder)));
  c.decoder = parse_decoder(kv.str("decoder", to_string(c.decoder)));
  c.d = kv.count("d", c.d);
  c.d_ff = kv.count("d_ff", c.d_ff);
  c.l_layers = kv.count("l_layers", c.l_layers);
  c.t_layers = kv.count("t_layers", c.t_layers);
  if (kv.contains("heads")) {
    c.heads = kv.counts("heads", c.heads);
    // a single value applies to every layer
    if (c.heads.size() == 1 && c.l_layers > 1) c.heads.assign(c.l_layers, c.heads.front());
  } else {
    c.heads.assign(c.l_layers, c.heads.front());
  }
  if (kv.contains("kan_hidden_dims")) {
    c.kan_hidden_dims = kv.counts("kan_hidden_dims", c.kan_hidden_dims);
  } else if (c.t_layers != 2) {
    c.kan_hidden_dims.assign(c.t_layers - 1, c.d);
  }
  c.spline_count = kv.count("spline_count", c.spline_count);
  c.spline_degree = static_cast<int>(kv.count("spline_degree", static_cast<std::size_t>(c.spline_degree)));
  c.grid_lo = kv.real("grid_lo", c.grid_lo);
  c.grid_hi = kv.real("grid_hi", c.grid_hi);
  c.conventional_residual = kv.flag("conventional_residual", c.conventional_residual);
  c.leaky_slope = kv.real("leaky_slope", c.leaky_slope);
  c.mlp_hidden = kv.counts("mlp_hidden", c.mlp_hidden);
  c.validate();
  return c;
}

}  // namespace kfbf::model

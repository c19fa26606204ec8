#include "kfbf/cli/app.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "kfbf/cli/experiments.hpp"
#include "kfbf/error.hpp"
#include "kfbf/key_values.hpp"

namespace kfbf::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Flags and config-file entries merged into one key/value view. A flag
// `--learning-rate` maps to the key `learning_rate`.
class Settings {
 public:
  explicit Settings(KeyValues kv) : kv_(std::move(kv)) {}

  const KeyValues& kv() const { return kv_; }
  bool has(const std::string& key) const { return kv_.contains(key); }

  std::string required(const std::string& key) const {
    auto v = kv_.get(key);
    if (!v || v->empty()) throw UsageError("missing required option --" + dashed(key));
    return *v;
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    return kv_.str(key, fallback);
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    return guarded([&] { return kv_.count(key, fallback); });
  }
  double real(const std::string& key, double fallback) const {
    return guarded([&] { return kv_.real(key, fallback); });
  }
  bool flag(const std::string& key, bool fallback) const {
    return guarded([&] { return kv_.flag(key, fallback); });
  }
  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) const {
    return guarded([&] { return kv_.counts(key, fallback); });
  }
  std::vector<std::string> list(const std::string& key, const std::string& fallback) const {
    std::vector<std::string> out;
    std::stringstream ss(kv_.str(key, fallback));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  // Library config loaders report bad values as contract errors; coming from
  // the command line they are usage errors.
  template <class F>
  static auto guarded(F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const FormatError&) {
      throw;
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }

  static std::string dashed(std::string key) {
    for (auto& c : key)
      if (c == '_') c = '-';
    return key;
  }

 private:
  KeyValues kv_;
};

std::string key_of(const CLI::Option* o) {
  std::string name = o->get_name();
  while (!name.empty() && name.front() == '-') name.erase(name.begin());
  for (auto& c : name)
    if (c == '-') c = '_';
  return name;
}

Settings collect(const CLI::App& sub) {
  KeyValues kv;
  const auto* config = sub.get_option("--config");
  if (config->count() > 0) {
    const fs::path path = config->as<std::string>();
    if (!fs::exists(path)) throw UsageError("config file " + path.string() + " does not exist");
    kv = KeyValues::load(path);
  }
  for (const auto* o : sub.get_options()) {
    if (o == config || o->count() == 0 || o->get_name() == "--help") continue;
    if (o->get_type_size() == 0) {
      kv.set(key_of(o), std::string("true"));
      continue;
    }
    std::string joined;
    for (const auto& r : o->results()) joined += (joined.empty() ? "" : ",") + r;
    kv.set(key_of(o), joined);
  }
  return Settings(std::move(kv));
}

void option(CLI::App* sub, const std::string& name, const std::string& help) {
  sub->add_option(name)->description(help);
}

void add_model_options(CLI::App* sub) {
  option(sub, "--architecture", "encoder_decoder (default) or plain_mlp");
  option(sub, "--encoder", "transformer (default) or gat");
  option(sub, "--decoder", "kan (default) or mlp");
  option(sub, "--d", "embedding width D");
  option(sub, "--d-ff", "feed-forward width");
  option(sub, "--l-layers", "encoder layers");
  option(sub, "--t-layers", "decoder layers");
  option(sub, "--heads", "attention heads, one value or one per encoder layer");
  option(sub, "--kan-hidden-dims", "hidden widths between decoder layers");
  option(sub, "--spline-count", "B-spline basis functions per edge");
  option(sub, "--spline-degree", "B-spline degree");
  option(sub, "--grid-lo", "spline grid lower end");
  option(sub, "--grid-hi", "spline grid upper end");
  sub->add_flag("--conventional-residual", "add the attention block output, not H_FF, after the last LayerNorm");
  option(sub, "--leaky-slope", "GAT LeakyReLU slope");
  option(sub, "--mlp-hidden", "hidden widths of the flat MLP baseline");
}

void add_train_options(CLI::App* sub) {
  option(sub, "--epochs", "training epochs");
  option(sub, "--learning-rate", "Adam learning rate");
  option(sub, "--batch-size", "mini-batch size");
  option(sub, "--seed", "seed for initialization and shuffling");
  option(sub, "--val-fraction", "tail fraction of the data held out for model selection");
  option(sub, "--beta1", "Adam beta1");
  option(sub, "--beta2", "Adam beta2");
  option(sub, "--adam-eps", "Adam epsilon");
  option(sub, "--output-gain", "init gain of the output layer");
  sub->add_flag("--unit-kan-base", "initialize every KAN beta to 1");
  option(sub, "--phase-augmentation", "true (default) or false: rotate user channels by random phases in each batch");
}

void add_oracle_options(CLI::App* sub) {
  option(sub, "--oracle", "pga_multistart (default), dinkelbach_sca or closed_form_k1");
  option(sub, "--restarts", "oracle restarts");
  option(sub, "--oracle-seed", "seed of the oracle's random restarts");
}

train::TrainConfig train_config(const Settings& s) {
  auto c = Settings::guarded([&] { return train::TrainConfig::load(s.kv()); });
  Settings::guarded([&] {
    c.validate();
    return 0;
  });
  return c;
}

model::ModelConfig model_config(const Settings& s) {
  auto c = Settings::guarded([&] { return model::ModelConfig::load(s.kv()); });
  Settings::guarded([&] {
    c.validate();
    return 0;
  });
  return c;
}

oracle::OracleConfig oracle_config(const Settings& s) {
  oracle::OracleConfig c;
  c.method = Settings::guarded([&] { return oracle::parse_method(s.str("oracle", "pga_multistart")); });
  c.restarts = s.count("restarts", c.restarts);
  c.seed = s.count("oracle_seed", c.seed);
  Settings::guarded([&] {
    c.validate();
    return 0;
  });
  return c;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

fs::path sidecar(const std::string& data) { return data + ".oracle.csv"; }

// Fresh samples for user count k, drawn with the dataset's configuration.
TestSet make_test_set(const sys::SystemConfig& base, std::size_t k, std::size_t count,
                      std::uint64_t seed, const oracle::OracleConfig& oracle) {
  sys::SystemConfig c = base;
  c.k = k;
  TestSet t{k, sys::generate_rayleigh(c, count, seed + k), {}};
  t.oracle_ee = oracle::oracle_energy_efficiencies(c, t.samples, oracle);
  return t;
}

int gen_data(const Settings& s, std::ostream& out) {
  sys::SystemConfig c;
  c.n_t = s.count("nt", c.n_t);
  c.k = s.count("k", c.k);
  c.noise_power = s.real("noise", c.noise_power);
  c.p_max = s.real("pmax", c.p_max);
  c.p_c = s.real("pc", c.p_c);
  const auto count = s.count("count", 1000);
  const auto seed = s.count("seed", 1);
  const auto path = s.required("out");
  if (c.n_t == 0) throw UsageError("--nt must be >= 1");
  if (c.k == 0) throw UsageError("--k must be >= 1");
  if (count == 0) throw UsageError("--count must be >= 1");
  Settings::guarded([&] {
    c.validate();
    return 0;
  });
  sys::write_dataset({c, sys::generate_rayleigh(c, count, seed)}, path);
  out << "wrote " << count << " samples (N_T=" << c.n_t << ", K=" << c.k << ") to " << path << '\n';
  return kOk;
}

int train_cmd(const Settings& s, std::ostream& out) {
  const auto data_path = s.required("data");
  const auto ckpt_path = s.required("out");
  const auto log_path = s.str("log", ckpt_path + ".log.csv");
  const auto cfg = train_config(s);
  const auto data = sys::read_dataset(data_path);
  if (s.has("nt") && s.count("nt", 0) != data.config.n_t) {
    throw ContractError("--nt " + s.str("nt", "") + " does not match the dataset's n_t=" +
                        std::to_string(data.config.n_t));
  }

  std::optional<model::Model> m;
  train::TrainResult result;
  if (s.has("fine_tune_from")) {
    m.emplace(model::load_checkpoint(s.required("fine_tune_from")));
    result = train::run_epochs(*m, data, cfg);
  } else {
    const auto mc = model_config(s);
    const bool plain = mc.architecture == model::Architecture::kPlainMlp;
    m.emplace(mc, data.config.n_t, plain ? data.config.k : 0);
    result = train::train(*m, data, cfg);
  }
  m->set_trained_k(data.config.k);
  model::save_checkpoint(*m, ckpt_path);
  train::write_log_csv(result, log_path);
  out << "best epoch " << result.best_epoch << " of " << result.log.size() << ", val EE "
      << std::setprecision(6) << result.best_val_ee << "\ncheckpoint " << ckpt_path << "\nlog "
      << log_path << '\n';
  return kOk;
}

int eval_cmd(const Settings& s, std::ostream& out) {
  const auto ckpt_path = s.required("ckpt");
  const auto data_path = s.required("data");
  const auto oracle = oracle_config(s);
  const auto passes = s.count("latency_passes", 100);
  if (passes < 100) throw UsageError("--latency-passes must be >= 100");
  const auto model = model::load_checkpoint(ckpt_path);
  const auto data = sys::read_dataset(data_path);
  const fs::path cache = s.str("oracle_cache", sidecar(data_path).string());

  // fail on shape problems before spending time on the oracle
  if (!data.samples.empty()) (void)model.forward(data.samples.front(), data.config.p_max);
  const auto oracle_ee = oracle::oracle_energy_efficiencies(data.config, data.samples, oracle, cache);
  auto report = evaluate(model, data.config, data.samples, oracle_ee);
  report.model_id = stem(ckpt_path);
  report.dataset_id = stem(data_path);
  report.oracle_method = oracle::to_string(oracle.method);
  report.seed = oracle.seed;
  report.latency = measure_latency(model, data.samples, data.config.p_max, 10, passes);

  const auto json = to_json(report);
  if (s.has("report")) {
    std::ofstream f(s.required("report"), std::ios::trunc);
    if (!f) throw Error("cannot write " + s.required("report"));
    f << json;
  }
  if (s.has("csv")) append_csv(s.required("csv"), kEvalCsvHeader, csv_row(report));
  out << json;
  return kOk;
}

int transfer_cmd(const Settings& s, std::ostream& out) {
  const auto base = model::load_checkpoint(s.required("ckpt"));
  const auto data = sys::read_dataset(s.required("data"));
  // --epochs holds the budget list here; each run sets its own epoch count
  KeyValues kv = s.kv();
  kv.set("epochs", std::string("1"));
  const auto cfg = train_config(Settings(std::move(kv)));
  const auto oracle = oracle_config(s);
  const auto budgets = s.counts("epochs", {0, 10, 20, 50});
  const auto retrain = s.count("retrain_epochs", 0);

  std::vector<sys::ChannelSample> test;
  std::vector<double> oracle_ee;
  if (s.has("test_data")) {
    const auto path = s.required("test_data");
    auto t = sys::read_dataset(path);
    if (t.config.k != data.config.k || t.config.n_t != data.config.n_t) {
      throw ContractError("test data shape differs from the fine-tuning data");
    }
    test = std::move(t.samples);
    oracle_ee = oracle::oracle_energy_efficiencies(data.config, test, oracle,
                                                   s.str("oracle_cache", sidecar(path).string()));
  } else {
    auto t = make_test_set(data.config, data.config.k, s.count("test_count", 256),
                           s.count("test_seed", 2), oracle);
    test = std::move(t.samples);
    oracle_ee = std::move(t.oracle_ee);
  }

  const auto rows = run_transfer(base, data, test, oracle_ee, cfg, budgets, retrain);
  std::ostringstream csv;
  csv << kTransferCsvHeader << '\n';
  for (const auto& r : rows) csv << csv_row(r) << '\n';
  if (s.has("report")) {
    std::ofstream f(s.required("report"), std::ios::trunc);
    if (!f) throw Error("cannot write " + s.required("report"));
    f << csv.str();
  }
  out << csv.str();
  return kOk;
}

int ablate_cmd(const Settings& s, std::ostream& out) {
  const auto data = sys::read_dataset(s.required("data"));
  const auto cfg = train_config(s);
  const auto base = model_config(s);
  const auto oracle = oracle_config(s);

  std::vector<model::EncoderKind> encoders;
  for (const auto& e : s.list("encoders", "gat,transformer"))
    encoders.push_back(Settings::guarded([&] { return model::parse_encoder(e); }));
  std::vector<model::DecoderKind> decoders;
  for (const auto& d : s.list("decoders", "mlp,kan"))
    decoders.push_back(Settings::guarded([&] { return model::parse_decoder(d); }));
  if (encoders.empty() || decoders.empty()) throw UsageError("need at least one encoder and decoder");

  const std::size_t k_tr = data.config.k;
  std::vector<std::size_t> ks;
  if (k_tr > 1) ks.push_back(k_tr - 1);
  ks.push_back(k_tr);
  ks.push_back(k_tr + 1);
  ks = s.counts("ks", ks);

  std::vector<TestSet> tests;
  for (auto k : ks) {
    if (k == 0) throw UsageError("--ks entries must be >= 1");
    tests.push_back(make_test_set(data.config, k, s.count("test_count", 256),
                                  s.count("test_seed", 2), oracle));
  }
  const auto result = run_ablation(base, data, tests, cfg, encoders, decoders);
  if (s.has("report")) write_ablation_csv(result, s.required("report"));
  print_ablation(result, out);
  return kOk;
}

int bench_cmd(const Settings& s, std::ostream& out) {
  const auto model = model::load_checkpoint(s.required("ckpt"));
  const auto repeats = s.count("repeats", 100);
  if (repeats < 100) throw UsageError("--repeats must be >= 100");
  const auto oracle = oracle_config(s);
  const auto oracle_samples = s.count("oracle_samples", 3);

  std::vector<BenchRow> rows;
  for (const auto& path : s.list("data", "")) {
    const auto data = sys::read_dataset(path);
    rows.push_back(bench(model, data.config, data.samples, repeats, oracle, oracle_samples));
  }
  if (rows.empty()) throw UsageError("missing required option --data");

  std::ostringstream csv;
  csv << kBenchCsvHeader << '\n';
  for (const auto& r : rows) csv << csv_row(r) << '\n';
  if (s.has("report")) {
    std::ofstream f(s.required("report"), std::ios::trunc);
    if (!f) throw Error("cannot write " + s.required("report"));
    f << csv.str();
  }
  out << csv.str();
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"KAN/transformer beamforming experiments", "kfbf"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "write a Rayleigh-fading channel dataset");
  option(gen, "--nt", "transmit antennas");
  option(gen, "--k", "users");
  option(gen, "--count", "number of samples");
  option(gen, "--seed", "generator seed");
  option(gen, "--out", "output dataset path");
  option(gen, "--noise", "noise power");
  option(gen, "--pmax", "transmit power budget");
  option(gen, "--pc", "circuit power");

  auto* train = app.add_subcommand("train", "train a model, or fine-tune a checkpoint");
  option(train, "--data", "training dataset");
  option(train, "--out", "checkpoint path");
  option(train, "--log", "per-epoch log CSV (default: <out>.log.csv)");
  option(train, "--fine-tune-from", "start from this checkpoint instead of a fresh init");
  option(train, "--nt", "expected antenna count; must match the dataset");
  add_train_options(train);
  add_model_options(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against the oracle");
  option(eval, "--ckpt", "checkpoint");
  option(eval, "--data", "test dataset (any K for scalable models)");
  option(eval, "--oracle-cache", "oracle sidecar CSV (default: <data>.oracle.csv)");
  option(eval, "--report", "EvalReport JSON output path");
  option(eval, "--csv", "CSV file to append the report row to");
  option(eval, "--latency-passes", "timed single-sample passes (>= 100)");
  add_oracle_options(eval);

  auto* transfer = app.add_subcommand("transfer", "plain scaling vs fine-tuning on a new K");
  option(transfer, "--ckpt", "checkpoint trained on another K");
  option(transfer, "--data", "fine-tuning dataset for the target K");
  option(transfer, "--test-data", "test dataset (default: fresh samples)");
  option(transfer, "--oracle-cache", "oracle sidecar for --test-data");
  option(transfer, "--test-count", "fresh test samples when --test-data is absent");
  option(transfer, "--test-seed", "seed for fresh test samples");
  option(transfer, "--retrain-epochs", "also train from scratch for this many epochs");
  option(transfer, "--report", "CSV output path");
  add_train_options(transfer);
  add_oracle_options(transfer);
  transfer->get_option("--epochs")->description("comma-separated fine-tuning epoch budgets");

  auto* ablate = app.add_subcommand("ablate", "encoder x decoder grid over K_Tr-1, K_Tr, K_Tr+1");
  option(ablate, "--data", "training dataset");
  option(ablate, "--encoders", "comma-separated subset of gat,transformer");
  option(ablate, "--decoders", "comma-separated subset of mlp,kan");
  option(ablate, "--ks", "test user counts (default: K_Tr-1, K_Tr, K_Tr+1)");
  option(ablate, "--test-count", "test samples per K");
  option(ablate, "--test-seed", "seed for test samples");
  option(ablate, "--report", "CSV output path");
  add_train_options(ablate);
  add_model_options(ablate);
  add_oracle_options(ablate);

  auto* bench = app.add_subcommand("bench", "single-sample latency of a checkpoint and the oracle");
  option(bench, "--ckpt", "checkpoint");
  option(bench, "--data", "one or more datasets (comma-separated), e.g. one per K");
  option(bench, "--repeats", "timed passes per dataset (>= 100)");
  option(bench, "--oracle-samples", "samples the oracle is timed on");
  option(bench, "--report", "CSV output path");
  add_oracle_options(bench);

  for (auto* sub : {gen, train, eval, transfer, ablate, bench})
    sub->add_option("--config", "key = value file; flags override its entries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      const auto settings = collect(*sub);
      const auto name = sub->get_name();
      if (name == "gen-data") return gen_data(settings, out);
      if (name == "train") return train_cmd(settings, out);
      if (name == "eval") return eval_cmd(settings, out);
      if (name == "transfer") return transfer_cmd(settings, out);
      if (name == "ablate") return ablate_cmd(settings, out);
      if (name == "bench") return bench_cmd(settings, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "data format error: " << e.what() << '\n';
    return kDataFormat;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kContract;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << '\n';
    return kContract;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace kfbf::cli

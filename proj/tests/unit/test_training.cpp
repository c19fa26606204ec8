#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/error.hpp"
#include "kfbf/key_values.hpp"
#include "kfbf/training/training.hpp"
#include "support/gradcheck.hpp"
#include "support/temp_dir.hpp"

using namespace kfbf;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig mc;
  mc.d = 8;
  mc.d_ff = 12;
  mc.heads = {2, 2};
  mc.kan_hidden_dims = {6};
  return mc;
}

sys::Dataset tiny_dataset(std::size_t count, std::uint64_t seed, std::size_t k = 2) {
  sys::SystemConfig c;
  c.n_t = 4;
  c.k = k;
  return {c, sys::generate_rayleigh(c, count, seed)};
}

std::vector<std::vector<double>> snapshot(const model::ParameterSet& p) {
  std::vector<std::vector<double>> out;
  for (const auto& e : p.entries()) out.emplace_back(e.value.data().begin(), e.value.data().end());
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("He initialization statistics") {
    model::Model m(model::ModelConfig{}, 4);
    train::he_init(m.parameters(), 3);
    std::size_t checked = 0;
    for (const auto& p : m.parameters().entries()) {
      const auto d = p.value.data();
      const bool random = p.role == model::ParamRole::kWeight || p.role == model::ParamRole::kKanBase;
      if (random && d.size() >= 2000) {
        double s2 = 0.0;
        for (double v : d) s2 += v * v;
        const double gain = p.output_layer ? 0.02 : 1.0;
        const double expected = gain * gain * 2.0 / static_cast<double>(p.fan_in);
        CHECK_MESSAGE(std::abs(s2 / d.size() / expected - 1.0) < 0.1, p.name);
        ++checked;
      }
      if (p.role == model::ParamRole::kBias) CHECK(std::ranges::all_of(d, [](double v) { return v == 0.0; }));
      if (p.role == model::ParamRole::kKanScale) CHECK(std::ranges::all_of(d, [](double v) { return v == 1.0; }));
    }
    CHECK(checked >= 8);

    model::Model again(model::ModelConfig{}, 4), other(model::ModelConfig{}, 4);
    train::he_init(again.parameters(), 3);
    train::he_init(other.parameters(), 4);
    CHECK(snapshot(again.parameters()) == snapshot(m.parameters()));
    CHECK(snapshot(other.parameters()) != snapshot(m.parameters()));

    train::he_init(again.parameters(), 3, {0.02, true});
    for (const auto& p : again.parameters().entries())
      if (p.role == model::ParamRole::kKanBase)
        CHECK(std::ranges::all_of(p.value.data(), [](double v) { return v == 1.0; }));
  }

  TEST_CASE("256 x 256 weight variance") {
    model::ParameterSet ps;
    ps.add("w", {256, 256}, model::ParamRole::kWeight, 256);
    train::he_init(ps, 17);
    double s1 = 0.0, s2 = 0.0;
    for (double v : ps.entries()[0].value.data()) {
      s1 += v;
      s2 += v * v;
    }
    const double n = 256.0 * 256.0;
    const double var = s2 / n - (s1 / n) * (s1 / n);
    CHECK(var == doctest::Approx(2.0 / 256).epsilon(0.1));
  }

  TEST_CASE("loss is the negative batch-mean EE") {
    model::Model m(tiny_config(), 4);
    train::he_init(m.parameters(), 1, {1.0, false});
    const auto data = tiny_dataset(3, 2);
    double mean = 0.0;
    for (const auto& s : data.samples) mean += sys::energy_efficiency(data.config, s, m.forward(s, 1.0)) / 3.0;
    const sys::ChannelSample* one[] = {&data.samples[0]};
    const sys::ChannelSample* all[] = {&data.samples[0], &data.samples[1], &data.samples[2]};
    ad::Tape tape;
    const double single = sys::energy_efficiency(data.config, data.samples[0], m.forward(data.samples[0], 1.0));
    CHECK(std::abs(train::loss(tape, m, data.config, one).item() + single) < 1e-12);
    CHECK(std::abs(train::loss(tape, m, data.config, all).item() + mean) < 1e-12);

    model::Model zero(tiny_config(), 4);  // parameters start at zero
    CHECK(train::loss(tape, zero, data.config, all).item() == 0.0);
  }

  TEST_CASE("loss gradients match central differences") {
    model::Model m(tiny_config(), 4);
    train::he_init(m.parameters(), 5, {1.0, false});
    const auto data = tiny_dataset(2, 6);
    const sys::ChannelSample* batch[] = {&data.samples[0], &data.samples[1]};
    std::vector<ad::Tensor> leaves;
    for (auto& p : m.parameters().entries()) leaves.push_back(p.value);
    const auto r = testing::check_gradients(
        [&](ad::Tape& t) { return train::loss(t, m, data.config, batch); }, leaves);
    CHECK_MESSAGE(r.worst < 1e-4, r.where);
    CHECK(r.checked == m.parameters().scalar_count());
  }

  TEST_CASE("Adam first two steps by hand") {
    model::ParameterSet ps;
    auto& t = ps.add("p", {1, 2}, model::ParamRole::kWeight, 1);
    t.mutable_data()[0] = 1.0;
    t.mutable_data()[1] = -2.0;
    const train::AdamOptions o{0.01, 0.9, 0.999, 1e-8};
    train::AdamState st;
    const double g1[] = {0.5, -3.0}, g2[] = {-1.0, 2.0};

    // backward of p . g^T leaves exactly g on p
    const auto set_grad = [&](const double* g) {
      t.zero_grad();
      ad::Tape tape;
      tape.backward(ad::matmul(tape, t, ad::Tensor::from({2, 1}, {g[0], g[1]})));
    };
    set_grad(g1);
    train::adam_step(ps, st, o);
    CHECK(st.step == 1);
    // after one step the update is lr * g / (|g| + eps)
    CHECK(std::abs(t.data()[0] - (1.0 - 0.01 * 0.5 / (0.5 + 1e-8))) < 1e-15);
    CHECK(std::abs(t.data()[1] - (-2.0 + 0.01 * 3.0 / (3.0 + 1e-8))) < 1e-15);

    const double before[] = {t.data()[0], t.data()[1]};
    set_grad(g2);
    train::adam_step(ps, st, o);
    CHECK(st.step == 2);
    for (int q = 0; q < 2; ++q) {
      const double m = 0.9 * 0.1 * g1[q] + 0.1 * g2[q];
      const double v = 0.999 * 0.001 * g1[q] * g1[q] + 0.001 * g2[q] * g2[q];
      const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
      CHECK(std::abs(t.data()[q] - (before[q] - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8))) < 1e-15);
    }

    model::ParameterSet idle;
    auto& u = idle.add("u", {1, 3}, model::ParamRole::kWeight, 1);
    u.mutable_data()[1] = 4.0;
    train::AdamState s2;
    train::adam_step(idle, s2, o);  // no gradient at all
    CHECK(std::vector<double>(u.data().begin(), u.data().end()) == std::vector<double>{0.0, 4.0, 0.0});
  }

  TEST_CASE("config round trip and validation") {
    train::TrainConfig c;
    c.learning_rate = 3e-3;
    c.batch_size = 7;
    c.seed = 99;
    c.output_gain = 0.5;
    c.unit_kan_base = true;
    c.phase_augmentation = false;
    KeyValues kv;
    c.store(kv);
    const auto back = train::TrainConfig::load(kv);
    CHECK(back.learning_rate == 3e-3);
    CHECK(back.batch_size == 7);
    CHECK(back.seed == 99);
    CHECK(back.output_gain == 0.5);
    CHECK(back.unit_kan_base);
    CHECK_FALSE(back.phase_augmentation);
    CHECK(train::TrainConfig{}.phase_augmentation);

    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
  }

  TEST_CASE("training loop") {
    const auto data = tiny_dataset(60, 11);
    train::TrainConfig cfg;
    cfg.epochs = 6;
    cfg.learning_rate = 3e-3;
    cfg.seed = 4;

    model::Model a(tiny_config(), 4), b(tiny_config(), 4);
    const auto ra = train::train(a, data, cfg);
    const auto rb = train::train(b, data, cfg);
    CHECK(snapshot(a.parameters()) == snapshot(b.parameters()));
    REQUIRE(ra.log.size() == 6);
    for (std::size_t e = 0; e < 6; ++e) {
      CHECK(ra.log[e].epoch == e + 1);
      CHECK(ra.log[e].train_loss == rb.log[e].train_loss);
      CHECK(ra.log[e].val_ee == rb.log[e].val_ee);
    }

    SUBCASE("best validation epoch is kept") {
      const auto best = std::max_element(ra.log.begin(), ra.log.end(),
                                         [](const auto& x, const auto& y) { return x.val_ee < y.val_ee; });
      CHECK(ra.best_epoch == best->epoch);
      CHECK(ra.best_val_ee == best->val_ee);
      // val split is the last 10% of the file
      const std::span<const sys::ChannelSample> val(data.samples.data() + 54, 6);
      CHECK(train::mean_energy_efficiency(a, data.config, val) == ra.best_val_ee);
    }

    SUBCASE("training improves on the initialization") {
      model::Model init(tiny_config(), 4);
      train::he_init(init.parameters(), cfg.seed);
      const std::span<const sys::ChannelSample> val(data.samples.data() + 54, 6);
      CHECK(ra.best_val_ee > train::mean_energy_efficiency(init, data.config, val));
      CHECK(ra.log.back().train_loss < ra.log.front().train_loss);
    }

    SUBCASE("fine-tuning") {
      const auto before = snapshot(a.parameters());
      const auto r0 = train::fine_tune(a, tiny_dataset(30, 12, 3), cfg, 0);
      CHECK(r0.log.empty());
      CHECK(snapshot(a.parameters()) == before);
      const auto r2 = train::fine_tune(a, tiny_dataset(30, 12, 3), cfg, 2);
      CHECK(r2.log.size() == 2);
    }

    SUBCASE("log file") {
      testing::TempDir dir;
      const auto path = dir.path() / "log.csv";
      train::write_log_csv(ra, path);
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      CHECK(line == "epoch,train_loss,val_ee,wall_ms");
      std::size_t rows = 0;
      while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 3);
      }
      CHECK(rows == 6);
    }
  }

  TEST_CASE("default model: loss falls over the first 10 epochs") {
    const auto data = tiny_dataset(512, 7);
    model::Model m(model::ModelConfig{}, 4);
    train::TrainConfig cfg;
    cfg.epochs = 10;
    const auto r = train::train(m, data, cfg);
    std::string curve;
    for (const auto& e : r.log) curve += " " + std::to_string(e.train_loss);
    MESSAGE("train loss per epoch:" << curve);
    for (std::size_t e = 1; e < r.log.size(); ++e) CHECK(r.log[e].train_loss < r.log[e - 1].train_loss);
  }

  TEST_CASE("dataset and model disagree on N_T") {
    model::Model m(tiny_config(), 3);
    train::TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train::train(m, tiny_dataset(20, 1), cfg), ContractError);
    model::Model ok(tiny_config(), 4);
    CHECK_THROWS_AS(train::train(ok, tiny_dataset(1, 1), cfg), ContractError);
  }
}

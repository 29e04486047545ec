#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fd_oracle.hpp"
#include "rodenet/error.hpp"
#include "rodenet/pipeline/pipeline.hpp"

using namespace rodenet;
using namespace rodenet::pipeline;
namespace fs = std::filesystem;

namespace {

sim::Dataset small_dataset(std::uint64_t seed = 5, std::size_t m = 6) {
  sim::SimulationConfig c;
  c.instances = m;
  c.initial_values = 2;
  c.steps = 20;
  c.noise_ratio = 0.01;
  c.seed = seed;
  return sim::generate_dataset(c);
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.odenet.s_max = 2;
  c.odenet.epochs_per_stage = 15;
  c.odenet.batch_size = 16;
  c.gan.iterations = 12;
  c.gan.batch_size = 4;
  c.gan.n_critic = 2;
  c.arch.latent_dim = 4;
  c.arch.g_hidden = {12};
  c.arch.d_hidden = {12, 8};
  c.steps_per_outer = 5;
  c.n_gan = 3;
  c.max_outer = 3;
  c.convergence_tol = 0.0;
  c.seed = 9;
  return c;
}

gan::GanModel small_gan(std::uint64_t seed) {
  gan::GanArchitecture a;
  a.latent_dim = 3;
  a.g_hidden = {6};
  a.d_hidden = {10, 6};
  return gan::make_gan(72, a, seed);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("pipeline config json round trip and strict keys") {
  PipelineConfig c = small_config();
  c.lambda_g = 0.25;
  c.shared_init = false;
  auto j = to_json(c);
  auto back = pipeline_config_from_json(j);
  CHECK(to_json(back) == j);

  auto extra = j;
  extra["lamda_g"] = 1.0;
  CHECK_THROWS_AS(pipeline_config_from_json(extra), ConfigError);
  auto nested = j;
  nested["gan"]["typo"] = 1;
  CHECK_THROWS_AS(pipeline_config_from_json(nested), ConfigError);
  auto missing = j;
  missing.erase("n_gan");
  CHECK_THROWS_AS(pipeline_config_from_json(missing), ConfigError);
  auto wrong_type = j;
  wrong_type["n_d"] = "one";
  CHECK_THROWS_AS(pipeline_config_from_json(wrong_type), ConfigError);
  auto negative = j;
  negative["lambda_g"] = -1.0;
  CHECK_THROWS_AS(pipeline_config_from_json(negative), ConfigError);
}

TEST_CASE("rodenet_loss decomposes and reduces to warm-up-1") {
  auto ds = small_dataset();
  const auto data = ds.observed(0);
  Rng rng = make_rng(1, "xi");
  const auto xi = odenet::initial_parameters({3, 2}, 0.1, rng);
  const odenet::OdeNet net({3, 2}, xi, 0.05);
  auto g = small_gan(3);
  for (int unroll : {1, 4}) {
    auto plain = rodenet_loss(xi, data, g, 0.001, 0.001, 0.0, unroll);
    CHECK(plain.total == odenet::warmup1_objective(net, data, 0.001, 0.001, unroll));
    auto full = rodenet_loss(xi, data, g, 0.001, 0.001, 0.1, unroll);
    CHECK(full.gan == gan::discriminate(g, xi));
    CHECK(std::abs(full.total - (full.data + 0.001 * full.huber + 0.1 * full.gan)) < 1e-12);
    CHECK(full.data == plain.data);
  }
}

TEST_CASE("gan regularizer gradient") {
  Rng rng = make_rng(2, "xi");
  const auto xi = odenet::initial_parameters({3, 2}, 0.3, rng);

  CHECK_FALSE(static_cast<bool>(gan_regularizer(small_gan(1), 0.0)));

  // constant critic: only the output bias is non-zero
  auto flat = small_gan(1);
  std::fill(flat.v.begin(), flat.v.end(), 0.0);
  flat.v.back() = 2.5;
  {
    ad::Graph g;
    ad::Var x = g.leaf(xi);
    auto r = gan_regularizer(flat, 0.1)(x);
    CHECK(r.scalar() == doctest::Approx(0.25));
    const ad::Var leaves[] = {x};
    const auto grads = g.grad(r, leaves);
    for (double v : grads[0]) CHECK(v == 0.0);
  }

  for (bool scaled : {false, true}) {
    auto m = small_gan(4);
    if (scaled) {
      gan::Scaler s;
      for (std::size_t k = 0; k < 72; ++k) {
        s.mean.push_back(0.01 * static_cast<double>(k));
        s.std.push_back(0.5 + 0.02 * static_cast<double>(k));
      }
      m.scaler = s;
    }
    ad::Graph g;
    ad::Var x = g.leaf(xi);
    auto r = gan_regularizer(m, 0.1)(x);
    CHECK(r.scalar() == doctest::Approx(0.1 * gan::discriminate(m, xi)).epsilon(1e-12));
    const ad::Var leaves[] = {x};
    auto grad = g.grad(r, leaves)[0];
    auto fd = testing::central_differences([&](std::span<const double> p) { return 0.1 * gan::discriminate(m, p); },
                                           xi);
    CHECK(testing::max_relative_error(grad, fd) < 1e-5);
  }
}

TEST_CASE("stages run in order") {
  auto ds = small_dataset();
  auto s = initial_state(small_config());
  CHECK_THROWS_AS(run_warmup2(s), ContractViolation);
  CHECK_THROWS_AS(run_outer_iteration(s, ds), ContractViolation);
  run_warmup1(s, ds);
  CHECK(s.stage == Stage::Warmup2);
  CHECK(s.odenets.size() == 6);
  for (const auto& xi : s.xis()) CHECK(xi.size() == 72);
  CHECK_THROWS_AS(run_warmup1(s, ds), ContractViolation);
  run_warmup2(s);
  CHECK(s.stage == Stage::Alternating);
  CHECK(s.gan.has_value());
  run_outer_iteration(s, ds);
  CHECK(s.outer_iteration == 1);
  CHECK(s.records.size() == 1);
  CHECK(stage_from_string(to_string(Stage::Alternating)) == Stage::Alternating);
  CHECK_THROWS_AS(stage_from_string("later"), ConfigError);
}

TEST_CASE("shared initialization") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.odenet.epochs_per_stage = 0;
  auto s = initial_state(cfg);
  run_warmup1(s, ds);
  for (std::size_t i = 1; i < s.odenets.size(); ++i) CHECK(s.odenets[i].xi() == s.odenets[0].xi());
  cfg.shared_init = false;
  auto t = initial_state(cfg);
  run_warmup1(t, ds);
  CHECK(t.odenets[1].xi() != t.odenets[0].xi());
}

TEST_CASE("full training is deterministic and schedule independent") {
  auto ds = small_dataset();
  auto cfg = small_config();
  auto a = run_full_training(ds, cfg, "", Execution::Serial);
  auto b = run_full_training(ds, cfg, "", Execution::Parallel);
  CHECK(a.stage == Stage::Done);
  CHECK(a.outer_iteration == 3);
  CHECK(to_json(a) == to_json(b));
  cfg.seed = 10;
  auto c = run_full_training(ds, cfg, "", Execution::Parallel);
  CHECK(c.xis() != a.xis());
}

TEST_CASE("lambda_g = 0 with no GAN iterations continues warm-up-1 exactly") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.lambda_g = 0.0;
  cfg.n_gan = 0;
  auto s = initial_state(cfg);
  run_warmup1(s, ds);
  const PipelineState warm = s;
  run_warmup2(s);
  run_outer_iteration(s, ds);
  CHECK(s.xis() == continue_without_gan(warm, ds, 1));

  // and for several outer iterations even with GAN updates, since D never enters
  cfg.n_gan = 3;
  auto full = run_full_training(ds, cfg);
  CHECK(full.xis() == continue_without_gan(warm, ds, 3));
  CHECK(full.xis() == train_without_gan(ds, cfg, 3));
}

TEST_CASE("the critic term changes the trajectory of training") {
  auto ds = small_dataset();
  auto cfg = small_config();
  auto with = run_full_training(ds, cfg);
  cfg.lambda_g = 0.0;
  auto without = run_full_training(ds, cfg);
  CHECK(with.xis() != without.xis());
  CHECK(train_without_gan(ds, cfg, 0) == [&] {
    auto s = initial_state(cfg);
    run_warmup1(s, ds);
    return s.xis();
  }());
}

TEST_CASE("convergence stops the alternating stage") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.convergence_tol = 1e9;
  auto s = run_full_training(ds, cfg);
  CHECK(s.converged);
  CHECK(s.outer_iteration == 1);
  cfg.max_outer = 0;
  auto z = run_full_training(ds, cfg);
  CHECK(z.outer_iteration == 0);
  CHECK(z.stage == Stage::Done);
}

TEST_CASE("failures carry the stage") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.gan.batch_size = 7;  // more than the 6 instances
  try {
    run_full_training(ds, cfg);
    FAIL("expected a failure in warm-up-2");
  } catch (const Error& e) {
    CHECK(e.category() == "contract");
    CHECK(std::string(e.what()).find("[warmup2]") == 0);
  }
}

TEST_CASE("run directory layout and resume") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.keep_checkpoints = 0;
  TempDir dir("rodenet_pipeline_run");
  auto full = run_full_training(ds, cfg, dir.str());
  for (const char* f : {"config.json", "dataset.json", "gan.json", "log.jsonl", "checkpoints/warmup1.json",
                        "checkpoints/iter000.json", "checkpoints/iter003.json", "odenets/inst_0.json",
                        "odenets/inst_5.json"})
    CHECK_MESSAGE(fs::exists(dir.path / f), f);
  CHECK(odenet::odenet_from_json(nlohmann::json::parse(std::ifstream(dir.path / "odenets/inst_2.json"))).xi ==
        full.odenets[2].xi());
  CHECK(gan::gan_from_json(nlohmann::json::parse(std::ifstream(dir.path / "gan.json"))).theta ==
        full.sampling_model().theta);
  const auto latest = load_latest_checkpoint(dir.str());
  REQUIRE(latest.has_value());
  CHECK(to_json(*latest) == to_json(full));

  // interrupted after the first outer iteration
  TempDir cut("rodenet_pipeline_cut");
  fs::copy(dir.path, cut.path, fs::copy_options::recursive);
  fs::remove(cut.path / "checkpoints/iter002.json");
  fs::remove(cut.path / "checkpoints/iter003.json");
  auto resumed = run_full_training(ds, cfg, cut.str());
  CHECK(to_json(resumed) == to_json(full));

  // interrupted during warm-up-2
  TempDir early("rodenet_pipeline_early");
  fs::copy(dir.path, early.path, fs::copy_options::recursive);
  for (const char* f : {"iter000.json", "iter001.json", "iter002.json", "iter003.json"})
    fs::remove(early.path / "checkpoints" / f);
  CHECK(load_latest_checkpoint(early.str())->stage == Stage::Warmup2);
  auto again = run_full_training(ds, cfg, early.str());
  CHECK(to_json(again) == to_json(full));

  auto other = cfg;
  other.lambda_g = 0.2;
  CHECK_THROWS_AS(run_full_training(ds, other, dir.str()), ConfigError);
}

TEST_CASE("old checkpoints are pruned") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.keep_checkpoints = 1;
  TempDir dir("rodenet_pipeline_prune");
  run_full_training(ds, cfg, dir.str());
  CHECK_FALSE(fs::exists(dir.path / "checkpoints/iter001.json"));
  CHECK_FALSE(fs::exists(dir.path / "checkpoints/iter002.json"));
  CHECK(fs::exists(dir.path / "checkpoints/iter003.json"));
  CHECK(fs::exists(dir.path / "checkpoints/warmup1.json"));
}

TEST_CASE("staged runs chain into the uninterrupted result") {
  auto ds = small_dataset();
  auto cfg = small_config();
  cfg.keep_checkpoints = 0;
  const nlohmann::json prov{{"config_hash", "feed"}, {"seed", 0}};
  TempDir dir("rodenet_pipeline_staged");
  auto w1 = run_training(ds, cfg, {dir.str(), Stage::Warmup1, prov});
  CHECK(w1.stage == Stage::Warmup2);
  CHECK_FALSE(fs::exists(dir.path / "checkpoints/iter000.json"));
  CHECK_FALSE(fs::exists(dir.path / "gan.json"));
  CHECK(fs::exists(dir.path / "odenets/inst_0.json"));

  auto w2 = run_training(ds, cfg, {dir.str(), Stage::Warmup2, prov});
  CHECK(w2.stage == Stage::Alternating);
  CHECK(w2.outer_iteration == 0);
  CHECK(fs::exists(dir.path / "gan.json"));

  auto done = run_training(ds, cfg, {dir.str(), Stage::Done, prov});
  CHECK(to_json(done) == to_json(run_full_training(ds, cfg)));

  for (const char* f : {"config.json", "dataset.json", "gan.json", "checkpoints/warmup1.json",
                        "checkpoints/iter002.json", "odenets/inst_1.json"}) {
    const auto j = nlohmann::json::parse(std::ifstream(dir.path / f));
    CHECK_MESSAGE(j.at("provenance") == prov, f);
  }
  std::ifstream log(dir.path / "log.jsonl");
  std::string first;
  std::getline(log, first);
  CHECK(nlohmann::json::parse(first).at("provenance") == prov);
  CHECK_THROWS_AS(run_training(ds, cfg, {"", Stage::Alternating, nullptr}), ContractViolation);
}

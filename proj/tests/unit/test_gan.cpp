#include <doctest.h>

#include <cmath>
#include <random>

#include "fd_oracle.hpp"
#include "gan_oracles.hpp"
#include "rodenet/error.hpp"
#include "rodenet/gan/gan.hpp"
#include "rodenet/symnet/symnet.hpp"

using namespace rodenet;
using namespace rodenet::gan;
using rodenet::testing::central_differences;
using rodenet::testing::max_relative_error;
using rodenet::testing::uniform_vector;
using rodenet::testing::critic_loss_direct;
using rodenet::testing::input_gradient;

namespace {

GanModel tiny_model(std::uint64_t seed) {
  GanArchitecture arch;
  arch.latent_dim = 3;
  arch.g_hidden = {5, 4};
  arch.d_hidden = {6, 5};
  return make_gan(4, arch, seed);
}

// Discriminator with no hidden layer: D(x) = w . x + b.
GanModel linear_critic(std::vector<double> w, double b = 0.0) {
  GanArchitecture arch;
  arch.latent_dim = 2;
  arch.g_hidden = {3};
  arch.d_hidden = {};
  GanModel m = make_gan(w.size(), arch, 1);
  m.v = w;
  m.v.push_back(b);
  m.validate();
  return m;
}

CriticBatch random_batch(const GanModel& m, std::mt19937_64& rng, std::size_t n) {
  CriticBatch b;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    b.real.push_back(uniform_vector(rng, m.data_dim(), -2, 2));
    b.fake.push_back(uniform_vector(rng, m.data_dim(), -2, 2));
    b.eps.push_back(unit(rng));
  }
  return b;
}

}  // namespace

TEST_CASE("generator and discriminator shapes") {
  auto m = make_gan(72, {}, 0);
  CHECK(m.g_layers == std::vector<int>{32, 128, 128, 72});
  CHECK(m.d_layers == std::vector<int>{72, 128, 128, 1});
  CHECK(m.data_dim() == symnet::param_count(3, 2));
  std::vector<double> z(32, 0.5);
  CHECK(generate(m, z).size() == 72);
  CHECK(generate(m, z) == generate(m, z));
  std::vector<double> short_z(31, 0.0);
  CHECK_THROWS_AS(generate(m, short_z), ContractViolation);
  std::vector<double> short_xi(71, 0.0);
  CHECK_THROWS_AS(discriminate(m, short_xi), ContractViolation);
}

TEST_CASE("zero parameters") {
  auto m = tiny_model(1);
  std::fill(m.theta.begin(), m.theta.end(), 0.0);
  const std::size_t bias_at = m.theta.size() - m.data_dim();
  for (std::size_t i = 0; i < m.data_dim(); ++i) m.theta[bias_at + i] = 0.25 * static_cast<double>(i);
  const std::vector<double> z{1.0, -2.0, 3.0};
  CHECK(generate(m, z) == std::vector<double>{0.0, 0.25, 0.5, 0.75});
  std::fill(m.v.begin(), m.v.end(), 0.0);
  const std::vector<double> xi{1, 2, 3, 4};
  CHECK(discriminate(m, xi) == 0.0);
}

TEST_CASE("linear discriminator") {
  auto m = linear_critic({0.5, -1.0, 2.0});
  const std::vector<double> xi{1.0, 2.0, 3.0};
  CHECK(discriminate(m, xi) == doctest::Approx(4.5));
}

TEST_CASE("discriminator input gradient matches finite differences") {
  auto m = tiny_model(2);
  std::mt19937_64 rng(3);
  auto xi = uniform_vector(rng, 4, -1, 1);
  ad::Graph g;
  ad::Var x = g.leaf(xi);
  ad::Var score = discriminate(m, g.leaf(m.v), x);
  CHECK(score.scalar() == doctest::Approx(discriminate(m, xi)).epsilon(1e-14));
  const ad::Var wrt[] = {x};
  auto grad = g.grad(score, wrt)[0];
  auto fd = central_differences([&](std::span<const double> p) { return discriminate(m, p); }, xi);
  CHECK(max_relative_error(grad, fd) < 1e-5);
}

TEST_CASE("gradient penalty closed forms") {
  std::mt19937_64 rng(4);
  auto unit_w = linear_critic({0.6, 0.8, 0.0});
  auto two_w = linear_critic({2.0, 0.0, 0.0});
  for (int k = 0; k < 5; ++k) {
    auto r = uniform_vector(rng, 3, -3, 3), f = uniform_vector(rng, 3, -3, 3);
    const double eps = std::uniform_real_distribution<double>(0, 1)(rng);
    CHECK(std::abs(gradient_penalty(unit_w, r, f, eps)) < 1e-24);
    CHECK(gradient_penalty(two_w, r, f, eps) == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(gradient_penalty(unit_w, std::vector<double>(3, 0.0), std::vector<double>(3, 0.0), 1.5),
                  ContractViolation);
}

TEST_CASE("eps = 1 evaluates the penalty at the real point") {
  auto m = tiny_model(5);
  std::mt19937_64 rng(5);
  auto r = uniform_vector(rng, 4, -1, 1), f = uniform_vector(rng, 4, -1, 1);
  auto r2 = uniform_vector(rng, 4, -1, 1);
  CHECK(gradient_penalty(m, r, f, 1.0) == gradient_penalty(m, r, r2, 1.0));
  CHECK(gradient_penalty(m, r, f, 0.0) == gradient_penalty(m, r2, f, 0.0));
}

TEST_CASE("critic loss gradient matches finite differences") {
  auto m = tiny_model(6);
  std::mt19937_64 rng(6);
  auto b = random_batch(m, rng, 3);
  auto fused = critic_gradient(m, b, 10.0, Execution::Serial);
  auto ref = critic_gradient_reference(m, b, 10.0);
  auto fd = central_differences([&](std::span<const double> v) { return critic_loss_direct(m, v, b, 10.0); }, m.v);
  CHECK(max_relative_error(ref.grad, fd) < 1e-4);
  CHECK(max_relative_error(fused.grad, fd) < 1e-4);
  CHECK(ref.stats.loss == doctest::Approx(critic_loss_direct(m, m.v, b, 10.0)).epsilon(1e-12));
  auto fd_x = central_differences([&](std::span<const double> x) { return discriminate(m, x); }, b.real[0]);
  CHECK(max_relative_error(input_gradient(m, b.real[0]), fd_x) < 1e-5);
}

TEST_CASE("generator loss gradient matches finite differences") {
  auto m = tiny_model(7);
  std::mt19937_64 rng(7);
  std::vector<std::vector<double>> z;
  for (int s = 0; s < 3; ++s) z.push_back(uniform_vector(rng, 3, -1, 1));
  auto loss = [&](std::span<const double> theta) {
    GanModel c = m;
    c.theta.assign(theta.begin(), theta.end());
    double acc = 0.0;
    for (const auto& zs : z) acc -= discriminate(c, generate(c, zs)) / 3.0;
    return acc;
  };
  auto fd = central_differences(loss, m.theta);
  auto ref = generator_gradient_reference(m, z);
  auto fused = generator_gradient(m, z, Execution::Serial);
  CHECK(max_relative_error(ref.grad, fd) < 1e-4);
  CHECK(max_relative_error(fused.grad, fd) < 1e-4);
  CHECK(ref.loss == doctest::Approx(loss(m.theta)).epsilon(1e-12));
}

TEST_CASE("fused kernels agree with the per-sample graphs on the full-size model") {
  auto m = make_gan(72, {}, 8);
  std::mt19937_64 rng(8);
  auto b = random_batch(m, rng, 37);
  auto ref = critic_gradient_reference(m, b, 10.0);
  auto serial = critic_gradient(m, b, 10.0, Execution::Serial);
  auto parallel = critic_gradient(m, b, 10.0, Execution::Parallel);
  CHECK(max_relative_error(serial.grad, ref.grad, 1e-8) < 1e-9);
  CHECK(serial.grad == parallel.grad);
  CHECK(serial.stats.loss == doctest::Approx(ref.stats.loss).epsilon(1e-12));

  std::vector<std::vector<double>> z;
  for (int s = 0; s < 37; ++s) z.push_back(uniform_vector(rng, 32, -2, 2));
  auto gref = generator_gradient_reference(m, z);
  auto gser = generator_gradient(m, z, Execution::Serial);
  CHECK(max_relative_error(gser.grad, gref.grad, 1e-8) < 1e-9);
  CHECK(gser.grad == generator_gradient(m, z, Execution::Parallel).grad);
}

TEST_CASE("scaler") {
  std::vector<std::vector<double>> data{{1.0, 5.0}, {3.0, 5.0}};
  auto s = Scaler::fit(data);
  CHECK(s.mean == std::vector<double>{2.0, 5.0});
  CHECK(s.std == std::vector<double>{1.0, 1.0});  // constant column keeps unit scale
  const std::vector<double> x{7.0, -1.0};
  auto back = s.inverse(s.forward(x));
  CHECK(back[0] == doctest::Approx(7.0));
  CHECK(back[1] == doctest::Approx(-1.0));
}

TEST_CASE("warm-up-2 learns a correlated 2-d Gaussian") {
  Rng rng = make_rng(11, "toy");
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> data(2000);
  for (auto& x : data) {
    const double a = n(rng), b = n(rng);
    x = {1.0 + a, -2.0 + 0.6 * a + 0.8 * b};  // covariance [[1, .6], [.6, 1]]
  }
  GanTrainConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 2;
  GanArchitecture arch;
  arch.latent_dim = 8;
  arch.g_hidden = {64, 64};
  arch.d_hidden = {64, 64};
  auto r = train_warmup2(data, cfg, arch);

  Rng srng = make_rng(3, "eval");
  const int N = 5000;
  double m0 = 0, m1 = 0, c00 = 0, c01 = 0, c11 = 0;
  std::vector<std::vector<double>> s(N);
  for (auto& x : s) {
    std::vector<double> z(8);
    for (double& v : z) v = n(srng);
    x = generate(r.model, z);
    m0 += x[0] / N;
    m1 += x[1] / N;
  }
  for (const auto& x : s) {
    c00 += (x[0] - m0) * (x[0] - m0) / N;
    c01 += (x[0] - m0) * (x[1] - m1) / N;
    c11 += (x[1] - m1) * (x[1] - m1) / N;
  }
  MESSAGE("toy mean " << m0 << " " << m1 << " cov " << c00 << " " << c01 << " " << c11);
  CHECK(std::abs(m0 - 1.0) < 0.2);
  CHECK(std::abs(m1 + 2.0) < 0.2);
  CHECK(std::abs(c00 - 1.0) < 0.3);
  CHECK(std::abs(c01 - 0.6) < 0.3);
  CHECK(std::abs(c11 - 1.0) < 0.3);

  // the critic's Wasserstein estimate shrinks as the generator improves
  auto window_mean = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += r.critic_history[i].wasserstein;
    return acc / static_cast<double>(hi - lo);
  };
  const std::size_t total = r.critic_history.size();
  CHECK(std::abs(window_mean(total - 500, total)) < std::abs(window_mean(50, 550)));
}

TEST_CASE("warm-up-2 is deterministic and resumable") {
  Rng rng = make_rng(12, "toy");
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> data(100);
  for (auto& x : data) x = {n(rng), n(rng), n(rng)};
  GanTrainConfig cfg;
  cfg.iterations = 6;
  cfg.batch_size = 20;
  cfg.seed = 4;
  GanArchitecture arch;
  arch.latent_dim = 4;
  arch.g_hidden = {16};
  arch.d_hidden = {16};
  auto a = train_warmup2(data, cfg, arch, Execution::Serial);
  auto b = train_warmup2(data, cfg, arch, Execution::Parallel);
  CHECK(a.generator_history == b.generator_history);
  CHECK(a.model.theta == b.model.theta);
  CHECK(a.critic_history.size() == 30);

  cfg.linear_decay = false;
  auto t1 = make_trainer(data, cfg, arch);
  for (int i = 0; i < 3; ++i) t1.iteration(data);
  auto t2 = GanTrainer::from_json(nlohmann::json::parse(t1.to_json().dump()));
  for (int i = 0; i < 3; ++i) {
    t1.iteration(data);
    t2.iteration(data);
  }
  CHECK(t1.model().theta == t2.model().theta);
  CHECK(t1.model().v == t2.model().v);
  CHECK(t1.generator_history() == t2.generator_history());
  CHECK(t1.averaged_model().theta == t2.averaged_model().theta);

  cfg.batch_size = 101;
  CHECK_THROWS_AS(train_warmup2(data, cfg, arch), ContractViolation);
}

TEST_CASE("generator averaging") {
  Rng rng = make_rng(14, "toy");
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> data(40);
  for (auto& x : data) x = {n(rng), n(rng)};
  GanTrainConfig cfg;
  cfg.iterations = 6;
  cfg.batch_size = 8;
  cfg.average_decay = 0.75;
  cfg.average_start = 0.5;
  cfg.linear_decay = false;
  GanArchitecture arch;
  arch.latent_dim = 2;
  arch.g_hidden = {6};
  arch.d_hidden = {6};
  auto t = make_trainer(data, cfg, arch);
  std::vector<std::vector<double>> thetas;
  for (int i = 0; i < 6; ++i) {
    t.iteration(data);
    thetas.push_back(t.model().theta);
    if (i < 3) CHECK(t.averaged_model().theta == t.model().theta);
  }
  // copied at the fourth step, then blended twice
  for (std::size_t k = 0; k < thetas[0].size(); ++k) {
    const double expect = 0.75 * (0.75 * thetas[3][k] + 0.25 * thetas[4][k]) + 0.25 * thetas[5][k];
    CHECK(t.averaged_model().theta[k] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(t.averaged_model().v == t.model().v);

  cfg.average_decay = 0.0;
  auto plain = train_warmup2(data, cfg, arch);
  auto raw = make_trainer(data, cfg, arch);
  for (int i = 0; i < 6; ++i) raw.iteration(data);
  CHECK(plain.model.theta == raw.model().theta);

  cfg.average_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("graph and fused training runs coincide") {
  Rng rng = make_rng(13, "toy");
  std::normal_distribution<double> n(0, 1);
  std::vector<std::vector<double>> data(64);
  for (auto& x : data) x = {n(rng), n(rng), n(rng), n(rng)};
  GanTrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  GanArchitecture arch;
  arch.latent_dim = 3;
  arch.g_hidden = {8, 8};
  arch.d_hidden = {8, 8};
  auto fused = make_trainer(data, cfg, arch);
  auto graph = make_trainer(data, cfg, arch);
  graph.set_kernel(GanKernel::Graph);
  for (int i = 0; i < 4; ++i) {
    fused.iteration(data);
    graph.iteration(data);
  }
  CHECK(max_relative_error(fused.model().theta, graph.model().theta, 1e-6) < 1e-8);
  CHECK(max_relative_error(fused.model().v, graph.model().v, 1e-6) < 1e-8);
}

TEST_CASE("sampling odes") {
  auto m = make_gan(72, {}, 9);
  Rng rng = make_rng(1, "sample");
  CHECK(sample_odes(m, 0, 3, 2, rng).empty());
  auto odes = sample_odes(m, 5, 3, 2, rng);
  CHECK(odes.size() == 5);
  for (const auto& o : odes) {
    CHECK(o.xi.size() == 72);
    CHECK(o.system.size() == 3);
    for (const auto& p : o.system) CHECK(p.degree() <= 4);
    CHECK(o.system == symnet::extract_system(o.xi, symnet::SymNetShape(3, 2)));
  }
  Rng again = make_rng(1, "sample");
  sample_odes(m, 0, 3, 2, again);
  CHECK(sample_odes(m, 5, 3, 2, again)[2].xi == odes[2].xi);
  CHECK_THROWS_AS(sample_odes(m, 1, 3, 1, rng), ContractViolation);
}

TEST_CASE("model json round trip keeps the scaler") {
  auto m = tiny_model(10);
  m.scaler = Scaler{{1, 2, 3, 4}, {1, 1, 2, 2}};
  auto back = gan_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back.theta == m.theta);
  CHECK(back.v == m.v);
  CHECK(back.scaler->std == m.scaler->std);
  const std::vector<double> z{0.1, 0.2, 0.3};
  CHECK(generate(back, z) == generate(m, z));
  auto j = to_json(m);
  j["theta"].erase(0);
  CHECK_THROWS_AS(gan_from_json(j), ContractViolation);
}

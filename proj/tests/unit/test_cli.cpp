#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rodenet/cli/run_config.hpp"
#include "rodenet/error.hpp"

using namespace rodenet;
using namespace rodenet::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

class Sandbox {
 public:
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  fs::path operator/(const std::string& f) const { return dir / f; }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }

  Result cli(const std::string& args) const {
    const char* exe = std::getenv("RODENET_CLI");
    REQUIRE_MESSAGE(exe != nullptr, "RODENET_CLI must point at the command-line binary");
    const std::string cmd = "cd '" + dir.string() + "' && '" + exe + "' " + args + " >stdout.txt 2>stderr.txt";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "stdout.txt");
    r.err = slurp(dir / "stderr.txt");
    return r;
  }

  fs::path dir;
};

const char* kTiny = R"({
  "version": 1,
  "simulation": {"M": 2, "N_i": 2, "S": 20},
  "training": {
    "odenet": {"epochs_per_stage": 15, "batch_size": 16},
    "gan": {"iterations": 30, "batch_size": 2},
    "arch": {"latent_dim": 4, "g_hidden": [16], "d_hidden": [16]},
    "max_outer": 3, "steps_per_outer": 4, "n_gan": 4, "keep_checkpoints": 0
  },
  "evaluation": {"samples": 8, "n_inits": 5, "band_trajectories": 6}
})";

std::string error_category(const Result& r) {
  const auto line = r.err.substr(0, r.err.find('\n'));
  return json::parse(line).at("error").at("category").get<std::string>();
}

}  // namespace

TEST_CASE("config defaults carry the published hyperparameters") {
  const auto rc = resolve_config({{"version", 1}}, 0);
  CHECK(rc.training.odenet.lambda_h == 0.001);
  CHECK(rc.training.odenet.huber_knee == 0.001);
  CHECK(rc.training.odenet.s_max == 6);
  CHECK(rc.training.odenet.learning_rate == 0.01);
  CHECK(rc.training.gan.lambda_gp == 10.0);
  CHECK(rc.training.lambda_g == 0.1);
  CHECK(rc.training.n_d == 1);
  CHECK(rc.training.n_gan == 100);
  CHECK(rc.simulation.dt == 0.05);
  CHECK(rc.simulation.instances == 500);
  CHECK(rc.simulation.initial_values == 5);
  CHECK(rc.simulation.steps == 50);
  CHECK(rc.simulation.init_low == -10.0);
  CHECK(rc.simulation.init_high == 10.0);
  CHECK(rc.simulation.noise_ratio == 0.0);
  CHECK(rc.simulation.spec.kind == sim::RodeKind::Independent);
}

TEST_CASE("config overlays, rejects unknown keys and type errors") {
  auto rc = resolve_config(json::parse(R"({"version":1,"simulation":{"M":2,"rode":"dependent","n_r":0.01},
                                           "training":{"gan":{"n_critic":3}}})"),
                           9);
  CHECK(rc.simulation.instances == 2);
  CHECK(rc.simulation.spec.kind == sim::RodeKind::Dependent);
  CHECK(rc.simulation.noise_ratio == 0.01);
  CHECK(rc.training.gan.n_critic == 3);
  CHECK(rc.training.gan.lambda_gp == 10.0);
  CHECK(rc.simulation.seed == 9);
  CHECK(rc.training.seed == 9);
  CHECK(rc.training.odenet.seed == 9);
  CHECK(rc.training.gan.seed == 9);
  CHECK(rc.evaluation.seed == 9);

  for (const char* bad : {R"({"version":1,"simulaton":{}})", R"({"version":1,"training":{"lamda_g":1}})",
                          R"({"version":1,"training":{"gan":{"n_critc":1}}})", R"({"version":1,"seed":3})",
                          R"({"version":1,"training":{"seed":3}})", R"({"version":1,"simulation":{"M":"ten"}})",
                          R"({"version":1,"simulation":{"M":2.5}})", R"({"version":1,"training":{"gan":3}})",
                          R"({"simulation":{}})", R"({"version":2})", R"([1,2])",
                          R"({"version":1,"simulation":{"rode":"custom"}})",
                          R"({"version":1,"simulation":{"init_box":[1,-1]}})"})
    CHECK_THROWS_AS(resolve_config(json::parse(bad), 0), Error);
  CHECK_THROWS_AS(resolve_config(json::parse(R"({"version":1,"simulation":{"M":2,"oops":1}})"), 0), ConfigError);
}

TEST_CASE("config hash") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  const auto a = resolve_config({{"version", 1}}, 0);
  const auto b = resolve_config({{"version", 1}}, 5);
  const auto c = resolve_config(json::parse(R"({"version":1,"training":{"lambda_g":0.2}})"), 0);
  const auto d = resolve_config(json::parse(R"({"version":1,"training":{"lambda_g":0.1}})"), 0);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash() == d.hash());
  CHECK(b.provenance().at("seed") == 5);
}

TEST_CASE("cli simulate") {
  Sandbox box("rodenet_cli_simulate");
  box.write("tiny.json", kTiny);
  auto r = box.cli("simulate --config tiny.json --out data/ds.json");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto ds = load(box / "data/ds.json");
  CHECK(ds.at("instances").size() == 2);
  const auto summary = json::parse(r.out);
  CHECK(summary.at("instances") == 2);
  CHECK(ds.at("provenance").at("config_hash") == summary.at("config_hash"));
  CHECK(ds.at("provenance").at("seed") == 0);

  CHECK(box.cli("simulate --config tiny.json --out again.json").code == 0);
  CHECK(slurp(box / "data/ds.json") == slurp(box / "again.json"));
  CHECK(box.cli("simulate --config tiny.json --seed 1 --out other.json --jobs 1").code == 0);
  CHECK(slurp(box / "other.json") != slurp(box / "again.json"));

  box.write("broken.json", "{\"version\": 1,");
  r = box.cli("simulate --config broken.json --out x.json");
  CHECK(r.code == 2);
  CHECK(error_category(r) == "config");
  CHECK(r.err.find("parse error") != std::string::npos);
  CHECK_FALSE(fs::exists(box / "x.json"));

  box.write("typo.json", R"({"version": 1, "simulation": {"N": 3}})");
  r = box.cli("simulate --config typo.json --out x.json");
  CHECK(r.code == 2);
  CHECK(r.err.find("simulation.N") != std::string::npos);

  r = box.cli("simulate --config tiny.json");
  CHECK(r.code == 2);
  CHECK(error_category(r) == "usage");
  CHECK(box.cli("frobnicate").code == 2);
  CHECK(box.cli("simulate --config missing.json --out x.json").code == 1);
}

TEST_CASE("cli train, sample and evaluate") {
  Sandbox box("rodenet_cli_train");
  box.write("tiny.json", kTiny);
  REQUIRE(box.cli("simulate --config tiny.json --out ds.json").code == 0);
  const std::string base = "train --config tiny.json --dataset ds.json ";

  auto r = box.cli(base + "--out full --mode full");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(r.out).at("stage") == "done");
  for (const char* f : {"run.json", "config.json", "dataset.json", "gan.json", "checkpoints/warmup1.json",
                        "checkpoints/iter003.json", "odenets/inst_1.json"})
    CHECK_MESSAGE(load(box / "full" / f).at("provenance").at("config_hash") == json::parse(r.out).at("config_hash"),
                  f);

  SUBCASE("same seed is bit-identical") {
    REQUIRE(box.cli(base + "--out full2 --mode full").code == 0);
    for (const char* f : {"gan.json", "odenets/inst_0.json", "checkpoints/iter003.json", "log.jsonl"})
      CHECK_MESSAGE(slurp(box / "full" / f) == slurp(box / "full2" / f), f);
  }

  SUBCASE("resume equals the uninterrupted run") {
    fs::copy(box / "full", box / "cut", fs::copy_options::recursive);
    fs::remove(box / "cut/checkpoints/iter002.json");
    fs::remove(box / "cut/checkpoints/iter003.json");
    fs::remove(box / "cut/gan.json");
    r = box.cli(base + "--out cut --mode full");
    CHECK(r.code == 2);
    CHECK(r.err.find("--resume") != std::string::npos);
    REQUIRE(box.cli(base + "--out cut --mode full --resume").code == 0);
    for (const char* f : {"gan.json", "odenets/inst_0.json", "odenets/inst_1.json", "checkpoints/iter003.json"})
      CHECK_MESSAGE(slurp(box / "full" / f) == slurp(box / "cut" / f), f);
  }

  SUBCASE("stages one at a time") {
    r = box.cli(base + "--out staged --mode warmup2");
    CHECK(r.code == 1);
    CHECK(error_category(r) == "dependency");
    REQUIRE(box.cli(base + "--out staged --mode warmup1").code == 0);
    CHECK_FALSE(fs::exists(box / "staged/gan.json"));
    REQUIRE(box.cli(base + "--out staged --mode warmup2").code == 0);
    CHECK(fs::exists(box / "staged/gan.json"));
    REQUIRE(box.cli(base + "--out staged --mode full --resume").code == 0);
    CHECK(load(box / "staged/checkpoints/iter003.json") == load(box / "full/checkpoints/iter003.json"));

    // no-gan is warm-up-1 alone
    REQUIRE(box.cli(base + "--out nogan --mode no-gan").code == 0);
    CHECK(load(box / "nogan/odenets/inst_0.json").at("xi") != load(box / "full/odenets/inst_0.json").at("xi"));
    CHECK(load(box / "nogan/checkpoints/warmup1.json") == load(box / "staged/checkpoints/warmup1.json"));
    CHECK_FALSE(fs::exists(box / "nogan/gan.json"));
    CHECK(box.cli(base + "--out nogan --mode full --resume").code == 2);
  }

  SUBCASE("sample") {
    REQUIRE(box.cli("sample --gan full --n 0 --out s0.json").code == 0);
    CHECK(load(box / "s0.json").at("systems").empty());
    REQUIRE(box.cli("sample --gan full/gan.json --n 5 --out s5.json --seed 3").code == 0);
    const auto s5 = load(box / "s5.json");
    CHECK(s5.at("systems").size() == 5);
    for (const auto& s : s5.at("systems")) CHECK(s.at("components").size() == 3);
    CHECK(s5.at("provenance").at("config_hash") == load(box / "full/gan.json").at("provenance").at("config_hash"));
    CHECK(s5.at("provenance").at("seed") == 3);
    REQUIRE(box.cli("sample --gan full --n 5 --out s5b.json --seed 3").code == 0);
    CHECK(slurp(box / "s5.json") == slurp(box / "s5b.json"));

    box.write("corrupt.json", R"({"latent_dim": 4})");
    r = box.cli("sample --gan corrupt.json --n 2 --out x.json");
    CHECK(r.code == 1);
    CHECK(error_category(r) == "io");
    r = box.cli("sample --gan nowhere --n 2 --out x.json");
    CHECK(error_category(r) == "dependency");
  }

  SUBCASE("evaluate") {
    REQUIRE(box.cli(base + "--out nogan --mode no-gan --extra-outer 3").code == 0);
    r = box.cli("evaluate --config tiny.json --run full --run nogan --out report");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const char* files[] = {"report.json", "table1.csv", "table2.csv", "fig4_hist.csv", "fig5_expr_err.csv"};
    std::vector<std::string> before;
    for (const char* f : files) before.push_back(slurp(box / "report" / f));
    const auto rep = load(box / "report/report.json");
    REQUIRE(rep.at("runs").size() == 2);
    CHECK(rep.at("runs")[0].at("label") == "full");
    CHECK(rep.at("runs")[1].at("label") == "no-gan");
    CHECK(before[1].rfind("# config_hash=" + rep.at("metadata").at("config_hash").get<std::string>(), 0) == 0);
    CHECK(before[4].find("e_eta_full") != std::string::npos);
    CHECK(before[4].find("e_eta_no-gan") != std::string::npos);

    REQUIRE(box.cli("evaluate --config tiny.json --run full --run nogan --out report").code == 0);
    for (std::size_t k = 0; k < std::size(files); ++k)
      CHECK_MESSAGE(slurp(box / "report" / files[k]) == before[k], files[k]);

    r = box.cli("evaluate --config tiny.json --run nogan --out plain");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(box / "plain/fig5_expr_err.csv"));
    CHECK_FALSE(fs::exists(box / "plain/table1.csv"));
    CHECK(r.err.find("no GAN") != std::string::npos);

    fs::remove(box / "nogan/odenets/inst_1.json");
    r = box.cli("evaluate --config tiny.json --run nogan --out broken");
    CHECK(r.code == 1);
    CHECK(error_category(r) == "dependency");
  }
}

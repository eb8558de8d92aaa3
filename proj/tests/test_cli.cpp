#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "hardchain/instance.hpp"

namespace fs = std::filesystem;
using namespace hardchain;

namespace {

struct Sandbox {
  fs::path dir = fs::temp_directory_path() / ("hardchain_cli_" + std::to_string(::getpid()));
  Sandbox() { fs::create_directories(dir); }
  ~Sandbox() { fs::remove_all(dir); }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + HARDCHAIN_CLI + "' " + args +
                            " > out.txt 2> err.txt";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  std::string read(const std::string& name) const {
    std::ifstream f(dir / name, std::ios::binary);
    std::stringstream b;
    b << f.rdbuf();
    return b.str();
  }
};

}  // namespace

TEST_CASE("gen writes a reloadable instance, deterministically") {
  Sandbox sb;
  REQUIRE(sb.run("gen --setting det --p 1 --delta 1 --lp 1 --eps 0.1 --seed 7 --out a") == 0);
  CHECK(sb.read("out.txt").find("lower_bound_value") != std::string::npos);
  const Instance inst = load_instance((sb.dir / "a.json").string());
  CHECK(inst.seed() == 7);
  const std::string payload = sb.read("a.u.bin");
  REQUIRE(sb.run("gen --setting det --p 1 --delta 1 --lp 1 --eps 0.1 --seed 7 --out b") == 0);
  CHECK(sb.read("b.u.bin") == payload);
  const auto h = nlohmann::json::parse(sb.read("a.json"));
  CHECK(h["meta"]["seed"] == 7);
  CHECK(h["meta"]["argv"][1] == "gen");
}

TEST_CASE("mss above the feasibility ceiling exits 3") {
  Sandbox sb;
  CHECK(sb.run("gen --setting mss --eps 5") == 3);
  CHECK(sb.read("err.txt").find("ceiling") != std::string::npos);
}

TEST_CASE("eval at zero and order errors") {
  Sandbox sb;
  REQUIRE(sb.run("gen --setting det --delta 200 --eps 0.1 --seed 3 --out i") == 0);
  REQUIRE(sb.run("eval --instance i.json --at-zero --order 1 --out e.json") == 0);
  const auto e = nlohmann::json::parse(sb.read("e.json"));
  const Instance inst = load_instance((sb.dir / "i.json").string());
  const double ab = inst.params().alpha_over_beta();
  const auto g = e["gradient"].get<std::vector<double>>();
  REQUIRE(static_cast<long>(g.size()) == inst.d());
  for (long i = 0; i < inst.d(); ++i)
    CHECK(g[static_cast<std::size_t>(i)] ==
          doctest::Approx(-ab * std::sqrt(std::exp(1.0)) * inst.embedding().U(i, 0)).epsilon(1e-12));
  CHECK(e["ledger"]["delta"] == 1);

  CHECK(sb.run("eval --instance i.json --at-zero --order 9") == 2);
  CHECK(sb.read("err.txt").find("unsupported order") != std::string::npos);

  std::ofstream(sb.dir / "bad.txt") << "1 2 oops";
  CHECK(sb.run("eval --instance i.json --x bad.txt") == 2);
  CHECK(sb.read("err.txt").find("malformed x") != std::string::npos);
}

TEST_CASE("eval mean-hiding over every j recovers the gradient") {
  Sandbox sb;
  REQUIRE(sb.run("gen --setting stoch --eps 0.1 --sigma 1 --delta 0.5 --seed 5 --out s") == 0);
  REQUIRE(sb.run("eval --instance s.json --at-zero --oracle meanhiding --all-j --out m.json") == 0);
  const auto m = nlohmann::json::parse(sb.read("m.json"));
  CHECK(m["max_abs_mean_minus_gradient"].get<double>() <= 1e-12);
  CHECK(m["ledger"]["delta"].get<long>() == static_cast<long>(m["samples"].size()));
}

TEST_CASE("verify, bench and grover") {
  Sandbox sb;
  CHECK(sb.run("verify --suite kernel --T 10 --samples 2000 --out v.json") == 0);
  const auto v = nlohmann::json::parse(sb.read("v.json"));
  CHECK(v["summary"]["fail"] == 0);
  CHECK(fs::exists(sb.dir / "v.json.sidecar.json"));
  CHECK(sb.read("v.json").find("finished_utc") == std::string::npos);

  REQUIRE(sb.run("bench --solver chain --sweep-eps 0.4,0.2,0.1,0.05 --out b.csv") == 0);
  std::istringstream csv(sb.read("b.csv"));
  std::string line;
  int rows = 0, fits = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("chain,", 0) == 0) ++rows;
    if (line.rfind("# fit ", 0) == 0) {
      ++fits;
      CHECK(std::abs(nlohmann::json::parse(line.substr(6))["slope"].get<double>() + 2.0) <= 0.2);
    }
  }
  CHECK(rows == 4);
  CHECK(fits == 1);

  REQUIRE(sb.run("grover --p 1024 --trials 500") == 0);
  const auto g = nlohmann::json::parse(sb.read("out.txt"));
  CHECK(g["quantum_queries"] == 26);
  CHECK(g["quantum_success"].get<double>() >= 0.5);
  CHECK(sb.run("grover --p 0.3") == 2);
}

TEST_CASE("seed fallback, config file and usage errors") {
  Sandbox sb;
  REQUIRE(sb.run("grover --p 64 --trials 100", "HARDCHAIN_SEED=42") == 0);
  const auto g = nlohmann::json::parse(sb.read("out.txt"));
  CHECK(g["meta"]["seed"] == 42);
  const auto argv = g["meta"]["argv"].get<std::vector<std::string>>();
  CHECK(argv.back() == "42");

  std::ofstream(sb.dir / "cfg.json") << R"({"command": "grover", "p": 64, "trials": 100, "seed": 42})";
  REQUIRE(sb.run("--config cfg.json") == 0);
  CHECK(nlohmann::json::parse(sb.read("out.txt"))["classical_mean"] == g["classical_mean"]);
  REQUIRE(sb.run("--config cfg.json --trials 50") == 0);
  CHECK(nlohmann::json::parse(sb.read("out.txt"))["trials"] == 50);

  CHECK(sb.run("") == 2);
  CHECK(sb.run("gen --no-such-flag") == 2);
  CHECK(sb.run("verify --suite nope") == 2);
  CHECK(sb.run("bench --solver newton") == 2);
}

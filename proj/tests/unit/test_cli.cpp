#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdt/cli.hpp"
#include "unit/helpers.hpp"

using namespace cdt;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cdt::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// collect -> filter -> augment -> train -> sweep in `dir`.
void pipeline(const testing::TempDir& dir) {
  const auto p = [&](const char* n) { return (dir / n).string(); };
  REQUIRE(run({"collect", "--risks", "0,0.5,1", "--episodes", "2", "--seed", "3", "-o", p("d.ndjson")}).code == 0);
  REQUIRE(run({"filter", "-d", p("d.ndjson"), "--cost-bin", "20", "--reward-bin", "50", "--max-per-cell", "1",
               "-o", p("f.ndjson")})
              .code == 0);
  REQUIRE(run({"augment", "-d", p("f.ndjson"), "--n", "4", "--seed", "2", "-o", p("a.ndjson")}).code == 0);
  REQUIRE(run({"train", "-d", p("a.ndjson"), "--layers", "1", "--heads", "2", "--embed-dim", "8", "--steps", "3",
               "--batch", "4", "--context", "3", "--log-every", "0", "-o", p("m.ckpt")})
              .code == 0);
  REQUIRE(run({"sweep", "-m", p("m.ckpt"), "--grid", "5,10", "--episodes", "1", "--seeds", "0", "-o", p("s.csv")})
              .code == 0);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("list parsing and config flags") {
    CHECK(cdt::cli::parse_list("1,2.5, 3") == std::vector<double>{1, 2.5, 3});
    CHECK_THROWS(cdt::cli::parse_list("1,x"));
    const auto args = cdt::cli::config_to_args(json{{"max_per_cell", 3}, {"seeds", {0, 1}}, {"no_floor", true}});
    CHECK(args == std::vector<std::string>{"--max-per-cell", "3", "--no-floor", "--seeds", "0,1"});
    CHECK(cdt::cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("usage errors") {
    CHECK(run({"frobnicate"}).code != 0);
    CHECK(run({}).code != 0);
    CHECK(run({"collect", "--no-such-flag"}).code == 2);
    const auto r = run({"analyze", "--dataset", "/no/such/file.ndjson", "--kappa", "10"});
    CHECK(r.code == 2);
    CHECK(r.err.find("dataset not found: /no/such/file.ndjson") != std::string::npos);
    const auto m = run({"eval", "-m", "/no/such/model.ckpt"});
    CHECK(m.code == 2);
    CHECK(m.err.find("model not found") != std::string::npos);
    CHECK(run({"--help"}).code == 0);
  }

  TEST_CASE("runtime errors exit 1 with a category") {
    testing::TempDir dir("cli-err");
    std::ofstream(dir / "bad.ndjson") << "{\"format\":\"nope\"}\n";
    const auto r = run({"analyze", "-d", (dir / "bad.ndjson").string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error [dataset]:", 0) == 0);
  }

  TEST_CASE("analyze prints a frontier report") {
    testing::TempDir dir("cli-analyze");
    const auto d = (dir / "d.ndjson").string();
    REQUIRE(run({"collect", "--risks", "0,1", "--episodes", "2", "-o", d}).code == 0);
    const auto before = slurp(d);
    const auto r = run({"analyze", "--dataset", d, "--kappa", "10", "-o", (dir / "report.json").string(),
                        "--points", (dir / "pts.csv").string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["kappa"] == 10.0);
    CHECK(j["n_trajectories"] == 4);
    CHECK(j.contains("pf"));
    CHECK(j["pareto"].is_array());
    CHECK(read_json(dir / "report.json") == j);
    CHECK(slurp(dir / "pts.csv").rfind("index,cost,reward\n", 0) == 0);
    CHECK(std::filesystem::exists(dir / "report.json.manifest.json"));
    CHECK(slurp(d) == before);
  }

  TEST_CASE("config file precedence") {
    testing::TempDir dir("cli-config");
    std::ofstream(dir / "c.json") << R"({"episodes": 3, "risks": [0, 1], "seed": 5})";
    const auto out = (dir / "d.ndjson").string();
    REQUIRE(run({"collect", "--config", (dir / "c.json").string(), "--episodes", "1", "-o", out}).code == 0);
    const auto m = read_json(out + ".manifest.json");
    CHECK(m["subcommand"] == "collect");
    CHECK(m["seed"] == 5);
    CHECK(m["config"]["episodes"] == 1);
    // Defaults that were never set are echoed too.
    CHECK(m["config"].contains("noise"));
    std::ifstream in(out);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1 + 2);
    CHECK(run({"collect", "--config", (dir / "missing.json").string()}).code == 2);
  }

  TEST_CASE("augment writes a summary") {
    testing::TempDir dir("cli-augment");
    const auto d = (dir / "d.ndjson").string();
    REQUIRE(run({"collect", "--risks", "0,1", "--episodes", "2", "-o", d}).code == 0);
    const auto a = (dir / "a.ndjson").string();
    REQUIRE(run({"augment", "-d", d, "--n", "3", "-o", a}).code == 0);
    const auto s = read_json(a + ".summary.json");
    CHECK(s["requested"] == 3);
    CHECK(s["produced"].get<int>() + s["skipped"].get<int>() == 3);
  }

  TEST_CASE("collect with cost budgets") {
    testing::TempDir dir("cli-budgets");
    const auto d = (dir / "d.ndjson").string();
    REQUIRE(run({"collect", "--risks", "0", "--budgets", "0,10", "--budget-risk", "0.5", "--episodes", "2", "-o", d})
                .code == 0);
    const auto ds = load_dataset(d);
    REQUIRE(ds.size() == 6);
    CHECK(ds.return_points()[4].cost >= 10);
    CHECK(run({"collect", "--budget-risk", "2", "-o", d}).code == 2);
    CHECK(run({"collect", "--budgets", "5,x", "-o", d}).code == 2);
  }

  TEST_CASE("pipeline is reproducible and hash linked") {
    testing::TempDir one("cli-pipe1"), two("cli-pipe2");
    pipeline(one);
    pipeline(two);
    for (const char* f : {"d.ndjson", "f.ndjson", "a.ndjson", "m.ckpt", "s.csv"}) {
      INFO(f);
      CHECK(slurp(one / f) == slurp(two / f));
    }
    const auto aug = read_json(one / "a.ndjson.manifest.json");
    const auto train = read_json(one / "m.ckpt.manifest.json");
    const auto sweep = read_json(one / "s.csv.manifest.json");
    CHECK(train["inputs"][0]["sha256"] == aug["outputs"][0]["sha256"]);
    CHECK(sweep["inputs"][0]["sha256"] == train["outputs"][0]["sha256"]);
    CHECK(sweep["inputs"][0]["sha256"] == cdt::cli::file_sha256(one / "m.ckpt"));
    const auto meta = read_json(one / "s.csv.meta.json");
    CHECK(meta["model_sha256"] == train["outputs"][0]["sha256"]);
    CHECK(slurp(one / "s.csv").rfind("axis_value,", 0) == 0);
  }
}

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path scratch = fs::temp_directory_path() / ("meshswap_cli_" + std::to_string(::getpid()));

int cli(const std::string& args) {
  const std::string cmd = std::string(MESHSWAP_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const std::string& name, const std::string& body) {
  fs::create_directories(scratch);
  const auto p = scratch / name;
  std::ofstream(p) << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* small = R"({"config_version": 1, "t_end": 20, "ranks": 2, "producer_max_leaves": 400})";

}  // namespace

TEST_CASE("invalid configs exit with 1") {
  CHECK(cli("run --config " + write_config("zero.json", R"({"config_version": 1, "t_end": 0})").string()) == 1);
  CHECK(cli("run --config " + write_config("nover.json", R"({"t_end": 10})").string()) == 1);
  CHECK(cli("run --config " + write_config("unknown.json", R"({"config_version": 1, "t_endd": 10})").string()) == 1);
  CHECK(cli("run --config " + write_config("bad.json", "{not json").string()) == 1);
  CHECK(cli("run --mode 4d") == 1);
  CHECK(cli("sweep --multipliers 1 --out " + (scratch / "sw").string()) == 1);
}

TEST_CASE("run writes reports") {
  const auto cfg = write_config("small.json", small);
  const auto out = scratch / "run";
  REQUIRE(cli("run --config " + cfg.string() + " --out " + out.string()) == 0);
  const auto csv = slurp(out / "run_report.csv");
  CHECK(csv.rfind("sync_index,t_sync,steps_p,steps_c,producer_patches,consumer_patches,queries,found,"
                  "exchange_wall_s,step_wall_p_s,step_wall_c_s\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(slurp(out / "exchange_report.csv").rfind("round,queries_sent,found,unmatched,batches,wall_seconds\n", 0) == 0);
  CHECK(fs::exists(out / "producer_forest.json"));
  CHECK(fs::exists(out / "consumer_forest.json"));
  CHECK(fs::exists(out / "config.json"));
}

TEST_CASE("seeded runs without timing are byte-identical") {
  const auto cfg = write_config("small.json", small);
  for (const char* mode : {"2d", "3d-extruded"}) {
    const auto a = scratch / (std::string("a") + mode), b = scratch / (std::string("b") + mode);
    const std::string common = "run --no-timing --seed 9 --ranks 3 --mode " + std::string(mode) + " --config " + cfg.string();
    REQUIRE(cli(common + " --out " + a.string()) == 0);
    REQUIRE(cli(common + " --out " + b.string()) == 0);
    CHECK(slurp(a / "run_report.csv") == slurp(b / "run_report.csv"));
    CHECK(slurp(a / "exchange_report.csv") == slurp(b / "exchange_report.csv"));
  }
}

TEST_CASE("verify passes, and fails on an injected fault") {
  CHECK(cli("verify") == 0);
  CHECK(cli("verify --inject-fault markers") == 2);
  fs::remove_all(scratch);
}

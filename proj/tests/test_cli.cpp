// Runs the command-line tool as a child process and checks exit codes and files.
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "scratch.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MTLSAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kSpec = R"({"chip_size": 24, "groups": [
  {"depression_deg": 17, "per_class": 2, "split": "train"},
  {"depression_deg": 15, "per_class": 1, "split": "test"},
  {"depression_deg": 30, "per_class": 1, "split": "test"}]})";

const char* kConfig = R"({"input_h": 16, "input_w": 16, "encoder_channels": [2, 3, 3],
  "recognition_channels": 3, "batch_size": 4, "crops_per_chip": 2, "overlays": 2})";

}  // namespace

TEST_CASE("cli") {
  ScratchDir dir("cli");
  write(dir / "spec.json", kSpec);
  write(dir / "config.json", kConfig);

  SUBCASE("usage errors") {
    CHECK(run("") == 1);
    CHECK(run("--bogus") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("--help") == 0);
    CHECK(run("generate") == 1);  // --out is required
  }

  SUBCASE("generate is deterministic and honours --classes") {
    REQUIRE(run("generate --config " + dir / "spec.json" + " --out " + dir / "a --seed 4") == 0);
    REQUIRE(run("generate --config " + dir / "spec.json" + " --out " + dir / "b --seed 4") == 0);
    CHECK(slurp(dir / "a/manifest.csv") == slurp(dir / "b/manifest.csv"));
    CHECK(std::filesystem::exists(dir / "a/generator.json"));
    REQUIRE(run("generate --config " + dir / "spec.json" + " --out " + dir / "c --seed 4 --classes 4") == 0);
    const std::string m = slurp(dir / "c/manifest.csv");
    CHECK(std::count(m.begin(), m.end(), '\n') == 1 + 4 * 4);
  }

  SUBCASE("train, eval, baseline and their failure codes") {
    REQUIRE(run("generate --config " + dir / "spec.json" + " --out " + dir / "data --seed 1") == 0);
    const std::string data = dir / "data";
    CHECK(run("train " + data + " --config " + dir / "config.json" + " --out " + dir / "run --epochs 1") == 0);
    const std::string log = slurp(dir / "run/train_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);

    CHECK(run("eval " + dir / "run/checkpoint.bin " + data + " --out " + dir / "eval --scenario eoc-d") == 0);
    CHECK(slurp(dir / "eval/summary.json").find("\"EOC-D\"") != std::string::npos);
    CHECK(slurp(dir / "eval/confusion.csv").rfind("# recognition ratio", 0) == 0);

    CHECK(run("baseline " + data + " --method otsu --out " + dir / "otsu") == 0);
    CHECK(slurp(dir / "otsu/baseline.csv").find("otsu,all,") != std::string::npos);
    CHECK(run("baseline " + data + " --method sobel --out " + dir / "x") == 1);

    // Configuration errors are usage errors, data mismatches are data errors.
    write(dir / "bad.json", R"({"learning_rate": 1})");
    CHECK(run("train " + data + " --config " + dir / "bad.json" + " --out " + dir / "x") == 1);
    CHECK(run("train " + data + " --config " + dir / "config.json" + " --out " + dir / "x --classes 4") == 2);
    CHECK(run("train " + dir / "missing --config " + dir / "config.json" + " --out " + dir / "x") == 2);
    CHECK(run("train " + data + " --scenario eoc-q --out " + dir / "x") == 1);
  }

  SUBCASE("gradcheck") {
    write(dir / "gc.json", R"({"instances": 2, "network": false})");
    CHECK(run("gradcheck --config " + dir / "gc.json" + " --out " + dir / "gc") == 0);
    CHECK(slurp(dir / "gc/gradcheck.json").find("max_rel_error") != std::string::npos);
    CHECK(run("gradcheck --config " + dir / "gc.json" + " --inject-fault conv_backward_sign") == 3);
  }
}

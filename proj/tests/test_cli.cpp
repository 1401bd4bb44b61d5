#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "meshode_test_cli.log";
  const std::string cmd =
      std::string("\"") + MESHODE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, ss.str()};
}

}  // namespace

TEST_CASE("train prints the resolved per-case defaults") {
  const Run rod = cli("train --model meshode --case rod");
  CHECK(rod.code == 2);
  CHECK(rod.output.find("layers = 1\n") != std::string::npos);
  CHECK(rod.output.find("hidden = 128\n") != std::string::npos);
  CHECK(rod.output.find("epochs = 400\n") != std::string::npos);
  const Run plate = cli("train --model mgn --case plate --train-dir /nonexistent/dir");
  CHECK(plate.code == 2);
  CHECK(plate.output.find("layers = 30\n") != std::string::npos);
  CHECK(plate.output.find("epochs = 600\n") != std::string::npos);
  CHECK(plate.output.find("/nonexistent/dir") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(cli("").code == 2);
  CHECK(cli("--help").code == 0);
  CHECK(cli("gen --case shell --out x").code == 2);
  CHECK(cli("rollout --checkpoint /nonexistent.mshc --trajectory t --out o").code == 2);

  const fs::path dir = fs::temp_directory_path() / "meshode_test_cli";
  fs::remove_all(dir);
  const std::string d = "\"" + dir.string() + "/";
  REQUIRE(cli("gen --case rod --count 1 --out " + d + "rod\"").code == 0);
  REQUIRE(cli("gen --case plate --count 1 --out " + d + "plate\"").code == 0);
  REQUIRE(cli("train --model meshode --case rod --epochs 1 --hidden 8 --train-dir " + d +
              "rod\" --out " + d + "run\"")
              .code == 0);
  CHECK(fs::exists(dir / "run" / "model.mshc"));
  CHECK(fs::exists(dir / "run" / "loss.csv"));
  CHECK(fs::exists(dir / "run" / "run.log"));
  CHECK(cli("rollout --checkpoint " + d + "run/model.mshc\" --trajectory " + d +
            "rod/train_0000.msht\" --out " + d + "pred.msht\"")
            .code == 0);
  const Run mismatch = cli("rollout --checkpoint " + d + "run/model.mshc\" --trajectory " + d +
                           "plate/train_0000.msht\" --out " + d + "bad.msht\"");
  CHECK(mismatch.code == 3);
  CHECK(mismatch.output.find("schema") != std::string::npos);
  CHECK(cli("train --model meshode --case rod --set bogus_key=1 --train-dir " + d + "rod\"").code ==
        2);
  fs::remove_all(dir);
}

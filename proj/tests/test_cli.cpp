#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "gdlab_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_spec(const std::string& name, const std::string& body) {
  fs::create_directories(kScratch);
  const fs::path p = kScratch / name;
  std::ofstream(p) << body;
  return p;
}

int run_cli(const std::string& args, const fs::path& err) {
  const std::string cmd =
      std::string(GDLAB_CLI) + " " + args + " > /dev/null 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("malformed spec gives a nonzero exit and a json error naming the field") {
  const auto spec = write_spec("bad.spec", "n = 4\nwidth = lots\n");
  const fs::path err = kScratch / "bad.err";
  CHECK(run_cli("train --spec " + spec.string() + " --out " + (kScratch / "bad").string(), err) !=
        0);
  const auto j = nlohmann::json::parse(slurp(err));
  CHECK(j["error"] == "spec");
  CHECK(j["field"] == "width");
  CHECK_FALSE(fs::exists(kScratch / "bad" / "manifest.json"));

  const auto unknown = write_spec("unknown.spec", "widht = 4\n");
  CHECK(run_cli("kernel --spec " + unknown.string() + " --out " + (kScratch / "u").string(),
                err) != 0);
  CHECK(nlohmann::json::parse(slurp(err))["field"] == "widht");
}

TEST_CASE("usage errors are reported as json") {
  const fs::path err = kScratch / "usage.err";
  fs::create_directories(kScratch);
  CHECK(run_cli("train", err) != 0);
  CHECK(nlohmann::json::parse(slurp(err))["error"] == "usage");
  CHECK(run_cli("fly --out x", err) != 0);
}

TEST_CASE("reruns are byte-identical") {
  const auto spec = write_spec("rerun.spec",
                               "arch = resnet\ndepth = 2\nwidth = 48\nn = 4\nd = 3\n"
                               "iterations = 25\ntrials = 2\n");
  const fs::path err = kScratch / "rerun.err";
  const fs::path a = kScratch / "rerun_a";
  const fs::path b = kScratch / "rerun_b";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(run_cli("train --spec " + spec.string() + " --seed 4 --out " + a.string(), err) == 0);
  REQUIRE(run_cli("train --spec " + spec.string() + " --seed 4 --threads 2 --out " + b.string(),
                  err) == 0);
  for (const char* f : {"loss.csv", "metrics.csv", "summary.csv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK_FALSE(slurp(a / f).empty());
  }
  const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  CHECK(ma["spec_sha256"] == mb["spec_sha256"]);
  CHECK(ma["files"] == mb["files"]);
  CHECK(ma["seeds"] == nlohmann::json::array({4, 5}));
  CHECK(mb["threads"] == 2);
}

TEST_CASE("every subcommand runs on a small spec") {
  const fs::path err = kScratch / "all.err";
  const std::pair<const char*, const char*> runs[] = {
      {"gen-data", "n = 3\nd = 3\n"},
      {"gradcheck", "arch = fc, resnet\ndepth = 2\nwidth = 6\nn = 3\nd = 3\ntrials = 1\n"},
      {"kernel", "arch = conv-resnet\ndepth = 2\nn = 3\nd = 2\npixels = 4\nfilter = 3\n"},
      {"train", "width = 32\ndepth = 2\nn = 3\nd = 3\niterations = 5\n"},
      {"concentration", "width = 32, 64, 128\nn = 3\nd = 3\ntrials = 2\n"},
      {"depth-scan", "depth = 2, 3\nwidth = 32\nn = 3\nd = 3\n"},
      {"gram-stability", "width = 32, 64\ndepth = 2\nn = 3\nd = 3\niterations = 5\ntrials = 2\n"},
  };
  for (const auto& [name, body] : runs) {
    INFO(name);
    const auto spec = write_spec(std::string(name) + ".spec", body);
    const fs::path out = kScratch / name;
    fs::remove_all(out);
    CHECK(run_cli(std::string(name) + " --spec " + spec.string() + " --out " + out.string(),
                  err) == 0);
    const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m["experiment"] == name);
    for (const auto& f : m["files"]) {
      const std::string body_csv = slurp(out / f["file"].get<std::string>());
      CHECK(body_csv.rfind("experiment,arch,H,m,n,seed,iteration", 0) == 0);
    }
  }
}

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "anomap/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tiny phantom so every command runs in about a second.
const char* kTinyConfig = R"({"profile":"quick","seed":7,
 "phantom":{"n_controls":10,"n_patients":4,"dims":[24,40,32],"lesion_radius":3},
 "split":{"n_samples":1,"n_train":6,"n_test":4},
 "ae":{"epochs":1,"slices":8,"batch_size":16},
 "sae":{"epochs":1,"patches_per_subject":30,"batch_size":60,"stride":6}})";

struct Result {
  int code;
  std::string log;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anomap_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  anomap::write_text_file(p, kTinyConfig);
  return p;
}

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + ANOMAP_CLI + "\" " + args + " 2>\"" + log.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, anomap::read_text_file(log)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = anomap::read_text_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("synth exits 0 and repeated seeded runs are identical") {
  const fs::path dir = scratch("synth");
  const fs::path cfg = tiny_config(dir);
  const auto a = cli("synth -q -c " + cfg.string() + " -o " + (dir / "a").string(), dir);
  const auto b = cli("synth -q -c " + cfg.string() + " -o " + (dir / "b").string(), dir);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto ta = tree(dir / "a" / "cohort");
  const auto tb = tree(dir / "b" / "cohort");
  CHECK(ta.size() == 14 + 2 * 14 + 1);  // volumes, truth mask + record each, manifest
  CHECK(ta == tb);
  CHECK(tree(dir / "a" / "atlases") == tree(dir / "b" / "atlases"));

  SUBCASE("existing output needs --force") {
    const auto again = cli("synth -q -c " + cfg.string() + " -o " + (dir / "a").string(), dir);
    CHECK(again.code == 1);
    CHECK(again.log.find("--force") != std::string::npos);
    CHECK(cli("synth -q --force -c " + cfg.string() + " -o " + (dir / "a").string(), dir).code == 0);
    CHECK(tree(dir / "a" / "cohort") == tb);
  }
}

TEST_CASE("validation errors exit 1 before any work") {
  const fs::path dir = scratch("validate");
  const fs::path cfg = tiny_config(dir);
  const auto missing = cli("run -q -c " + cfg.string() + " --atlases " + (dir / "nowhere").string() +
                               " -o " + (dir / "out").string(),
                           dir);
  CHECK(missing.code == 1);
  CHECK(missing.log.find("nowhere") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "split_01"));

  anomap::write_text_file(dir / "bad.json", R"({"ae":{"epoch":3}})");
  const auto bad = cli("run -q -c " + (dir / "bad.json").string() + " -o " + (dir / "out2").string(), dir);
  CHECK(bad.code == 1);
  CHECK(bad.log.find("ae.epoch") != std::string::npos);

  CHECK(cli("run -q --profile nope -o " + (dir / "out3").string(), dir).code == 1);
  CHECK(cli("frobnicate", dir).code == 1);
}

TEST_CASE("run writes the full tree, resumes, and reports deterministically") {
  const fs::path dir = scratch("run");
  const fs::path cfg = tiny_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(cli("run -q -c " + cfg.string() + " -o " + out.string(), dir).code == 0);

  for (const char* m : {"ae", "sae"}) {
    const fs::path md = out / "split_01" / m;
    CHECK(fs::exists(md / "model.ckpt"));
    CHECK(fs::exists(md / "threshold.json"));
    const json roc = anomap::read_json_file(md / "roc.json");
    CHECK(roc.size() == 17);
    const std::string scores = anomap::read_text_file(md / "scores.csv");
    const std::string header = scores.substr(0, scores.find('\n'));
    CHECK(std::count(header.begin(), header.end(), ',') == 2 + 17 - 1);
  }
  const json frozen = anomap::read_json_file(out / "config.json");
  CHECK(frozen.contains("resolved_seeds"));
  CHECK(frozen["seed"] == 7);

  SUBCASE("resume skips every stage") {
    const auto before = tree(out / "split_01");
    const auto r = cli("run --json -c " + cfg.string() + " -o " + out.string() + " --resume", dir);
    REQUIRE(r.code == 0);
    std::istringstream lines(r.log);
    std::string line;
    int skipped = 0;
    int done = 0;
    while (std::getline(lines, line)) {
      const json j = json::parse(line);  // every log line is JSON
      CHECK(j.contains("stage"));
      if (j.value("skipped", false)) ++skipped;
      if (j["message"].get<std::string>().rfind("done in", 0) == 0) ++done;
    }
    CHECK(skipped > 0);
    CHECK(done == 0);
    CHECK(tree(out / "split_01") == before);
  }

  SUBCASE("fresh run into a used directory is refused") {
    CHECK(cli("run -q -c " + cfg.string() + " -o " + out.string(), dir).code == 1);
  }

  SUBCASE("report over the results dir is byte-stable") {
    const std::string svg = anomap::read_text_file(out / "figures" / "gmean_bars.svg");
    const std::string md = anomap::read_text_file(out / "report.md");
    REQUIRE(cli("report -q --force " + out.string(), dir).code == 0);
    CHECK(anomap::read_text_file(out / "figures" / "gmean_bars.svg") == svg);
    CHECK(anomap::read_text_file(out / "report.md") == md);
    // one split: bars carry no whiskers and the title says so
    CHECK(svg.find("single split") != std::string::npos);
    CHECK(md.find("single split") != std::string::npos);
  }

  SUBCASE("report on an incomplete tree") {
    fs::remove(out / "results" / "bootstrap_summary.csv");
    CHECK(cli("report -q " + out.string(), dir).code == 1);
  }
}

TEST_CASE("stage failure exits 2") {
  const fs::path dir = scratch("stagefail");
  const fs::path cfg = tiny_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(cli("synth -q -c " + cfg.string() + " -o " + out.string(), dir).code == 0);
  REQUIRE(cli("split -q -c " + cfg.string() + " -o " + out.string(), dir).code == 0);
  // corrupt one training volume after validation has passed
  const auto splits = anomap::read_json_file(out / "splits.json");
  const std::string id = splits["plans"][0]["train"][0].get<std::string>();
  anomap::write_text_file(out / "cohort" / "subjects" / (id + ".mvol"), "not a volume");
  const auto r = cli("train -q -c " + cfg.string() + " -o " + out.string() + " --models ae", dir);
  CHECK(r.code == 2);
  CHECK(r.log.find("train") != std::string::npos);
}

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bht/cli.hpp"
#include "bht/config.hpp"

using namespace bht;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bht");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

// Runs the CLI with stdout and stderr captured, so assertions can look at
// the emitted records without noise in the test log.
struct CliCapture {
  int code = 0;
  std::string out;
  std::string err;
};

CliCapture run_captured(std::vector<std::string> args) {
  std::ostringstream out_sink, err_sink;
  auto* out_buf = std::cout.rdbuf(out_sink.rdbuf());
  auto* err_buf = std::cerr.rdbuf(err_sink.rdbuf());
  CliCapture cap;
  cap.code = run_cli(std::move(args));
  std::cout.rdbuf(out_buf);
  std::cerr.rdbuf(err_buf);
  cap.out = out_sink.str();
  cap.err = err_sink.str();
  return cap;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("bht_cli_" + tag);
  fs::remove_all(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path repo_presets() {
  return fs::path(__FILE__).parent_path().parent_path() / "presets";
}

}  // namespace

TEST_CASE("config text parses keys, comments and lists", "[config]") {
  std::vector<std::string> problems;
  const ConfigDoc doc = parse_config_text(
      "# header comment\n"
      "protocol = sensing\n"
      "delta_mhz = 0.5, 1, 2  # sweep\n"
      "hold_max_ns = 400\n"
      "\n"
      "noise = off\n",
      problems);
  CHECK(problems.empty());
  REQUIRE(doc.entries.size() == 4);
  CHECK(doc.find("protocol")->values == std::vector<std::string>{"sensing"});
  CHECK(doc.find("delta_mhz")->values ==
        std::vector<std::string>{"0.5", "1", "2"});
  CHECK(doc.find("hold_max_ns")->values ==
        std::vector<std::string>{"400"});
  CHECK(doc.find("noise")->values == std::vector<std::string>{"off"});
}

TEST_CASE("config parsing reports every malformed line", "[config]") {
  std::vector<std::string> problems;
  const ConfigDoc doc = parse_config_text(
      "just words\n"
      "Bad Key = 1\n"
      "seed = 1\n"
      "seed = 2\n",
      problems);
  REQUIRE(problems.size() == 3);
  CHECK(problems[0].find("line 1") != std::string::npos);
  CHECK(problems[1].find("bad key") != std::string::npos);
  CHECK(problems[2].find("duplicate key 'seed'") != std::string::npos);
  CHECK(doc.find("seed")->values == std::vector<std::string>{"1"});
}

TEST_CASE("validation lists every violated invariant", "[config]") {
  const Schema schema = {
      detail::num_field("tau_fraction", "0.5", 0.01, 10, ""),
      detail::count_field("shots", "0", 0, 1000, ""),
      detail::toggle_field("noise", "off", ""),
      detail::choice_field("ancilla", "ground", {"ground", "excited"}, "")};
  std::vector<std::string> problems;
  ConfigDoc doc = parse_config_text(
      "tau_fraction = zz\n"
      "shots = 2.5\n"
      "noise = maybe\n"
      "ancilla = sideways\n"
      "mystery = 1\n",
      problems);
  REQUIRE(problems.empty());
  problems = validate_config(doc, schema);
  REQUIRE(problems.size() == 5);
  CHECK(problems[0].find("not a number") != std::string::npos);
  CHECK(problems[1].find("must be an integer") != std::string::npos);
  CHECK(problems[2].find("on or off") != std::string::npos);
  CHECK(problems[3].find("must be one of ground, excited") !=
        std::string::npos);
  CHECK(problems[4].find("unknown field 'mystery'") != std::string::npos);

  doc.set("shots", {"2000"});
  doc.set("tau_fraction", {"0.3", "0.4"});  // list on a non-sweep scalar
  doc.erase("mystery");
  problems = validate_config(doc, schema);
  REQUIRE(problems.size() == 4);
  CHECK(problems[0].find("takes one value") != std::string::npos);
  CHECK(problems[3].find("out of range") != std::string::npos);
}

TEST_CASE("sweep lists expand to an ordered cross product", "[config]") {
  Schema schema = {detail::num_field("a", "1", 0, 10, "", true),
                   detail::num_field("b", "5", 0, 10, "", true),
                   detail::count_field("seed", "1", 0, 100, "")};
  std::vector<std::string> problems;
  const ConfigDoc doc = parse_config_text("a = 1, 2\nb = 5, 6, 7\n",
                                          problems);
  REQUIRE(validate_config(doc, schema).empty());
  const auto points = expand_config(doc, schema);
  REQUIRE(points.size() == 6);
  // First axis varies slowest; defaults fill the absent field.
  CHECK(points[0].num("a") == 1.0);
  CHECK(points[0].num("b") == 5.0);
  CHECK(points[2].num("b") == 7.0);
  CHECK(points[3].num("a") == 2.0);
  CHECK(points[5].num("b") == 7.0);
  for (const auto& p : points) CHECK(p.num("seed") == 1.0);
  CHECK(swept_keys(doc, schema) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("overrides replace file values and extend the document",
          "[config]") {
  std::vector<std::string> problems;
  ConfigDoc doc = parse_config_text("seed = 1\n", problems);
  apply_override(doc, "seed=9", problems);
  apply_override(doc, "delta_mhz=0.5,1", problems);
  apply_override(doc, "broken", problems);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("expected key=value") != std::string::npos);
  CHECK(doc.find("seed")->values == std::vector<std::string>{"9"});
  CHECK(doc.find("delta_mhz")->values ==
        std::vector<std::string>{"0.5", "1"});
}

TEST_CASE("catalog is alphabetized and JSON listing parses", "[cli]") {
  const auto& cat = protocol_catalog();
  REQUIRE(cat.size() == 7);
  for (std::size_t i = 1; i < cat.size(); ++i)
    CHECK(cat[i - 1].name < cat[i].name);

  const CliCapture cap = run_captured({"list-protocols", "--json"});
  CHECK(cap.code == 0);
  const auto listing = nlohmann::json::parse(cap.out);
  REQUIRE(listing.size() == 7);
  CHECK(listing[0]["name"] == "conditional-transport");
  CHECK(listing[6]["name"] == "sensing");
  for (const auto& entry : listing) {
    CHECK(!entry["summary"].get<std::string>().empty());
    CHECK(!entry["fields"].empty());
  }
}

TEST_CASE("usage errors exit 2 with a machine readable record", "[cli]") {
  CliCapture cap = run_captured({"run", "--protocol", "bogus"});
  CHECK(cap.code == 2);
  auto rec = nlohmann::json::parse(cap.err);
  CHECK(rec["error"]["type"] == "usage");
  CHECK(rec["error"]["messages"][0].get<std::string>().find("bogus") !=
        std::string::npos);

  cap = run_captured({"run", "--wat"});
  CHECK(cap.code == 2);
  CHECK(nlohmann::json::parse(cap.err)["error"]["type"] == "usage");

  cap = run_captured({});
  CHECK(cap.code == 2);
}

TEST_CASE("missing config fails validation with no partial outputs",
          "[cli]") {
  const fs::path dir = fresh_dir("missing");
  const CliCapture cap =
      run_captured({"run", "--config", "no_such_file.cfg", "--protocol",
                    "echo", "--out", dir.string()});
  CHECK(cap.code == 3);
  CHECK(nlohmann::json::parse(cap.err)["error"]["type"] == "validation");
  CHECK(!fs::exists(dir));
}

TEST_CASE("invalid config reports every violation before running", "[cli]") {
  const fs::path dir = fresh_dir("invalid");
  const CliCapture cap = run_captured(
      {"run", "--protocol", "echo", "--out", dir.string(), "--set",
       "sigma_mhz=oops", "--set", "shots=7", "--set", "mystery=3"});
  CHECK(cap.code == 3);
  const auto rec = nlohmann::json::parse(cap.err);
  CHECK(rec["error"]["type"] == "validation");
  // Bad number, unknown field, and the shots/groups split all reported.
  CHECK(rec["error"]["messages"].size() == 3);
  CHECK(!fs::exists(dir));
}

TEST_CASE("a run writes results, spectrum and metadata", "[cli]") {
  const fs::path dir = fresh_dir("run");
  const CliCapture cap = run_captured(
      {"run", "--protocol", "noon-ramsey", "--out", dir.string(), "--set",
       "preset=5-qubit", "--set", "hold_max_ns=60", "--json"});
  REQUIRE(cap.code == 0);
  CHECK(fs::exists(dir / "results.csv"));
  CHECK(fs::exists(dir / "spectrum.csv"));
  CHECK(fs::exists(dir / "meta.json"));

  const std::string results = read_file(dir / "results.csv");
  CHECK(results.rfind("hold_ns,p1\n", 0) == 0);
  CHECK(std::count(results.begin(), results.end(), '\n') == 62);

  const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  CHECK(meta["protocol"] == "noon-ramsey");
  CHECK(meta["seed"] == 1);
  CHECK(meta["points"] == 1);
  CHECK(meta["config"]["preset"] == "5-qubit");
  CHECK(meta["config"]["hold_max_ns"] == "60");
  CHECK(meta["scalars"].contains("fringe_mhz"));
  // --json mirrors the metadata on stdout.
  CHECK(nlohmann::json::parse(cap.out)["protocol"] == "noon-ramsey");
  fs::remove_all(dir);
}

TEST_CASE("sweeps emit one row per point, identical across --jobs", "[cli]") {
  const fs::path d1 = fresh_dir("jobs1");
  const fs::path d2 = fresh_dir("jobs3");
  const std::vector<std::string> common = {
      "run",   "--protocol",  "sensing",       "--set", "preset=5-qubit",
      "--set", "hold_max_ns=60", "--set", "delta_mhz=0.5,1,2"};
  auto with = [&](const fs::path& dir, const char* jobs) {
    auto args = common;
    args.insert(args.end(), {"--out", dir.string(), "--jobs", jobs});
    return run_captured(args);
  };
  REQUIRE(with(d1, "1").code == 0);
  REQUIRE(with(d2, "3").code == 0);
  const std::string csv1 = read_file(d1 / "results.csv");
  CHECK(csv1 == read_file(d2 / "results.csv"));
  CHECK(csv1.rfind("delta_mhz,", 0) == 0);
  CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 4);
  const auto meta = nlohmann::json::parse(read_file(d1 / "meta.json"));
  CHECK(meta["points"] == 3);
  CHECK(meta["swept"] == nlohmann::json::array({"delta_mhz"}));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("seed flag changes sampled output deterministically", "[cli]") {
  const fs::path d1 = fresh_dir("seed1");
  const fs::path d2 = fresh_dir("seed2");
  const fs::path d3 = fresh_dir("seed1b");
  auto with = [&](const fs::path& dir, const char* seed) {
    return run_captured({"run", "--protocol", "noon-ramsey", "--set",
                         "preset=5-qubit", "--set", "hold_max_ns=40",
                         "--set", "sample_readout=on", "--shots", "64",
                         "--set", "groups=8", "--seed", seed, "--out",
                         dir.string()});
  };
  REQUIRE(with(d1, "1").code == 0);
  REQUIRE(with(d2, "2").code == 0);
  REQUIRE(with(d3, "1").code == 0);
  CHECK(read_file(d1 / "results.csv") == read_file(d3 / "results.csv"));
  CHECK(read_file(d1 / "results.csv") != read_file(d2 / "results.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST_CASE("shipped presets validate against their protocol schemas",
          "[cli]") {
  const fs::path dir = repo_presets();
  REQUIRE(fs::exists(dir));
  int seen = 0;
  for (const auto& file : fs::directory_iterator(dir)) {
    if (file.path().extension() != ".cfg") continue;
    ++seen;
    INFO(file.path().filename().string());
    std::vector<std::string> problems;
    ConfigDoc doc = parse_config_text(read_file(file.path()), problems);
    CHECK(problems.empty());
    const ConfigEntry* tag = doc.find("protocol");
    REQUIRE(tag != nullptr);
    REQUIRE(tag->values.size() == 1);
    const ProtocolEntry* entry = nullptr;
    for (const auto& e : protocol_catalog())
      if (e.name == tag->values.front()) entry = &e;
    REQUIRE(entry != nullptr);
    doc.erase("protocol");
    const auto violations = validate_config(doc, entry->schema);
    CHECK(violations.empty());
    for (const auto& p : expand_config(doc, entry->schema)) {
      std::vector<std::string> point_problems;
      if (entry->check) entry->check(p, point_problems);
      CHECK(point_problems.empty());
    }
  }
  CHECK(seen == 10);
}

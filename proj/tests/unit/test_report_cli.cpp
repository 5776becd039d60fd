#include <sys/wait.h>

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "flips/report.hpp"
#include "json.hpp"

using namespace flips;
namespace fs = std::filesystem;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a64("a") != fnv1a64("b"));
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
  CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
}

TEST_CASE("flat config parsing trims, skips comments, and preserves order") {
  std::istringstream in(
      "# a comment\n"
      "\n"
      "  alpha =  0.5  \n"
      "name= first\n"
      "flag = true\n"
      "name =second\n"
      "\t# trailing comment\n");
  auto cfg = FlatConfig::parse(in);
  REQUIRE(cfg.items.size() == 4);
  CHECK(cfg.items[0].first == "alpha");
  CHECK(cfg.items[0].second == "0.5");
  CHECK(cfg.items[1].second == "first");
  CHECK(cfg.items[3].second == "second");

  CHECK(cfg.has("alpha"));
  CHECK(!cfg.has("beta"));
  REQUIRE(cfg.find("name") != nullptr);
  CHECK(*cfg.find("name") == "second");  // later assignment wins
  CHECK(cfg.get_string("name", "x") == "second");
  CHECK(cfg.get_string("missing", "x") == "x");
  CHECK(cfg.get_double("alpha", 0.0) == doctest::Approx(0.5));
  CHECK(cfg.get_double("missing", 2.5) == doctest::Approx(2.5));
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_int("missing", 7) == 7);
}

TEST_CASE("flat config value conversions must consume the whole token") {
  std::istringstream in(
      "bad_num = 1.5x\n"
      "bad_int = 7.5\n"
      "bad_bool = maybe\n"
      "n = 12\n"
      "yes1 = yes\n"
      "no0 = 0\n");
  auto cfg = FlatConfig::parse(in);
  CHECK_THROWS_AS(cfg.get_double("bad_num", 0.0), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_int("bad_int", 0), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_bool("bad_bool", false), std::runtime_error);
  CHECK(cfg.get_int("n", 0) == 12);
  CHECK(cfg.get_bool("yes1", false));
  CHECK(!cfg.get_bool("no0", true));
}

TEST_CASE("flat config rejects malformed lines") {
  std::istringstream a("key_without_value\n");
  CHECK_THROWS_AS(FlatConfig::parse(a), std::runtime_error);
  std::istringstream b("= orphan value\n");
  CHECK_THROWS_AS(FlatConfig::parse(b), std::runtime_error);
  CHECK_THROWS_AS(FlatConfig::parse_file("/nonexistent/path/x.cfg"),
                  std::runtime_error);
}

TEST_CASE("canonical rendering keeps each key once at its last occurrence") {
  FlatConfig cfg;
  cfg.set("a", "1");
  cfg.set("b", "2");
  cfg.set("a", "3");
  CHECK(cfg.canonical() == "b=2\na=3\n");
  CHECK(cfg.hash_hex() == hex64(fnv1a64("b=2\na=3\n")));
  CHECK(cfg.hash_hex().size() == 16);
  for (char ch : cfg.hash_hex()) CHECK(std::isxdigit(static_cast<unsigned char>(ch)));

  // the hash responds to value changes
  FlatConfig other;
  other.set("b", "2");
  other.set("a", "4");
  CHECK(other.hash_hex() != cfg.hash_hex());
}

// ---------------------------------------------------------------------------
// end-to-end checks against the installed command-line binary
// ---------------------------------------------------------------------------

namespace {

const std::string kCli = FLIPS_CLI_PATH;

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args).c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

fs::path workspace() {
  const fs::path dir = fs::temp_directory_path() / "flips_cli_tests";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("cli exit codes distinguish usage, validation, and success") {
  const fs::path dir = workspace();
  const std::string null_out = " > " + (dir / "t.txt").string() + " 2>&1";

  CHECK(run("--version" + null_out) == 0);
  CHECK(slurp(dir / "t.txt").find("1.0.0") != std::string::npos);
  CHECK(run("--help" + null_out) == 0);
  CHECK(run("no-such-subcommand" + null_out) == 64);
  CHECK(run("test-binomial --no-such-flag" + null_out) == 64);
  CHECK(run("describe --input " + (dir / "missing.csv").string() + null_out) == 2);

  // a protocol violation trips strict ingestion but passes lenient mode
  const fs::path bad = dir / "bad.csv";
  std::ofstream(bad) << "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
                        "P1,C1,lab,P1-s1,0,H,T\n"
                        "P1,C1,lab,P1-s1,1,H,H\n";  // should start on T
  CHECK(run("describe --input " + bad.string() + null_out) == 2);
  CHECK(run("describe --lenient --input " + bad.string() + null_out) == 0);
}

TEST_CASE("simulate is reproducible and reports carry a verifiable envelope") {
  const fs::path dir = workspace();
  const std::string quiet = " > /dev/null 2>&1";

  std::ofstream(dir / "sim.cfg") << "n_persons = 3\n"
                                    "n_coins = 2\n"
                                    "flips_per_person = 120\n"
                                    "sequence_length = 40\n"
                                    "theta = 0.55\n";
  const std::string cfg = (dir / "sim.cfg").string();
  REQUIRE(run("simulate --config " + cfg + " --seed 7 --out " + (dir / "s1").string() + quiet) == 0);
  REQUIRE(run("simulate --config " + cfg + " --seed 7 --out " + (dir / "s2").string() + quiet) == 0);
  CHECK(fs::exists(dir / "s1" / "flips.csv"));
  CHECK(fs::exists(dir / "s1" / "truth.csv"));
  CHECK(fs::exists(dir / "s1" / "simulate.json"));
  CHECK(slurp(dir / "s1" / "flips.csv") == slurp(dir / "s2" / "flips.csv"));
  CHECK(slurp(dir / "s1" / "simulate.json") == slurp(dir / "s2" / "simulate.json"));

  const std::string input = (dir / "s1" / "flips.csv").string();
  REQUIRE(run("ingest --input " + input + " --out " + (dir / "ing").string() + quiet) == 0);
  auto ing = nlohmann::ordered_json::parse(slurp(dir / "ing" / "ingest.json"));
  CHECK(ing["results"]["n_records"].get<long long>() == 360);
  CHECK(ing["results"]["violations"].empty());

  REQUIRE(run("test-binomial --input " + input + " --out " + (dir / "r1").string() + quiet) == 0);
  REQUIRE(run("test-binomial --input " + input + " --out " + (dir / "r2").string() + quiet) == 0);
  const std::string rep = slurp(dir / "r1" / "test-binomial.json");
  CHECK(rep == slurp(dir / "r2" / "test-binomial.json"));

  auto j = nlohmann::ordered_json::parse(rep);
  for (const char* key :
       {"tool", "subcommand", "version", "seed", "config", "config_hash", "results"})
    REQUIRE(j.contains(key));
  CHECK(j["tool"] == "flips");
  CHECK(j["subcommand"] == "test-binomial");
  CHECK(j["version"] == "1.0.0");

  // the stamped hash is the fingerprint of the canonical key=value rendering
  const std::string hash = j["config_hash"].get<std::string>();
  REQUIRE(hash.size() == 16);
  for (char ch : hash) CHECK(std::isxdigit(static_cast<unsigned char>(ch)));
  std::string canon;
  for (auto it = j["config"].begin(); it != j["config"].end(); ++it) {
    REQUIRE(it.value().is_string());
    canon += it.key() + "=" + it.value().get<std::string>() + "\n";
  }
  CHECK(hash == hex64(fnv1a64(canon)));

  // results carry both directional tests with finite evidence numbers
  for (const char* side : {"same_side", "heads"}) {
    REQUIRE(j["results"].contains(side));
    CHECK(j["results"][side]["n"].get<long long>() == 360);
    CHECK(j["results"][side]["bf10"].is_number());
    CHECK(j["results"][side]["posterior_mean"].get<double>() > 0.0);
  }
}

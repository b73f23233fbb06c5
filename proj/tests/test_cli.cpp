#include <catch_amalgamated.hpp>

#include <cstdlib>

#include "cli_harness.hpp"

using namespace ergolab;
using harness::TempDir;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> read_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) rows.push_back(csv::split(line));
    return rows;
}

class EnvGuard {
public:
    EnvGuard(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
    ~EnvGuard() { ::unsetenv(name_); }

private:
    const char* name_;
};

const std::string tiny_average = R"({
  "schema_version": 1,
  "scenario": "tiny",
  "basis": {"kind": "grid", "points": 5},
  "operators": {"S": {"type": "grid_shift", "shift": 1}, "I": {"type": "identity"}},
  "chain": {"T": ["S", "S"], "A": ["I"]},
  "f": {"preset": "indicator", "g": 0},
  "N": 20,
  "checkpoints": [5, 10, 20]
})";

} // namespace

TEST_CASE("version and usage", "[cli]") {
    const auto v = harness::run({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find("0.1.0") != std::string::npos);
    CHECK(harness::run({}).code == 1);
    CHECK(harness::run({"frobnicate"}).code == 1);
}

TEST_CASE("validate: grid shifts and Sinkhorn matrices pass", "[cli]") {
    TempDir tmp("validate");
    const auto r = harness::run({"validate", "--config", harness::scenario("grid_shift_validate.json"), "--out", tmp / "out"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto rows = read_rows(harness::read_file(tmp.path() / "out" / "ds_report.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0][0] == "operator");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i][5] == "true");
        CHECK(csv::parse_double(rows[i][3]) <= 1.0 + 1e-10);
        CHECK(csv::parse_double(rows[i][4]) <= 1.0 + 1e-10);
    }
    // Permutations and lazy shifts preserve both norms exactly.
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i][0] == "shift") CHECK(csv::parse_double(rows[i][3]) == Catch::Approx(1.0));
    CHECK(harness::read_file(tmp.path() / "out" / "fix.csv").find("shift,") != std::string::npos);
}

TEST_CASE("volterra-cert", "[cli]") {
    TempDir tmp("volterra");
    SECTION("epsilon 10 needs M = 1") {
        const auto r = harness::run({"volterra-cert", "--epsilon", "10", "--out", tmp / "a"});
        REQUIRE(r.code == 0);
        const auto rows = read_rows(harness::read_file(tmp.path() / "a" / "certificate.csv"));
        REQUIRE(rows.size() == 2);
        CHECK(rows[1][1] == "1");
    }
    SECTION("several tolerances with verification") {
        const auto r = harness::run({"volterra-cert", "--epsilon", "1", "--epsilon", "0.1", "--epsilon", "0.01",
                                     "--trials", "50", "--a2-trials", "50", "--seed", "3", "--out", tmp / "b"});
        INFO(r.err);
        REQUIRE(r.code == 0);
        const auto rows = read_rows(harness::read_file(tmp.path() / "b" / "certificate.csv"));
        REQUIRE(rows.size() == 4);
        CHECK(rows[1][1] == "1");
        CHECK(rows[2][1] == "6");
        CHECK(rows[3][1] == "508");
        CHECK(fs::exists(tmp.path() / "b" / "verification.csv"));
        CHECK(fs::exists(tmp.path() / "b" / "a2.csv"));
    }
    SECTION("verification without a seed is a config error") {
        const auto r = harness::run({"volterra-cert", "--epsilon", "1", "--trials", "5", "--out", tmp / "c"});
        CHECK(r.code == 1);
        CHECK(r.err.find("seed") != std::string::npos);
    }
    SECTION("cap exceeded") {
        const auto r = harness::run({"volterra-cert", "--epsilon", "0.01", "--m-cap", "100", "--out", tmp / "d"});
        CHECK(r.code == 1);
    }
}

TEST_CASE("predict: rational rotation is exact", "[cli]") {
    TempDir tmp("predict");
    const auto r = harness::run({"predict", "--config", harness::scenario("rational_rotation_predict.json"), "--out", tmp / "out"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto rows = read_rows(harness::read_file(tmp.path() / "out" / "comparison.csv"));
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(csv::parse_double(rows[i][1]) <= 1e-12);
    const auto forms = harness::read_file(tmp.path() / "out" / "forms.csv");
    CHECK(forms.find("with_t0,true") != std::string::npos);
    CHECK(fs::exists(tmp.path() / "out" / "resonances.csv"));
    CHECK(fs::exists(tmp.path() / "out" / "prediction.csv"));
}

TEST_CASE("semigroup and average scenarios run", "[cli]") {
    TempDir tmp("scenarios");
    const auto s = harness::run({"semigroup", "--config", harness::scenario("rotation_flow_semigroup.json"), "--out", tmp / "s"});
    INFO(s.err);
    CHECK(s.code == 0);
    CHECK(fs::exists(tmp.path() / "s" / "semigroup.csv"));
    const auto cfg = tmp.write("tiny.json", tiny_average);
    const auto a = harness::run({"average", "--config", cfg, "--out", tmp / "a"});
    INFO(a.err);
    REQUIRE(a.code == 0);
    const auto rows = read_rows(harness::read_file(tmp.path() / "a" / "average.csv"));
    // Checkpoints 5 and 10: the full cycle averages the indicator to 1/5.
    REQUIRE(rows.size() == 16);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(csv::parse_double(rows[i][2]) == Catch::Approx(0.2));
}

TEST_CASE("config errors name the offending path", "[cli]") {
    TempDir tmp("errors");
    SECTION("unknown key") {
        json j = json::parse(tiny_average);
        j["operators"]["S"]["shfit"] = 2;
        const auto r = harness::run({"average", "--config", tmp.write("c.json", j.dump()), "--out", tmp / "o"});
        CHECK(r.code == 1);
        CHECK(r.err.find("operators.S") != std::string::npos);
        CHECK(r.err.find("shfit") != std::string::npos);
    }
    SECTION("unknown top-level key") {
        json j = json::parse(tiny_average);
        j["nn"] = 3;
        const auto r = harness::run({"average", "--config", tmp.write("c.json", j.dump()), "--out", tmp / "o"});
        CHECK(r.code == 1);
        CHECK(r.err.find("'nn'") != std::string::npos);
    }
    SECTION("missing seed for a random preset") {
        json j = json::parse(tiny_average);
        j["f"] = {{"preset", "random"}};
        const auto r = harness::run({"average", "--config", tmp.write("c.json", j.dump()), "--out", tmp / "o"});
        CHECK(r.code == 1);
        CHECK(r.err.find("seed") != std::string::npos);
        const auto ok = harness::run({"average", "--config", tmp / "c.json", "--seed", "5", "--out", tmp / "o"});
        CHECK(ok.code == 0);
    }
    SECTION("decimal angle without a precision tag") {
        const std::string cfg = R"({"schema_version": 1, "basis": {"kind": "spectral", "cutoff": 2},
          "operators": {"R": {"type": "rotation", "angle": "0.4142"}}, "chain": {"T": ["R"]},
          "f": {"preset": "mode", "m": 1}, "N": 10})";
        const auto r = harness::run({"average", "--config", tmp.write("c.json", cfg), "--out", tmp / "o"});
        CHECK(r.code == 1);
        CHECK(r.err.find("operators.R.angle") != std::string::npos);
        const std::string wrong_digits = R"({"schema_version": 1, "basis": {"kind": "spectral", "cutoff": 2},
          "operators": {"R": {"type": "rotation", "angle": {"decimal": "0.4142", "digits": 5}}}, "chain": {"T": ["R"]},
          "f": {"preset": "mode", "m": 1}, "N": 10})";
        CHECK(harness::run({"average", "--config", tmp.write("d.json", wrong_digits), "--out", tmp / "o"}).code == 1);
    }
    SECTION("schema version and malformed JSON") {
        CHECK(harness::run({"average", "--config", tmp.write("c.json", R"({"schema_version": 2})"), "--out", tmp / "o"}).code == 1);
        CHECK(harness::run({"average", "--config", tmp.write("d.json", "{"), "--out", tmp / "o"}).code == 1);
        CHECK(harness::run({"average", "--config", tmp / "missing.json", "--out", tmp / "o"}).code == 1);
        CHECK(harness::run({"average", "--out", tmp / "o"}).code == 1);
    }
}

TEST_CASE("validation failures exit with 2", "[cli]") {
    TempDir tmp("exit2");
    const std::string cfg = R"({"schema_version": 1, "seed": 1, "basis": {"kind": "grid", "points": 2},
      "operators": {"big": {"type": "dense", "matrix": [[2, 0], [0, 2]]}}, "chain": {"T": ["big"]},
      "f": {"preset": "indicator", "g": 0}, "N": 10})";
    const auto path = tmp.write("c.json", cfg);
    const auto v = harness::run({"validate", "--config", path, "--out", tmp / "v"});
    CHECK(v.code == 2);
    CHECK(fs::exists(tmp.path() / "v" / "ds_report.csv"));
    const auto manifest = json::parse(harness::read_file(tmp.path() / "v" / "manifest.json"));
    CHECK(manifest["status"] == "validation_failed");
    CHECK(harness::run({"average", "--config", path, "--out", tmp / "a"}).code == 2);
}

TEST_CASE("numerical guards exit with 3", "[cli]") {
    TempDir tmp("exit3");
    const std::string cfg = R"({"schema_version": 1, "basis": {"kind": "grid", "points": 2},
      "operators": {"J": {"type": "dense", "matrix": [[1, 1], [0, 1]]}}, "decompose": {"operator": "J"}})";
    const auto r = harness::run({"decompose", "--config", tmp.write("c.json", cfg), "--out", tmp / "o"});
    CHECK(r.code == 3);
    CHECK(r.err.find("numerical guard") != std::string::npos);
}

TEST_CASE("manifest records digests and provenance", "[cli]") {
    TempDir tmp("manifest");
    const auto cfg = tmp.write("tiny.json", tiny_average);
    REQUIRE(harness::run({"average", "--config", cfg, "--out", tmp / "o"}).code == 0);
    const auto m = json::parse(harness::read_file(tmp.path() / "o" / "manifest.json"));
    CHECK(m["tool"] == "ergolab");
    CHECK(m["subcommand"] == "average");
    CHECK(m["scenario"] == "tiny");
    CHECK(m["config_sha256"] == cli::sha256_hex(tiny_average));
    CHECK(m["status"] == "ok");
    CHECK(m["versions"].contains("eigen"));
    REQUIRE(m["files"].size() == 2);
    for (const auto& f : m["files"]) {
        const auto body = harness::read_file(tmp.path() / "o" / f["name"].get<std::string>());
        CHECK(f["sha256"] == cli::sha256_hex(body));
        CHECK(f["bytes"] == body.size());
    }
    CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("reruns are byte-identical", "[cli][property]") {
    TempDir tmp("determinism");
    for (const std::string sub : {"average", "validate"}) {
        const std::string cfg = harness::scenario(sub == "average" ? "doubling_abs_average.json" : "grid_shift_validate.json");
        REQUIRE(harness::run({sub, "--config", cfg, "--out", tmp / (sub + "1")}).code == 0);
        REQUIRE(harness::run({sub, "--config", cfg, "--out", tmp / (sub + "2"), "--threads", "4"}).code == 0);
        CHECK(harness::csv_bodies(tmp.path() / (sub + "1")) == harness::csv_bodies(tmp.path() / (sub + "2")));
    }
    // A different seed changes the random inputs.
    REQUIRE(harness::run({"average", "--config", harness::scenario("doubling_abs_average.json"), "--seed", "8", "--out",
                          tmp / "other"})
                .code == 0);
    CHECK(harness::csv_bodies(tmp.path() / "average1") != harness::csv_bodies(tmp.path() / "other"));
}

TEST_CASE("flag over environment over config", "[cli]") {
    TempDir tmp("precedence");
    json j = json::parse(tiny_average);
    j["output"] = tmp / "from-config";
    j["threads"] = 2;
    const auto cfg = tmp.write("c.json", j.dump());
    REQUIRE(harness::run({"average", "--config", cfg}).code == 0);
    CHECK(fs::exists(tmp.path() / "from-config" / "average.csv"));
    {
        EnvGuard out("ERGOLAB_OUT", tmp / "from-env");
        EnvGuard threads("ERGOLAB_THREADS", "3");
        REQUIRE(harness::run({"average", "--config", cfg}).code == 0);
        CHECK(fs::exists(tmp.path() / "from-env" / "average.csv"));
        CHECK(json::parse(harness::read_file(tmp.path() / "from-env" / "manifest.json"))["threads"] == 3);
        REQUIRE(harness::run({"average", "--config", cfg, "--out", tmp / "from-flag", "--threads", "1"}).code == 0);
        CHECK(fs::exists(tmp.path() / "from-flag" / "average.csv"));
        CHECK(json::parse(harness::read_file(tmp.path() / "from-flag" / "manifest.json"))["threads"] == 1);
    }
    CHECK(json::parse(harness::read_file(tmp.path() / "from-config" / "manifest.json"))["threads"] == 2);
}

TEST_CASE("checkpoint override", "[cli]") {
    TempDir tmp("checkpoints");
    const auto cfg = tmp.write("c.json", tiny_average);
    REQUIRE(harness::run({"average", "--config", cfg, "--checkpoints", "4,20", "--out", tmp / "o"}).code == 0);
    const auto rows = read_rows(harness::read_file(tmp.path() / "o" / "average_summary.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "4");
    CHECK(rows[2][0] == "20");
    CHECK(harness::run({"average", "--config", cfg, "--checkpoints", "x", "--out", tmp / "p"}).code == 1);
}

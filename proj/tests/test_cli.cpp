#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef MWALK_BIN
#define MWALK_BIN "./mwalk"
#endif

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(MWALK_BIN) + " " + args + " > /tmp/mwalk_cli_out.txt 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("analyze on a builtin writes parseable JSON and exits 0") {
    std::system("mkdir -p /tmp/mwalk_cli && rm -f /tmp/mwalk_cli/*");
    CHECK(run("analyze doublewell -N 30 --out /tmp/mwalk_cli") == 0);
    auto j = nlohmann::json::parse(slurp("/tmp/mwalk_cli/analyze.json"));
    CHECK(j["results"][0]["critical_points"].size() == 3);
    CHECK(j["results"][0]["hypotheses"]["h2_ok"] == true);
    CHECK(j.contains("schema_version"));
}

TEST_CASE("missing potential file exits 2 with the path in the message") {
    int rc = run("analyze /nope/missing.pot -N 20 --out /tmp/mwalk_cli");
    CHECK(rc == 2);
    CHECK(slurp("/tmp/mwalk_cli_out.txt").find("/nope/missing.pot") != std::string::npos);
}

TEST_CASE("unknown experiment exits 2") {
    CHECK(run("simulate doublewell -N 20 --experiment bogus --out /tmp/mwalk_cli") == 2);
}

TEST_CASE("reduce and capacity emit artifacts") {
    CHECK(run("reduce tilted -N 30 --out /tmp/mwalk_cli") == 0);
    auto j = nlohmann::json::parse(slurp("/tmp/mwalk_cli/reduce.json"));
    CHECK(j["results"][0]["edges"].size() == 1);
    CHECK(run("capacity doublewell -N 40 --out /tmp/mwalk_cli") == 0);
    auto c = nlohmann::json::parse(slurp("/tmp/mwalk_cli/capacity.json"));
    double kap = c["results"][0]["kappa_exact"].get<double>();
    CHECK(kap > 1.0);
    CHECK(kap < 3.0);
    CHECK(slurp("/tmp/mwalk_cli/capacity.csv").rfind("N,kappa_exact", 0) == 0);
}

TEST_CASE("reruns are byte identical") {
    CHECK(run("analyze twosaddle -N 25 --out /tmp/mwalk_cli") == 0);
    std::string first = slurp("/tmp/mwalk_cli/analyze.json");
    CHECK(run("analyze twosaddle -N 25 --out /tmp/mwalk_cli") == 0);
    CHECK(first == slurp("/tmp/mwalk_cli/analyze.json"));
    CHECK(!first.empty());
}

TEST_CASE("simulate exit writes a report and per-replica CSV") {
    // a shallow barrier keeps the per-replica jump counts small
    std::ofstream pot("/tmp/mwalk_cli/shallow.pot");
    pot << "dim = 1\ndomain = [-1.5, 1.5]\nF = 0.15*(x1^2-1)^2\n";
    pot.close();
    CHECK(run("simulate /tmp/mwalk_cli/shallow.pot -N 25 --experiment exit "
              "--replicas 40 --seed 7 --csv --out /tmp/mwalk_cli") == 0);
    auto j = nlohmann::json::parse(slurp("/tmp/mwalk_cli/simulate_exit.json"));
    int64_t total = 0;
    for (auto& oc : j["results"][0]["outcomes"]) total += oc["count"].get<int64_t>();
    CHECK(total == 40);
    std::string csv = slurp("/tmp/mwalk_cli/simulate_exit.csv");
    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 41);  // header + one row per replica
}

TEST_CASE("hypothesis violation exits 3 unless forced") {
    std::ofstream out("/tmp/mwalk_cli/bad.pot");
    out << "dim = 1\ndomain = [-1,1]\nF = 0 - x1^2\n";  // drift points outward
    out.close();
    CHECK(run("analyze /tmp/mwalk_cli/bad.pot -N 20 --out /tmp/mwalk_cli") == 3);
    CHECK(run("analyze /tmp/mwalk_cli/bad.pot -N 20 --force --out /tmp/mwalk_cli") == 0);
}

TEST_CASE("config file sets defaults and flags override") {
    std::ofstream out("/tmp/mwalk_cli/cfg.json");
    out << "{\"potential\": \"doublewell\", \"N\": [24], \"out_dir\": \"/tmp/mwalk_cli\"}\n";
    out.close();
    CHECK(run("analyze doublewell --config /tmp/mwalk_cli/cfg.json") == 0);
    auto j = nlohmann::json::parse(slurp("/tmp/mwalk_cli/analyze.json"));
    CHECK(j["results"][0]["N"] == 24);
    CHECK(run("analyze doublewell --config /tmp/mwalk_cli/cfg.json -N 28") == 0);
    auto j2 = nlohmann::json::parse(slurp("/tmp/mwalk_cli/analyze.json"));
    CHECK(j2["results"][0]["N"] == 28);
}

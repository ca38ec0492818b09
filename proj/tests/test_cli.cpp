#include "oracles.hpp"

#include "slowman/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using Json = nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "slowman");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = slowman::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
    const char* dir = std::getenv("TMPDIR");
    return std::string(dir ? dir : "/tmp") + "/slowman_cli_" + name;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const std::vector<std::string> kProjectExample = {"project", "--system", "linear", "--a",  "1",     "--c",
                                                  "1",       "--eps",    "0.01",   "--m",  "1",     "--H-over-eps",
                                                  "1",       "--x0",     "1",      "--tol", "1e-8"};

}  // namespace

TEST_CASE("format_real prints 17 significant digits") {
    CHECK(slowman::cli::format_real(0.1) == "0.10000000000000001");
    CHECK(slowman::cli::format_real(1.0) == "1");
    CHECK(slowman::cli::format_real(-1.0 / 3.0) == "-0.33333333333333331");
    CHECK(slowman::cli::format_real(std::nan("")) == "nan");
}

TEST_CASE("project example: output near 0.99") {
    const auto r = cli(kProjectExample);
    REQUIRE(r.code == 0);
    const Json j = Json::parse(r.out);
    CHECK(j["converged"] == true);
    const double want = oracle::linear_root(1.0, 1.0, 0.01, 1, 1.0);
    CHECK(want == doctest::Approx(0.99));
    CHECK(std::abs(j["output"][0].get<double>() - want) < 1e-7);
    CHECK(j["tol"].get<double>() == 1e-8);

    SUBCASE("csv trace") {
        auto args = kProjectExample;
        args.insert(args.end(), {"--format", "csv"});
        const auto c = cli(args);
        REQUIRE(c.code == 0);
        CHECK(c.out.rfind("iteration,residual,y1\n", 0) == 0);
        CHECK(c.out.find('\r') == std::string::npos);
    }
}

TEST_CASE("region csv layout") {
    const auto r = cli({"region", "--mode", "differenced", "--m", "1", "--eta", "1", "--resolution", "8"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("theta,step,abs_mu,stable\n", 0) == 0);
    CHECK(r.out.find('\r') == std::string::npos);
    CHECK(r.out.back() == '\n');
    std::istringstream is(r.out);
    std::string line;
    int rows = 0;
    std::getline(is, line);
    while (std::getline(is, line)) {
        ++rows;
        int commas = 0;
        for (char ch : line) commas += ch == ',';
        CHECK(commas == 3);
        const char last = line.back();
        CHECK((last == '0' || last == '1'));
    }
    CHECK(rows == 64);
}

TEST_CASE("validation exits with 2") {
    auto bad_tol = kProjectExample;
    bad_tol.back() = "0";
    CHECK(cli(bad_tol).code == 2);
    CHECK(cli({"project", "--system", "linear", "--kappa", "1"}).code == 2);
    CHECK(cli({"project", "--resolution", "8"}).code == 2);
    CHECK(cli({"project", "--system", "vdp"}).code == 2);
    CHECK(cli({"project", "--eps", "abc"}).code == 2);
    CHECK(cli({"project", "--mode", "spectral"}).code == 2);
    CHECK(cli({"project", "--format", "xml"}).code == 2);
    CHECK(cli({"project", "--x0", "1,2"}).code == 2);
    CHECK(cli({"sweep", "--kind", "bogus"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"project", "--bogus-flag", "1"}).code == 2);
    const auto r = cli({"project", "--tol", "-1"});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
    CHECK(r.out.empty());
}

TEST_CASE("config files are parsed strictly") {
    const std::string path = temp_path("strict.json");
    SUBCASE("unknown key") {
        write_file(path, R"({"command": "project", "tolerance": 1e-8})");
        CHECK(cli({"--config", path}).code == 2);
    }
    SUBCASE("key of another command") {
        write_file(path, R"({"command": "project", "resolution": 8})");
        CHECK(cli({"--config", path}).code == 2);
    }
    SUBCASE("wrong type") {
        write_file(path, R"({"command": "project", "m": 1.5})");
        CHECK(cli({"--config", path}).code == 2);
    }
    SUBCASE("param that the system does not take") {
        write_file(path, R"({"command": "project", "system": "mm", "params": {"a": 1}})");
        CHECK(cli({"--config", path}).code == 2);
    }
    SUBCASE("not JSON") {
        write_file(path, "{ nope");
        CHECK(cli({"--config", path}).code == 2);
    }
    SUBCASE("command conflict") {
        write_file(path, R"({"command": "region"})");
        CHECK(cli({"project", "--config", path}).code == 2);
    }
    SUBCASE("missing file") { CHECK(cli({"--config", temp_path("does_not_exist.json")}).code == 2); }
    SUBCASE("a valid file runs") {
        write_file(path, R"({"command": "project", "system": "linear", "params": {"a": 1, "c": 1},
                             "eps": 0.01, "m": 1, "x0": 1, "tol": 1e-8})");
        const auto a = cli({"--config", path});
        REQUIRE(a.code == 0);
        CHECK(a.out == cli(kProjectExample).out);
    }
    std::remove(path.c_str());
}

TEST_CASE("identical config gives identical bytes") {
    const auto a = cli(kProjectExample);
    const auto b = cli(kProjectExample);
    CHECK(a.out == b.out);

    const std::string p1 = temp_path("bytes1.csv"), p2 = temp_path("bytes2.csv");
    std::vector<std::string> args = {"region", "--resolution", "16", "--output", p1};
    REQUIRE(cli(args).code == 0);
    args.back() = p2;
    REQUIRE(cli(args).code == 0);
    const std::string t1 = read_file(p1);
    CHECK_FALSE(t1.empty());
    CHECK(t1 == read_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("--verbose echo reruns to the same result") {
    auto args = kProjectExample;
    args.push_back("--verbose");
    const auto v = cli(args);
    REQUIRE(v.code == 0);
    const auto cut = v.out.find("\n}\n");
    REQUIRE(cut != std::string::npos);
    const std::string echo = v.out.substr(0, cut + 3);
    const std::string result = v.out.substr(cut + 3);
    const Json cfg = Json::parse(echo);
    CHECK(cfg["command"] == "project");
    CHECK(cfg["params"]["a"] == 1.0);
    CHECK(cfg["seed_policy"] == "critical-manifold");
    CHECK(result == cli(kProjectExample).out);

    const std::string path = temp_path("echo.json");
    write_file(path, echo);
    const auto again = cli({"--config", path});
    CHECK(again.code == 0);
    CHECK(again.out == result);
    // the rerun echoes the same config
    CHECK(cli({"--config", path, "--verbose"}).out == v.out);
    std::remove(path.c_str());
}

TEST_CASE("divergence and non-convergence exit codes") {
    const std::vector<std::string> base = {"project", "--system", "linear", "--eps", "0.01", "--x0", "1", "--y0", "0.5"};
    auto div = base;
    div.insert(div.end(), {"--H-over-eps", "2.2"});
    const auto d = cli(div);
    CHECK(d.code == 3);
    CHECK(Json::parse(d.out)["outcome"] == "diverged");
    CHECK_FALSE(d.err.empty());

    auto slow = base;
    slow.insert(slow.end(), {"--H-over-eps", "0.5", "--max-iters", "2", "--tol", "1e-14"});
    const auto s = cli(slow);
    CHECK(s.code == 4);
    CHECK(Json::parse(s.out)["converged"] == false);
}

TEST_CASE("other commands") {
    SUBCASE("cascade") {
        const auto r = cli({"cascade", "--eps", "0.01", "--m-max", "2", "--H-over-eps", "0.5"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(j["completed"] == true);
        CHECK(j["stages"].size() == 3);
        CHECK(j["stages"][2]["m"] == 2);
    }
    SUBCASE("rpm on the complex pair") {
        const auto r = cli({"rpm", "--system", "pair", "--theta", "2.199114857512855", "--m", "1", "--H-over-eps", "0.5",
                            "--tol", "1e-12"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(j["converged"] == true);
        CHECK(j["subspace_dims"][0] == 2);
    }
    SUBCASE("stability verdict") {
        const auto r = cli({"stability", "--system", "pair", "--theta", "2.199114857512855", "--m", "1"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(j["stable"] == false);
        CHECK(j["modes"].size() == 2);
        CHECK(j["modes"][0]["in_sector"] == false);
        const auto c = cli({"stability", "--format", "csv"});
        CHECK(c.out.rfind("lambda_re,lambda_im,modulus,angle,abs_multiplier,in_sector,h_max_over_eps\n", 0) == 0);
    }
}

TEST_CASE("sweep summary JSON") {
    auto keys_ok = [](const Json& j) {
        return j.size() == 4 && j.contains("slope") && j.contains("r_squared") && j.contains("threshold") &&
               j.contains("mismatch");
    };
    SUBCASE("threshold") {
        const auto r = cli({"sweep", "--kind", "threshold"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(keys_ok(j));
        CHECK(j["threshold"].get<double>() == doctest::Approx(2.0).epsilon(0.05));
        CHECK(j["slope"].is_null());
    }
    SUBCASE("order") {
        const auto r = cli({"sweep", "--kind", "order", "--m", "1"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(keys_ok(j));
        CHECK(j["slope"].get<double>() == doctest::Approx(2.0).epsilon(0.15));
    }
    SUBCASE("compare") {
        const auto r = cli({"sweep", "--kind", "compare", "--resolution", "8"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(keys_ok(j));
        CHECK(j["mismatch"].get<double>() < 0.1);
    }
    SUBCASE("no bracket is a non-convergence exit") {
        CHECK(cli({"sweep", "--kind", "threshold", "--hi-over-eps", "1.5"}).code == 4);
    }
}

TEST_CASE("installed binary") {
    const char* bin = std::getenv("SLOWMAN_BIN");
    if (!bin) {
        MESSAGE("SLOWMAN_BIN unset, skipping process checks");
        return;
    }
    const std::string exe = bin;  // path without spaces
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    std::string args;
    for (std::size_t i = 0; i < kProjectExample.size(); ++i) args += " " + kProjectExample[i];
    CHECK(status(exe + args) == 0);
    CHECK(status(exe + " project --tol 0") == 2);
    CHECK(status(exe + " project --y0 0.5 --H-over-eps 2.2") == 3);
    CHECK(status(exe + " project --y0 0.5 --H-over-eps 0.5 --max-iters 2 --tol 1e-14") == 4);

    const std::string p1 = temp_path("proc1.json"), p2 = temp_path("proc2.json");
    CHECK(status(exe + args + " --output " + p1) == 0);
    CHECK(status(exe + args + " --output " + p2) == 0);
    CHECK(read_file(p1) == read_file(p2));
    CHECK(read_file(p1) == cli(kProjectExample).out);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

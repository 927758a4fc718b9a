#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "critstats/io.hpp"

using namespace critstats;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const std::string out_path = "cli_test_stdout.txt";
    const std::string cmd = std::string(CRITSTATS_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    res.output = buf.str();
    return res;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

TEST_CASE("r-grid parsing", "[io]") {
    const RGrid g = parse_r_grid("0.1:0.4:4", false);
    const std::vector<double> v = g.values();
    REQUIRE(v.size() == 4);
    CHECK(v.front() == Catch::Approx(0.1));
    CHECK(v.back() == Catch::Approx(0.4));

    const RGrid single = parse_r_grid("0.25", false);
    CHECK(single.values() == std::vector<double>{0.25});

    const RGrid lg = parse_r_grid("0.01:1:3", true);
    CHECK(lg.values()[1] == Catch::Approx(0.1).epsilon(1e-12));

    CHECK_THROWS_AS(parse_r_grid("0.1:0.4", false), Error);
    CHECK_THROWS_AS(parse_r_grid("abc", false), Error);
    CHECK_THROWS_AS(parse_r_grid("-0.1:0.4:4", false), Error);
}

TEST_CASE("run config JSON round trip", "[io]") {
    RunConfig c;
    c.command = "k2";
    c.model = "mix:0.5";
    c.r_grid = parse_r_grid("0.05:0.4:6", true);
    c.samples = 12345;
    c.seed = 99;
    c.typed = {{CritType::Max, CritType::Min}};
    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(back.model == c.model);
    CHECK(back.r_grid.count == 6);
    CHECK(back.r_grid.log_spaced);
    CHECK(back.samples == c.samples);
    REQUIRE(back.typed.has_value());
    CHECK(back.typed->first == CritType::Max);
    CHECK(back.typed->second == CritType::Min);
}

TEST_CASE("cli coeffs", "[cli]") {
    const CliResult json = run_cli("coeffs --model rwm --format json");
    REQUIRE(json.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(json.output);
    CHECK(j["g4"].get<double>() == Catch::Approx(0.25).margin(1e-14));
    CHECK(j["g6"].get<double>() == Catch::Approx(1.0 / 36.0).margin(1e-14));
    CHECK(j["normalized"].get<bool>());

    const CliResult csv = run_cli("coeffs --model bf");
    REQUIRE(csv.exit_code == 0);
    CHECK(csv.output.find("model,g2,g4,g6,g8") != std::string::npos);
    CHECK(csv.output.find("bf,1,0.5,") != std::string::npos);

    // Cauchy-Schwarz violation -> dedicated exit code
    CHECK(run_cli("coeffs --model poly:1,0.3,0.01").exit_code == 2);
    // unknown model -> parse/config error
    CHECK(run_cli("coeffs --model nope").exit_code == 1);
    // unknown flag -> CLI parse error
    CHECK(run_cli("coeffs --bogus 1").exit_code == 1);
    // missing subcommand
    CHECK(run_cli("").exit_code == 1);
}

TEST_CASE("cli k2", "[cli]") {
    const CliResult csv =
        run_cli("k2 --model bf --r 0.2:0.4:3 --samples 16384 --out cli_k2.csv");
    REQUIRE(csv.exit_code == 0);
    const std::string body = slurp("cli_k2.csv");
    CHECK(body.find("tag,r,value,std_error") != std::string::npos);
    CHECK(body.find("asymptote,0,0.1169") != std::string::npos);
    int k2_rows = 0;
    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line))
        if (line.rfind("k2,", 0) == 0) ++k2_rows;
    CHECK(k2_rows == 3);

    const CliResult typed = run_cli(
        "k2 --model bf --typed min,min --r 0.5:0.8:4 --samples 65536 --format json");
    REQUIRE(typed.exit_code == 0);
    const nlohmann::json j = nlohmann::json::parse(typed.output);
    REQUIRE(j.contains("fitted_exponent"));
    CHECK(j["fitted_exponent"]["slope"].get<double>() > 0.0);
    CHECK(j["rows"].size() == 4);
    CHECK(j["rows"][0]["type_pair"][0].get<std::string>() == "min");

    CHECK(run_cli("k2 --model bf --typed min --samples 1024").exit_code == 1);
}

TEST_CASE("cli validate", "[cli]") {
    const CliResult af = run_cli("validate --only af");
    REQUIRE(af.exit_code == 0);
    CHECK(af.output.find("PASS af") != std::string::npos);

    CHECK(run_cli("validate --only bogus").exit_code == 1);

    const CliResult dump = run_cli(
        "validate --only af --model bf --r 0.1:0.3:3 --dump cli_diag.csv");
    REQUIRE(dump.exit_code == 0);
    const std::string diag = slurp("cli_diag.csv");
    CHECK(diag.find("r,alpha1,alpha2") != std::string::npos);
    CHECK(diag.find(",lambda6") != std::string::npos);
    int rows = -1; // header
    std::istringstream lines(diag);
    std::string line;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("cli simulate (tiny run)", "[cli]") {
    const CliResult sim = run_cli(
        "simulate --model bf --L 10 --n 3 --samples 16384 --out cli_sim.csv "
        "--points-out cli_points.csv");
    REQUIRE(sim.exit_code == 0);
    const std::string body = slurp("cli_sim.csv");
    CHECK(body.find("# density_empirical=") != std::string::npos);
    CHECK(body.find("r_lo,r_hi,k2_hat,std_err,k2_analytic_ordered,ratio") != std::string::npos);
    CHECK(body.find("# verdict_density=") != std::string::npos);
    CHECK(body.find("# verdict_k2=") != std::string::npos);
    CHECK(body.find("# verdict_pair_convention=") != std::string::npos);

    const std::string pts = slurp("cli_points.csv");
    CHECK(pts.find("sample_id,x,y,type,hess_det,hess_trace") != std::string::npos);
    int rows = -1;
    std::istringstream lines(pts);
    std::string line;
    while (std::getline(lines, line)) ++rows;
    // ~0.735 * 100 per sample, 3 samples
    CHECK(rows > 150);

    // monochromatic model on a tiny torus: too few lattice modes
    CHECK(run_cli("simulate --model rwm --L 2 --n 1").exit_code == 4);
}

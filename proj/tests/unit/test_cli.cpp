#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "graphon_mfc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
    const char* path = std::getenv("GMFC_CLI_PATH");
    REQUIRE_MESSAGE(path != nullptr, "GMFC_CLI_PATH must point at the graphon-mfc binary");
    return path;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string capture_cli(const std::string& args) {
    const fs::path tmp = fs::temp_directory_path() / "gmfc_cli_capture.txt";
    const std::string cmd = cli_path() + " " + args + " >" + tmp.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    (void)status;
    return gmfc::io::read_text(tmp.string());
}

fs::path write_config(const std::string& name, const json& config) {
    const fs::path dir = fs::temp_directory_path() / "gmfc_cli_tests";
    fs::create_directories(dir);
    const fs::path path = dir / name;
    gmfc::io::write_text(path.string(), config.dump(2));
    return path;
}

json base_simulate_config(const fs::path& out_dir) {
    json cfg;
    cfg["task"] = "simulate";
    cfg["seed"] = 12;
    cfg["output"]["dir"] = out_dir.string();
    cfg["grid"]["uniform"] = 2;
    cfg["graphon"]["kind"] = "constant";
    cfg["model"]["family"] = "custom-polynomial";
    cfg["model"]["b0"] = {1.0};
    cfg["init"]["family"] = "constant";
    cfg["init"]["point"] = {0.5};
    cfg["sim"] = {{"t0", 0.0}, {"T", 1.0}, {"steps", 8}, {"particles", 6}};
    cfg["policy"]["kind"] = "zero";
    return cfg;
}

}  // namespace

TEST_CASE("describe prints schemas with defaults") {
    CHECK(capture_cli("describe simulate").find("seed") != std::string::npos);
    CHECK(capture_cli("describe picard").find("tol: 1e-3") != std::string::npos);
    const std::string unknown = capture_cli("describe no-such-task");
    CHECK(unknown.find("valid tasks") != std::string::npos);
    CHECK(unknown.find("simulate") != std::string::npos);
    CHECK(run_cli("describe no-such-task") == 2);
}

TEST_CASE("simulate task: trivial drift lands at X0 + (T - t0)") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "sim_trivial";
    fs::remove_all(out);
    const auto cfg_path = write_config("sim_trivial.json", base_simulate_config(out));
    CHECK(run_cli("run " + cfg_path.string()) == 0);

    std::ifstream csv(out / "final_state.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);  // header
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        const auto last_comma = line.rfind(',');
        CHECK(std::stod(line.substr(last_comma + 1)) == doctest::Approx(1.5).epsilon(1e-14));
        ++rows;
    }
    CHECK(rows == 12);  // 2 labels x 6 particles
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "config.json"));
    const json manifest = json::parse(gmfc::io::read_text((out / "manifest.json").string()));
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest["tool_version"] == gmfc::kToolVersion);
}

TEST_CASE("config hashes are stable under key reordering") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "hash";
    const json cfg = base_simulate_config(out);
    const auto path_a = write_config("hash_a.json", cfg);
    // same content, different key order in the textual file
    std::string reordered = "{\n  \"seed\": 12,\n  \"task\": \"simulate\"";
    for (const auto& item : cfg.items()) {
        if (item.key() == "task" || item.key() == "seed") continue;
        reordered += ",\n  \"" + item.key() + "\": " + item.value().dump();
    }
    reordered += "\n}\n";
    const fs::path path_b = fs::temp_directory_path() / "gmfc_cli_tests" / "hash_b.json";
    gmfc::io::write_text(path_b.string(), reordered);

    CHECK(run_cli("run " + path_a.string()) == 0);
    const json ma = json::parse(gmfc::io::read_text((out / "manifest.json").string()));
    CHECK(run_cli("run " + path_b.string()) == 0);
    const json mb = json::parse(gmfc::io::read_text((out / "manifest.json").string()));
    CHECK(ma["config_hash"] == mb["config_hash"]);
}

TEST_CASE("picard task reports first-iteration convergence on decoupled models") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "picard_trivial";
    fs::remove_all(out);
    json cfg = base_simulate_config(out);
    cfg["task"] = "picard";
    cfg["model"] = {{"family", "custom-polynomial"}, {"b0", {0.2}}, {"s0", {0.3}}};
    cfg["picard"] = {{"max_iters", 10}, {"tol", 1e-3}};
    const auto cfg_path = write_config("picard_trivial.json", cfg);
    CHECK(run_cli("run " + cfg_path.string()) == 0);
    const json report = json::parse(gmfc::io::read_text((out / "picard.json").string()));
    CHECK(report["converged"] == true);
    CHECK(report["converged_at_iteration"] == 1);
}

TEST_CASE("invalid configs exit with code 2") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "invalid";
    json cfg = base_simulate_config(out);
    cfg["no_such_key"] = 1;
    const auto bad_key = write_config("bad_key.json", cfg);
    CHECK(run_cli("run " + bad_key.string()) == 2);

    json cfg2 = base_simulate_config(out);
    cfg2["sim"]["steps"] = 0;
    const auto bad_steps = write_config("bad_steps.json", cfg2);
    CHECK(run_cli("run " + bad_steps.string()) == 2);

    json cfg3 = base_simulate_config(out);
    cfg3["task"] = "nonsense";
    const auto bad_task = write_config("bad_task.json", cfg3);
    CHECK(run_cli("run " + bad_task.string()) == 2);

    CHECK(run_cli("run /nonexistent/config.json") == 2);
}

TEST_CASE("numerical blow-up exits with code 3") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "blowup";
    json cfg = base_simulate_config(out);
    cfg["model"] = {{"family", "custom-polynomial"}, {"b_x", 40.0}};
    cfg["sim"] = {{"t0", 0.0}, {"T", 4.0}, {"steps", 16}, {"particles", 4}};
    cfg["init"] = {{"family", "constant"}, {"point", {2.0}}};
    const auto cfg_path = write_config("blowup.json", cfg);
    CHECK(run_cli("run " + cfg_path.string()) == 3);
}

TEST_CASE("non-convergent picard runs exit with code 4") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "picard_slow";
    json cfg = base_simulate_config(out);
    cfg["task"] = "picard";
    cfg["graphon"] = {{"kind", "constant"}};
    cfg["model"] = {{"family", "graphon-mean-reversion"}, {"kappa", 0.8}, {"sigma0", 0.3},
                    {"sigma1", 0.4}};
    cfg["init"] = {{"family", "gaussian"}, {"mean", 0.0}, {"sd", 1.0}};
    cfg["sim"] = {{"t0", 0.0}, {"T", 0.5}, {"steps", 20}, {"particles", 400}};
    cfg["picard"] = {{"max_iters", 1}, {"tol", 1e-12}};
    const auto cfg_path = write_config("picard_slow.json", cfg);
    CHECK(run_cli("run " + cfg_path.string()) == 4);
}

TEST_CASE("seed environment override changes the draw") {
    const fs::path out1 = fs::temp_directory_path() / "gmfc_cli_tests" / "env_seed1";
    const fs::path out2 = fs::temp_directory_path() / "gmfc_cli_tests" / "env_seed2";
    json cfg = base_simulate_config(out1);
    cfg["init"] = {{"family", "gaussian"}, {"mean", 0.0}, {"sd", 1.0}};
    const auto cfg_path1 = write_config("env_seed1.json", cfg);
    cfg["output"]["dir"] = out2.string();
    const auto cfg_path2 = write_config("env_seed2.json", cfg);
    fs::remove_all(out1);
    fs::remove_all(out2);
    const std::string env_cmd = "GRAPHON_MFC_SEED=777 " + cli_path() + " run " +
                                cfg_path2.string() + " >/dev/null 2>&1";
    CHECK(run_cli("run " + cfg_path1.string()) == 0);
    CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
    const std::string csv1 = gmfc::io::read_text((out1 / "final_state.csv").string());
    const std::string csv2 = gmfc::io::read_text((out2 / "final_state.csv").string());
    CHECK(csv1 != csv2);
    const json m2 = json::parse(gmfc::io::read_text((out2 / "manifest.json").string()));
    CHECK(m2["seed"] == 777);
}

TEST_CASE("remaining tasks produce their reports") {
    const fs::path base = fs::temp_directory_path() / "gmfc_cli_tests";

    SUBCASE("ito-verify") {
        const fs::path out = base / "ito";
        fs::remove_all(out);
        json cfg = base_simulate_config(out);
        cfg["task"] = "ito-verify";
        cfg["model"] = {{"family", "custom-polynomial"}, {"s0", {1.0}}};
        cfg["init"] = {{"family", "constant"}, {"point", {0.0}}};
        cfg["sim"] = {{"t0", 0.0}, {"T", 1.0}, {"steps", 50}, {"particles", 2000}};
        cfg["ito"]["test_function"] = {{"family", "linear"},
                                       {"phi", {{"dim", 1}, {"c2", {2.0}}}}};
        const auto cfg_path = write_config("ito.json", cfg);
        CHECK(run_cli("run " + cfg_path.string()) == 0);
        const json report = json::parse(gmfc::io::read_text((out / "ito.json").string()));
        // pure diffusion with x^2: rhs is exactly t * lambda(U) = 1
        CHECK(report["rhs"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(report["residual"].get<double>()) < 0.2);
    }
    SUBCASE("bellman-residual with the zero candidate") {
        const fs::path out = base / "bellman";
        fs::remove_all(out);
        json cfg = base_simulate_config(out);
        cfg["task"] = "bellman-residual";
        cfg["model"] = {{"family", "graphon-lq"}, {"state_cost", {0.0}}, {"sigma0", 0.3}};
        cfg["init"] = {{"family", "gaussian"}, {"sd", 0.5}};
        cfg["sim"]["particles"] = 32;
        cfg["bellman"] = {{"t", 0.0}, {"actions_per_dim", 41},
                          {"candidate", {{"kind", "zero"}}}};
        const auto cfg_path = write_config("bellman.json", cfg);
        CHECK(run_cli("run " + cfg_path.string()) == 0);
        const json report = json::parse(gmfc::io::read_text((out / "bellman.json").string()));
        // zero state cost, zero candidate: inf over a of a^2/2 is 0
        CHECK(std::abs(report["residual"].get<double>()) <= 1e-12);
        CHECK(report.contains("grid_resolution"));
        CHECK(report.contains("oracle_refs"));
    }
    SUBCASE("dpp-check") {
        const fs::path out = base / "dpp";
        fs::remove_all(out);
        json cfg = base_simulate_config(out);
        cfg["task"] = "dpp-check";
        cfg["model"] = {{"family", "graphon-lq"}, {"state_cost", {1.0}}, {"sigma0", 0.0}};
        cfg["init"] = {{"family", "label"}};
        cfg["sim"] = {{"t0", 0.0}, {"T", 1.0}, {"steps", 16}, {"particles", 64}};
        cfg["dpp"] = {{"theta", 0.5}, {"actions", {{-0.5}, {0.5}}}};
        const auto cfg_path = write_config("dpp.json", cfg);
        CHECK(run_cli("run " + cfg_path.string()) == 0);
        const json report = json::parse(gmfc::io::read_text((out / "dpp.json").string()));
        CHECK(std::abs(report["gap"].get<double>()) <= 1e-12);
        CHECK(report["branches"] == 4);
    }
    SUBCASE("assumptions") {
        const fs::path out = base / "assumptions";
        fs::remove_all(out);
        json cfg = base_simulate_config(out);
        cfg["task"] = "assumptions";
        cfg["model"] = {{"family", "graphon-mean-reversion"}, {"kappa", 0.4},
                        {"sigma0", 0.2}, {"sigma1", 0.3}};
        cfg["assumptions"] = {{"probes", 100}};
        const auto cfg_path = write_config("assumptions.json", cfg);
        CHECK(run_cli("run " + cfg_path.string()) == 0);
        const json report =
            json::parse(gmfc::io::read_text((out / "assumptions.json").string()));
        CHECK(report["lipschitz_ok"] == true);
        CHECK(report["growth_ok"] == true);
        CHECK(report["strengthened_ok"] == true);
    }
}

TEST_CASE("lq-benchmark oracle csv matches the closed form, pinned") {
    const fs::path out = fs::temp_directory_path() / "gmfc_cli_tests" / "lq_bench";
    fs::remove_all(out);
    json cfg;
    cfg["task"] = "lq-benchmark";
    cfg["seed"] = 5;
    cfg["output"]["dir"] = out.string();
    cfg["grid"] = {{"labels", {0.5}}, {"weights", {1.0}}};
    cfg["graphon"]["kind"] = "constant";
    cfg["lq"] = {{"state_cost", {1.0}}, {"sigma0", 0.5}, {"horizon", 1.0},
                 {"ode_nodes", 2001}, {"csv_stride", 200}};
    cfg["sim"] = {{"steps", 50}, {"particles", 500}};
    const auto cfg_path = write_config("lq_bench.json", cfg);
    CHECK(run_cli("run " + cfg_path.string()) == 0);

    std::ifstream csv(out / "lq_oracle.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t,P_0_0,p_0,r_0");
    while (std::getline(csv, line)) {
        std::stringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        const double t = std::stod(cell);
        std::getline(row, cell, ',');
        const double p_mat = std::stod(cell);
        std::getline(row, cell, ',');
        const double p_fl = std::stod(cell);
        std::getline(row, cell, ',');
        const double r = std::stod(cell);
        CHECK(std::abs(p_mat) <= 1e-8);
        CHECK(std::abs(p_fl - std::tanh(1.0 - t)) <= 1e-8);
        CHECK(std::abs(r - 0.125 * std::log(std::cosh(1.0 - t))) <= 1e-8);
    }
    const json report = json::parse(gmfc::io::read_text((out / "lq_report.json").string()));
    CHECK(report["max_ode_residual"].get<double>() < 1e-8);
}

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "pmd_cli_tests";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Result {
    int code;
    std::string err;
};

Result run(const std::string& args) {
    fs::create_directories(kRoot);
    const fs::path err = kRoot / "stderr.txt";
    const std::string cmd = std::string(PMD_CLI_PATH) + " " + args + " > " + (kRoot / "stdout.txt").string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

fs::path write_config(const std::string& name, const std::string& text) {
    fs::create_directories(kRoot);
    const fs::path p = kRoot / name;
    std::ofstream(p) << text;
    return p;
}

const char* kLq = R"({
  "grid": {"n_interior": 29},
  "actions": {"kind": "discrete", "values": [-1, -0.5, 0, 0.5, 1]},
  "lq": {"b_hat": 1, "f_bar": 1, "f_hat": 1},
  "sigma": 1.4142135623730951,
  "hjb": {"taus": [0.5, 0.1]},
  "flow": {"scheduler": "constant", "param": 0.5, "horizon": 2.0, "probes": [0.25, 0.5]},
  "seed": 5
})";

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

} // namespace

TEST_CASE("solve-hjb writes one file per tau plus the unregularized solution") {
    const auto cfg = write_config("lq.json", kLq);
    const fs::path out = kRoot / "hjb";
    fs::remove_all(out);
    REQUIRE(run("solve-hjb " + cfg.string() + " -o " + out.string()).code == 0);
    CHECK(fs::exists(out / "hjb_tau_0p5.csv"));
    CHECK(fs::exists(out / "hjb_tau_0p1.csv"));
    CHECK(fs::exists(out / "hjb_tau_0.csv"));
    CHECK(count_lines(out / "hjb_tau_0.csv") == 32);
    const json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["seed"] == 5);
    CHECK(manifest["outputs"].size() == 6);
    CHECK(manifest["config_digest"].get<std::string>().rfind("sha256:", 0) == 0);
    CHECK(manifest["wall_time"].get<double>() >= 0.0);
    CHECK(manifest.contains("tool_version"));
}

TEST_CASE("zero data gives zero value files") {
    const auto cfg = write_config("zero.json", R"({
      "grid": {"n_interior": 9},
      "actions": {"kind": "discrete", "values": [-1, 1]},
      "model": "polynomial",
      "polynomial": {},
      "sigma": 1.0,
      "hjb": {"taus": [0.5]}
    })");
    const fs::path out = kRoot / "zero";
    REQUIRE(run("solve-hjb " + cfg.string() + " -o " + out.string()).code == 0);
    for (const char* name : {"hjb_tau_0p5.csv", "hjb_tau_0.csv"}) {
        std::ifstream in(out / name);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
            CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == 0.0);
        }
    }
}

TEST_CASE("malformed keys fail with the file, line and key") {
    std::string text = kLq;
    text.replace(text.find("\"taus\""), 6, "\"tau_list\"");
    const auto cfg = write_config("bad_hjb.json", text);
    const Result r = run("solve-hjb " + cfg.string() + " -o " + (kRoot / "bad").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("bad_hjb.json:6:") != std::string::npos);
    CHECK(r.err.find("tau_list") != std::string::npos);

    std::string problem = kLq;
    problem.replace(problem.find("\"f_hat\""), 7, "\"f_hut\"");
    const auto cfg2 = write_config("bad_problem.json", problem);
    const Result r2 = run("solve-hjb " + cfg2.string() + " -o " + (kRoot / "bad").string());
    CHECK(r2.code == 1);
    CHECK(r2.err.find("bad_problem.json:4:") != std::string::npos);
    CHECK(r2.err.find("f_hut") != std::string::npos);

    const auto cfg3 = write_config("syntax.json", "{\n  \"grid\": {\"n_interior\": 3},\n  oops\n}");
    const Result r3 = run("solve-hjb " + cfg3.string());
    CHECK(r3.code == 1);
    CHECK(r3.err.find("syntax.json:3:") != std::string::npos);

    CHECK(run("solve-hjb " + cfg.string() + " --set nonsense.key=1").code == 1);
    CHECK(run("solve-hjb " + (kRoot / "does_not_exist.json").string()).code == 1);
    CHECK(run("no-such-command").code == 1);
}

TEST_CASE("run-flow is bitwise reproducible") {
    const auto cfg = write_config("lq.json", kLq);
    const fs::path a = kRoot / "flow_a", b = kRoot / "flow_b";
    REQUIRE(run("run-flow " + cfg.string() + " -o " + a.string()).code == 0);
    REQUIRE(run("run-flow " + cfg.string() + " -o " + b.string()).code == 0);
    for (const char* name : {"trajectory.csv", "decomposition.csv", "z_final.csv"}) {
        CHECK(fs::exists(a / name));
        CHECK(slurp(a / name) == slurp(b / name));
    }
    const json ma = json::parse(slurp(a / "manifest.json"));
    const json mb = json::parse(slurp(b / "manifest.json"));
    CHECK(ma["config_digest"] == mb["config_digest"]);

    // Regularized values decrease along a constant-temperature run.
    std::ifstream in(a / "trajectory.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("s,tau_s,v_reg_", 0) == 0);
    double prev = INFINITY;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < 3; ++j) std::getline(ss, cell, ',');
        const double v = std::stod(cell);
        CHECK(v <= prev + 1e-8);
        prev = v;
    }
}

TEST_CASE("resolved config round-trips through the manifest") {
    const auto cfg = write_config("lq.json", kLq);
    const fs::path a = kRoot / "round_a", b = kRoot / "round_b";
    REQUIRE(run("run-flow " + cfg.string() + " -o " + a.string() + " --set flow.horizon=1.5 --seed 9").code == 0);
    const json ma = json::parse(slurp(a / "manifest.json"));
    CHECK(ma["seed"] == 9);
    CHECK(ma["resolved_config"]["flow"]["horizon"] == 1.5);
    const auto resolved = write_config("resolved.json", ma["resolved_config"].dump(2));
    REQUIRE(run("run-flow " + resolved.string() + " -o " + b.string()).code == 0);
    const json mb = json::parse(slurp(b / "manifest.json"));
    CHECK(mb["resolved_config"] == ma["resolved_config"]);
    CHECK(mb["config_digest"] == ma["config_digest"]);
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
}

TEST_CASE("output directory from the environment") {
    const auto cfg = write_config("lq.json", kLq);
    const fs::path out = kRoot / "from_env";
    fs::remove_all(out);
    ::setenv("PMD_OUTPUT_DIR", out.string().c_str(), 1);
    const int code = run("solve-hjb " + cfg.string()).code;
    ::unsetenv("PMD_OUTPUT_DIR");
    CHECK(code == 0);
    CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("bound sweeps") {
    const fs::path out = kRoot / "figure";
    REQUIRE(run("reproduce-figure -o " + out.string()).code == 0);
    CHECK(count_lines(out / "figure.csv") == 1 + 19 * 4);

    const auto one = write_config("one.json", R"({"bounds": {"betas": [0.5], "horizons": [100],
        "growth": {"scheduler": "inverse_linear", "s": [2.0, 10.0]}}})");
    REQUIRE(run("sweep-bounds " + one.string() + " -o " + out.string()).code == 0);
    CHECK(count_lines(out / "figure.csv") == 2);
    CHECK(count_lines(out / "growth.csv") == 3);

    const auto empty = write_config("empty.json", R"({"bounds": {"betas": [], "horizons": [100]}})");
    CHECK(run("sweep-bounds " + empty.string() + " -o " + out.string()).code == 1);
}

TEST_CASE("mc-check: constant payoff, manufactured solution and a negative control") {
    const auto unit = write_config("unit_payoff.json", R"({
      "grid": {"n_interior": 19},
      "actions": {"kind": "discrete", "values": [0]},
      "model": "polynomial",
      "polynomial": {},
      "sigma": 1.0,
      "g": 1.0,
      "mc": {"probes": [0.3, 0.7], "n_paths": 2000}
    })");
    const fs::path out = kRoot / "mc";
    REQUIRE(run("mc-check " + unit.string() + " -o " + out.string()).code == 0);
    std::ifstream in(out / "mc_check.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,pde_value,mc_mean,mc_stderr,z_score");
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        double row[5];
        for (double& v : row) {
            std::getline(ss, cell, ',');
            v = std::stod(cell);
        }
        CHECK(row[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(row[2] == 1.0);
        CHECK(row[3] == 0.0);
    }

    const auto manufactured = write_config("manufactured.json", R"({
      "grid": {"n_interior": 49},
      "actions": {"kind": "discrete", "values": [0]},
      "model": "polynomial",
      "polynomial": {"f": 2.0},
      "sigma": 1.4142135623730951,
      "mc": {"probes": [0.5], "n_paths": 10000, "dt_sim": 1e-5}
    })");
    CHECK(run("mc-check " + manufactured.string() + " -o " + out.string()).code == 0);

    const auto control = write_config("control.json", R"({
      "grid": {"n_interior": 29},
      "actions": {"kind": "discrete", "values": [-1, -0.5, 0, 0.5, 1]},
      "lq": {"b_hat": 1, "f_bar": 1, "f_hat": 1},
      "sigma": 1.4142135623730951,
      "mc": {"probes": [0.5], "n_paths": 4000, "dt_sim": 1e-3, "tau": 0.0, "pde_tau": 0.5}
    })");
    CHECK(run("mc-check " + control.string() + " -o " + out.string()).code == 3);
}

TEST_CASE("numerical failures exit with status 2") {
    std::string text = kLq;
    text.replace(text.find("\"horizon\": 2.0"), 14, "\"horizon\": 20.0, \"dt\": 5.0");
    const auto cfg = write_config("unstable.json", text);
    const Result r = run("run-flow " + cfg.string() + " -o " + (kRoot / "unstable").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("step") != std::string::npos);
}

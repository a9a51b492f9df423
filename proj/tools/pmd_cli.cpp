// Experiment runner over the C interface.
#include "pmd/pmd.h"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kCheckFailed = 3 };

struct CliFailure {
    int code;
    std::string message;
};

std::string g_config_text;   // original file contents, for line lookups
std::string g_config_path = "<config>";

[[noreturn]] void config_fail(const std::string& pointer, const std::string& what) {
    std::ostringstream msg;
    const std::size_t line = pmd_config_key_line(g_config_text.c_str(), pointer.c_str());
    msg << g_config_path;
    if (line) msg << ":" << line;
    msg << ": config key '" << pointer << "': " << what;
    throw CliFailure{kValidation, msg.str()};
}

int exit_code(pmd_status s) {
    switch (s) {
    case PMD_OK: return kOk;
    case PMD_ERR_NULL_ARGUMENT:
    case PMD_ERR_VALIDATION:
    case PMD_ERR_CONFIG:
    case PMD_ERR_IO: return kValidation;
    default: return kNumerical;
    }
}

void check(pmd_status s, const char* what) {
    if (s == PMD_OK) return;
    std::ostringstream msg;
    if (s == PMD_ERR_CONFIG) {
        const std::size_t line = pmd_config_key_line(g_config_text.c_str(), pmd_last_error_key());
        msg << g_config_path;
        if (line) msg << ":" << line;
        msg << ": " << pmd_last_error();
    } else {
        msg << what << " failed (" << pmd_status_name(s) << "): " << pmd_last_error();
    }
    throw CliFailure{exit_code(s), msg.str()};
}

// Owning wrappers for the C handles.
template <class T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
};
using Problem = Handle<pmd_problem, pmd_problem_free>;
using PolicyH = Handle<pmd_policy, pmd_policy_free>;
using HjbH = Handle<pmd_hjb, pmd_hjb_free>;
using ValueH = Handle<pmd_value, pmd_value_free>;
using TrajH = Handle<pmd_trajectory, pmd_trajectory_free>;

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw CliFailure{kNumerical, "sha256 digest failed"};
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int j = 0; j < len; ++j) {
        out += hex[digest[j] >> 4];
        out += hex[digest[j] & 15];
    }
    return "sha256:" + out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw CliFailure{kValidation, "cannot write " + tmp.string()};
    }
    fs::rename(tmp, path);
}

// --- config access ---------------------------------------------------------

const std::set<std::string> kTopLevel = {"grid", "actions", "model", "lq", "polynomial", "sigma",
                                         "g", "discretization", "seed", "output_dir", "name",
                                         "hjb", "flow", "bounds", "mc", "bias"};

void only_keys(const json& obj, const std::string& pointer, const std::set<std::string>& allowed) {
    if (!obj.is_object()) config_fail(pointer, "expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) config_fail(pointer + "/" + item.key(), "unknown key");
}

json& section(json& doc, const char* name) {
    if (!doc.contains(name)) doc[name] = json::object();
    if (!doc[name].is_object()) config_fail(std::string("/") + name, "expected an object");
    return doc[name];
}

double get_number(json& obj, const std::string& pointer, const char* key, double fallback) {
    if (!obj.contains(key)) obj[key] = fallback;
    if (!obj[key].is_number()) config_fail(pointer + "/" + key, "expected a number");
    return obj[key].get<double>();
}

std::size_t get_count(json& obj, const std::string& pointer, const char* key, std::size_t fallback,
                      std::size_t min_value) {
    if (!obj.contains(key)) obj[key] = fallback;
    if (!obj[key].is_number_integer() || obj[key].get<long long>() < static_cast<long long>(min_value))
        config_fail(pointer + "/" + key, "expected an integer >= " + std::to_string(min_value));
    return obj[key].get<std::size_t>();
}

std::string get_string(json& obj, const std::string& pointer, const char* key,
                       const std::string& fallback, const std::set<std::string>& allowed) {
    if (!obj.contains(key)) obj[key] = fallback;
    if (!obj[key].is_string()) config_fail(pointer + "/" + key, "expected a string");
    const std::string v = obj[key].get<std::string>();
    if (!allowed.empty() && !allowed.count(v)) {
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
        config_fail(pointer + "/" + key, "'" + v + "' is not one of: " + opts);
    }
    return v;
}

std::vector<double> get_numbers(json& obj, const std::string& pointer, const char* key,
                                const std::vector<double>& fallback) {
    if (!obj.contains(key)) obj[key] = fallback;
    const json& arr = obj[key];
    if (!arr.is_array()) config_fail(pointer + "/" + key, "expected an array of numbers");
    if (arr.empty()) config_fail(pointer + "/" + key, "must not be empty");
    std::vector<double> out;
    for (std::size_t j = 0; j < arr.size(); ++j) {
        if (!arr[j].is_number()) config_fail(pointer + "/" + key + "/" + std::to_string(j), "expected a number");
        out.push_back(arr[j].get<double>());
    }
    return out;
}

// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw CliFailure{kValidation, "--set expects key=value, got '" + assignment + "'"};
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t j = 0; j + 1 < parts.size(); ++j) {
        if (!node->contains(parts[j])) (*node)[parts[j]] = json::object();
        node = &(*node)[parts[j]];
        if (!node->is_object()) throw CliFailure{kValidation, "--set " + key + ": '" + parts[j] + "' is not an object"};
    }
    (*node)[parts.back()] = value;
}

struct Run {
    std::string command;
    json config;
    fs::path out_dir;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    std::string path(const std::string& name) {
        outputs.push_back(name);
        return (out_dir / name).string();
    }
};

Problem load_problem(const json& config) {
    Problem problem;
    check(pmd_problem_from_json(config.dump().c_str(), problem.out()), "problem construction");
    return problem;
}

std::size_t probe_index(const Problem& problem, double x, const std::string& pointer) {
    std::size_t idx = 0;
    if (pmd_problem_nearest_interior(problem.get(), x, &idx) != PMD_OK) config_fail(pointer, pmd_last_error());
    return idx;
}

std::string tau_tag(double tau) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", tau);
    std::string s = buf;
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

void write_manifest(Run& run) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
    json manifest;
    manifest["command"] = run.command;
    manifest["config_digest"] = sha256_hex(run.config.dump());
    manifest["seed"] = run.seed;
    manifest["tool_version"] = pmd_version();
    manifest["outputs"] = run.outputs;
    manifest["wall_time"] = wall;
    manifest["resolved_config"] = run.config;
    write_atomic(run.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// --- subcommands -----------------------------------------------------------

int cmd_solve_hjb(Run& run) {
    json& hjb = section(run.config, "hjb");
    only_keys(hjb, "/hjb", {"taus", "tol", "max_iter"});
    const auto taus = get_numbers(hjb, "/hjb", "taus", {0.5, 0.1});
    const double tol = get_number(hjb, "/hjb", "tol", 0.0);
    const std::size_t max_iter = get_count(hjb, "/hjb", "max_iter", 200, 1);
    for (std::size_t j = 0; j < taus.size(); ++j)
        if (!(taus[j] > 0.0)) config_fail("/hjb/taus/" + std::to_string(j), "must be positive");
    Problem problem = load_problem(run.config);

    std::vector<double> all = taus;
    all.push_back(0.0);
    for (double tau : all) {
        HjbH sol;
        check(pmd_hjb_solve(problem.get(), tau, tol, max_iter, sol.out()), "HJB solve");
        check(pmd_hjb_write_csv(problem.get(), sol.get(), run.path("hjb_tau_" + tau_tag(tau) + ".csv").c_str()),
              "writing HJB solution");
        check(pmd_hjb_write_residuals_csv(sol.get(), run.path("residuals_tau_" + tau_tag(tau) + ".csv").c_str()),
              "writing residual history");
        std::cout << "tau=" << format_real(tau) << " iterations=" << pmd_hjb_iterations(sol.get())
                  << " residual=" << format_real(pmd_hjb_final_residual(sol.get())) << "\n";
    }
    return kOk;
}

int cmd_run_flow(Run& run) {
    json& flow = section(run.config, "flow");
    only_keys(flow, "/flow", {"scheduler", "param", "horizon", "dt", "record_every", "probes",
                              "initial_feature", "decomposition", "tol", "max_iter", "check_stability"});
    const std::string kind = get_string(flow, "/flow", "scheduler", "inverse_linear",
                                        {"constant", "horizon_constant", "inverse_linear", "inverse_sqrt", "power_law"});
    const double param = get_number(flow, "/flow", "param", kind == "constant" ? 0.5 : kind == "power_law" ? 0.5 : 0.0);
    const double horizon = get_number(flow, "/flow", "horizon", 10.0);
    const double dt = get_number(flow, "/flow", "dt", 0.05);
    const std::size_t record_every = get_count(flow, "/flow", "record_every", 1, 1);
    const auto probes_x = get_numbers(flow, "/flow", "probes", {0.5});
    if (!flow.contains("decomposition")) flow["decomposition"] = true;
    if (!flow["decomposition"].is_boolean()) config_fail("/flow/decomposition", "expected true or false");
    if (!flow.contains("check_stability")) flow["check_stability"] = true;
    if (!flow["check_stability"].is_boolean()) config_fail("/flow/check_stability", "expected true or false");
    const double tol = get_number(flow, "/flow", "tol", 0.0);
    const std::size_t max_iter = get_count(flow, "/flow", "max_iter", 200, 1);

    Problem problem = load_problem(run.config);
    std::vector<std::size_t> probes;
    for (std::size_t j = 0; j < probes_x.size(); ++j)
        probes.push_back(probe_index(problem, probes_x[j], "/flow/probes/" + std::to_string(j)));

    std::vector<double> z0;
    if (flow.contains("initial_feature")) {
        if (!flow["initial_feature"].is_string()) config_fail("/flow/initial_feature", "expected a file path");
        z0.resize(pmd_problem_n_interior(problem.get()) * pmd_problem_n_actions(problem.get()));
        check(pmd_feature_read_csv(problem.get(), flow["initial_feature"].get<std::string>().c_str(), z0.data(), z0.size()),
              "reading initial feature");
    }

    pmd_flow_options opts{dt, record_every, probes.data(), probes.size(), flow["check_stability"].get<bool>() ? 1 : 0};
    TrajH traj;
    check(pmd_flow_run(problem.get(), z0.empty() ? nullptr : z0.data(), kind.c_str(), param, horizon, &opts, traj.out()),
          "flow integration");
    check(pmd_trajectory_write_csv(traj.get(), run.path("trajectory.csv").c_str()), "writing trajectory");
    check(pmd_trajectory_write_feature_csv(problem.get(), traj.get(), run.path("z_final.csv").c_str()),
          "writing final feature");
    if (flow["decomposition"].get<bool>())
        check(pmd_trajectory_write_decomposition_csv(problem.get(), traj.get(), tol, max_iter,
                                                     run.path("decomposition.csv").c_str()),
              "error decomposition");
    std::cout << "steps=" << pmd_trajectory_steps(traj.get()) << " records=" << pmd_trajectory_records(traj.get()) << "\n";
    return kOk;
}

int cmd_sweep_bounds(Run& run, bool defaults) {
    json& bounds = section(run.config, "bounds");
    only_keys(bounds, "/bounds", {"betas", "horizons", "C", "alpha", "growth"});
    std::vector<double> default_betas;
    for (int j = 1; j <= 19; ++j) default_betas.push_back(0.05 * j);
    if (defaults) {
        bounds.erase("betas");
        bounds.erase("horizons");
    }
    const auto betas = get_numbers(bounds, "/bounds", "betas", default_betas);
    const auto horizons = get_numbers(bounds, "/bounds", "horizons", {10.0, 100.0, 1000.0, 10000.0});
    const double C = get_number(bounds, "/bounds", "C", 1.0);
    const double alpha = get_number(bounds, "/bounds", "alpha", 1.0);
    check(pmd_write_figure_csv(betas.data(), betas.size(), horizons.data(), horizons.size(), C, alpha,
                               run.path("figure.csv").c_str()),
          "bound sweep");
    if (bounds.contains("growth")) {
        json& growth = bounds["growth"];
        only_keys(growth, "/bounds/growth", {"scheduler", "param", "s"});
        const std::string kind = get_string(growth, "/bounds/growth", "scheduler", "inverse_sqrt", {});
        const double param = get_number(growth, "/bounds/growth", "param", 0.0);
        const auto s = get_numbers(growth, "/bounds/growth", "s", {1.0, 10.0, 100.0});
        check(pmd_write_growth_csv(kind.c_str(), param, s.data(), s.size(), run.path("growth.csv").c_str()),
              "growth integrals");
    }
    return kOk;
}

int cmd_mc_check(Run& run) {
    json& mc = section(run.config, "mc");
    only_keys(mc, "/mc", {"probes", "n_paths", "dt_sim", "policy", "tau", "pde_tau", "bias_allowance", "threads"});
    const auto probes_x = get_numbers(mc, "/mc", "probes", {0.5});
    const std::size_t n_paths = get_count(mc, "/mc", "n_paths", 100000, 1);
    const double dt_sim = get_number(mc, "/mc", "dt_sim", 1e-4);
    const std::string policy_kind = get_string(mc, "/mc", "policy", "uniform", {"uniform", "optimal"});
    const double tau = get_number(mc, "/mc", "tau", 0.0);
    const double pde_tau = get_number(mc, "/mc", "pde_tau", tau);
    const double allowance = get_number(mc, "/mc", "bias_allowance", 5e-3);
    const std::size_t threads = get_count(mc, "/mc", "threads", 0, 0);
    if (tau < 0.0) config_fail("/mc/tau", "must be nonnegative");
    if (pde_tau < 0.0) config_fail("/mc/pde_tau", "must be nonnegative");

    Problem problem = load_problem(run.config);
    PolicyH policy;
    if (policy_kind == "uniform") {
        check(pmd_policy_uniform(problem.get(), policy.out()), "uniform policy");
    } else {
        HjbH sol;
        check(pmd_hjb_solve(problem.get(), tau, 0.0, 0, sol.out()), "HJB solve");
        check(pmd_hjb_policy(sol.get(), policy.out()), "optimal policy");
    }
    ValueH value;
    check(pmd_value_solve(problem.get(), policy.get(), pde_tau, value.out()), "PDE solve");

    std::vector<pmd_mc_result> raw;
    std::ostringstream table;
    table << "x,pde_value,mc_mean,mc_stderr,z_score\n";
    bool ok = true;
    for (std::size_t j = 0; j < probes_x.size(); ++j) {
        const double x = probes_x[j];
        pmd_mc_result r{};
        // Each probe draws from its own stream so adding probes leaves the others unchanged.
        check(pmd_mc_simulate(problem.get(), policy.get(), x, tau, n_paths, dt_sim, run.seed + j,
                              static_cast<unsigned>(threads), &r),
              "Monte Carlo");
        double pde = 0.0;
        check(pmd_value_at(problem.get(), value.get(), x, &pde), "PDE lookup");
        const double diff = r.mean - pde;
        const double z = r.std_error > 0.0 ? diff / r.std_error : (diff == 0.0 ? 0.0 : INFINITY);
        if (std::abs(diff) > 3.0 * r.std_error + allowance) ok = false;
        table << format_real(x) << ',' << format_real(pde) << ',' << format_real(r.mean) << ','
              << format_real(r.std_error) << ',' << format_real(z) << '\n';
        std::cout << "x=" << format_real(x) << " pde=" << format_real(pde) << " mc=" << format_real(r.mean)
                  << " stderr=" << format_real(r.std_error) << " z=" << format_real(z) << "\n";
        raw.push_back(r);
    }
    write_atomic(run.out_dir / "mc_check.csv", table.str());
    run.outputs.push_back("mc_check.csv");
    check(pmd_mc_write_csv(raw.data(), raw.size(), run.path("mc_raw.csv").c_str()), "writing MC table");
    if (!ok) {
        std::cerr << "mc-check: |mc - pde| exceeded 3 stderr + " << format_real(allowance) << " at some probe\n";
        return kCheckFailed;
    }
    return kOk;
}

int cmd_bias_sweep(Run& run) {
    json& bias = section(run.config, "bias");
    only_keys(bias, "/bias", {"taus", "ps", "alpha", "beta"});
    const auto taus = get_numbers(bias, "/bias", "taus", {1e-1, 1e-2, 1e-3, 1e-4});
    std::vector<double> default_ps;
    for (int j = 0; j <= 60; ++j) default_ps.push_back(-3.0 + 0.1 * j);
    const auto ps = get_numbers(bias, "/bias", "ps", default_ps);
    const double alpha = get_number(bias, "/bias", "alpha", -1.0);
    const double beta = get_number(bias, "/bias", "beta", 1.0);
    check(pmd_write_bias_sweep_csv(taus.data(), taus.size(), ps.data(), ps.size(), alpha, beta,
                                   run.path("bias_sweep.csv").c_str()),
          "bias sweep");
    return kOk;
}

json read_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliFailure{kValidation, "cannot open config file " + path};
    std::stringstream ss;
    ss << in.rdbuf();
    g_config_text = ss.str();
    g_config_path = path;
    try {
        return json::parse(g_config_text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t j = 0; j + 1 < e.byte && j < g_config_text.size(); ++j)
            if (g_config_text[j] == '\n') ++line;
        throw CliFailure{kValidation, path + ":" + std::to_string(line) + ": syntax error: " + e.what()};
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropy-annealed policy mirror descent experiments"};
    app.set_version_flag("--version", std::string(pmd_version()));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("config", config_path, "JSON configuration file");
        if (config_required) opt->required();
        sub->add_option("-o,--out", out_dir, "output directory (default: $PMD_OUTPUT_DIR, then output_dir key, then ./pmd_out)");
        sub->add_option("--seed", seed, "random seed (overrides the seed key)");
        sub->add_option("--set", overrides, "override a config key, e.g. --set flow.horizon=20")->take_all();
    };
    auto* solve = app.add_subcommand("solve-hjb", "solve the regularized and unregularized HJB equations");
    auto* flow = app.add_subcommand("run-flow", "integrate the mirror descent flow");
    auto* sweep = app.add_subcommand("sweep-bounds", "evaluate the theoretical error bounds over beta and S");
    auto* figure = app.add_subcommand("reproduce-figure", "sweep-bounds with the default beta and S grids");
    auto* mc = app.add_subcommand("mc-check", "compare PDE values with Monte Carlo estimates");
    auto* bias = app.add_subcommand("bias-sweep", "tabulate the interval-quadratic softmin bias");
    add_common(solve, true);
    add_common(flow, true);
    add_common(sweep, true);
    add_common(figure, false);
    add_common(mc, true);
    add_common(bias, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        Run run;
        run.command = app.get_subcommands().front()->get_name();
        run.config = config_path.empty() ? json::object() : read_config(config_path);
        if (!run.config.is_object()) throw CliFailure{kValidation, config_path + ": top level must be an object"};
        for (const auto& o : overrides) apply_override(run.config, o);
        if (!overrides.empty()) g_config_text = run.config.dump(2);
        for (const auto& item : run.config.items())
            if (!kTopLevel.count(item.key())) config_fail("/" + item.key(), "unknown key");

        if (seed >= 0) run.config["seed"] = static_cast<std::uint64_t>(seed);
        if (!run.config.contains("seed")) run.config["seed"] = std::uint64_t{0};
        if (!run.config["seed"].is_number_unsigned()) config_fail("/seed", "expected a nonnegative integer");
        run.seed = run.config["seed"].get<std::uint64_t>();

        if (!out_dir.empty()) {
            run.out_dir = out_dir;
        } else if (const char* env = std::getenv("PMD_OUTPUT_DIR"); env && *env) {
            run.out_dir = env;
        } else if (run.config.contains("output_dir")) {
            if (!run.config["output_dir"].is_string()) config_fail("/output_dir", "expected a string");
            run.out_dir = run.config["output_dir"].get<std::string>();
        } else {
            run.out_dir = "pmd_out";
        }
        // The output location does not influence results, so it stays out of the digest.
        run.config.erase("output_dir");
        fs::create_directories(run.out_dir);

        int code = kOk;
        if (run.command == "solve-hjb") code = cmd_solve_hjb(run);
        else if (run.command == "run-flow") code = cmd_run_flow(run);
        else if (run.command == "sweep-bounds") code = cmd_sweep_bounds(run, false);
        else if (run.command == "reproduce-figure") code = cmd_sweep_bounds(run, true);
        else if (run.command == "mc-check") code = cmd_mc_check(run);
        else if (run.command == "bias-sweep") code = cmd_bias_sweep(run);
        write_manifest(run);
        std::cout << "wrote " << run.outputs.size() << " file(s) to " << run.out_dir.string() << "\n";
        return code;
    } catch (const CliFailure& f) {
        std::cerr << "error: " << f.message << "\n";
        return f.code;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
}

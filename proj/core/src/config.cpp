#include "graphon_mfc/config.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "graphon_mfc/assumptions.hpp"
#include "graphon_mfc/bellman.hpp"
#include "graphon_mfc/calculus.hpp"
#include "graphon_mfc/fixedpoint.hpp"
#include "graphon_mfc/io.hpp"
#include "graphon_mfc/lq.hpp"
#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/simulate.hpp"

namespace gmfc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected an object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(ctx + ": missing required key '" + key + "'");
    return *it;
}

double num_or(const json& obj, const char* key, double fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw ConfigError(std::string("expected number for '") + key + "'");
    return it->get<double>();
}

std::size_t size_or(const json& obj, const char* key, std::size_t fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number_unsigned() && !it->is_number_integer()) {
        throw ConfigError(std::string("expected nonnegative integer for '") + key + "'");
    }
    const auto v = it->get<long long>();
    if (v < 0) throw ConfigError(std::string("expected nonnegative integer for '") + key + "'");
    return static_cast<std::size_t>(v);
}

std::string str_or(const json& obj, const char* key, const std::string& fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_string()) throw ConfigError(std::string("expected string for '") + key + "'");
    return it->get<std::string>();
}

std::vector<double> vec_of(const json& j, const std::string& ctx) {
    if (!j.is_array()) throw ConfigError(ctx + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError(ctx + ": expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::string hash_hex(const json& canonical) {
    // FNV-1a over the canonical (key-sorted) dump
    const std::string s = canonical.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

LabelGrid parse_grid(const json& j) {
    check_keys(j, "grid", {"labels", "weights", "uniform", "total_mass"});
    if (j.contains("uniform")) {
        return LabelGrid::uniform(size_or(j, "uniform", 1), num_or(j, "total_mass", 1.0));
    }
    return LabelGrid(vec_of(require(j, "labels", "grid"), "grid.labels"),
                     vec_of(require(j, "weights", "grid"), "grid.weights"));
}

std::shared_ptr<const Graphon> parse_graphon(const json& j, const LabelGrid& grid) {
    check_keys(j, "graphon", {"kind", "value", "matrix"});
    const std::string kind = str_or(j, "kind", "constant");
    if (kind == "constant") {
        return std::make_shared<Graphon>(Graphon::constant(grid, num_or(j, "value", 1.0)));
    }
    if (kind == "product") return std::make_shared<Graphon>(Graphon::product(grid));
    if (kind == "identity") return std::make_shared<Graphon>(Graphon::identity(grid));
    if (kind == "matrix") {
        return std::make_shared<Graphon>(
            Graphon::from_matrix(grid, vec_of(require(j, "matrix", "graphon"), "graphon.matrix")));
    }
    throw ConfigError("graphon.kind: expected constant|product|identity|matrix");
}

LabelPoly parse_poly(const json& j, const std::string& ctx) {
    if (j.is_number()) return LabelPoly{{j.get<double>()}};
    return LabelPoly{vec_of(j, ctx)};
}

CoefficientSet parse_model(const json& j, const LabelGrid& grid,
                           std::shared_ptr<const Graphon> graphon) {
    const std::string family = str_or(j, "family", "");
    if (family == "graphon-lq") {
        check_keys(j, "model", {"family", "state_cost", "sigma0", "action_half_width"});
        return make_graphon_lq(grid, std::move(graphon),
                               parse_poly(require(j, "state_cost", "model"), "model.state_cost"),
                               num_or(j, "sigma0", 0.5), num_or(j, "action_half_width", 6.0));
    }
    if (family == "graphon-mean-reversion") {
        check_keys(j, "model",
                   {"family", "kappa", "sigma0", "sigma1", "cost_x2", "cost_g_x2"});
        MeanReversionParams p;
        p.kappa = num_or(j, "kappa", 0.25);
        p.sigma0 = num_or(j, "sigma0", 0.2);
        p.sigma1 = num_or(j, "sigma1", 0.0);
        p.cost_x2 = num_or(j, "cost_x2", 0.0);
        p.cost_g_x2 = num_or(j, "cost_g_x2", 0.0);
        return make_graphon_mean_reversion(grid, std::move(graphon), p);
    }
    if (family == "custom-polynomial") {
        check_keys(j, "model",
                   {"family", "b0", "b_x", "b_a", "b_own_mean", "b_nbhd", "s0", "s_x", "s_nbhd",
                    "f_a2", "f_x2", "f_track", "g_x2", "g_x", "action_half_width"});
        PolynomialParams p;
        if (j.contains("b0")) p.b0 = parse_poly(j.at("b0"), "model.b0");
        p.b_x = num_or(j, "b_x", 0.0);
        p.b_a = num_or(j, "b_a", 0.0);
        p.b_own_mean = num_or(j, "b_own_mean", 0.0);
        p.b_nbhd = num_or(j, "b_nbhd", 0.0);
        if (j.contains("s0")) p.s0 = parse_poly(j.at("s0"), "model.s0");
        p.s_x = num_or(j, "s_x", 0.0);
        p.s_nbhd = num_or(j, "s_nbhd", 0.0);
        p.f_a2 = num_or(j, "f_a2", 0.0);
        p.f_x2 = num_or(j, "f_x2", 0.0);
        p.f_track = num_or(j, "f_track", 0.0);
        p.g_x2 = num_or(j, "g_x2", 0.0);
        p.g_x = num_or(j, "g_x", 0.0);
        p.action_half_width = num_or(j, "action_half_width", 4.0);
        return make_custom_polynomial(grid, std::move(graphon), p);
    }
    throw ConfigError("model.family: expected graphon-lq|graphon-mean-reversion|custom-polynomial");
}

QuantileMap parse_init(const json& j) {
    check_keys(j, "init",
               {"family", "point", "mean", "mean_slope", "sd", "sd_slope", "lo", "hi"});
    const std::string family = str_or(j, "family", "gaussian");
    if (family == "constant") {
        return quantile_maps::constant(vec_of(require(j, "point", "init"), "init.point"));
    }
    if (family == "gaussian") {
        return quantile_maps::gaussian(num_or(j, "mean", 0.0), num_or(j, "mean_slope", 0.0),
                                       num_or(j, "sd", 1.0), num_or(j, "sd_slope", 0.0), 1);
    }
    if (family == "uniform") {
        return quantile_maps::uniform(num_or(j, "lo", 0.0), num_or(j, "hi", 1.0), 1);
    }
    if (family == "label") return quantile_maps::label_value(1);
    throw ConfigError("init.family: expected constant|gaussian|uniform|label");
}

struct SimSpec {
    double t0 = 0.0;
    double horizon_end = 1.0;
    std::size_t steps = 100;
    std::size_t particles = 1000;
    bool store_flow = false;
};

SimSpec parse_sim(const json& j) {
    check_keys(j, "sim", {"t0", "T", "steps", "particles", "store_flow"});
    SimSpec s;
    s.t0 = num_or(j, "t0", 0.0);
    s.horizon_end = num_or(j, "T", 1.0);
    s.steps = size_or(j, "steps", 100);
    s.particles = size_or(j, "particles", 1000);
    if (auto it = j.find("store_flow"); it != j.end()) {
        if (!it->is_boolean()) throw ConfigError("sim.store_flow: expected boolean");
        s.store_flow = it->get<bool>();
    }
    if (!(s.horizon_end > s.t0)) throw ConfigError("sim: need T > t0");
    if (s.steps == 0 || s.particles == 0) throw ConfigError("sim: steps and particles must be >= 1");
    return s;
}

ScalarField parse_field(const json& j) {
    check_keys(j, "field", {"dim", "scale_u", "c0", "c1", "c2", "bump"});
    const std::size_t dim = size_or(j, "dim", 1);
    LabelPoly scale{{1.0}};
    if (j.contains("scale_u")) scale = parse_poly(j.at("scale_u"), "field.scale_u");
    const double c0 = num_or(j, "c0", 0.0);
    std::vector<double> c1, c2;
    if (j.contains("c1")) c1 = vec_of(j.at("c1"), "field.c1");
    if (j.contains("c2")) c2 = vec_of(j.at("c2"), "field.c2");
    std::optional<ScalarField::Bump> bump;
    if (j.contains("bump")) {
        const json& b = j.at("bump");
        check_keys(b, "field.bump", {"amplitude", "center", "width"});
        bump = ScalarField::Bump{num_or(b, "amplitude", 0.0),
                                 vec_of(require(b, "center", "field.bump"), "field.bump.center"),
                                 num_or(b, "width", 1.0)};
    }
    return ScalarField(dim, std::move(scale), c0, std::move(c1), std::move(c2), std::move(bump));
}

SmoothMap parse_map(const json& j) {
    check_keys(j, "map", {"f0", "f", "h"});
    SmoothMap m;
    m.f0 = num_or(j, "f0", 0.0);
    m.f = vec_of(require(j, "f", "map"), "map.f");
    if (j.contains("h")) m.h = vec_of(j.at("h"), "map.h");
    return m;
}

TestFunction parse_test_function(const json& j) {
    check_keys(j, "test_function", {"family", "phi", "map", "fields", "tau", "eta"});
    const std::string family = str_or(j, "family", "linear");
    std::vector<ScalarField> fields;
    if (j.contains("fields")) {
        for (const auto& f : j.at("fields")) fields.push_back(parse_field(f));
    }
    TestFunction tf = [&]() {
        if (family == "linear") return TestFunction::linear(parse_field(require(j, "phi", "test_function")));
        if (family == "cylindrical-per-label") {
            return TestFunction::cylindrical_per_label(parse_map(require(j, "map", "test_function")),
                                                       std::move(fields));
        }
        if (family == "cylindrical-of-collection") {
            return TestFunction::cylindrical_of_collection(
                parse_map(require(j, "map", "test_function")), std::move(fields));
        }
        if (family == "k-interaction") return TestFunction::k_interaction(std::move(fields));
        throw ConfigError(
            "test_function.family: expected linear|cylindrical-per-label|"
            "cylindrical-of-collection|k-interaction");
    }();
    if (j.contains("tau") || j.contains("eta")) {
        LabelPoly tau{{1.0}}, eta{{0.0}};
        if (j.contains("tau")) tau = parse_poly(j.at("tau"), "test_function.tau");
        if (j.contains("eta")) eta = parse_poly(j.at("eta"), "test_function.eta");
        tf.with_time(std::move(tau), std::move(eta));
    }
    return tf;
}

struct LoadedConfig {
    json raw;
    std::string hash;
    std::string task;
    std::uint64_t seed = 0;
    LabelGrid grid;
    std::shared_ptr<const Graphon> graphon;
};

Policy parse_policy(const json& j, const LoadedConfig& cfg, const json& root) {
    check_keys(j, "policy", {"kind", "action", "shift"});
    const std::string kind = str_or(j, "kind", "zero");
    if (kind == "zero") return Policy::constant_action({0.0});
    if (kind == "constant") {
        return Policy::constant_action(vec_of(require(j, "action", "policy"), "policy.action"));
    }
    if (kind == "lq-oracle" || kind == "lq-perturbed") {
        const json& model = require(root, "model", "config");
        if (str_or(model, "family", "") != "graphon-lq") {
            throw ConfigError("policy." + kind + " requires model.family == graphon-lq");
        }
        const json& sim = require(root, "sim", "config");
        LQParams params;
        params.grid = cfg.grid;
        params.graphon = cfg.graphon;
        params.state_cost = parse_poly(require(model, "state_cost", "model"), "model.state_cost");
        params.sigma0 = num_or(model, "sigma0", 0.5);
        params.action_half_width = num_or(model, "action_half_width", 6.0);
        params.horizon = num_or(sim, "T", 1.0);
        auto bench = build_lq_benchmark(params);
        if (kind == "lq-oracle") return bench->oracle_feedback();
        return bench->perturbed_feedback(num_or(j, "shift", 0.5));
    }
    throw ConfigError("policy.kind: expected zero|constant|lq-oracle|lq-perturbed");
}

json cost_json(const CostEstimate& c) {
    return json{{"value", c.value}, {"std_error", c.std_error}};
}

class ArtifactWriter {
public:
    ArtifactWriter(fs::path dir, const LoadedConfig& cfg) : dir_(std::move(dir)), cfg_(&cfg) {
        fs::create_directories(dir_);
    }
    void json_file(const std::string& name, const json& j) {
        io::write_text((dir_ / name).string(), j.dump(2) + "\n");
        outputs_.push_back(name);
    }
    void collection(const std::string& stem, const MeasureCollection& mc) {
        io::write_collection_csv((dir_ / (stem + ".csv")).string(), mc);
        io::write_collection_header((dir_ / (stem + ".header.json")).string(), mc, cfg_->seed,
                                    cfg_->task, cfg_->hash);
        outputs_.push_back(stem + ".csv");
        outputs_.push_back(stem + ".header.json");
    }
    void flow(const std::string& name, const MeasureFlow& f) {
        io::write_flow_csv((dir_ / name).string(), f);
        outputs_.push_back(name);
    }
    void text(const std::string& name, const std::string& content) {
        io::write_text((dir_ / name).string(), content);
        outputs_.push_back(name);
    }
    void manifest(double wall_seconds) {
        json m;
        m["config_hash"] = cfg_->hash;
        m["seed"] = cfg_->seed;
        m["tool_version"] = kToolVersion;
        m["wall_time_s"] = wall_seconds;
        m["outputs"] = outputs_;
        io::write_text((dir_ / "manifest.json").string(), m.dump(2) + "\n");
    }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    const LoadedConfig* cfg_;
    std::vector<std::string> outputs_;
};

int dispatch(const LoadedConfig& cfg, const json& root, ArtifactWriter& artifacts,
             std::ostream& diagnostics) {
    const json empty = json::object();
    const auto section = [&](const char* key) -> const json& {
        auto it = root.find(key);
        return it == root.end() ? empty : *it;
    };

    if (cfg.task == "assumptions") {
        const CoefficientSet coeffs = parse_model(require(root, "model", "config"), cfg.grid,
                                                  cfg.graphon);
        const json& spec = section("assumptions");
        check_keys(spec, "assumptions", {"probes"});
        const auto report = validate_coefficients(coeffs, size_or(spec, "probes", 200), cfg.seed);
        artifacts.json_file("assumptions.json",
                            json{{"samples", report.samples},
                                 {"lipschitz_b", report.lipschitz_b},
                                 {"lipschitz_sigma", report.lipschitz_sigma},
                                 {"growth", report.growth},
                                 {"strengthened_growth", report.strengthened_growth},
                                 {"holder_f", report.holder_f},
                                 {"holder_g", report.holder_g},
                                 {"declared",
                                  json{{"lipschitz", coeffs.constants.lipschitz},
                                       {"growth", coeffs.constants.growth},
                                       {"holder", coeffs.constants.holder}}},
                                 {"lipschitz_ok", report.lipschitz_ok},
                                 {"growth_ok", report.growth_ok},
                                 {"strengthened_ok", report.strengthened_ok},
                                 {"holder_ok", report.holder_ok}});
        return 0;
    }

    if (cfg.task == "lq-benchmark") {
        const json& spec = require(root, "lq", "config");
        check_keys(spec, "lq",
                   {"state_cost", "sigma0", "horizon", "action_half_width", "ode_nodes",
                    "csv_stride"});
        LQParams params;
        params.grid = cfg.grid;
        params.graphon = cfg.graphon;
        params.state_cost = parse_poly(require(spec, "state_cost", "lq"), "lq.state_cost");
        params.sigma0 = num_or(spec, "sigma0", 0.5);
        params.horizon = num_or(spec, "horizon", 1.0);
        params.action_half_width = num_or(spec, "action_half_width", 6.0);
        params.ode_nodes = size_or(spec, "ode_nodes", 4001);
        auto bench = build_lq_benchmark(params);

        const std::size_t stride = std::max<std::size_t>(1, size_or(spec, "csv_stride", 10));
        std::ostringstream csv;
        const std::size_t k = cfg.grid.size();
        csv << "t";
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) csv << ",P_" << r << "_" << c;
        }
        for (std::size_t r = 0; r < k; ++r) csv << ",p_" << r;
        for (std::size_t r = 0; r < k; ++r) csv << ",r_" << r;
        csv << "\n";
        for (std::size_t i = 0; i < bench->node_count(); i += stride) {
            csv << io::format17(bench->node_time(i));
            for (double v : bench->mean_riccati_node(i)) csv << ',' << io::format17(v);
            for (double v : bench->fluct_riccati_node(i)) csv << ',' << io::format17(v);
            for (double v : bench->offset_node(i)) csv << ',' << io::format17(v);
            csv << "\n";
        }
        artifacts.text("lq_oracle.csv", csv.str());

        const SimSpec sim = parse_sim(section("sim"));
        const QuantileMap init_map =
            root.contains("init") ? parse_init(root.at("init"))
                                  : quantile_maps::gaussian(0.0, 0.0, 1.0, 0.0, 1);
        const ParticleEnsemble ens =
            make_ensemble(init_map, cfg.grid, 1, sim.particles, cfg.seed);
        const auto report = verify_policy(bench->coefficients(), *bench,
                                          bench->oracle_feedback(), ens, 0.0, params.horizon,
                                          sim.steps, cfg.seed);
        artifacts.json_file(
            "lq_report.json",
            json{{"phi_at_init", report.phi_at_init},
                 {"simulated_cost", cost_json(report.simulated_cost)},
                 {"sampled_times", report.sampled_times},
                 {"bellman_residuals", report.bellman_residuals},
                 {"max_abs_bellman_residual", report.max_abs_bellman_residual},
                 {"terminal_residual", report.terminal_residual},
                 {"max_ode_residual", bench->max_ode_residual()},
                 {"oracle_refs", json::array({"riccati-mean", "riccati-fluctuation"})}});
        return 0;
    }

    // remaining tasks share model/init/sim/policy
    const CoefficientSet coeffs =
        parse_model(require(root, "model", "config"), cfg.grid, cfg.graphon);
    const SimSpec sim = parse_sim(require(root, "sim", "config"));
    const QuantileMap init_map = parse_init(require(root, "init", "config"));
    const Policy policy = parse_policy(section("policy").is_object() && !section("policy").empty()
                                           ? section("policy")
                                           : json{{"kind", "zero"}},
                                       cfg, root);
    const ParticleEnsemble ens =
        make_ensemble(init_map, cfg.grid, coeffs.state_dim, sim.particles, cfg.seed);

    if (cfg.task == "simulate") {
        SimOptions opts;
        opts.store_paths = sim.store_flow;
        const SimulationResult res =
            simulate(coeffs, policy, ens, sim.t0, sim.horizon_end, sim.steps, cfg.seed, opts);
        artifacts.collection("final_state", res.final_ensemble.collection());
        const CostEstimate c = cost(coeffs, res);
        artifacts.json_file("cost.json",
                            json{{"cost", cost_json(c)},
                                 {"action_square_integral",
                                  res.diagnostics.action_square_integral},
                                 {"max_abs_state", res.diagnostics.max_abs_state},
                                 {"steps", res.diagnostics.steps}});
        if (sim.store_flow) artifacts.flow("flow.csv", res.flow);
        return 0;
    }

    if (cfg.task == "picard") {
        const json& spec = section("picard");
        check_keys(spec, "picard", {"max_iters", "tol", "auto_split"});
        PicardOptions opts;
        opts.max_iters = size_or(spec, "max_iters", 50);
        opts.tol = num_or(spec, "tol", 1e-3);
        if (auto it = spec.find("auto_split"); it != spec.end()) opts.auto_split = it->get<bool>();
        const PicardResult pr = picard_solve(coeffs, policy, ens, sim.t0, sim.horizon_end,
                                             sim.steps, cfg.seed, opts);
        json out;
        out["converged"] = pr.state.converged;
        out["iterations"] = pr.state.iterate_index;
        if (pr.state.converged) {
            out["converged_at_iteration"] = pr.state.distance_history.size() - 1;
        } else {
            out["converged_at_iteration"] = nullptr;
        }
        out["distance_history"] = pr.state.distance_history;
        out["contraction_ratios"] = pr.state.contraction_ratios;
        out["segment_starts"] = pr.state.segment_starts;
        artifacts.json_file("picard.json", out);
        artifacts.collection("fixed_point_terminal",
                             pr.flow.collection_at(pr.flow.time_grid().size() - 1));
        if (sim.store_flow) artifacts.flow("fixed_point_flow.csv", pr.flow);
        if (!pr.state.converged) {
            diagnostics << "picard: not converged within max_iters\n";
            return 4;
        }
        return 0;
    }

    if (cfg.task == "ito-verify") {
        const json& spec = require(root, "ito", "config");
        check_keys(spec, "ito", {"test_function", "quadrature"});
        const TestFunction tf = parse_test_function(require(spec, "test_function", "ito"));
        const std::string quad_name = str_or(spec, "quadrature", "midpoint");
        TimeQuadrature quad;
        if (quad_name == "midpoint") {
            quad = TimeQuadrature::kMidpoint;
        } else if (quad_name == "left") {
            quad = TimeQuadrature::kLeftEndpoint;
        } else {
            throw ConfigError("ito.quadrature: expected midpoint|left");
        }
        const ItoReport report = ito_residual_streaming(
            tf, coeffs, policy, ens, TimeWindow::span(sim.t0, sim.horizon_end, sim.steps),
            cfg.seed, quad);
        artifacts.json_file("ito.json", json{{"lhs", report.lhs},
                                             {"rhs", report.rhs},
                                             {"residual", report.residual},
                                             {"quadrature", quad_name}});
        return 0;
    }

    if (cfg.task == "bellman-residual") {
        const json& spec = require(root, "bellman", "config");
        check_keys(spec, "bellman", {"t", "actions_per_dim", "candidate"});
        FeedbackSearch search;
        search.actions_per_dim = size_or(spec, "actions_per_dim", 41);
        const double t = num_or(spec, "t", sim.t0);
        const json& cand = require(spec, "candidate", "bellman");
        check_keys(cand, "bellman.candidate", {"kind", "spec"});
        const std::string kind = str_or(cand, "kind", "zero");
        std::shared_ptr<const CandidateValue> phi;
        json oracle_refs = json::array();
        if (kind == "zero") {
            phi = std::make_shared<TestFunctionCandidate>(
                TestFunction::linear(ScalarField::constant(1, 0.0)));
        } else if (kind == "test-function") {
            phi = std::make_shared<TestFunctionCandidate>(
                parse_test_function(require(cand, "spec", "bellman.candidate")));
        } else if (kind == "lq-oracle") {
            const json& model = require(root, "model", "config");
            if (str_or(model, "family", "") != "graphon-lq") {
                throw ConfigError("bellman.candidate lq-oracle requires model.family graphon-lq");
            }
            LQParams params;
            params.grid = cfg.grid;
            params.graphon = cfg.graphon;
            params.state_cost =
                parse_poly(require(model, "state_cost", "model"), "model.state_cost");
            params.sigma0 = num_or(model, "sigma0", 0.5);
            params.action_half_width = num_or(model, "action_half_width", 6.0);
            params.horizon = sim.horizon_end;
            phi = build_lq_benchmark(params);
            oracle_refs.push_back("riccati-mean");
            oracle_refs.push_back("riccati-fluctuation");
        } else {
            throw ConfigError("bellman.candidate.kind: expected zero|test-function|lq-oracle");
        }
        const BellmanReport report = bellman_report(coeffs, *phi, t, ens.collection(), search);
        artifacts.json_file("bellman.json",
                            json{{"residual", report.residual},
                                 {"grid_resolution", report.grid_resolution},
                                 {"partial_t", report.partial_t},
                                 {"minimized_hamiltonian", report.minimized_value},
                                 {"stderr", 0.0},
                                 {"oracle_refs", oracle_refs}});
        return 0;
    }

    if (cfg.task == "dpp-check") {
        const json& spec = require(root, "dpp", "config");
        check_keys(spec, "dpp", {"theta", "actions"});
        const double theta = num_or(spec, "theta", 0.5 * (sim.t0 + sim.horizon_end));
        std::vector<Policy> grid_controls;
        for (const auto& a : require(spec, "actions", "dpp")) {
            grid_controls.push_back(Policy::constant_action(vec_of(a, "dpp.actions[i]")));
        }
        const DppReport report = dpp_check(coeffs, grid_controls, ens, sim.t0, theta,
                                           sim.horizon_end, sim.steps, cfg.seed);
        artifacts.json_file("dpp.json", json{{"lhs", report.lhs},
                                             {"rhs", report.rhs},
                                             {"gap", report.gap},
                                             {"lhs_se", report.lhs_se},
                                             {"rhs_se", report.rhs_se},
                                             {"pooled_se", report.pooled_se},
                                             {"branches", report.branches}});
        return 0;
    }

    throw ConfigError("unknown task: " + cfg.task);
}

const std::vector<std::string> kTasks = {
    "simulate", "picard", "ito-verify", "bellman-residual",
    "dpp-check", "lq-benchmark", "assumptions",
};

}  // namespace

const std::vector<std::string>& task_names() { return kTasks; }

int run_task(const RunOptions& options, std::ostream& diagnostics) {
    json root;
    std::string raw_bytes;
    try {
        raw_bytes = io::read_text(options.config_path);
        root = json::parse(raw_bytes);
    } catch (const std::exception& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "invalid-config"}}.dump() << "\n";
        return 2;
    }

    try {
        check_keys(root, "config",
                   {"task", "seed", "output", "grid", "graphon", "model", "init", "sim", "policy",
                    "picard", "ito", "bellman", "dpp", "lq", "assumptions"});
        LoadedConfig cfg;
        cfg.raw = root;
        cfg.hash = hash_hex(root);
        cfg.task = require(root, "task", "config").get<std::string>();
        bool task_known = false;
        for (const auto& name : kTasks) task_known = task_known || name == cfg.task;
        if (!task_known) throw ConfigError("unknown task: " + cfg.task);

        cfg.seed = static_cast<std::uint64_t>(size_or(root, "seed", 0));
        if (const char* env_seed = std::getenv("GRAPHON_MFC_SEED")) {
            cfg.seed = std::strtoull(env_seed, nullptr, 10);
        }
        cfg.grid = parse_grid(require(root, "grid", "config"));
        cfg.graphon = root.contains("graphon")
                          ? parse_graphon(root.at("graphon"), cfg.grid)
                          : std::make_shared<Graphon>(Graphon::constant(cfg.grid));

#ifdef _OPENMP
        if (options.threads > 0) omp_set_num_threads(options.threads);
#endif

        fs::path out_dir;
        if (!options.out_dir.empty()) {
            out_dir = options.out_dir;
        } else if (root.contains("output")) {
            check_keys(root.at("output"), "output", {"dir"});
            out_dir = require(root.at("output"), "dir", "output").get<std::string>();
        } else {
            out_dir = fs::path("runs") / cfg.task;
        }
        ArtifactWriter artifacts(out_dir, cfg);
        artifacts.text("config.json", raw_bytes);

        const auto start = std::chrono::steady_clock::now();
        const int code = dispatch(cfg, root, artifacts, diagnostics);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        artifacts.manifest(wall);
        return code;
    } catch (const ConfigError& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "invalid-config"}}.dump() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "invalid-config"}}.dump() << "\n";
        return 2;
    } catch (const json::exception& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "invalid-config"}}.dump() << "\n";
        return 2;
    } catch (const NonConvergence& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "non-convergence"}}.dump() << "\n";
        return 4;
    } catch (const std::exception& e) {
        diagnostics << json{{"error", e.what()}, {"kind", "numerical-failure"}}.dump() << "\n";
        return 3;
    }
}

int describe_task(const std::string& task, std::ostream& out) {
    static const std::string common =
        "  seed: integer (env GRAPHON_MFC_SEED overrides)\n"
        "  output.dir: string (or --out DIR)\n"
        "  grid: {uniform: K, total_mass: 1.0} or {labels: [...], weights: [...]}\n"
        "  graphon: {kind: constant|product|identity|matrix, value: 1.0, matrix: [...]}\n"
        "  model: {family: graphon-lq|graphon-mean-reversion|custom-polynomial, ...}\n"
        "  init: {family: constant|gaussian|uniform|label, ...} (defaults: gaussian mean 0 sd 1)\n"
        "  sim: {t0: 0, T: 1, steps: 100, particles: 1000, store_flow: false}\n"
        "  policy: {kind: zero|constant|lq-oracle|lq-perturbed, action: [...], shift: 0.5}\n";
    if (task == "simulate") {
        out << "task simulate: Euler-Maruyama run; writes final_state.csv(+header), cost.json\n"
            << common;
    } else if (task == "picard") {
        out << "task picard: McKean-Vlasov fixed point by Picard iteration on measure flows;\n"
               "writes picard.json, fixed_point_terminal.csv\n"
            << common
            << "  picard: {max_iters: 50, tol: 1e-3, auto_split: false}\n";
    } else if (task == "ito-verify") {
        out << "task ito-verify: chain-rule residual along the simulated flow; writes ito.json\n"
            << common
            << "  ito: {test_function: {family: linear|cylindrical-per-label|"
               "cylindrical-of-collection|k-interaction, ...}, quadrature: midpoint|left}\n";
    } else if (task == "bellman-residual") {
        out << "task bellman-residual: dynamic programming residual of a smooth candidate at "
               "(t, mu);\nwrites bellman.json\n"
            << common
            << "  bellman: {t: 0.0, actions_per_dim: 41, candidate: {kind: "
               "zero|test-function|lq-oracle, spec: {...}}}\n";
    } else if (task == "dpp-check") {
        out << "task dpp-check: two-stage nested optimization gap over a finite control grid;\n"
               "writes dpp.json\n"
            << common << "  dpp: {theta: midpoint of [t0,T], actions: [[a], [a'], ...]}\n";
    } else if (task == "lq-benchmark") {
        out << "task lq-benchmark: Riccati oracle trajectories plus verification report;\n"
               "writes lq_oracle.csv, lq_report.json\n"
            << common
            << "  lq: {state_cost: [c0, c1, ...], sigma0: 0.5, horizon: 1.0, "
               "action_half_width: 6.0, ode_nodes: 4001, csv_stride: 10}\n";
    } else if (task == "assumptions") {
        out << "task assumptions: numeric probes of the Lipschitz/growth/Holder constants;\n"
               "writes assumptions.json\n"
            << common << "  assumptions: {probes: 200}\n";
    } else {
        out << "unknown task '" << task << "'; valid tasks:";
        for (const auto& name : kTasks) out << ' ' << name;
        out << "\n";
        return 2;
    }
    return 0;
}

}  // namespace gmfc

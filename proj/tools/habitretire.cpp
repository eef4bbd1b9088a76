// Command-line front end: solves a scenario and writes the figure-data CSVs.

#include "habitretire/config.hpp"
#include "habitretire/csv.hpp"
#include "habitretire/products.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#ifndef HABITRETIRE_VERSION
#define HABITRETIRE_VERSION "unknown"
#endif

namespace hr = habitretire;

namespace {

/// 0 quiet, 1 progress, 2 timings; from HABITRETIRE_LOG (quiet|info|debug or 0|1|2).
int log_level() {
    const char* v = std::getenv("HABITRETIRE_LOG");
    if (!v) return 0;
    const std::string s(v);
    if (s == "debug" || s == "2") return 2;
    if (s == "info" || s == "1") return 1;
    return 0;
}

void log(int level, const std::string& msg) {
    if (log_level() >= level) std::cerr << "[habitretire] " << msg << '\n';
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const char* kFigureMap = R"(Figure -> product:
  z*(t) curves                         dual_boundary
  boundary in (y,w); y-axis at w = 1   yw_boundary@w=...
  boundary plane in (x,h,w)            xhw_plane@t=0;5;8
  boundary in (x,h) at w = 1           xh_slice@w=1
  critical habit in (h,t), x=80, w=1   h_curve@x=80,w=1,alpha=0.1;0.2;0.3
  critical wealth in (x,t), h=6, w=1   x_curve@h=6,w=1,alpha=0.1;0.2;0.3
  optimal consumption at t = 0, 8      c_surface@t=0, c_surface@t=8
  optimal portfolio proportion         pi_surface@t=0, pi_surface@t=8
  w_z and V~_z at t = 8                wz_slice@t=8
Other products: simulation, validate.
Environment: HABITRETIRE_LOG=quiet|info|debug.)";

struct Options {
    std::string config;
    std::string preset;
    std::string out = "out";
    bool parallel = false;
    bool no_provenance = false;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> products;
};

hr::ScenarioConfig make_config(const Options& o) {
    hr::ScenarioConfig cfg;
    if (!o.config.empty()) {
        cfg = hr::load_config(o.config, o.preset);
    } else {
        nlohmann::json j = nlohmann::json::object();
        cfg = hr::parse_config(j, o.preset.empty() ? "gamma15" : o.preset);
    }
    if (o.seed) cfg.sim.seed = *o.seed;
    if (o.no_provenance) cfg.provenance = false;
    std::vector<std::string> errs;
    for (const auto& p : o.products)
        if (auto pr = hr::parse_product(p, errs)) cfg.outputs.push_back(*pr);
    if (!errs.empty()) throw hr::ConfigError(errs);
    return cfg;
}

std::filesystem::path prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw hr::ConfigError({"output directory '" + dir + "' cannot be created"});
    const auto probe = std::filesystem::path(dir) / ".habitretire_write_test";
    {
        std::ofstream f(probe);
        if (!f) throw hr::ConfigError({"output directory '" + dir + "' is not writable"});
    }
    std::filesystem::remove(probe, ec);
    return dir;
}

void write_table(const std::filesystem::path& dir, const hr::NamedTable& t, const std::string& provenance) {
    const auto path = dir / (t.stem + ".csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw hr::Error("cannot write '" + path.string() + "'");
    hr::write_csv(f, t.table, provenance);
    log(1, "wrote " + path.string() + " (" + std::to_string(t.table.rows.size()) + " rows)");
}

/// Runs the requested products and writes one CSV per table; returns the validate outcome (true if none ran).
bool run_products(const hr::ScenarioConfig& cfg, const Options& o) {
    if (cfg.outputs.empty()) throw hr::ConfigError({"no products requested (config.outputs or --product)"});
    const auto dir = prepare_out_dir(o.out);
    hr::Scenario sc(cfg);
    Stopwatch sw;
    log(1, "preset " + cfg.preset + ", params " + hr::parameter_hash(cfg.model, cfg.grids));
    sc.prepare(cfg.outputs);
    log(2, "artifacts ready after " + hr::format_double(sw.seconds()) + " s");

    std::vector<std::vector<hr::NamedTable>> results(cfg.outputs.size());
    if (o.parallel) {
        std::vector<std::future<std::vector<hr::NamedTable>>> fut;
        for (const auto& r : cfg.outputs) fut.push_back(std::async(std::launch::async, [&sc, r] { return sc.build(r); }));
        for (std::size_t i = 0; i < fut.size(); ++i) results[i] = fut[i].get();
    } else {
        for (std::size_t i = 0; i < cfg.outputs.size(); ++i) {
            Stopwatch ps;
            results[i] = sc.build(cfg.outputs[i]);
            log(2, cfg.outputs[i].text + " took " + hr::format_double(ps.seconds()) + " s");
        }
    }

    bool all_pass = true;
    for (std::size_t i = 0; i < cfg.outputs.size(); ++i) {
        const auto& req = cfg.outputs[i];
        const std::string prov = cfg.provenance ? sc.provenance(req, HABITRETIRE_VERSION) : std::string();
        for (const auto& t : results[i]) {
            write_table(dir, t, prov);
            if (req.kind == "validate") {
                for (const auto& row : t.table.rows) {
                    const std::string res = hr::format_cell(row[1]);
                    all_pass = all_pass && res == "PASS";
                    std::cout << res << "  " << hr::format_cell(row[0]) << "  " << hr::format_cell(row[2]) << '\n';
                }
            }
        }
    }
    log(1, "done in " + hr::format_double(sw.seconds()) + " s");
    return all_pass;
}

void print_error(const hr::Error& e) {
    nlohmann::json j;
    j["kind"] = e.kind();
    j["message"] = e.what();
    if (const auto* c = dynamic_cast<const hr::ConfigError*>(&e)) j["problems"] = c->problems();
    if (const auto* a = dynamic_cast<const hr::AssumptionViolation*>(&e)) j["value"] = a->value();
    std::cerr << "error: " << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retirement boundary, policies and Monte Carlo checks for the habit-formation lifecycle model"};
    app.footer(kFigureMap);
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON scenario file");
        sub->add_option("--preset", o.preset, "gamma05 | gamma15 | gamma05_benchmark | gamma15_benchmark");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_flag("--parallel", o.parallel, "run independent products concurrently");
        sub->add_option("--seed", o.seed, "simulation seed (overrides the config)");
        sub->add_flag("--no-provenance", o.no_provenance, "omit the '#' provenance line");
    };
    auto* solve = app.add_subcommand("solve", "solve the boundary and obstacle problem; writes dual_boundary and xhw_plane");
    auto* sim = app.add_subcommand("simulate", "Monte Carlo run under the feedback policy");
    auto* val = app.add_subcommand("validate", "invariant suite; prints PASS/FAIL per check, exit 1 if any fails");
    auto* emit = app.add_subcommand("emit", "write the products listed in the config and/or --product");
    for (auto* s : {solve, sim, val, emit}) add_common(s);
    emit->add_option("--product", o.products, "product request, e.g. c_surface@t=8 (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        hr::ScenarioConfig cfg = make_config(o);
        if (solve->parsed()) {
            cfg.outputs.clear();
            std::vector<std::string> errs;
            cfg.outputs.push_back(*hr::parse_product("dual_boundary", errs));
            cfg.outputs.push_back(*hr::parse_product("xhw_plane", errs));
        } else if (sim->parsed()) {
            std::vector<std::string> errs;
            cfg.outputs = {*hr::parse_product("simulation", errs)};
        } else if (val->parsed()) {
            std::vector<std::string> errs;
            cfg.outputs = {*hr::parse_product("validate", errs)};
        }
        return run_products(cfg, o) ? 0 : 1;
    } catch (const hr::Error& e) {
        print_error(e);
        return 2;
    } catch (const std::exception& e) {
        print_error(hr::Error(e.what()));
        return 2;
    }
}

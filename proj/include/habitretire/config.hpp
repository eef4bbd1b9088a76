#pragma once

#include "habitretire/csv.hpp"
#include "habitretire/error.hpp"
#include "habitretire/model.hpp"
#include "habitretire/simulator.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace habitretire {

/// Config file or product request that does not match the schema; lists every problem found.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}
    const char* kind() const noexcept override { return "config_error"; }
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s;
        for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "; " : "") + p[i];
        return s;
    }
    std::vector<std::string> problems_;
};

/// Resolution of the boundary and obstacle solvers.
struct GridSettings {
    int n_steps = 50;   ///< time nodes on [0, T1] (plus one)
    int refine = 20;    ///< integral-equation sub-steps per node interval
    int nz = 6400;      ///< ln z nodes of the obstacle grid
    int substeps = 20;  ///< obstacle-solver sub-steps per node interval
};

/// One requested output, e.g. `c_surface@t=8` or `h_curve@x=80,w=1,alpha=0.1;0.2;0.3`.
struct ProductRequest {
    std::string kind;
    std::map<std::string, std::vector<double>> args;
    std::string text;  ///< request as written

    double arg(const std::string& key, double fallback) const {
        auto it = args.find(key);
        return it == args.end() ? fallback : it->second.front();
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
        auto it = args.find(key);
        return it == args.end() ? fallback : it->second;
    }

    /// File stem: kind followed by the arguments, e.g. `c_surface_t8`.
    std::string stem() const {
        std::string s = kind;
        for (const auto& [k, vs] : args) {
            s += "_" + k;
            for (std::size_t i = 0; i < vs.size(); ++i) s += (i ? "-" : "") + format_double(vs[i]);
        }
        return s;
    }
};

/// Product kinds and the argument keys each accepts.
inline const std::map<std::string, std::set<std::string>>& product_schema() {
    static const std::map<std::string, std::set<std::string>> s = {
        {"dual_boundary", {}},
        {"yw_boundary", {"w"}},
        {"xhw_plane", {"t"}},
        {"xh_slice", {"w", "t"}},
        {"h_curve", {"x", "w", "alpha"}},
        {"x_curve", {"h", "w", "alpha"}},
        {"c_surface", {"t"}},
        {"pi_surface", {"t", "h"}},
        {"wz_slice", {"t"}},
        {"simulation", {}},
        {"validate", {}},
    };
    return s;
}

/// Parses `kind[@key=v[;v...][,key=...]]`; problems are appended to `errs`.
inline std::optional<ProductRequest> parse_product(const std::string& text, std::vector<std::string>& errs) {
    ProductRequest pr;
    pr.text = text;
    const auto at = text.find('@');
    pr.kind = text.substr(0, at);
    const auto& schema = product_schema();
    const auto it = schema.find(pr.kind);
    if (it == schema.end()) {
        errs.push_back("outputs: unknown product '" + pr.kind + "'");
        return std::nullopt;
    }
    const std::size_t before = errs.size();
    if (at != std::string::npos) {
        std::stringstream ss(text.substr(at + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                errs.push_back("outputs: '" + text + "': argument '" + item + "' needs key=value");
                continue;
            }
            const std::string key = item.substr(0, eq);
            if (!it->second.count(key)) {
                errs.push_back("outputs: '" + text + "': product " + pr.kind + " takes no argument '" + key + "'");
                continue;
            }
            std::stringstream vs(item.substr(eq + 1));
            std::string v;
            std::vector<double> vals;
            while (std::getline(vs, v, ';')) {
                double d = 0.0;
                const auto res = std::from_chars(v.data(), v.data() + v.size(), d);
                if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
                    errs.push_back("outputs: '" + text + "': value '" + v + "' of '" + key + "' is not a number");
                    continue;
                }
                vals.push_back(d);
            }
            if (vals.empty()) errs.push_back("outputs: '" + text + "': argument '" + key + "' has no value");
            else pr.args[key] = vals;
        }
    }
    if (errs.size() != before) return std::nullopt;
    return pr;
}

/// Everything one CLI run needs: model, solver grids, simulation settings and requested products.
struct ScenarioConfig {
    std::string preset = "gamma15";
    ModelParams model = habitretire::preset("gamma15");
    GridSettings grids;
    SimConfig sim;
    bool has_sim = false;  ///< a "sim" block was given
    std::vector<ProductRequest> outputs;
    bool provenance = true;
};

/// Default simulation start: about half of the paths retire before T1 for the shipped presets.
inline PrimalState default_initial_state(const ModelParams& p) {
    return PrimalState{0.0, p.gamma > 1.0 ? 34.0 : 10.0, 0.5, 1.0};
}

namespace detail {

class SchemaReader {
public:
    explicit SchemaReader(std::vector<std::string>& errs) : errs_(errs) {}

    void only(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> keys) {
        if (!obj.is_object()) {
            errs_.push_back(where + ": expected an object");
            return;
        }
        for (const auto& [k, v] : obj.items()) {
            bool known = false;
            for (const char* key : keys) known = known || k == key;
            if (!known) errs_.push_back(where + ": unknown key '" + k + "'");
        }
    }

    void number(const nlohmann::json& obj, const std::string& where, const char* key, double& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        const auto& v = obj.at(key);
        if (!v.is_number()) errs_.push_back(where + "." + key + ": expected a number");
        else out = v.get<double>();
    }

    template <class Int>
    void integer(const nlohmann::json& obj, const std::string& where, const char* key, Int& out, long long min) {
        if (!obj.is_object() || !obj.contains(key)) return;
        const auto& v = obj.at(key);
        if (!v.is_number_integer()) {
            errs_.push_back(where + "." + key + ": expected an integer");
            return;
        }
        const auto n = v.get<long long>();
        if (n < min) errs_.push_back(where + "." + key + ": must be at least " + std::to_string(min));
        else out = static_cast<Int>(n);
    }

    void boolean(const nlohmann::json& obj, const std::string& where, const char* key, bool& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        const auto& v = obj.at(key);
        if (!v.is_boolean()) errs_.push_back(where + "." + key + ": expected true or false");
        else out = v.get<bool>();
    }

private:
    std::vector<std::string>& errs_;
};

}  // namespace detail

/// Builds a ScenarioConfig from a JSON tree; every schema violation is collected before throwing.
///
/// `preset_override` (from the command line) replaces the file's preset.
inline ScenarioConfig parse_config(const nlohmann::json& j, const std::string& preset_override = {}) {
    std::vector<std::string> errs;
    detail::SchemaReader rd(errs);
    ScenarioConfig cfg;
    rd.only(j, "config", {"preset", "model", "grids", "sim", "outputs", "provenance"});
    if (!j.is_object()) throw ConfigError(errs);

    if (j.contains("preset")) {
        if (!j["preset"].is_string()) errs.push_back("config.preset: expected a string");
        else cfg.preset = j["preset"].get<std::string>();
    }
    if (!preset_override.empty()) cfg.preset = preset_override;
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), cfg.preset) == names.end()) {
        errs.push_back("config.preset: unknown preset '" + cfg.preset + "'");
    } else {
        cfg.model = preset(cfg.preset);
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        rd.only(m, "model", {"r", "mu", "sigma", "rho", "gamma", "alpha", "beta", "mu_w", "sigma_w", "T", "T1", "leisure"});
        ModelParams& p = cfg.model;
        rd.number(m, "model", "r", p.r);
        rd.number(m, "model", "mu", p.mu);
        rd.number(m, "model", "sigma", p.sigma);
        rd.number(m, "model", "rho", p.rho);
        rd.number(m, "model", "gamma", p.gamma);
        rd.number(m, "model", "alpha", p.alpha);
        rd.number(m, "model", "beta", p.beta);
        rd.number(m, "model", "mu_w", p.mu_w);
        rd.number(m, "model", "sigma_w", p.sigma_w);
        rd.number(m, "model", "T", p.T);
        rd.number(m, "model", "T1", p.T1);
        if (m.is_object() && m.contains("leisure")) {
            const auto& l = m["leisure"];
            rd.only(l, "model.leisure", {"type", "epsilon0", "level"});
            const std::string type = l.is_object() && l.contains("type") && l["type"].is_string()
                                   ? l["type"].get<std::string>() : "";
            if (type == "exponential") {
                ExponentialLeisure e;
                rd.number(l, "model.leisure", "epsilon0", e.epsilon0);
                if (l.contains("level")) errs.push_back("model.leisure.level: only valid for type \"constant\"");
                p.leisure = e;
            } else if (type == "constant") {
                ConstantLeisure c;
                rd.number(l, "model.leisure", "level", c.level);
                if (l.contains("epsilon0")) errs.push_back("model.leisure.epsilon0: only valid for type \"exponential\"");
                p.leisure = c;
            } else if (l.is_object()) {
                errs.push_back("model.leisure.type: expected \"exponential\" or \"constant\"");
            }
        }
        try {
            p.check_ranges();
        } catch (const UnsupportedParameter& e) {
            errs.push_back(std::string("model: ") + e.what());
        }
    }

    if (j.contains("grids")) {
        const auto& g = j["grids"];
        rd.only(g, "grids", {"n_steps", "refine", "nz", "substeps"});
        rd.integer(g, "grids", "n_steps", cfg.grids.n_steps, 1);
        rd.integer(g, "grids", "refine", cfg.grids.refine, 1);
        rd.integer(g, "grids", "nz", cfg.grids.nz, 100);
        rd.integer(g, "grids", "substeps", cfg.grids.substeps, 1);
    }

    cfg.sim.initial = default_initial_state(cfg.model);
    if (j.contains("sim")) {
        cfg.has_sim = true;
        const auto& s = j["sim"];
        rd.only(s, "sim", {"n_paths", "dt", "seed", "initial", "through_T", "dump_paths", "tau_bins", "threads"});
        rd.integer(s, "sim", "n_paths", cfg.sim.n_paths, 1);
        rd.number(s, "sim", "dt", cfg.sim.dt);
        if (s.is_object() && s.contains("dt") && !(cfg.sim.dt > 0.0)) errs.push_back("sim.dt: must be positive");
        rd.integer(s, "sim", "seed", cfg.sim.seed, 0);
        rd.boolean(s, "sim", "through_T", cfg.sim.through_T);
        rd.integer(s, "sim", "dump_paths", cfg.sim.dump_paths, 0);
        rd.integer(s, "sim", "tau_bins", cfg.sim.tau_bins, 1);
        rd.integer(s, "sim", "threads", cfg.sim.threads, 1);
        if (s.is_object() && s.contains("initial")) {
            const auto& in = s["initial"];
            rd.only(in, "sim.initial", {"t", "x", "h", "w"});
            rd.number(in, "sim.initial", "t", cfg.sim.initial.t);
            rd.number(in, "sim.initial", "x", cfg.sim.initial.x);
            rd.number(in, "sim.initial", "h", cfg.sim.initial.h);
            rd.number(in, "sim.initial", "w", cfg.sim.initial.w);
        }
    }

    if (j.contains("outputs")) {
        const auto& o = j["outputs"];
        if (!o.is_array()) {
            errs.push_back("config.outputs: expected an array of product strings");
        } else {
            for (const auto& item : o) {
                if (!item.is_string()) {
                    errs.push_back("outputs: every entry must be a string");
                    continue;
                }
                if (auto pr = parse_product(item.get<std::string>(), errs)) cfg.outputs.push_back(*pr);
            }
        }
    }
    rd.boolean(j, "config", "provenance", cfg.provenance);

    if (!errs.empty()) throw ConfigError(errs);
    return cfg;
}

inline ScenarioConfig load_config(const std::string& path, const std::string& preset_override = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError({"config file '" + path + "' is not valid JSON: " + e.what()});
    }
    return parse_config(j, preset_override);
}

/// Canonical text of every parameter that changes numerical results.
inline std::string canonical_parameters(const ModelParams& p, const GridSettings& g) {
    std::string s;
    auto add = [&s](const char* k, double v) { s += std::string(k) + "=" + format_double(v) + ";"; };
    add("r", p.r);
    add("mu", p.mu);
    add("sigma", p.sigma);
    add("rho", p.rho);
    add("gamma", p.gamma);
    add("alpha", p.alpha);
    add("beta", p.beta);
    add("mu_w", p.mu_w);
    add("sigma_w", p.sigma_w);
    add("T", p.T);
    add("T1", p.T1);
    if (const auto* e = std::get_if<ExponentialLeisure>(&p.leisure)) add("epsilon0", e->epsilon0);
    else add("K", std::get<ConstantLeisure>(p.leisure).level);
    add("n_steps", g.n_steps);
    add("refine", g.refine);
    add("nz", g.nz);
    add("substeps", g.substeps);
    return s;
}

inline std::string parameter_hash(const ModelParams& p, const GridSettings& g) {
    return hex64(fnv1a64(canonical_parameters(p, g)));
}

}  // namespace habitretire

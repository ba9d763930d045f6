#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "edq/csv.hpp"
#include "edq/diffusion.hpp"
#include "edq/errors.hpp"
#include "edq/fclt.hpp"
#include "edq/mam.hpp"
#include "edq/simulate.hpp"
#include "edq/staffing.hpp"
#include "edq/version.hpp"

namespace edq {

using Json = nlohmann::json;

enum class ScenarioKind { approx, simulate, staff, fclt, mam, compare };

inline const char* scenario_kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::approx: return "approx";
        case ScenarioKind::simulate: return "simulate";
        case ScenarioKind::staff: return "staff";
        case ScenarioKind::fclt: return "fclt";
        case ScenarioKind::mam: return "mam";
        case ScenarioKind::compare: return "compare";
    }
    return "";
}

inline std::optional<ScenarioKind> scenario_kind_from(const std::string& name) {
    for (ScenarioKind k : {ScenarioKind::approx, ScenarioKind::simulate, ScenarioKind::staff,
                           ScenarioKind::fclt, ScenarioKind::mam, ScenarioKind::compare})
        if (name == scenario_kind_name(k)) return k;
    return std::nullopt;
}

namespace scn {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw InvalidConfig("scenario " + where + ": " + what);
}

inline void require_object(const Json& j, const std::string& where) {
    if (!j.is_object()) fail(where, "expected an object");
}

inline void check_keys(const Json& obj, const std::string& where,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional) {
    require_object(obj, where);
    for (const char* key : required)
        if (!obj.contains(key)) fail(where, std::string("missing field '") + key + "'");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool known = false;
        for (const char* k : required) known = known || key == k;
        for (const char* k : optional) known = known || key == k;
        if (!known) fail(where, "unknown field '" + key + "'");
    }
}

inline double number(const Json& obj, const std::string& where, const char* key) {
    const Json& v = obj.at(key);
    if (!v.is_number()) fail(where, std::string("'") + key + "' must be a number");
    return v.get<double>();
}

inline double positive(const Json& obj, const std::string& where, const char* key) {
    double v = number(obj, where, key);
    if (!(v > 0.0) || !std::isfinite(v)) fail(where, std::string("'") + key + "' must be positive");
    return v;
}

inline double nonnegative(const Json& obj, const std::string& where, const char* key) {
    double v = number(obj, where, key);
    if (!(v >= 0.0) || !std::isfinite(v))
        fail(where, std::string("'") + key + "' must be nonnegative");
    return v;
}

inline long long integer(const Json& obj, const std::string& where, const char* key) {
    const Json& v = obj.at(key);
    if (!v.is_number_integer()) fail(where, std::string("'") + key + "' must be an integer");
    return v.get<long long>();
}

inline bool boolean(const Json& obj, const std::string& where, const char* key) {
    const Json& v = obj.at(key);
    if (!v.is_boolean()) fail(where, std::string("'") + key + "' must be a boolean");
    return v.get<bool>();
}

inline std::string text(const Json& obj, const std::string& where, const char* key) {
    const Json& v = obj.at(key);
    if (!v.is_string()) fail(where, std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

inline std::vector<double> number_list(const Json& obj, const std::string& where,
                                       const char* key) {
    const Json& v = obj.at(key);
    if (!v.is_array()) fail(where, std::string("'") + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const Json& e : v) {
        if (!e.is_number() || !std::isfinite(e.get<double>()))
            fail(where, std::string("'") + key + "' must hold finite numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// distributions are written with whichever of mean or rate the source states
inline double rate_of(const Json& obj, const std::string& where, double scale = 1.0) {
    const bool has_mean = obj.contains("mean");
    const bool has_rate = obj.contains("rate");
    if (has_mean == has_rate) fail(where, "provide exactly one of 'mean' or 'rate'");
    if (has_rate) return positive(obj, where, "rate");
    return scale / positive(obj, where, "mean");
}

}  // namespace scn

inline Distribution distribution_from_json(const Json& j, const std::string& where) {
    scn::require_object(j, where);
    if (!j.contains("type")) scn::fail(where, "missing field 'type'");
    const std::string type = scn::text(j, where, "type");
    if (type == "exponential") {
        scn::check_keys(j, where, {"type"}, {"mean", "rate"});
        return Exponential{scn::rate_of(j, where)};
    }
    if (type == "deterministic") {
        scn::check_keys(j, where, {"type", "value"}, {});
        return Deterministic{scn::positive(j, where, "value")};
    }
    if (type == "erlang") {
        scn::check_keys(j, where, {"type", "shape"}, {"mean", "rate"});
        long long shape = scn::integer(j, where, "shape");
        if (shape < 1) scn::fail(where, "'shape' must be at least 1");
        return Erlang{int(shape), scn::rate_of(j, where, double(shape))};
    }
    if (type == "lognormal") {
        scn::check_keys(j, where, {"type", "mean", "scv"}, {});
        return LogNormal{scn::positive(j, where, "mean"), scn::positive(j, where, "scv")};
    }
    if (type == "hyperexp") {
        scn::check_keys(j, where, {"type", "branches"}, {});
        const Json& branches = j.at("branches");
        if (!branches.is_array() || branches.empty())
            scn::fail(where, "'branches' must be a nonempty array");
        Hyperexponential h;
        double total = 0.0;
        for (const Json& b : branches) {
            scn::check_keys(b, where + ".branches", {"p"}, {"mean", "rate"});
            double p = scn::positive(b, where + ".branches", "p");
            total += p;
            h.branches.push_back({p, scn::rate_of(b, where + ".branches")});
        }
        if (std::abs(total - 1.0) > 1e-9)
            scn::fail(where, "branch probabilities must sum to 1");
        return h;
    }
    scn::fail(where, "unknown distribution type '" + type +
                         "' (expected exponential, deterministic, erlang, lognormal, hyperexp)");
}

namespace scn {

inline QueueSpec queue_from_json(const Json& j, const std::string& where) {
    check_keys(j, where, {"arrival_rate", "servers", "service", "patience"},
               {"interarrival_scv"});
    QueueSpec spec;
    spec.arrival_rate = positive(j, where, "arrival_rate");
    spec.interarrival_scv = j.contains("interarrival_scv") ? nonnegative(j, where, "interarrival_scv") : 1.0;
    long long n = integer(j, where, "servers");
    if (n < 1) fail(where, "'servers' must be at least 1");
    spec.n = int(n);
    spec.service = distribution_from_json(j.at("service"), where + ".service");
    spec.patience = distribution_from_json(j.at("patience"), where + ".patience");
    return spec;
}

inline void resolve_queue(Json& q, const std::string& where) {
    if (q.is_object() && !q.contains("interarrival_scv")) q["interarrival_scv"] = 1.0;
    queue_from_json(q, where);
}

inline void resolve_cells(Json& payload, const std::string& where) {
    if (!payload.contains("cells")) fail(where, "missing field 'cells'");
    Json& cells = payload.at("cells");
    if (!cells.is_array() || cells.empty()) fail(where, "'cells' must be a nonempty array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string cw = where + ".cells[" + std::to_string(i) + "]";
        check_keys(cells[i], cw, {"label", "queue"}, {});
        std::string label = text(cells[i], cw, "label");
        if (!seen.insert(label).second) fail(cw, "duplicate label '" + label + "'");
        resolve_queue(cells[i].at("queue"), cw + ".queue");
    }
}

inline void resolve_sim_settings(Json& s, const std::string& where) {
    check_keys(s, where, {"warmup", "horizon"},
               {"batches", "replications", "per_customer_service"});
    double warmup = nonnegative(s, where, "warmup");
    double horizon = positive(s, where, "horizon");
    if (!(horizon > warmup)) fail(where, "'horizon' must exceed 'warmup'");
    if (!s.contains("batches")) s["batches"] = 32;
    if (integer(s, where, "batches") < 2) fail(where, "'batches' must be at least 2");
    if (!s.contains("replications")) s["replications"] = 1;
    if (integer(s, where, "replications") < 1) fail(where, "'replications' must be at least 1");
    if (!s.contains("per_customer_service")) s["per_customer_service"] = false;
    boolean(s, where, "per_customer_service");
}

inline SimConfig sim_from_json(const Json& s, std::uint64_t seed, int threads) {
    SimConfig cfg;
    cfg.warmup = s.at("warmup").get<double>();
    cfg.horizon = s.at("horizon").get<double>();
    cfg.batches = s.at("batches").get<int>();
    cfg.replications = s.at("replications").get<int>();
    cfg.per_customer_service = s.at("per_customer_service").get<bool>();
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
}

struct MeasureSpec {
    enum class Kind {
        abandonment,
        wait_mean,
        wait_variance,
        queue_mean,
        queue_variance,
        wait_tail,
        system_tail,
        service_level,
        effective_abandonment,
    };
    Kind kind = Kind::abandonment;
    double param = 0.0;
};

inline MeasureSpec measure_from_json(const Json& j, const std::string& where) {
    static const std::pair<const char*, MeasureSpec::Kind> plain[] = {
        {"abandonment", MeasureSpec::Kind::abandonment},
        {"wait_mean", MeasureSpec::Kind::wait_mean},
        {"wait_variance", MeasureSpec::Kind::wait_variance},
        {"queue_mean", MeasureSpec::Kind::queue_mean},
        {"queue_variance", MeasureSpec::Kind::queue_variance},
    };
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        for (auto& [n, k] : plain)
            if (name == n) return {k, 0.0};
        fail(where, "unknown measure '" + name + "'");
    }
    require_object(j, where);
    if (!j.contains("kind")) fail(where, "missing field 'kind'");
    const std::string kind = text(j, where, "kind");
    if (kind == "wait_tail" || kind == "system_tail") {
        check_keys(j, where, {"kind", "a"}, {});
        double a = number(j, where, "a");
        if (!std::isfinite(a)) fail(where, "'a' must be finite");
        return {kind == "wait_tail" ? MeasureSpec::Kind::wait_tail : MeasureSpec::Kind::system_tail,
                a};
    }
    if (kind == "service_level" || kind == "effective_abandonment") {
        check_keys(j, where, {"kind", "delay"}, {});
        return {kind == "service_level" ? MeasureSpec::Kind::service_level
                                        : MeasureSpec::Kind::effective_abandonment,
                nonnegative(j, where, "delay")};
    }
    fail(where, "unknown measure kind '" + kind + "'");
}

inline std::string measure_name(const MeasureSpec& m) {
    switch (m.kind) {
        case MeasureSpec::Kind::abandonment: return "abandonment";
        case MeasureSpec::Kind::wait_mean: return "wait_mean";
        case MeasureSpec::Kind::wait_variance: return "wait_variance";
        case MeasureSpec::Kind::queue_mean: return "queue_mean";
        case MeasureSpec::Kind::queue_variance: return "queue_variance";
        case MeasureSpec::Kind::wait_tail: return "wait_tail:" + format_double(m.param);
        case MeasureSpec::Kind::system_tail: return "system_tail:" + format_double(m.param);
        case MeasureSpec::Kind::service_level: return "service_level:" + format_double(m.param);
        case MeasureSpec::Kind::effective_abandonment:
            return "effective_abandonment:" + format_double(m.param);
    }
    return "";
}

inline double measure_value(const DiffusionSummary& s, const QueueSpec& spec,
                            const MeasureSpec& m) {
    switch (m.kind) {
        case MeasureSpec::Kind::abandonment: return s.alpha;
        case MeasureSpec::Kind::wait_mean: return s.w;
        case MeasureSpec::Kind::wait_variance: return s.sigma_w_sq;
        case MeasureSpec::Kind::queue_mean: return s.q;
        case MeasureSpec::Kind::queue_variance: return s.sigma_x_sq;
        case MeasureSpec::Kind::wait_tail: return virtual_wait_tail(s, m.param);
        case MeasureSpec::Kind::system_tail: return queue_tail(s, m.param);
        case MeasureSpec::Kind::service_level: return service_level(spec, m.param);
        case MeasureSpec::Kind::effective_abandonment:
            return effective_abandonment(spec, m.param);
    }
    return 0.0;
}

}  // namespace scn

// ---- payload validation (fills defaults in place) --------------------------

namespace scn {

inline void resolve_approx(Json& p) {
    check_keys(p, "approx", {"cells"},
               {"wait_tails", "system_tails", "service_levels", "effective_abandonment"});
    resolve_cells(p, "approx");
    for (const char* key : {"wait_tails", "system_tails"}) {
        if (!p.contains(key)) p[key] = Json::array();
        number_list(p, "approx", key);
    }
    for (const char* key : {"service_levels", "effective_abandonment"}) {
        if (!p.contains(key)) p[key] = Json::array();
        for (double d : number_list(p, "approx", key))
            if (d < 0.0) fail("approx", std::string("'") + key + "' entries must be nonnegative");
    }
}

inline void resolve_simulate(Json& p) {
    check_keys(p, "simulate", {"cells", "sim"},
               {"tail_thresholds_w", "tail_thresholds_x", "service_levels",
                "effective_abandonment", "with_approximation"});
    resolve_cells(p, "simulate");
    resolve_sim_settings(p.at("sim"), "simulate.sim");
    for (const char* key : {"tail_thresholds_w", "tail_thresholds_x"}) {
        if (!p.contains(key)) p[key] = Json::array();
        number_list(p, "simulate", key);
    }
    for (const char* key : {"service_levels", "effective_abandonment"}) {
        if (!p.contains(key)) p[key] = Json::array();
        for (double d : number_list(p, "simulate", key))
            if (d < 0.0)
                fail("simulate", std::string("'") + key + "' entries must be nonnegative");
    }
    if (!p.contains("with_approximation")) p["with_approximation"] = true;
    boolean(p, "simulate", "with_approximation");
}

inline void resolve_staff(Json& p) {
    check_keys(p, "staff", {"arrival_rate", "service", "patience", "objective", "evaluator"},
               {"interarrival_scv", "sim"});
    positive(p, "staff", "arrival_rate");
    if (!p.contains("interarrival_scv")) p["interarrival_scv"] = 1.0;
    nonnegative(p, "staff", "interarrival_scv");
    distribution_from_json(p.at("service"), "staff.service");
    distribution_from_json(p.at("patience"), "staff.patience");

    Json& obj = p.at("objective");
    check_keys(obj, "staff.objective", {"kind", "target", "delay"}, {});
    const std::string kind = text(obj, "staff.objective", "kind");
    if (kind != "service_level" && kind != "effective_abandonment")
        fail("staff.objective", "unknown objective kind '" + kind + "'");
    double target = number(obj, "staff.objective", "target");
    if (!(target > 0.0 && target < 1.0))
        fail("staff.objective", "'target' must lie strictly inside (0,1)");
    nonnegative(obj, "staff.objective", "delay");

    const std::string evaluator = text(p, "staff", "evaluator");
    if (evaluator != "diffusion" && evaluator != "zm" && evaluator != "simulation")
        fail("staff", "unknown evaluator '" + evaluator + "'");
    if (evaluator == "simulation") {
        if (!p.contains("sim")) fail("staff", "the simulation evaluator needs a 'sim' block");
        resolve_sim_settings(p.at("sim"), "staff.sim");
    } else if (p.contains("sim")) {
        fail("staff", "'sim' is only used by the simulation evaluator");
    }
}

inline void resolve_fclt(Json& p) {
    check_keys(p, "fclt", {"interrenewal", "n", "gamma", "grid", "replications"},
               {"gaussianity_times", "fslln"});
    distribution_from_json(p.at("interrenewal"), "fclt.interrenewal");
    if (integer(p, "fclt", "n") < 1) fail("fclt", "'n' must be at least 1");
    positive(p, "fclt", "gamma");
    auto grid = number_list(p, "fclt", "grid");
    if (grid.empty()) fail("fclt", "'grid' must be nonempty");
    if (grid.front() < 0.0) fail("fclt", "'grid' must start at or after 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) fail("fclt", "'grid' must be strictly increasing");
    long long reps = integer(p, "fclt", "replications");
    if (reps < 2) fail("fclt", "'replications' must be at least 2");
    if (!p.contains("gaussianity_times")) p["gaussianity_times"] = Json::array();
    for (double t : number_list(p, "fclt", "gaussianity_times")) {
        bool on_grid = false;
        for (double g : grid) on_grid = on_grid || std::abs(g - t) <= 1e-12 * std::max(1.0, std::abs(t));
        if (!on_grid) fail("fclt", "'gaussianity_times' entries must be grid points");
        if (reps < 500) fail("fclt", "the gaussianity test needs at least 500 replications");
    }
    if (!p.contains("fslln")) p["fslln"] = false;
    boolean(p, "fclt", "fslln");
}

inline PhService ph_from_distribution(const Distribution& d, const std::string& where) {
    if (const auto* e = std::get_if<Exponential>(&d)) return PhService{{{1.0, e->rate}}};
    if (const auto* h = std::get_if<Hyperexponential>(&d)) {
        PhService svc;
        for (const auto& b : h->branches) svc.branches.push_back({b.weight, b.rate});
        return svc;
    }
    fail(where, "service law must be exponential or a finite exponential mixture");
}

inline void resolve_mam(Json& p) {
    check_keys(p, "mam", {"arrival_rate", "servers", "service", "patience"},
               {"truncation", "max_direct_states"});
    positive(p, "mam", "arrival_rate");
    long long n = integer(p, "mam", "servers");
    if (n < 1) fail("mam", "'servers' must be at least 1");
    auto service = distribution_from_json(p.at("service"), "mam.service");
    ph_from_distribution(service, "mam.service").validate();
    auto patience = distribution_from_json(p.at("patience"), "mam.patience");
    if (!std::holds_alternative<Exponential>(patience))
        fail("mam.patience", "the chain model needs exponential patience");
    if (p.contains("truncation") && scn::integer(p, "mam", "truncation") < n + 2)
        fail("mam", "'truncation' must be at least servers + 2");
    if (!p.contains("max_direct_states")) p["max_direct_states"] = 100000;
    if (integer(p, "mam", "max_direct_states") < 0)
        fail("mam", "'max_direct_states' must be nonnegative");
}

inline void resolve_compare(Json& p) {
    check_keys(p, "compare", {"evaluators", "measures"}, {"cells", "queue", "servers", "sim"});
    const Json& evals = p.at("evaluators");
    if (!evals.is_array() || evals.size() < 2)
        fail("compare", "'evaluators' must list at least two evaluators");
    bool has_sim = false;
    for (const Json& e : evals) {
        if (!e.is_string()) fail("compare", "'evaluators' must hold strings");
        const std::string name = e.get<std::string>();
        if (name != "diffusion" && name != "zm" && name != "simulation")
            fail("compare", "unknown evaluator '" + name + "'");
        has_sim = has_sim || name == "simulation";
    }
    const Json& measures = p.at("measures");
    if (!measures.is_array() || measures.empty())
        fail("compare", "'measures' must be a nonempty array");
    for (std::size_t i = 0; i < measures.size(); ++i)
        measure_from_json(measures[i], "compare.measures[" + std::to_string(i) + "]");

    if (p.contains("cells")) {
        if (p.contains("queue") || p.contains("servers"))
            fail("compare", "give either 'cells' or a 'queue' sweep, not both");
        resolve_cells(p, "compare");
    } else {
        if (!p.contains("queue") || !p.contains("servers"))
            fail("compare", "provide 'cells', or 'queue' together with 'servers'");
        Json& q = p.at("queue");
        check_keys(q, "compare.queue", {"arrival_rate", "service", "patience"},
                   {"interarrival_scv"});
        positive(q, "compare.queue", "arrival_rate");
        if (!q.contains("interarrival_scv")) q["interarrival_scv"] = 1.0;
        nonnegative(q, "compare.queue", "interarrival_scv");
        distribution_from_json(q.at("service"), "compare.queue.service");
        distribution_from_json(q.at("patience"), "compare.queue.patience");
        const Json& servers = p.at("servers");
        if (!servers.is_array() || servers.empty())
            fail("compare", "'servers' must be a nonempty array of integers");
        for (const Json& v : servers)
            if (!v.is_number_integer() || v.get<long long>() < 1)
                fail("compare", "'servers' entries must be integers >= 1");
    }

    if (has_sim) {
        if (!p.contains("sim")) fail("compare", "the simulation evaluator needs a 'sim' block");
        resolve_sim_settings(p.at("sim"), "compare.sim");
    } else if (p.contains("sim")) {
        fail("compare", "'sim' is only used by the simulation evaluator");
    }
}

}  // namespace scn

// ---- scenario files ---------------------------------------------------------

struct Scenario {
    Json resolved;
    ScenarioKind kind = ScenarioKind::approx;
    std::string output;  // empty means stdout
    std::uint64_t seed = 1;

    const Json& payload() const { return resolved.at(scenario_kind_name(kind)); }
};

inline Scenario load_scenario_json(Json file, ScenarioKind expected,
                                   const std::optional<std::string>& out_override = {},
                                   const std::optional<std::uint64_t>& seed_override = {}) {
    scn::check_keys(file, "file", {"schema"},
                    {"seed", "output", "approx", "simulate", "staff", "fclt", "mam", "compare"});
    if (!file.at("schema").is_number_integer() || file.at("schema").get<long long>() != 1)
        scn::fail("file", "unsupported schema version (expected 1)");

    std::vector<std::string> present;
    for (ScenarioKind k : {ScenarioKind::approx, ScenarioKind::simulate, ScenarioKind::staff,
                           ScenarioKind::fclt, ScenarioKind::mam, ScenarioKind::compare})
        if (file.contains(scenario_kind_name(k))) present.push_back(scenario_kind_name(k));
    if (present.size() != 1) scn::fail("file", "exactly one command payload is required");
    const std::string expected_name = scenario_kind_name(expected);
    if (present.front() != expected_name)
        scn::fail("file", "holds a '" + present.front() + "' payload but the '" + expected_name +
                              "' command was invoked");

    if (seed_override)
        file["seed"] = *seed_override;
    else if (!file.contains("seed"))
        file["seed"] = 1;
    if (!file.at("seed").is_number_integer() || file.at("seed").get<long long>() < 0)
        scn::fail("file", "'seed' must be a nonnegative integer");

    if (out_override)
        file["output"] = *out_override;
    else if (!file.contains("output"))
        file["output"] = "";
    if (!file.at("output").is_string()) scn::fail("file", "'output' must be a string");

    Scenario s;
    s.kind = expected;
    s.output = file.at("output").get<std::string>();
    s.seed = file.at("seed").get<std::uint64_t>();

    Json& payload = file.at(expected_name);
    switch (expected) {
        case ScenarioKind::approx: scn::resolve_approx(payload); break;
        case ScenarioKind::simulate: scn::resolve_simulate(payload); break;
        case ScenarioKind::staff: scn::resolve_staff(payload); break;
        case ScenarioKind::fclt: scn::resolve_fclt(payload); break;
        case ScenarioKind::mam: scn::resolve_mam(payload); break;
        case ScenarioKind::compare: scn::resolve_compare(payload); break;
    }
    s.resolved = std::move(file);
    return s;
}

inline Scenario load_scenario_file(const std::string& path, ScenarioKind expected,
                                   const std::optional<std::string>& out_override = {},
                                   const std::optional<std::uint64_t>& seed_override = {}) {
    std::ifstream in(path);
    if (!in) scn::fail("file", "cannot open '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        scn::fail("file", std::string("invalid JSON: ") + e.what());
    }
    return load_scenario_json(std::move(j), expected, out_override, seed_override);
}

// ---- runners ----------------------------------------------------------------

namespace scn {

inline bool wants_csv(const Scenario& s) {
    return s.output.size() >= 4 && s.output.compare(s.output.size() - 4, 4, ".csv") == 0;
}

inline std::string csv_preamble(const Scenario& s) {
    return "# edq " + std::string(kVersion) + "\n# seed " + std::to_string(s.seed) +
           "\n# config " + s.resolved.dump() + "\n";
}

inline Json json_envelope(const Scenario& s) {
    Json out;
    out["version"] = kVersion;
    out["seed"] = s.seed;
    out["config"] = s.resolved;
    return out;
}

inline std::string finish_json(Json envelope) { return envelope.dump(2) + "\n"; }

struct NamedCell {
    std::string label;
    QueueSpec spec;
};

inline std::vector<NamedCell> cells_of(const Json& payload, const std::string& where) {
    std::vector<NamedCell> out;
    const Json& cells = payload.at("cells");
    for (std::size_t i = 0; i < cells.size(); ++i)
        out.push_back({cells[i].at("label").get<std::string>(),
                       queue_from_json(cells[i].at("queue"),
                                       where + ".cells[" + std::to_string(i) + "].queue")});
    return out;
}

inline std::vector<MeasureSpec> table_measures(const Json& payload, const char* wt_key,
                                               const char* xt_key) {
    std::vector<MeasureSpec> out = {{MeasureSpec::Kind::abandonment, 0.0},
                                    {MeasureSpec::Kind::wait_mean, 0.0},
                                    {MeasureSpec::Kind::wait_variance, 0.0},
                                    {MeasureSpec::Kind::queue_mean, 0.0},
                                    {MeasureSpec::Kind::queue_variance, 0.0}};
    for (const Json& a : payload.at(wt_key)) out.push_back({MeasureSpec::Kind::wait_tail, a.get<double>()});
    for (const Json& a : payload.at(xt_key))
        out.push_back({MeasureSpec::Kind::system_tail, a.get<double>()});
    for (const Json& d : payload.at("service_levels"))
        out.push_back({MeasureSpec::Kind::service_level, d.get<double>()});
    for (const Json& d : payload.at("effective_abandonment"))
        out.push_back({MeasureSpec::Kind::effective_abandonment, d.get<double>()});
    return out;
}

inline std::string run_approx(const Scenario& s) {
    const Json& p = s.payload();
    const auto cells = cells_of(p, "approx");
    const auto measures = table_measures(p, "wait_tails", "system_tails");

    Json result_cells = Json::array();
    std::ostringstream csv_body;
    CsvWriter csv(csv_body);
    csv.row({"label", "measure", "value"});
    for (const auto& cell : cells) {
        auto sum = summarize(cell.spec);
        Json jc;
        jc["label"] = cell.label;
        jc["rho"] = sum.rho;
        jc["gamma"] = sum.gamma;
        jc["svpr"] = sum.svpr;
        jc["warnings"] = sum.warnings;
        Json jm = Json::array();
        for (const auto& m : measures) {
            double v = measure_value(sum, cell.spec, m);
            jm.push_back({{"measure", measure_name(m)}, {"value", v}});
            csv.row({cell.label, measure_name(m), format_double(v)});
        }
        csv.row({cell.label, "svpr", format_double(sum.svpr)});
        jc["measures"] = std::move(jm);
        result_cells.push_back(std::move(jc));
    }

    if (wants_csv(s)) return csv_preamble(s) + csv_body.str();
    Json envelope = json_envelope(s);
    envelope["result"]["cells"] = std::move(result_cells);
    return finish_json(std::move(envelope));
}

inline std::pair<double, double> sim_measure(const SimResult& r, const MeasureSpec& m,
                                             const SimConfig& cfg) {
    auto pick = [](const SimMeasure& v) { return std::pair{v.estimate, v.half_width}; };
    auto by_a = [&](const std::vector<TailEstimate>& tails, const std::vector<double>& as) {
        for (std::size_t i = 0; i < as.size(); ++i)
            if (as[i] == m.param) return pick(tails[i].prob);
        throw EvaluatorError("simulation run is missing a requested tail threshold");
    };
    auto by_d = [&](const std::vector<DelayEstimate>& levels, const std::vector<double>& ds) {
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds[i] == m.param) return pick(levels[i].value);
        throw EvaluatorError("simulation run is missing a requested delay");
    };
    switch (m.kind) {
        case MeasureSpec::Kind::abandonment: return pick(r.abandonment);
        case MeasureSpec::Kind::wait_mean: return pick(r.wait_mean);
        case MeasureSpec::Kind::wait_variance: return pick(r.wait_variance);
        case MeasureSpec::Kind::queue_mean: return pick(r.queue_mean);
        case MeasureSpec::Kind::queue_variance: return pick(r.queue_variance);
        case MeasureSpec::Kind::wait_tail: return by_a(r.wait_tails, cfg.tail_thresholds_w);
        case MeasureSpec::Kind::system_tail: return by_a(r.system_tails, cfg.tail_thresholds_x);
        case MeasureSpec::Kind::service_level: return by_d(r.service_levels, cfg.service_level_delays);
        case MeasureSpec::Kind::effective_abandonment:
            return by_d(r.effective_abandonment, cfg.effective_abd_delays);
    }
    throw EvaluatorError("unknown measure");
}

inline std::string run_simulate(const Scenario& s, int threads) {
    const Json& p = s.payload();
    const auto cells = cells_of(p, "simulate");
    const auto measures = table_measures(p, "tail_thresholds_w", "tail_thresholds_x");
    const bool with_approx = p.at("with_approximation").get<bool>();

    Json result_cells = Json::array();
    std::ostringstream csv_body;
    CsvWriter csv(csv_body);
    csv.row({"label", "measure", "estimate", "half_width", "approx"});
    for (const auto& cell : cells) {
        SimConfig cfg = sim_from_json(p.at("sim"), s.seed, threads);
        cfg.spec = cell.spec;
        cfg.tail_thresholds_w = p.at("tail_thresholds_w").get<std::vector<double>>();
        cfg.tail_thresholds_x = p.at("tail_thresholds_x").get<std::vector<double>>();
        cfg.service_level_delays = p.at("service_levels").get<std::vector<double>>();
        cfg.effective_abd_delays = p.at("effective_abandonment").get<std::vector<double>>();
        auto run = simulate(cfg);
        const SimResult& r = run.result;

        std::optional<DiffusionSummary> sum;
        if (with_approx) sum = summarize(cell.spec);

        Json jc;
        jc["label"] = cell.label;
        jc["served"] = r.served;
        jc["abandoned"] = r.abandoned;
        jc["arrivals"] = r.arrivals;
        Json jm = Json::array();
        for (const auto& m : measures) {
            auto [est, hw] = sim_measure(r, m, cfg);
            Json one = {{"measure", measure_name(m)}, {"estimate", est}, {"half_width", hw}};
            std::string approx_txt;
            if (sum) {
                double v = measure_value(*sum, cell.spec, m);
                one["approx"] = v;
                approx_txt = format_double(v);
            }
            jm.push_back(std::move(one));
            csv.row({cell.label, measure_name(m), format_double(est), format_double(hw),
                     approx_txt});
        }
        jc["measures"] = std::move(jm);
        result_cells.push_back(std::move(jc));
    }

    if (wants_csv(s)) return csv_preamble(s) + csv_body.str();
    Json envelope = json_envelope(s);
    envelope["result"]["cells"] = std::move(result_cells);
    return finish_json(std::move(envelope));
}

inline std::string run_staff(const Scenario& s, int threads) {
    const Json& p = s.payload();
    StaffingProblem prob;
    prob.arrival_rate = p.at("arrival_rate").get<double>();
    prob.interarrival_scv = p.at("interarrival_scv").get<double>();
    prob.service = distribution_from_json(p.at("service"), "staff.service");
    prob.patience = distribution_from_json(p.at("patience"), "staff.patience");
    const Json& obj = p.at("objective");
    const double target = obj.at("target").get<double>();
    const double delay = obj.at("delay").get<double>();
    if (obj.at("kind").get<std::string>() == "service_level")
        prob.objective = ServiceLevelObjective{target, delay};
    else
        prob.objective = EffectiveAbandonmentObjective{target, delay};
    const std::string evaluator = p.at("evaluator").get<std::string>();
    prob.evaluator = evaluator == "diffusion" ? Evaluator::diffusion
                     : evaluator == "zm"      ? Evaluator::zm
                                              : Evaluator::simulation;
    if (prob.evaluator == Evaluator::simulation)
        prob.sim = sim_from_json(p.at("sim"), s.seed, 1);

    auto r = min_servers(prob, threads);

    if (wants_csv(s)) {
        std::ostringstream body;
        write_curve_csv(r, body);
        return csv_preamble(s) + body.str();
    }
    Json envelope = json_envelope(s);
    Json& res = envelope["result"];
    res["n_min"] = r.n_min;
    res["n_lo"] = r.n_lo;
    res["n_hi"] = r.n_hi;
    res["ambiguous"] = r.ambiguous;
    res["rho"] = r.rho;
    res["svpr"] = r.svpr;
    res["warnings"] = r.warnings;
    Json curve = Json::array();
    for (const auto& c : r.curve)
        curve.push_back({{"n", c.n}, {"value", c.value}, {"half_width", c.half_width}});
    res["curve"] = std::move(curve);
    return finish_json(std::move(envelope));
}

inline std::string run_fclt(const Scenario& s, int threads) {
    const Json& p = s.payload();
    SuperpositionConfig cfg;
    cfg.interrenewal = distribution_from_json(p.at("interrenewal"), "fclt.interrenewal");
    cfg.n = p.at("n").get<int>();
    cfg.gamma_n = p.at("gamma").get<double>();
    cfg.grid = p.at("grid").get<std::vector<double>>();
    cfg.replications = p.at("replications").get<int>();
    cfg.seed = s.seed;

    auto ens = generate(cfg, threads);

    std::optional<VarianceProfile> profile;
    if (cfg.replications >= 100) profile = variance_profile(ens);

    if (wants_csv(s)) {
        if (!profile)
            throw EvaluatorError(
                "fclt: csv output carries the variance profile, which needs at least 100 "
                "replications");
        std::ostringstream body;
        write_variance_csv(*profile, body);
        return csv_preamble(s) + body.str();
    }

    Json envelope = json_envelope(s);
    Json& res = envelope["result"];
    res["mu"] = ens.mu;
    res["cs2"] = ens.cs2;
    if (profile) {
        Json points = Json::array();
        for (const auto& pt : profile->points)
            points.push_back({{"t", pt.t},
                              {"variance", pt.variance},
                              {"ci_lo", pt.ci_lo},
                              {"ci_hi", pt.ci_hi}});
        res["variance"] = {{"slope", profile->slope},
                           {"intercept", profile->intercept},
                           {"points", std::move(points)}};
    }
    if (cfg.grid.size() >= 3) {
        auto inc = increment_independence(ens);
        Json pairs = Json::array();
        for (const auto& pr : inc.pairs)
            pairs.push_back({{"left", pr.left},
                             {"right", pr.right},
                             {"t", pr.t},
                             {"correlation", pr.correlation},
                             {"ci_lo", pr.ci_lo},
                             {"ci_hi", pr.ci_hi}});
        res["increments"] = {{"any_dependent", inc.any_dependent},
                             {"degenerate", inc.degenerate},
                             {"pairs", std::move(pairs)}};
    }
    Json gauss = Json::array();
    for (const Json& jt : p.at("gaussianity_times")) {
        auto g = gaussianity(ens, jt.get<double>());
        gauss.push_back({{"t", g.t},
                         {"ks_statistic", g.ks_statistic},
                         {"p_value", g.p_value},
                         {"skipped", g.skipped}});
    }
    res["gaussianity"] = std::move(gauss);
    if (p.at("fslln").get<bool>()) {
        auto f = fslln_check(cfg, {}, threads);
        Json rungs = Json::array();
        for (const auto& rung : f.rungs)
            rungs.push_back({{"n", rung.n},
                             {"gamma", rung.gamma_n},
                             {"mean_sup_deviation", rung.mean_sup_deviation}});
        res["fslln"] = {{"decreasing", f.decreasing}, {"rungs", std::move(rungs)}};
    }
    return finish_json(std::move(envelope));
}

inline std::string run_mam(const Scenario& s) {
    const Json& p = s.payload();
    const double lambda = p.at("arrival_rate").get<double>();
    const int n = p.at("servers").get<int>();
    auto service =
        ph_from_distribution(distribution_from_json(p.at("service"), "mam.service"), "mam.service");
    const double theta =
        std::get<Exponential>(distribution_from_json(p.at("patience"), "mam.patience")).rate;
    const auto max_direct = p.at("max_direct_states").get<std::size_t>();

    CtmcSolution sol = p.contains("truncation")
                           ? solve(lambda, n, service, theta, p.at("truncation").get<int>(),
                                   max_direct)
                           : solve_auto(lambda, n, service, theta, max_direct);

    QueueSpec spec{lambda, 1.0, n, to_distribution(service), Exponential{theta}};
    auto sum = summarize(spec);

    double queue_mean = 0.0, system_mean = 0.0, abandoning = 0.0, max_gap = 0.0;
    for (int i = 0; i <= sol.K; ++i) {
        const double m = sol.marginal[std::size_t(i)];
        system_mean += i * m;
        if (i > n) {
            queue_mean += (i - n) * m;
            abandoning += theta * (i - n) * m;
        }
        max_gap = std::max(max_gap, std::abs(m - queue_pmf(sum, spec, i)));
    }

    if (wants_csv(s)) {
        std::ostringstream body;
        write_pmf_csv(sol, sum, spec, body);
        return csv_preamble(s) + body.str();
    }
    Json envelope = json_envelope(s);
    Json& res = envelope["result"];
    res["truncation"] = sol.K;
    res["phases"] = sol.phases;
    res["residual"] = sol.residual;
    res["tail_mass"] = sol.tail_mass;
    res["abandonment"] = abandoning / lambda;
    res["queue_mean"] = queue_mean;
    res["system_mean"] = system_mean;
    res["busy_mean"] = sol.busy_mean;
    res["tv_vs_gaussian"] = tv_distance(sol, sum, spec);
    res["max_abs_gap"] = max_gap;
    res["pmf"] = sol.marginal;
    Json gaussian = Json::array();
    for (int i = 0; i <= sol.K; ++i) gaussian.push_back(queue_pmf(sum, spec, i));
    res["gaussian"] = std::move(gaussian);
    return finish_json(std::move(envelope));
}

inline std::string run_compare(const Scenario& s, int threads) {
    const Json& p = s.payload();

    std::vector<NamedCell> cells;
    if (p.contains("cells")) {
        cells = cells_of(p, "compare");
    } else {
        QueueSpec base;
        const Json& q = p.at("queue");
        base.arrival_rate = q.at("arrival_rate").get<double>();
        base.interarrival_scv = q.at("interarrival_scv").get<double>();
        base.service = distribution_from_json(q.at("service"), "compare.queue.service");
        base.patience = distribution_from_json(q.at("patience"), "compare.queue.patience");
        for (const Json& v : p.at("servers")) {
            QueueSpec spec = base;
            spec.n = v.get<int>();
            cells.push_back({"n=" + std::to_string(spec.n), spec});
        }
    }

    const auto eval_names = p.at("evaluators").get<std::vector<std::string>>();
    std::vector<std::string> columns;
    for (const auto& name : eval_names) {
        std::string col = name;
        int suffix = 2;
        while (std::find(columns.begin(), columns.end(), col) != columns.end())
            col = name + "_" + std::to_string(suffix++);
        columns.push_back(col);
    }

    std::vector<MeasureSpec> measures;
    for (const Json& jm : p.at("measures"))
        measures.push_back(measure_from_json(jm, "compare.measures"));

    // one simulation run covers every requested measure for a cell
    SimConfig sim_template;
    const bool has_sim =
        std::find(eval_names.begin(), eval_names.end(), "simulation") != eval_names.end();
    if (has_sim) {
        sim_template = sim_from_json(p.at("sim"), s.seed, 1);
        for (const auto& m : measures) {
            auto put = [&](std::vector<double>& list) {
                if (std::find(list.begin(), list.end(), m.param) == list.end())
                    list.push_back(m.param);
            };
            if (m.kind == MeasureSpec::Kind::wait_tail) put(sim_template.tail_thresholds_w);
            if (m.kind == MeasureSpec::Kind::system_tail) put(sim_template.tail_thresholds_x);
            if (m.kind == MeasureSpec::Kind::service_level) put(sim_template.service_level_delays);
            if (m.kind == MeasureSpec::Kind::effective_abandonment)
                put(sim_template.effective_abd_delays);
        }
    }

    struct CellData {
        DiffusionSummary sum;
        std::optional<DiffusionSummary> zm_sum;
        QueueSpec zm;
        std::optional<SimResult> sim;
    };
    const bool has_zm = std::find(eval_names.begin(), eval_names.end(), "zm") != eval_names.end();
    std::vector<CellData> data(cells.size());
    auto compute_cell = [&](std::size_t i, int sim_threads) {
        CellData& d = data[i];
        d.sum = summarize(cells[i].spec);
        if (has_zm) {
            d.zm = zm_spec(cells[i].spec);
            d.zm_sum = summarize(d.zm);
        }
        if (has_sim) {
            SimConfig cfg = sim_template;
            cfg.spec = cells[i].spec;
            cfg.threads = sim_threads;
            d.sim = simulate(cfg).result;
        }
    };
    const int workers =
        std::max(1, std::min<int>({threads, int(cells.size()),
                                   int(std::thread::hardware_concurrency())}));
    if (workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) compute_cell(i, threads);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto drain = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
                try {
                    compute_cell(i, 1);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
        drain();
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<std::string> header = {"label", "servers", "measure"};
    for (std::size_t e = 0; e < columns.size(); ++e) {
        header.push_back(columns[e]);
        if (eval_names[e] == "simulation") header.push_back(columns[e] + "_halfwidth");
    }
    for (std::size_t e = 1; e < columns.size(); ++e) {
        header.push_back("abs_gap_" + columns[e]);
        header.push_back("rel_gap_" + columns[e]);
    }
    header.push_back("svpr");
    header.push_back("warnings");

    std::ostringstream csv_body;
    CsvWriter csv(csv_body);
    csv.row(header);
    Json rows = Json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const CellData& d = data[i];
        std::string warn;
        for (const auto& w : d.sum.warnings) {
            if (!warn.empty()) warn += "; ";
            warn += w;
        }
        for (const auto& m : measures) {
            std::vector<double> values(eval_names.size(), 0.0);
            std::vector<double> halfwidths(eval_names.size(), 0.0);
            for (std::size_t e = 0; e < eval_names.size(); ++e) {
                if (eval_names[e] == "diffusion") {
                    values[e] = measure_value(d.sum, cells[i].spec, m);
                } else if (eval_names[e] == "zm") {
                    values[e] = measure_value(*d.zm_sum, d.zm, m);
                } else {
                    SimConfig cfg = sim_template;
                    auto [est, hw] = sim_measure(*d.sim, m, cfg);
                    values[e] = est;
                    halfwidths[e] = hw;
                }
            }
            std::vector<std::string> fields = {cells[i].label, std::to_string(cells[i].spec.n),
                                               measure_name(m)};
            Json row;
            row["label"] = cells[i].label;
            row["servers"] = cells[i].spec.n;
            row["measure"] = measure_name(m);
            for (std::size_t e = 0; e < columns.size(); ++e) {
                fields.push_back(format_double(values[e]));
                row[columns[e]] = values[e];
                if (eval_names[e] == "simulation") {
                    fields.push_back(format_double(halfwidths[e]));
                    row[columns[e] + "_halfwidth"] = halfwidths[e];
                }
            }
            for (std::size_t e = 1; e < columns.size(); ++e) {
                const double gap = values[e] - values[0];
                fields.push_back(format_double(gap));
                row["abs_gap_" + columns[e]] = gap;
                if (values[0] != 0.0) {
                    fields.push_back(format_double(gap / std::abs(values[0])));
                    row["rel_gap_" + columns[e]] = gap / std::abs(values[0]);
                } else {
                    fields.push_back("");
                }
            }
            fields.push_back(format_double(d.sum.svpr));
            fields.push_back(warn);
            row["svpr"] = d.sum.svpr;
            row["warnings"] = d.sum.warnings;
            csv.row(fields);
            rows.push_back(std::move(row));
        }
    }

    if (wants_csv(s)) return csv_preamble(s) + csv_body.str();
    Json envelope = json_envelope(s);
    envelope["result"]["rows"] = std::move(rows);
    return finish_json(std::move(envelope));
}

}  // namespace scn

inline std::string run_scenario(const Scenario& s, int threads = 1) {
    switch (s.kind) {
        case ScenarioKind::approx: return scn::run_approx(s);
        case ScenarioKind::simulate: return scn::run_simulate(s, threads);
        case ScenarioKind::staff: return scn::run_staff(s, threads);
        case ScenarioKind::fclt: return scn::run_fclt(s, threads);
        case ScenarioKind::mam: return scn::run_mam(s);
        case ScenarioKind::compare: return scn::run_compare(s, threads);
    }
    throw EvaluatorError("unknown scenario kind");
}

}  // namespace edq

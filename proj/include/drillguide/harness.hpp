#pragma once

// Within-subject experiment runner: condition order from a balanced Latin
// square, seeded targets per (subject, condition), one agent trial per
// target, and the dataset.csv / config.json pair on disk.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "drillguide/agent.hpp"
#include "drillguide/core.hpp"
#include "drillguide/geometry.hpp"
#include "drillguide/record.hpp"
#include "drillguide/widget.hpp"

namespace drillguide {

struct TargetRegion {
    Vec3 min{-25.0, -10.0, -15.0};  // mm
    Vec3 max{25.0, 10.0, 15.0};
    double max_tilt_deg = 30.0;  // bit axis tilt from vertical
};

/// Where the tool starts relative to each target.
struct StartOffset {
    double min_mm = 20.0;
    double max_mm = 60.0;
    double min_deg = 5.0;
    double max_deg = 25.0;
};

/// Per-subject log-normal multipliers on the base agent.
struct SubjectJitter {
    bool enabled = true;
    double gain_std = 0.2;
    double acuity_std = 0.1;
    double latency_std = 0.2;
    double carefulness_std = 0.35;  // scales both confirm thresholds
};

struct ExperimentConfig {
    int n_subjects = 35;
    int trials_per_condition = 16;
    std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
    TargetRegion target_region;
    StartOffset start_offset;
    WidgetConfig widget;
    AgentParams agent;
    SubjectJitter subject_jitter;
    std::uint64_t master_seed = 42;

    void validate() const;
};

std::vector<std::vector<int>> balanced_latin_square(int n);

struct Dataset {
    ExperimentConfig config;
    std::vector<TrialRecord> records;
};

// ---------------------------------------------------------------------------
// Latin square

/// Williams design for even n: first row 0, 1, n-1, 2, n-2, ...; row i adds
/// i modulo n. Every ordered adjacency appears exactly once.
inline std::vector<std::vector<int>> balanced_latin_square(int n) {
    if (n < 2) throw invalid_input("balanced Latin square needs n >= 2");
    if (n % 2 != 0) {
        throw invalid_input("balanced Latin square needs an even n (got " + std::to_string(n) +
                            "); odd n requires the doubled-square variant");
    }
    std::vector<int> first(static_cast<std::size_t>(n));
    int lo = 1;
    int hi = n - 1;
    first[0] = 0;
    for (int j = 1; j < n; ++j) first[static_cast<std::size_t>(j)] = (j % 2 == 1) ? lo++ : hi--;
    std::vector<std::vector<int>> square(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            square[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = (first[static_cast<std::size_t>(j)] + i) % n;
        }
    }
    return square;
}

// ---------------------------------------------------------------------------
// Targets and start poses

inline std::vector<Pose> generate_targets(const TargetRegion& region, int count, rng::Stream& rng) {
    std::vector<Pose> out;
    if (count <= 0) return out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Pose p;
        p.position = {rng.uniform(region.min.x, region.max.x), rng.uniform(region.min.y, region.max.y),
                      rng.uniform(region.min.z, region.max.z)};
        const double tilt = rng.uniform(0.0, region.max_tilt_deg);
        const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double spin = rng.uniform(-180.0, 180.0);
        const Vec3 hinge{std::cos(azimuth), 0.0, std::sin(azimuth)};
        p.orientation = UnitQuat::from_axis_angle(hinge, tilt) * UnitQuat::from_axis_angle(axis::bit, spin);
        out.push_back(p);
    }
    return out;
}

inline Pose sample_start(const Pose& target, const StartOffset& off, rng::Stream& rng) {
    Vec3 dir;
    do {
        dir = {rng.normal(), rng.normal(), rng.normal()};
    } while (dir.norm() < 1e-9);
    dir = dir / dir.norm();
    Pose start;
    start.position = target.position + dir * rng.uniform(off.min_mm, off.max_mm);
    const double az = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double tilt = rng.uniform(off.min_deg, off.max_deg);
    const double spin = rng.uniform(-180.0, 180.0);
    start.orientation = target.orientation * UnitQuat::from_axis_angle({std::cos(az), 0.0, std::sin(az)}, tilt) *
                        UnitQuat::from_axis_angle(axis::bit, spin);
    return start;
}

// ---------------------------------------------------------------------------
// Config validation and JSON

inline void ExperimentConfig::validate() const {
    if (n_subjects < 1) throw Error("config", "n_subjects must be >= 1");
    if (trials_per_condition < 1) throw Error("config", "trials_per_condition must be >= 1");
    if (conditions.size() < 2 || conditions.size() % 2 != 0) {
        throw Error("config", "conditions must list an even number (>= 2) of conditions for the balanced Latin square");
    }
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        for (std::size_t j = i + 1; j < conditions.size(); ++j) {
            if (conditions[i] == conditions[j]) throw Error("config", "conditions contains a duplicate");
        }
    }
    const auto& r = target_region;
    if (!(r.min.x < r.max.x) || !(r.min.y < r.max.y) || !(r.min.z < r.max.z)) {
        throw Error("config", "target_region min must be < max on every axis");
    }
    if (!(r.max_tilt_deg >= 0.0 && r.max_tilt_deg < 90.0)) throw Error("config", "target_region.max_tilt_deg must be in [0, 90)");
    const auto& s = start_offset;
    if (!(s.min_mm >= 0.0 && s.min_mm <= s.max_mm)) throw Error("config", "start_offset.min_mm must be in [0, max_mm]");
    if (!(s.min_deg >= 0.0 && s.min_deg <= s.max_deg && s.max_deg < 180.0)) {
        throw Error("config", "start_offset.min_deg must be in [0, max_deg] and max_deg < 180");
    }
    const auto& j = subject_jitter;
    for (auto [v, name] : {std::pair{j.gain_std, "gain_std"}, std::pair{j.acuity_std, "acuity_std"},
                           std::pair{j.latency_std, "latency_std"}, std::pair{j.carefulness_std, "carefulness_std"}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("config", std::string("subject_jitter.") + name + " must be >= 0");
    }
    widget.validate();
    agent.validate();
}

namespace detail {

using json = nlohmann::ordered_json;

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// Strict readers: unknown keys and wrong types are config errors naming the
// full dotted path of the field.
class ConfigReader {
public:
    ConfigReader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw Error("config", where("") + " must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            if (!known) throw Error("config", "unknown field " + where(it.key()));
        }
    }

    bool has(const char* key) const { return obj_.contains(key); }

    void number(const char* key, double& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (v.is_number()) {
            out = v.get<double>();
        } else if (v.is_string() && (v == "inf" || v == "Infinity")) {
            out = std::numeric_limits<double>::infinity();
        } else {
            throw Error("config", where(key) + " must be a number");
        }
    }

    void integer(const char* key, int& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number_integer()) throw Error("config", where(key) + " must be an integer");
        out = v.get<int>();
    }

    void u64(const char* key, std::uint64_t& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw Error("config", where(key) + " must be a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }

    void boolean(const char* key, bool& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_boolean()) throw Error("config", where(key) + " must be a boolean");
        out = v.get<bool>();
    }

    void vec(const char* key, Vec3& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
            throw Error("config", where(key) + " must be an array of 3 numbers");
        }
        out = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    }

    ConfigReader child(const char* key) const { return ConfigReader(obj_.at(key), where(key)); }

    const nlohmann::json& raw(const char* key) const { return obj_.at(key); }
    std::string where(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const nlohmann::json& obj_;
    std::string path_;
};

inline json acuity_json(const Acuity& a) {
    auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json("inf"); };
    return json{{"pos", num(a.pos)}, {"rot", num(a.rot)}};
}

}  // namespace detail

inline nlohmann::ordered_json widget_to_json(const WidgetConfig& w) {
    return {{"tt_pos", w.tt_pos},
            {"tt_rot", w.tt_rot},
            {"mt_pos", w.mt_pos},
            {"mt_rot", w.mt_rot},
            {"d_max", w.d_max},
            {"duo_radial_offset", w.duo_radial_offset},
            {"duo_glyph_size", w.duo_glyph_size},
            {"entry_point_radius", w.entry_point_radius},
            {"entry_point_length", w.entry_point_length},
            {"axis_radius", w.axis_radius},
            {"axis_length", w.axis_length},
            {"disc_radius", w.disc_radius},
            {"disc_offset", w.disc_offset},
            {"loupe_magnification", w.loupe_magnification}};
}

inline void widget_from_json(const nlohmann::json& j, WidgetConfig& w, const std::string& path = "widget") {
    detail::ConfigReader r(j, path);
    r.allow({"tt_pos", "tt_rot", "mt_pos", "mt_rot", "d_max", "duo_radial_offset", "duo_glyph_size",
             "entry_point_radius", "entry_point_length", "axis_radius", "axis_length", "disc_radius", "disc_offset",
             "loupe_magnification"});
    r.number("tt_pos", w.tt_pos);
    r.number("tt_rot", w.tt_rot);
    r.number("mt_pos", w.mt_pos);
    r.number("mt_rot", w.mt_rot);
    r.number("d_max", w.d_max);
    r.number("duo_radial_offset", w.duo_radial_offset);
    r.number("duo_glyph_size", w.duo_glyph_size);
    r.number("entry_point_radius", w.entry_point_radius);
    r.number("entry_point_length", w.entry_point_length);
    r.number("axis_radius", w.axis_radius);
    r.number("axis_length", w.axis_length);
    r.number("disc_radius", w.disc_radius);
    r.number("disc_offset", w.disc_offset);
    r.number("loupe_magnification", w.loupe_magnification);
}

inline nlohmann::ordered_json agent_to_json(const AgentParams& a) {
    nlohmann::ordered_json perception;
    for (Condition c : kAllConditions) perception[std::string(to_string(c))] = detail::acuity_json(a.acuity(c));
    return {{"gain_pos", a.gain_pos},
            {"gain_rot", a.gain_rot},
            {"reaction_delay", a.reaction_delay},
            {"element_latency", a.element_latency},
            {"duo_latency", a.duo_latency},
            {"submovement", a.submovement},
            {"motor_noise_pos", a.motor_noise_pos},
            {"motor_noise_rot", a.motor_noise_rot},
            {"perception", perception},
            {"no_cue_floor_pos", a.no_cue_floor_pos},
            {"no_cue_floor_rot", a.no_cue_floor_rot},
            {"perception_tau", a.perception_tau},
            {"confirm_threshold_pos", a.confirm_threshold_pos},
            {"confirm_threshold_rot", a.confirm_threshold_rot},
            {"dwell_frames", a.dwell_frames},
            {"step_hz", a.step_hz},
            {"timeout", a.timeout}};
}

inline void agent_from_json(const nlohmann::json& j, AgentParams& a, const std::string& path = "agent") {
    detail::ConfigReader r(j, path);
    r.allow({"gain_pos", "gain_rot", "reaction_delay", "element_latency", "duo_latency", "submovement",
             "motor_noise_pos", "motor_noise_rot", "perception", "no_cue_floor_pos", "no_cue_floor_rot",
             "perception_tau", "confirm_threshold_pos", "confirm_threshold_rot", "dwell_frames", "step_hz",
             "timeout"});
    r.number("gain_pos", a.gain_pos);
    r.number("gain_rot", a.gain_rot);
    r.number("reaction_delay", a.reaction_delay);
    r.number("element_latency", a.element_latency);
    r.number("duo_latency", a.duo_latency);
    r.number("submovement", a.submovement);
    r.number("motor_noise_pos", a.motor_noise_pos);
    r.number("motor_noise_rot", a.motor_noise_rot);
    if (r.has("perception")) {
        const auto p = r.child("perception");
        p.allow({"EntryPoint", "TargetAxis", "DWEP", "DWTA"});
        for (Condition c : kAllConditions) {
            const std::string key(to_string(c));
            if (!p.has(key.c_str())) continue;
            const auto cr = p.child(key.c_str());
            cr.allow({"pos", "rot"});
            cr.number("pos", a.acuity(c).pos);
            cr.number("rot", a.acuity(c).rot);
        }
    }
    r.number("no_cue_floor_pos", a.no_cue_floor_pos);
    r.number("no_cue_floor_rot", a.no_cue_floor_rot);
    r.number("perception_tau", a.perception_tau);
    r.number("confirm_threshold_pos", a.confirm_threshold_pos);
    r.number("confirm_threshold_rot", a.confirm_threshold_rot);
    r.integer("dwell_frames", a.dwell_frames);
    r.number("step_hz", a.step_hz);
    r.number("timeout", a.timeout);
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json conds = nlohmann::ordered_json::array();
    for (Condition k : c.conditions) conds.push_back(std::string(to_string(k)));
    return {{"n_subjects", c.n_subjects},
            {"trials_per_condition", c.trials_per_condition},
            {"conditions", conds},
            {"target_region",
             {{"min", detail::vec_json(c.target_region.min)},
              {"max", detail::vec_json(c.target_region.max)},
              {"max_tilt_deg", c.target_region.max_tilt_deg}}},
            {"start_offset",
             {{"min_mm", c.start_offset.min_mm},
              {"max_mm", c.start_offset.max_mm},
              {"min_deg", c.start_offset.min_deg},
              {"max_deg", c.start_offset.max_deg}}},
            {"widget", widget_to_json(c.widget)},
            {"agent", agent_to_json(c.agent)},
            {"subject_jitter",
             {{"enabled", c.subject_jitter.enabled},
              {"gain_std", c.subject_jitter.gain_std},
              {"acuity_std", c.subject_jitter.acuity_std},
              {"latency_std", c.subject_jitter.latency_std},
              {"carefulness_std", c.subject_jitter.carefulness_std}}},
            {"master_seed", c.master_seed}};
}

/// Parses and validates a config; every field is optional and defaults to
/// the values above.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    detail::ConfigReader r(j, "");
    r.allow({"n_subjects", "trials_per_condition", "conditions", "target_region", "start_offset", "widget", "agent",
             "subject_jitter", "master_seed"});
    r.integer("n_subjects", c.n_subjects);
    r.integer("trials_per_condition", c.trials_per_condition);
    if (r.has("conditions")) {
        const auto& arr = r.raw("conditions");
        if (!arr.is_array()) throw Error("config", "conditions must be an array of condition names");
        c.conditions.clear();
        for (const auto& v : arr) {
            const auto parsed = v.is_string() ? parse_condition(v.get<std::string>()) : std::nullopt;
            if (!parsed) throw Error("config", "conditions contains an unknown condition " + v.dump());
            c.conditions.push_back(*parsed);
        }
    }
    if (r.has("target_region")) {
        const auto t = r.child("target_region");
        t.allow({"min", "max", "max_tilt_deg"});
        t.vec("min", c.target_region.min);
        t.vec("max", c.target_region.max);
        t.number("max_tilt_deg", c.target_region.max_tilt_deg);
    }
    if (r.has("start_offset")) {
        const auto s = r.child("start_offset");
        s.allow({"min_mm", "max_mm", "min_deg", "max_deg"});
        s.number("min_mm", c.start_offset.min_mm);
        s.number("max_mm", c.start_offset.max_mm);
        s.number("min_deg", c.start_offset.min_deg);
        s.number("max_deg", c.start_offset.max_deg);
    }
    if (r.has("widget")) widget_from_json(r.raw("widget"), c.widget);
    if (r.has("agent")) agent_from_json(r.raw("agent"), c.agent);
    if (r.has("subject_jitter")) {
        const auto s = r.child("subject_jitter");
        s.allow({"enabled", "gain_std", "acuity_std", "latency_std", "carefulness_std"});
        s.boolean("enabled", c.subject_jitter.enabled);
        s.number("gain_std", c.subject_jitter.gain_std);
        s.number("acuity_std", c.subject_jitter.acuity_std);
        s.number("latency_std", c.subject_jitter.latency_std);
        s.number("carefulness_std", c.subject_jitter.carefulness_std);
    }
    r.u64("master_seed", c.master_seed);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config", "cannot read config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("config", "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Experiment plan and execution

namespace seed_tag {
inline constexpr std::uint64_t kSubject = 0x5375626a;  // "Subj"
inline constexpr std::uint64_t kTargets = 0x54726773;  // "Trgs"
inline constexpr std::uint64_t kStart = 0x53747274;    // "Strt"
}  // namespace seed_tag

/// Agent for one subject: the base parameters with seeded log-normal jitter.
inline AgentParams subject_agent(const ExperimentConfig& cfg, int subject) {
    AgentParams a = cfg.agent;
    const SubjectJitter& j = cfg.subject_jitter;
    if (!j.enabled) return a;
    rng::Stream rng(rng::derive(cfg.master_seed, {static_cast<std::uint64_t>(subject), seed_tag::kSubject}));
    const double gain = std::exp(j.gain_std * rng.normal());
    const double acuity = std::exp(j.acuity_std * rng.normal());
    const double latency = std::exp(j.latency_std * rng.normal());
    const double careful = std::exp(j.carefulness_std * rng.normal());
    a.gain_pos = std::min(a.gain_pos * gain, 0.5 * a.step_hz);
    a.gain_rot = std::min(a.gain_rot * gain, 0.5 * a.step_hz);
    for (Acuity& ac : a.perception) {
        ac.pos *= acuity;
        ac.rot *= acuity;
    }
    a.reaction_delay *= latency;
    a.element_latency *= latency;
    a.duo_latency *= latency;
    a.confirm_threshold_pos *= careful;
    a.confirm_threshold_rot *= careful;
    return a;
}

struct TrialPlan {
    int subject = 0;
    int trial = 0;  // sequence index within the subject
    Condition condition = Condition::EntryPoint;
    Pose target;
    Pose start;
    AgentParams agent;  // seed set per trial
};

/// Every trial of the experiment in (subject, trial) order. Pure function of
/// the config.
inline std::vector<TrialPlan> plan_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const int k = static_cast<int>(cfg.conditions.size());
    const auto square = balanced_latin_square(k);
    std::vector<TrialPlan> plans;
    plans.reserve(static_cast<std::size_t>(cfg.n_subjects) * static_cast<std::size_t>(k) *
                  static_cast<std::size_t>(cfg.trials_per_condition));
    for (int s = 0; s < cfg.n_subjects; ++s) {
        const AgentParams base = subject_agent(cfg, s);
        const auto& order = square[static_cast<std::size_t>(s % k)];
        for (int b = 0; b < k; ++b) {
            const Condition cond = cfg.conditions[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
            const auto cond_tag = static_cast<std::uint64_t>(cond);
            rng::Stream target_rng(rng::derive(cfg.master_seed, {static_cast<std::uint64_t>(s), cond_tag, seed_tag::kTargets}));
            const auto targets = generate_targets(cfg.target_region, cfg.trials_per_condition, target_rng);
            for (int t = 0; t < cfg.trials_per_condition; ++t) {
                TrialPlan p;
                p.subject = s;
                p.trial = b * cfg.trials_per_condition + t;
                p.condition = cond;
                p.target = targets[static_cast<std::size_t>(t)];
                p.agent = base;
                p.agent.seed = rng::derive(cfg.master_seed, {static_cast<std::uint64_t>(s), cond_tag,
                                                             static_cast<std::uint64_t>(t)});
                rng::Stream start_rng(rng::derive(p.agent.seed, {seed_tag::kStart}));
                p.start = sample_start(p.target, cfg.start_offset, start_rng);
                plans.push_back(std::move(p));
            }
        }
    }
    return plans;
}

inline TrialRecord execute(const TrialPlan& plan, const WidgetConfig& widget, const FrameSink& sink = {}) {
    TrialRecord rec = run_trial(plan.target, plan.start, plan.condition, plan.agent, widget, sink);
    rec.subject = plan.subject;
    rec.trial = plan.trial;
    return rec;
}

/// Runs every planned trial on `workers` threads. Records come back in plan
/// order regardless of the worker count.
inline Dataset run_experiment(const ExperimentConfig& cfg, int workers = 1) {
    const auto plans = plan_experiment(cfg);
    Dataset ds;
    ds.config = cfg;
    ds.records.resize(plans.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < plans.size(); i = next++) {
            try {
                ds.records[i] = execute(plans[i], cfg.widget);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(plans.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);
    return ds;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kDatasetHeader =
    "subject,condition,trial,tx,ty,tz,time,pm,px,py,pz,rm,rx,rz,timed_out,seed";

inline std::string csv_row(const TrialRecord& r) {
    std::string s;
    s += std::to_string(r.subject);
    s += ',';
    s += to_string(r.condition);
    s += ',';
    s += std::to_string(r.trial);
    for (double v : {r.target.position.x, r.target.position.y, r.target.position.z}) {
        s += ',';
        s += fixed(v, 6);
    }
    for (double v : {r.task_time, r.error.pm, r.error.pe.x, r.error.pe.y, r.error.pe.z, r.error.rm, r.error.re_x,
                     r.error.re_z}) {
        s += ',';
        s += fixed(v, 9);
    }
    s += r.timed_out ? ",1," : ",0,";
    s += std::to_string(r.seed);
    return s;
}

inline std::string to_csv(const std::vector<TrialRecord>& records) {
    std::string out = kDatasetHeader;
    out += '\n';
    for (const auto& r : records) {
        out += csv_row(r);
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("schema", "row " + std::to_string(row) + " column " + column + ": not a number: '" + s + "'");
    }
}

inline long long parse_int(const std::string& s, std::size_t row, const std::string& column) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("schema", "row " + std::to_string(row) + " column " + column + ": not an integer: '" + s + "'");
    }
}

}  // namespace detail

/// Parses dataset.csv text. Rows are numbered from 1 (the header is row 0).
inline std::vector<TrialRecord> parse_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("no-trials", "no trials: dataset is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    const auto expected = detail::split_csv_line(kDatasetHeader);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i >= header.size() || header[i] != expected[i]) {
            throw Error("schema", "row 0 column " + expected[i] + ": header mismatch (expected '" + kDatasetHeader + "')");
        }
    }
    if (header.size() != expected.size()) throw Error("schema", "row 0 column " + header.back() + ": unexpected column");

    std::vector<TrialRecord> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != expected.size()) {
            throw Error("schema", "row " + std::to_string(row) + " column " +
                                      expected[std::min(c.size(), expected.size() - 1)] + ": expected " +
                                      std::to_string(expected.size()) + " cells, got " + std::to_string(c.size()));
        }
        TrialRecord r;
        r.subject = static_cast<int>(detail::parse_int(c[0], row, "subject"));
        const auto cond = parse_condition(c[1]);
        if (!cond) throw Error("schema", "row " + std::to_string(row) + " column condition: unknown condition '" + c[1] + "'");
        r.condition = *cond;
        r.trial = static_cast<int>(detail::parse_int(c[2], row, "trial"));
        r.target.position = {detail::parse_double(c[3], row, "tx"), detail::parse_double(c[4], row, "ty"),
                             detail::parse_double(c[5], row, "tz")};
        r.task_time = detail::parse_double(c[6], row, "time");
        r.error.pm = detail::parse_double(c[7], row, "pm");
        r.error.pe = {detail::parse_double(c[8], row, "px"), detail::parse_double(c[9], row, "py"),
                      detail::parse_double(c[10], row, "pz")};
        r.error.rm = detail::parse_double(c[11], row, "rm");
        r.error.re_x = detail::parse_double(c[12], row, "rx");
        r.error.re_z = detail::parse_double(c[13], row, "rz");
        const long long to = detail::parse_int(c[14], row, "timed_out");
        if (to != 0 && to != 1) throw Error("schema", "row " + std::to_string(row) + " column timed_out: must be 0 or 1");
        r.timed_out = to == 1;
        try {
            std::size_t used = 0;
            r.seed = std::stoull(c[15], &used);
            if (used != c[15].size()) throw std::invalid_argument(c[15]);
        } catch (const std::exception&) {
            throw Error("schema", "row " + std::to_string(row) + " column seed: not an unsigned integer");
        }
        if (!(r.task_time > 0.0)) throw Error("schema", "row " + std::to_string(row) + " column time: must be > 0");
        if (r.error.pm < 0.0) throw Error("schema", "row " + std::to_string(row) + " column pm: must be >= 0");
        const double pm2 = dot(r.error.pe, r.error.pe);
        if (std::abs(std::sqrt(pm2) - r.error.pm) > 1e-6 * std::max(1.0, r.error.pm)) {
            throw Error("schema", "row " + std::to_string(row) + " column pm: inconsistent with px, py, pz");
        }
        out.push_back(r);
    }
    return out;
}

inline std::vector<TrialRecord> read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("input", "cannot read dataset " + path.string());
    return parse_dataset_csv(in);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io", "failed writing " + path.string());
}

/// Writes dataset.csv and config.json into `dir` (created if missing).
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("io", "cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir / "dataset.csv", to_csv(ds.records));
    write_text(dir / "config.json", config_to_json(ds.config).dump(2) + "\n");
}

}  // namespace drillguide

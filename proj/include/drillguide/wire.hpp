#pragma once

// Line-delimited JSON session protocol between the engine and an interactive
// client. Transport-agnostic: Engine consumes batches of client lines and
// returns server lines. See PROTOCOL.md for the grammar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drillguide/harness.hpp"

namespace drillguide::wire {

inline constexpr const char* kVersion = "v1";

/// Server lines produced by one batch. `close` asks the transport to end the
/// stream after sending them.
struct Outcome {
    std::vector<std::string> lines;
    bool close = false;
};

namespace detail {

inline std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

inline std::string error_line(const std::string& code, const std::string& detail,
                              const std::optional<std::string>& session = std::nullopt) {
    std::string s = "{\"v\":\"v1\",\"type\":\"Error\"";
    if (session) s += ",\"session\":" + quoted(*session);
    s += ",\"code\":" + quoted(code) + ",\"detail\":" + quoted(detail) + "}";
    return s;
}

inline std::string error_json(const GuidanceError& e) {
    std::string s = "{\"pm\":" + fixed(e.pm) + ",\"px\":" + fixed(e.pe.x) + ",\"py\":" + fixed(e.pe.y) +
                    ",\"pz\":" + fixed(e.pe.z) + ",\"rm\":" + fixed(e.rm) + ",\"rx\":" + fixed(e.re_x) +
                    ",\"rz\":" + fixed(e.re_z) + "}";
    return s;
}

inline std::string pose_json(const Pose& p) {
    std::string s;
    append_pose_json(s, p);
    return s;
}

// Same columns and formatting as the dataset CSV.
inline std::string record_json(const TrialRecord& r) {
    std::string s = "{\"subject\":" + std::to_string(r.subject) + ",\"condition\":\"" +
                    std::string(to_string(r.condition)) + "\",\"trial\":" + std::to_string(r.trial) +
                    ",\"tx\":" + fixed(r.target.position.x) + ",\"ty\":" + fixed(r.target.position.y) +
                    ",\"tz\":" + fixed(r.target.position.z) + ",\"time\":" + fixed(r.task_time, 9) +
                    ",\"pm\":" + fixed(r.error.pm, 9) + ",\"px\":" + fixed(r.error.pe.x, 9) +
                    ",\"py\":" + fixed(r.error.pe.y, 9) + ",\"pz\":" + fixed(r.error.pe.z, 9) +
                    ",\"rm\":" + fixed(r.error.rm, 9) + ",\"rx\":" + fixed(r.error.re_x, 9) +
                    ",\"rz\":" + fixed(r.error.re_z, 9) + ",\"timed_out\":" + (r.timed_out ? "true" : "false") +
                    ",\"seed\":" + std::to_string(r.seed) + "}";
    return s;
}

// Malformed-message signal, caught by the engine and turned into an Error line.
struct Malformed {
    std::string code;
    std::string detail;
};

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw Malformed{"malformed", std::string("missing field '") + key + "'"};
    return j.at(key);
}

inline double number_field(const nlohmann::json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw Malformed{"malformed", std::string("field '") + key + "' must be a finite number"};
    }
    return v.get<double>();
}

inline std::string string_field(const nlohmann::json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) throw Malformed{"malformed", std::string("field '") + key + "' must be a string"};
    return v.get<std::string>();
}

inline std::int64_t integer_field(const nlohmann::json& j, const char* key, std::int64_t fallback, bool required) {
    if (!j.contains(key)) {
        if (required) throw Malformed{"malformed", std::string("missing field '") + key + "'"};
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw Malformed{"malformed", std::string("field '") + key + "' must be a non-negative integer"};
    }
    return v.get<std::int64_t>();
}

inline Pose pose_field(const nlohmann::json& j, const char* key) {
    const auto& p = field(j, key);
    auto numbers = [&](const char* name, std::size_t n) {
        if (!p.is_object() || !p.contains(name) || !p.at(name).is_array() || p.at(name).size() != n) {
            throw Malformed{"malformed", std::string(key) + "." + name + " must be an array of " + std::to_string(n) +
                                             " numbers"};
        }
        std::vector<double> out;
        for (const auto& v : p.at(name)) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                throw Malformed{"malformed", std::string(key) + "." + name + " must contain finite numbers"};
            }
            out.push_back(v.get<double>());
        }
        return out;
    };
    const auto pos = numbers("position", 3);
    const auto q = numbers("orientation", 4);
    try {
        return {{pos[0], pos[1], pos[2]}, UnitQuat(q[0], q[1], q[2], q[3])};
    } catch (const Error& e) {
        throw Malformed{"invalid-pose", e.what()};
    }
}

}  // namespace detail

/// One client session: a block of trials under one condition, targets seeded
/// exactly as the harness seeds the same (seed, subject, condition).
struct Session {
    std::string id;
    Condition condition = Condition::EntryPoint;
    WidgetConfig widget;
    std::uint64_t seed = 0;
    int subject = 0;
    int block = 0;
    std::vector<Pose> targets;
    Pose start;
    Pose tool;
    std::int64_t seq = 0;  // latest accepted PoseUpdate
    double last_t = 0.0;   // ms
    double trial_start_t = 0.0;
    int trial_index = 0;
    bool finished = false;
    std::vector<TrialRecord> records;

    const Pose& target() const { return targets[static_cast<std::size_t>(trial_index)]; }

    std::uint64_t trial_seed(int t) const {
        return rng::derive(seed, {static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(condition),
                                  static_cast<std::uint64_t>(t)});
    }

    /// Frame for the current pose; a pure function of the session state.
    std::string frame_line() const {
        const RenderFrame f = build_frame(tool, target(), condition, widget);
        return "{\"v\":\"v1\",\"type\":\"Frame\",\"session\":" + detail::quoted(id) + ",\"seq\":" +
               std::to_string(seq) + ",\"trial_index\":" + std::to_string(trial_index) + ",\"frame\":" + to_json(f) +
               ",\"error\":" + detail::error_json(compute_error(tool, target())) + "}";
    }

    std::string advance_line() const {
        std::string s = "{\"v\":\"v1\",\"type\":\"TrialAdvance\",\"session\":" + detail::quoted(id) +
                        ",\"trial_index\":" + std::to_string(trial_index) + ",\"trials\":" +
                        std::to_string(targets.size()) + ",\"target\":" + detail::pose_json(target());
        if (trial_index == 0) s += ",\"start\":" + detail::pose_json(start);
        return s + "}";
    }

    std::string summary_line() const {
        std::string s = "{\"v\":\"v1\",\"type\":\"SessionSummary\",\"session\":" + detail::quoted(id) +
                        ",\"complete\":" + (finished ? "true" : "false") + ",\"records\":[";
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (i) s += ',';
            s += detail::record_json(records[i]);
        }
        return s + "],\"csv\":" + detail::quoted(to_csv(records)) + "}";
    }
};

/// Session state machines keyed by id. Thread-safe; each batch is handled
/// under one lock, so messages of a session are strictly ordered.
class Engine {
public:
    explicit Engine(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    Outcome handle(const std::string& line) { return handle_batch({line}); }

    /// Handles client lines in order. Consecutive PoseUpdates of a session are
    /// conflated: only the latest one yields a Frame.
    Outcome handle_batch(const std::vector<std::string>& lines) {
        std::lock_guard lock(mutex_);
        Outcome out;
        std::vector<std::string> pending;  // session ids with an unsent Frame, in first-touch order
        auto flush = [&](std::string id) {
            auto it = std::find(pending.begin(), pending.end(), id);
            if (it == pending.end()) return;
            pending.erase(it);
            auto s = sessions_.find(id);
            if (s != sessions_.end()) out.lines.push_back(s->second.frame_line());
        };
        for (const std::string& raw : lines) {
            if (raw.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            nlohmann::json msg;
            try {
                msg = nlohmann::json::parse(raw);
            } catch (const nlohmann::json::exception&) {
                out.lines.push_back(detail::error_line("malformed", "line is not valid JSON"));
                continue;
            }
            if (!msg.is_object()) {
                out.lines.push_back(detail::error_line("malformed", "message must be a JSON object"));
                continue;
            }
            if (!msg.contains("v") || msg.at("v") != kVersion) {
                const std::string got = msg.contains("v") ? msg.at("v").dump() : "none";
                out.lines.push_back(detail::error_line("version", "expected \"v1\", got " + got));
                out.close = true;
                break;
            }
            std::optional<std::string> session;
            try {
                const std::string type = detail::string_field(msg, "type");
                if (type != "StartSession") {
                    session = detail::string_field(msg, "session");
                    if (type != "PoseUpdate") flush(*session);
                }
                if (type == "StartSession") {
                    start_session(msg, out);
                } else if (type == "PoseUpdate") {
                    pose_update(msg, *session);
                    if (std::find(pending.begin(), pending.end(), *session) == pending.end()) {
                        pending.push_back(*session);
                    }
                } else if (type == "Pedal") {
                    pedal(msg, *session, out);
                } else if (type == "EndSession") {
                    Session& s = find(*session);
                    out.lines.push_back(s.summary_line());
                    sessions_.erase(*session);
                } else {
                    throw detail::Malformed{"malformed", "unknown message type '" + type + "'"};
                }
            } catch (const detail::Malformed& m) {
                out.lines.push_back(detail::error_line(m.code, m.detail, session));
            }
        }
        while (!pending.empty()) flush(pending.front());
        return out;
    }

    std::size_t session_count() const {
        std::lock_guard lock(mutex_);
        return sessions_.size();
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }

private:
    Session& find(const std::string& id) {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw detail::Malformed{"unknown-session", "no session '" + id + "'"};
        return it->second;
    }

    Session& active(const std::string& id) {
        Session& s = find(id);
        if (s.finished) throw detail::Malformed{"session-finished", "session '" + id + "' has no trials left"};
        return s;
    }

    void check_time(Session& s, double t) {
        if (t < s.last_t) {
            throw detail::Malformed{"non-monotone-time",
                                    "t_client " + fixed(t, 3) + " is earlier than " + fixed(s.last_t, 3)};
        }
    }

    void start_session(const nlohmann::json& msg, Outcome& out) {
        Session s;
        const auto cond = parse_condition(detail::string_field(msg, "condition"));
        if (!cond) throw detail::Malformed{"malformed", "unknown condition " + msg.at("condition").dump()};
        s.condition = *cond;
        s.seed = static_cast<std::uint64_t>(detail::integer_field(msg, "seed", 0, true));
        s.subject = static_cast<int>(detail::integer_field(msg, "subject", 0, false));
        s.block = static_cast<int>(detail::integer_field(msg, "block", 0, false));
        s.last_t = s.trial_start_t = detail::number_field(msg, "t_client");
        s.widget = cfg_.widget;
        if (msg.contains("widget")) {
            try {
                widget_from_json(msg.at("widget"), s.widget);
                s.widget.validate();
            } catch (const Error& e) {
                throw detail::Malformed{e.code(), e.what()};
            }
        }
        rng::Stream target_rng(rng::derive(s.seed, {static_cast<std::uint64_t>(s.subject),
                                                    static_cast<std::uint64_t>(s.condition), seed_tag::kTargets}));
        s.targets = generate_targets(cfg_.target_region, cfg_.trials_per_condition, target_rng);
        rng::Stream start_rng(rng::derive(s.trial_seed(0), {seed_tag::kStart}));
        s.start = sample_start(s.targets.front(), cfg_.start_offset, start_rng);
        s.tool = s.start;
        s.id = "s" + std::to_string(++counter_);
        out.lines.push_back(s.advance_line());
        out.lines.push_back(s.frame_line());
        sessions_.emplace(s.id, std::move(s));
    }

    void pose_update(const nlohmann::json& msg, const std::string& id) {
        Session& s = active(id);
        const std::int64_t seq = detail::integer_field(msg, "seq", 0, true);
        const double t = detail::number_field(msg, "t_client");
        const Pose tool = detail::pose_field(msg, "tool");
        check_time(s, t);
        if (seq <= s.seq) {
            throw detail::Malformed{"stale-seq", "seq " + std::to_string(seq) + " is not after " + std::to_string(s.seq)};
        }
        s.seq = seq;
        s.last_t = t;
        s.tool = tool;
    }

    void pedal(const nlohmann::json& msg, const std::string& id, Outcome& out) {
        Session& s = active(id);
        const double t = detail::number_field(msg, "t_client");
        check_time(s, t);
        s.last_t = t;
        TrialRecord r;
        r.subject = s.subject;
        r.condition = s.condition;
        r.trial = s.block * cfg_.trials_per_condition + s.trial_index;
        r.target = s.target();
        r.error = compute_error(s.tool, s.target());
        r.task_time = std::max((t - s.trial_start_t) / 1000.0, 0.001);
        r.seed = s.trial_seed(s.trial_index);
        s.records.push_back(r);
        s.trial_start_t = t;
        if (s.trial_index + 1 >= static_cast<int>(s.targets.size())) {
            s.finished = true;
            out.lines.push_back(s.summary_line());
            return;
        }
        ++s.trial_index;
        out.lines.push_back(s.advance_line());
        out.lines.push_back(s.frame_line());
    }

    ExperimentConfig cfg_;
    mutable std::mutex mutex_;
    std::map<std::string, Session> sessions_;
    std::uint64_t counter_ = 0;
};

/// Splits a newline-delimited body into lines (CR tolerated).
inline std::vector<std::string> split_lines(const std::string& body) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        std::size_t end = body.find('\n', pos);
        if (end == std::string::npos) end = body.size();
        std::string line = body.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(std::move(line));
        pos = end + 1;
    }
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

}  // namespace drillguide::wire

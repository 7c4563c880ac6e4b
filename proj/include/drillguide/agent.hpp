#pragma once

// Synthetic user. A seeded proportional controller that sees the error
// through condition-dependent perceptual noise, pauses to read the widget at
// each decision point, and presses the pedal once its *perceived* error has
// stayed under the confirm thresholds for a few frames.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "drillguide/core.hpp"
#include "drillguide/geometry.hpp"
#include "drillguide/record.hpp"
#include "drillguide/widget.hpp"

namespace drillguide {

/// Perceptual noise standard deviations for one condition.
struct Acuity {
    double pos = 1.0;  // mm, per world axis
    double rot = 1.0;  // deg, per swing component

    bool operator==(const Acuity&) const = default;
};

struct AgentParams {
    double gain_pos = 3.0;  // 1/s
    double gain_rot = 3.0;  // 1/s
    // Decision pause: reaction_delay + element_latency * static elements
    // + duo_latency * visible duos, taken after every `submovement` seconds
    // of movement and once when the target appears.
    double reaction_delay = 0.25;  // s
    double element_latency = 0.15; // s per static guidance element
    double duo_latency = 0.12;     // s per visible duo
    double submovement = 0.25;     // s
    double motor_noise_pos = 0.02;  // mm per step
    double motor_noise_rot = 0.02;  // deg per step
    std::array<Acuity, 4> perception{{{1.5, 8.0}, {1.2, 3.0}, {0.6, 1.2}, {0.5, 1.0}}};  // by Condition
    double no_cue_floor_pos = 8.0;  // mm, used when a positional acuity is +inf
    double no_cue_floor_rot = 8.0;  // deg, used where the condition shows no rotational cue
    double perception_tau = 8.0;    // s, correlation time of the perceptual misjudgement
    double confirm_threshold_pos = 1.0;  // mm
    double confirm_threshold_rot = 2.0;  // deg
    int dwell_frames = 10;
    std::uint64_t seed = 0;
    double step_hz = 60.0;
    double timeout = 120.0;  // s, simulated

    const Acuity& acuity(Condition c) const noexcept { return perception[static_cast<std::size_t>(c)]; }
    Acuity& acuity(Condition c) noexcept { return perception[static_cast<std::size_t>(c)]; }

    void validate() const {
        auto fail = [](const std::string& field, const char* what) { throw Error("config", "agent." + field + " " + what); };
        auto positive = [&](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) fail(name, "must be > 0");
        };
        auto non_negative = [&](double v, const char* name) {
            if (!(v >= 0.0) || std::isnan(v)) fail(name, "must be >= 0");
        };
        positive(gain_pos, "gain_pos");
        positive(gain_rot, "gain_rot");
        positive(step_hz, "step_hz");
        if (gain_pos >= step_hz) fail("gain_pos", "must be < step_hz");
        if (gain_rot >= step_hz) fail("gain_rot", "must be < step_hz");
        non_negative(reaction_delay, "reaction_delay");
        non_negative(element_latency, "element_latency");
        non_negative(duo_latency, "duo_latency");
        positive(submovement, "submovement");
        non_negative(motor_noise_pos, "motor_noise_pos");
        non_negative(motor_noise_rot, "motor_noise_rot");
        for (Condition c : kAllConditions) {
            const std::string name = "perception." + std::string(to_string(c));
            // +inf is allowed and means "no cue": the floor is used instead.
            if (!(acuity(c).pos >= 0.0)) fail(name + ".pos", "must be >= 0");
            if (!(acuity(c).rot >= 0.0)) fail(name + ".rot", "must be >= 0");
        }
        non_negative(no_cue_floor_pos, "no_cue_floor_pos");
        non_negative(no_cue_floor_rot, "no_cue_floor_rot");
        positive(perception_tau, "perception_tau");
        positive(confirm_threshold_pos, "confirm_threshold_pos");
        positive(confirm_threshold_rot, "confirm_threshold_rot");
        if (dwell_frames < 1) fail("dwell_frames", "must be >= 1");
        positive(timeout, "timeout");
    }
};

struct AgentState {
    Pose tool;
    Pose target;
    GuidanceError perceived;
    int frames_within_threshold = 0;
    double elapsed = 0.0;  // s
    bool done = false;
    long steps = 0;
    int pause_frames = 0;     // remaining frames of the current decision pause
    int movement_frames = 0;  // frames moved since the last decision pause
    std::array<double, 5> noise{};  // standardized perceptual noise per channel (PX..RZ)
};

struct PedalEvent {
    double time = 0.0;
};

struct StepResult {
    AgentState state;
    std::optional<PedalEvent> pedal;
};

namespace detail {

inline double position_noise_std(const AgentParams& p, Condition c) noexcept {
    const double s = p.acuity(c).pos;
    return std::isfinite(s) ? s : p.no_cue_floor_pos;
}

inline double rotation_noise_std(const AgentParams& p, Condition c) noexcept {
    const double s = p.acuity(c).rot;
    if (!cues_rotation(c) || !std::isfinite(s)) return p.no_cue_floor_rot;
    return s;
}

inline int decision_pause_frames(const RenderFrame& frame, const AgentParams& p) noexcept {
    const double seconds = p.reaction_delay + p.element_latency * static_cast<double>(frame.static_element_count()) +
                           p.duo_latency * static_cast<double>(frame.visible_duo_count());
    return static_cast<int>(std::lround(seconds * p.step_hz));
}

}  // namespace detail

/// Fresh state for a trial: stationary perceptual noise and the pause the
/// agent takes to read the widget when the target first appears.
inline AgentState start_agent(const Pose& start, const Pose& target, const RenderFrame& first_frame,
                              const AgentParams& params, rng::Stream& rng) {
    AgentState s;
    s.tool = start;
    s.target = target;
    for (double& z : s.noise) z = rng.normal();
    s.pause_frames = detail::decision_pause_frames(first_frame, params);
    return s;
}

/// One control step at 1/step_hz.
inline StepResult agent_step(AgentState state, const RenderFrame& frame, const GuidanceError& true_error,
                             const AgentParams& params, rng::Stream& rng) {
    if (state.done) throw invalid_input("agent_step called on a finished trial");
    const Condition cond = frame.condition;
    const double dt = 1.0 / params.step_hz;

    // Ornstein-Uhlenbeck update of the standardized perceptual noise.
    const double a = std::exp(-dt / params.perception_tau);
    const double b = std::sqrt(1.0 - a * a);
    for (double& z : state.noise) z = a * z + b * rng.normal();

    const double sp = detail::position_noise_std(params, cond);
    const double sr = detail::rotation_noise_std(params, cond);
    GuidanceError& p = state.perceived;
    p.pe = true_error.pe + Vec3{state.noise[0], state.noise[1], state.noise[2]} * sp;
    p.pm = p.pe.norm();
    p.re_x = true_error.re_x + state.noise[3] * sr;
    p.re_z = true_error.re_z + state.noise[4] * sr;
    p.rm = std::hypot(p.re_x, p.re_z);

    state.elapsed = static_cast<double>(state.steps + 1) * dt;
    ++state.steps;

    // Only channels the condition actually shows take part in the decision.
    const bool within = p.pm <= params.confirm_threshold_pos &&
                        (!cues_rotation(cond) || p.rm <= params.confirm_threshold_rot);
    state.frames_within_threshold = within ? state.frames_within_threshold + 1 : 0;
    if (state.frames_within_threshold >= params.dwell_frames) {
        state.done = true;
        return {state, PedalEvent{state.elapsed}};
    }

    if (state.pause_frames > 0) {
        --state.pause_frames;
        return {state, std::nullopt};
    }

    const double kp = params.gain_pos * dt;
    Vec3 move = p.pe * kp;
    if (params.motor_noise_pos > 0.0) {
        move += Vec3{rng.normal(), rng.normal(), rng.normal()} * params.motor_noise_pos;
    }
    state.tool.position += move;

    const double kr = params.gain_rot * dt;
    Vec3 turn{-p.re_x * kr, 0.0, -p.re_z * kr};
    if (params.motor_noise_rot > 0.0) {
        turn += Vec3{rng.normal(), 0.0, rng.normal()} * params.motor_noise_rot;
    }
    if (turn.norm() > 0.0) {
        const UnitQuat frame_q = error_frame(state.tool, state.target);
        const UnitQuat world_turn = UnitQuat::from_rotation_vector_deg(frame_q.rotate(turn));
        state.tool.orientation = world_turn * state.tool.orientation;
    }

    if (++state.movement_frames >= static_cast<int>(std::lround(params.submovement * params.step_hz))) {
        state.movement_frames = 0;
        state.pause_frames = detail::decision_pause_frames(frame, params);
    }
    return {state, std::nullopt};
}

using FrameSink = std::function<void(const RenderFrame&, const GuidanceError&)>;

/// Runs agent_step until the pedal or the timeout. The record carries the
/// true error at that moment; subject and trial index are left to the caller.
/// `sink`, when set, receives the frame shown at every step.
inline TrialRecord run_trial(const Pose& target, const Pose& start, Condition condition, const AgentParams& agent,
                             const WidgetConfig& cfg, const FrameSink& sink = {}) {
    agent.validate();
    cfg.validate();
    rng::Stream rng(agent.seed);
    RenderFrame frame = build_frame(start, target, condition, cfg);
    AgentState state = start_agent(start, target, frame, agent, rng);
    const long max_steps = static_cast<long>(std::ceil(agent.timeout * agent.step_hz));

    TrialRecord rec;
    rec.condition = condition;
    rec.target = target;
    rec.seed = agent.seed;
    while (true) {
        frame = build_frame(state.tool, target, condition, cfg);
        const GuidanceError err = compute_error(state.tool, target);
        if (sink) sink(frame, err);
        StepResult r = agent_step(std::move(state), frame, err, agent, rng);
        state = std::move(r.state);
        if (r.pedal) break;
        if (state.steps >= max_steps) {
            rec.timed_out = true;
            break;
        }
    }
    rec.error = compute_error(state.tool, target);
    rec.task_time = state.elapsed;
    return rec;
}

}  // namespace drillguide

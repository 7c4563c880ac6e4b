#pragma once

#include <cstdint>

#include "drillguide/geometry.hpp"
#include "drillguide/widget.hpp"

namespace drillguide {

/// One confirmed positioning. Simulated and human sessions produce the same
/// record and the same CSV row.
struct TrialRecord {
    int subject = 0;
    Condition condition = Condition::EntryPoint;
    int trial = 0;  // sequence index within the subject
    Pose target;
    GuidanceError error;  // true error at pedal press (or timeout)
    double task_time = 0.0;  // s
    bool timed_out = false;
    std::uint64_t seed = 0;

    bool operator==(const TrialRecord&) const = default;
};

}  // namespace drillguide

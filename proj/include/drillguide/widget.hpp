#pragma once

// Visual state of the four guidance conditions. A frame is a flat list of
// primitives plus, for the dynamic conditions, the five duo states. Nothing
// here renders; the client draws exactly what it is sent.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drillguide/geometry.hpp"

namespace drillguide {

enum class Condition { EntryPoint, TargetAxis, DWEP, DWTA };

inline constexpr std::array<Condition, 4> kAllConditions{Condition::EntryPoint, Condition::TargetAxis,
                                                         Condition::DWEP, Condition::DWTA};

inline constexpr std::string_view to_string(Condition c) noexcept {
    switch (c) {
        case Condition::EntryPoint: return "EntryPoint";
        case Condition::TargetAxis: return "TargetAxis";
        case Condition::DWEP: return "DWEP";
        case Condition::DWTA: return "DWTA";
    }
    return "?";
}

inline std::optional<Condition> parse_condition(std::string_view s) noexcept {
    for (Condition c : kAllConditions) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

inline constexpr bool has_dynamic_widget(Condition c) noexcept {
    return c == Condition::DWEP || c == Condition::DWTA;
}
inline constexpr bool has_target_axis(Condition c) noexcept {
    return c == Condition::TargetAxis || c == Condition::DWTA;
}
/// Whether the condition shows any rotational cue at all.
inline constexpr bool cues_rotation(Condition c) noexcept { return c != Condition::EntryPoint; }

struct WidgetConfig {
    double tt_pos = 1.0;    // mm
    double tt_rot = 0.5;    // deg
    double mt_pos = 100.0;  // mm
    double mt_rot = 10.0;   // deg
    double d_max = 30.0;    // mm, maximum duo separation
    double duo_radial_offset = 15.0;  // mm, duo rest distance from the tooltip
    double duo_glyph_size = 4.0;      // mm
    double entry_point_radius = 1.0;
    double entry_point_length = 3.0;
    double axis_radius = 1.0;
    double axis_length = 120.0;
    double disc_radius = 5.0;
    double disc_offset = 20.0;  // mm along the tool bit axis, "on top of" the drill
    double loupe_magnification = 2.0;

    /// Throws Error("config") naming the first offending field.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw Error("config", std::string("widget.") + name + " must be > 0");
        };
        positive(tt_pos, "tt_pos");
        positive(tt_rot, "tt_rot");
        positive(mt_pos, "mt_pos");
        positive(mt_rot, "mt_rot");
        if (!(tt_pos < mt_pos)) throw Error("config", "widget.tt_pos must be < widget.mt_pos");
        if (!(tt_rot < mt_rot)) throw Error("config", "widget.tt_rot must be < widget.mt_rot");
        positive(d_max, "d_max");
        positive(duo_radial_offset, "duo_radial_offset");
        positive(duo_glyph_size, "duo_glyph_size");
        positive(entry_point_radius, "entry_point_radius");
        positive(entry_point_length, "entry_point_length");
        positive(axis_radius, "axis_radius");
        positive(axis_length, "axis_length");
        positive(disc_radius, "disc_radius");
        positive(disc_offset, "disc_offset");
        positive(loupe_magnification, "loupe_magnification");
    }
};

/// Dynamic visibility areas.
enum class Area { Hidden, DynamicNonlinear, FrozenMax };

inline constexpr std::string_view to_string(Area a) noexcept {
    switch (a) {
        case Area::Hidden: return "Hidden";
        case Area::DynamicNonlinear: return "DynamicNonlinear";
        case Area::FrozenMax: return "FrozenMax";
    }
    return "?";
}

enum class Channel { PX, PY, PZ, RX, RZ };

inline constexpr std::array<Channel, 5> kAllChannels{Channel::PX, Channel::PY, Channel::PZ, Channel::RX,
                                                     Channel::RZ};

inline constexpr std::string_view to_string(Channel c) noexcept {
    switch (c) {
        case Channel::PX: return "PX";
        case Channel::PY: return "PY";
        case Channel::PZ: return "PZ";
        case Channel::RX: return "RX";
        case Channel::RZ: return "RZ";
    }
    return "?";
}

inline constexpr bool is_rotational(Channel c) noexcept { return c == Channel::RX || c == Channel::RZ; }

/// Signed error component that drives a channel's duo.
inline double channel_error(const GuidanceError& e, Channel c) noexcept {
    switch (c) {
        case Channel::PX: return e.pe.x;
        case Channel::PY: return e.pe.y;
        case Channel::PZ: return e.pe.z;
        case Channel::RX: return e.re_x;
        case Channel::RZ: return e.re_z;
    }
    return 0.0;
}

/// e <= tt hides the duo; e >= mt freezes it at maximum separation.
inline constexpr Area classify_area(double e_abs, double tt, double mt) noexcept {
    if (e_abs <= tt) return Area::Hidden;
    if (e_abs >= mt) return Area::FrozenMax;
    return Area::DynamicNonlinear;
}

inline Area classify_area(double e_abs, const WidgetConfig& cfg, Channel channel) noexcept {
    return is_rotational(channel) ? classify_area(e_abs, cfg.tt_rot, cfg.mt_rot)
                                  : classify_area(e_abs, cfg.tt_pos, cfg.mt_pos);
}

/// Quadratic displacement law on the normalized overshoot above tt:
/// 0 at tt, d_max at mt and beyond. For rotational channels the result is
/// the arc length between the two members.
inline double duo_separation(double e_abs, const WidgetConfig& cfg, Channel channel) noexcept {
    const double tt = is_rotational(channel) ? cfg.tt_rot : cfg.tt_pos;
    const double mt = is_rotational(channel) ? cfg.mt_rot : cfg.mt_pos;
    if (e_abs >= mt) return cfg.d_max;
    const double u = (std::clamp(e_abs, tt, mt) - tt) / (mt - tt);
    return cfg.d_max * u * u;
}

enum class Shape { Cylinder, Disc, VForm, ParenForm, DrillAvatar };

inline constexpr std::string_view to_string(Shape s) noexcept {
    switch (s) {
        case Shape::Cylinder: return "cylinder";
        case Shape::Disc: return "disc";
        case Shape::VForm: return "v-form";
        case Shape::ParenForm: return "paren-form";
        case Shape::DrillAvatar: return "drill-avatar";
    }
    return "?";
}

struct Primitive {
    std::string id;
    Shape shape = Shape::Cylinder;
    Pose pose;
    Vec3 scale{1.0, 1.0, 1.0};  // cylinders: (radius, length, radius); discs: (radius, 0, radius)
    std::string color;          // "#rrggbb"
    bool depth_test_exempt = false;

    bool operator==(const Primitive&) const = default;
};

struct DuoState {
    Channel channel = Channel::PX;
    Shape shape = Shape::VForm;
    Area area = Area::Hidden;
    double separation = 0.0;
    std::array<Pose, 2> pair_poses{};
    bool collimated = true;

    bool operator==(const DuoState&) const = default;
};

struct RenderFrame {
    Condition condition = Condition::EntryPoint;
    std::vector<Primitive> primitives;
    std::vector<DuoState> duos;  // empty for the static conditions

    std::size_t visible_duo_count() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(duos.begin(), duos.end(), [](const DuoState& d) { return d.area != Area::Hidden; }));
    }

    /// Static guidance elements the user has to read (cylinders and discs).
    std::size_t static_element_count() const noexcept {
        return static_cast<std::size_t>(std::count_if(primitives.begin(), primitives.end(), [](const Primitive& p) {
            return p.shape == Shape::Cylinder || p.shape == Shape::Disc;
        }));
    }

    bool operator==(const RenderFrame&) const = default;
};

namespace palette {
inline constexpr std::string_view kYellow = "#ffd700";
inline constexpr std::string_view kRed = "#e01010";
inline constexpr std::string_view kAvatar = "#b4b4b4";
inline constexpr std::string_view duo(Channel c) noexcept {
    switch (c) {
        case Channel::PX: return "#ffdede";
        case Channel::PY: return "#deffde";
        case Channel::PZ: return "#dedeff";
        case Channel::RX: return "#ffeede";
        case Channel::RZ: return "#deeeff";
    }
    return "#ffffff";
}
}  // namespace palette

namespace detail {

inline Vec3 world_axis(Channel c) noexcept {
    switch (c) {
        case Channel::PX: return axis::x;
        case Channel::PY: return axis::y;
        default: return axis::z;
    }
}

// Orientation that turns the glyph's local +x onto the channel axis.
inline UnitQuat glyph_orientation(Channel c) {
    switch (c) {
        case Channel::PY: return UnitQuat::from_axis_angle(axis::z, 90.0);
        case Channel::PZ: return UnitQuat::from_axis_angle(axis::y, -90.0);
        default: return UnitQuat::identity();
    }
}

inline DuoState positional_duo(const Pose& tool, const GuidanceError& err, Channel c, const WidgetConfig& cfg) {
    DuoState d;
    d.channel = c;
    d.shape = Shape::VForm;
    const double e = channel_error(err, c);
    d.area = classify_area(std::abs(e), cfg, c);
    d.separation = d.area == Area::Hidden ? 0.0 : duo_separation(std::abs(e), cfg, c);
    d.collimated = d.area == Area::Hidden;
    const Vec3 u = world_axis(c);
    const Vec3 rest = tool.position + u * cfg.duo_radial_offset;
    const double half = 0.5 * d.separation * (e < 0.0 ? -1.0 : 1.0);
    const UnitQuat q = glyph_orientation(c);
    // Members face each other: the second is the first flipped about its local z.
    d.pair_poses[0] = Pose{rest + u * half, q};
    d.pair_poses[1] = Pose{rest - u * half, q * UnitQuat::from_axis_angle(axis::z, 180.0)};
    return d;
}

// Paren duos live on arcs about the tool-local x (RX) or z (RZ) axis.
inline DuoState rotational_duo(const Pose& tool, const GuidanceError& err, Channel c, const WidgetConfig& cfg) {
    DuoState d;
    d.channel = c;
    d.shape = Shape::ParenForm;
    const double e = channel_error(err, c);
    d.area = classify_area(std::abs(e), cfg, c);
    d.separation = d.area == Area::Hidden ? 0.0 : duo_separation(std::abs(e), cfg, c);
    d.collimated = d.area == Area::Hidden;
    const Vec3 arc_axis = c == Channel::RX ? axis::x : axis::z;
    const Vec3 radial = c == Channel::RX ? axis::z : axis::x;
    const double radius = cfg.duo_radial_offset;
    const double half_angle_deg = 0.5 * (d.separation / radius) * kDegPerRad * (e < 0.0 ? -1.0 : 1.0);
    for (int i = 0; i < 2; ++i) {
        const UnitQuat local = UnitQuat::from_axis_angle(arc_axis, i == 0 ? half_angle_deg : -half_angle_deg);
        const UnitQuat flip = i == 0 ? UnitQuat::identity() : UnitQuat::from_axis_angle(radial, 180.0);
        d.pair_poses[i] = Pose{tool.to_world(local.rotate(radial * radius)), tool.orientation * local * flip};
    }
    return d;
}

inline std::string member_id(Channel c, int i) {
    std::string id = "duo.";
    for (char ch : to_string(c)) id += static_cast<char>(ch - 'A' + 'a');
    id += i == 0 ? ".a" : ".b";
    return id;
}

}  // namespace detail

/// Static primitives of a condition. Only the tool disc and the drill
/// avatar depend on the tool pose.
inline std::vector<Primitive> static_primitives(const Pose& tool, const Pose& target, Condition condition,
                                                const WidgetConfig& cfg) {
    std::vector<Primitive> out;
    if (has_target_axis(condition)) {
        out.push_back({"target_axis", Shape::Cylinder, target, {cfg.axis_radius, cfg.axis_length, cfg.axis_radius},
                       std::string(palette::kYellow), false});
        out.push_back({"tool_disc", Shape::Disc,
                       Pose{tool.to_world(axis::bit * cfg.disc_offset), tool.orientation},
                       {cfg.disc_radius, 0.0, cfg.disc_radius}, std::string(palette::kRed), false});
    } else {
        out.push_back({"entry_point", Shape::Cylinder, target,
                       {cfg.entry_point_radius, cfg.entry_point_length, cfg.entry_point_radius},
                       std::string(palette::kYellow), false});
    }
    out.push_back({"drill_avatar", Shape::DrillAvatar, tool, {1.0, 1.0, 1.0}, std::string(palette::kAvatar), false});
    return out;
}

/// The five duo states for a tool/target pair.
inline std::vector<DuoState> dynamic_duos(const Pose& tool, const GuidanceError& err, const WidgetConfig& cfg) {
    std::vector<DuoState> duos;
    duos.reserve(kAllChannels.size());
    for (Channel c : kAllChannels) {
        duos.push_back(is_rotational(c) ? detail::rotational_duo(tool, err, c, cfg)
                                        : detail::positional_duo(tool, err, c, cfg));
    }
    return duos;
}

/// Primitives for the visible duo members only.
inline std::vector<Primitive> duo_primitives(const std::vector<DuoState>& duos, const WidgetConfig& cfg) {
    std::vector<Primitive> out;
    for (const DuoState& d : duos) {
        if (d.area == Area::Hidden) continue;
        for (int i = 0; i < 2; ++i) {
            const double g = cfg.duo_glyph_size;
            out.push_back({detail::member_id(d.channel, i), d.shape, d.pair_poses[i], {g, g, g},
                           std::string(palette::duo(d.channel)), true});
        }
    }
    return out;
}

inline RenderFrame build_frame(const Pose& tool, const Pose& target, Condition condition, const WidgetConfig& cfg) {
    RenderFrame f;
    f.condition = condition;
    f.primitives = static_primitives(tool, target, condition, cfg);
    if (has_dynamic_widget(condition)) {
        const GuidanceError err = compute_error(tool, target);
        f.duos = dynamic_duos(tool, err, cfg);
        auto dyn = duo_primitives(f.duos, cfg);
        f.primitives.insert(f.primitives.end(), dyn.begin(), dyn.end());
    }
    return f;
}

struct LoupeGeometry {
    Primitive left;
    Primitive right;
    Pose viewport;  // zoom camera pose, looking along the head's forward axis
    double magnification = 2.0;
    double radius = 10.0;
};

/// Two circular quads 500 mm ahead of the head, 30 mm either side of its
/// forward axis, rigidly attached to the head pose.
inline LoupeGeometry loupe_geometry(const Pose& head, const WidgetConfig& cfg) {
    constexpr double kRadius = 10.0;
    constexpr double kLateral = 30.0;
    constexpr double kAhead = 500.0;
    LoupeGeometry g;
    g.radius = kRadius;
    g.magnification = cfg.loupe_magnification;
    g.left = {"loupe.left", Shape::Disc, Pose{head.to_world({-kLateral, 0.0, kAhead}), head.orientation},
              {kRadius, 0.0, kRadius}, "#ffffff", false};
    g.right = {"loupe.right", Shape::Disc, Pose{head.to_world({kLateral, 0.0, kAhead}), head.orientation},
               {kRadius, 0.0, kRadius}, "#ffffff", false};
    g.viewport = head;
    return g;
}

// Canonical serialization: fixed key order, six decimals, no whitespace.

namespace detail {
inline void append_vec(std::string& s, const Vec3& v) {
    s += '[';
    s += fixed(v.x);
    s += ',';
    s += fixed(v.y);
    s += ',';
    s += fixed(v.z);
    s += ']';
}
inline void append_quat(std::string& s, const UnitQuat& q) {
    const UnitQuat c = q.canonical();
    s += '[';
    s += fixed(c.w());
    s += ',';
    s += fixed(c.x());
    s += ',';
    s += fixed(c.y());
    s += ',';
    s += fixed(c.z());
    s += ']';
}
}  // namespace detail

inline void append_pose_json(std::string& s, const Pose& p) {
    s += "{\"position\":";
    detail::append_vec(s, p.position);
    s += ",\"orientation\":";
    detail::append_quat(s, p.orientation);
    s += '}';
}

inline std::string to_json(const RenderFrame& f) {
    std::string s;
    s.reserve(512 + 256 * f.primitives.size());
    s += "{\"condition\":\"";
    s += to_string(f.condition);
    s += "\",\"primitives\":[";
    for (std::size_t i = 0; i < f.primitives.size(); ++i) {
        const Primitive& p = f.primitives[i];
        if (i) s += ',';
        s += "{\"id\":\"" + p.id + "\",\"shape\":\"";
        s += to_string(p.shape);
        s += "\",\"pose\":";
        append_pose_json(s, p.pose);
        s += ",\"scale\":";
        detail::append_vec(s, p.scale);
        s += ",\"color\":\"" + p.color + "\",\"depth_test_exempt\":";
        s += p.depth_test_exempt ? "true" : "false";
        s += '}';
    }
    s += "],\"duos\":[";
    for (std::size_t i = 0; i < f.duos.size(); ++i) {
        const DuoState& d = f.duos[i];
        if (i) s += ',';
        s += "{\"channel\":\"";
        s += to_string(d.channel);
        s += "\",\"shape\":\"";
        s += to_string(d.shape);
        s += "\",\"area\":\"";
        s += to_string(d.area);
        s += "\",\"separation\":" + fixed(d.separation) + ",\"collimated\":";
        s += d.collimated ? "true" : "false";
        s += ",\"pair_poses\":[";
        append_pose_json(s, d.pair_poses[0]);
        s += ',';
        append_pose_json(s, d.pair_poses[1]);
        s += "]}";
    }
    s += "]}";
    return s;
}

}  // namespace drillguide

#pragma once

// Pose representation and the 5-DoF error decomposition.
//
// Frame conventions: right-handed world frame, y up, z forward, x horizontal.
// Quaternions are Hamilton, active, and map tool-local vectors into the world
// frame. The tool's local y axis is the drill-bit axis; rotation about it is
// not part of the task and is removed from every error.

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "drillguide/core.hpp"

namespace drillguide {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const noexcept { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const noexcept { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const noexcept { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const noexcept { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const noexcept { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) noexcept { return *this = *this + o; }
    constexpr bool operator==(const Vec3&) const = default;

    constexpr double operator[](int i) const noexcept { return i == 0 ? x : (i == 1 ? y : z); }

    double norm() const noexcept { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const noexcept { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) noexcept { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) noexcept {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

namespace axis {
inline constexpr Vec3 x{1.0, 0.0, 0.0};
inline constexpr Vec3 y{0.0, 1.0, 0.0};
inline constexpr Vec3 z{0.0, 0.0, 1.0};
inline constexpr Vec3 bit = y;  // drill-bit axis in the tool frame
}  // namespace axis

/// Angle between two non-zero vectors in degrees, computed with atan2 so it
/// stays accurate near 0 and 180.
inline double angle_between_deg(const Vec3& a, const Vec3& b) noexcept {
    return std::atan2(cross(a, b).norm(), dot(a, b)) * kDegPerRad;
}

/// Rotation quaternion kept at unit norm. Construction from raw components
/// renormalizes small drift and rejects anything further than
/// `kNormTolerance` from unit length.
class UnitQuat {
public:
    static constexpr double kNormTolerance = 1e-4;

    constexpr UnitQuat() noexcept = default;

    UnitQuat(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {
        const double n = std::sqrt(w * w + x * x + y * y + z * z);
        if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance) {
            throw invalid_input("quaternion norm " + fixed(n, 9) + " is not unit");
        }
        w_ /= n;
        x_ /= n;
        y_ /= n;
        z_ /= n;
    }

    static UnitQuat identity() noexcept { return {}; }

    /// Rotation of `degrees` about `axis` (right-hand rule). Throws on a zero axis.
    static UnitQuat from_axis_angle(const Vec3& axis, double degrees) {
        const double n = axis.norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw invalid_input("rotation axis must be non-zero");
        const double half = 0.5 * degrees * kRadPerDeg;
        const double s = std::sin(half) / n;
        return raw(std::cos(half), axis.x * s, axis.y * s, axis.z * s);
    }

    /// Inverse of to_rotation_vector_deg.
    static UnitQuat from_rotation_vector_deg(const Vec3& v) {
        const double angle = v.norm();
        if (angle == 0.0) return identity();
        return from_axis_angle(v, angle);
    }

    double w() const noexcept { return w_; }
    double x() const noexcept { return x_; }
    double y() const noexcept { return y_; }
    double z() const noexcept { return z_; }
    Vec3 vec() const noexcept { return {x_, y_, z_}; }

    UnitQuat conjugate() const noexcept { return raw(w_, -x_, -y_, -z_); }
    UnitQuat inverse() const noexcept { return conjugate(); }

    /// Same rotation with w >= 0.
    UnitQuat canonical() const noexcept { return w_ < 0.0 ? raw(-w_, -x_, -y_, -z_) : *this; }

    UnitQuat operator*(const UnitQuat& o) const noexcept {
        return raw(w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                   w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                   w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                   w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_);
    }

    Vec3 rotate(const Vec3& v) const noexcept {
        const Vec3 u = vec();
        const Vec3 t = 2.0 * cross(u, v);
        return v + w_ * t + cross(u, t);
    }

    /// Rotation angle in [0, 180] degrees.
    double angle_deg() const noexcept {
        const UnitQuat c = canonical();
        return 2.0 * std::atan2(c.vec().norm(), c.w_) * kDegPerRad;
    }

    /// Axis times angle (degrees), using the w >= 0 representative.
    Vec3 to_rotation_vector_deg() const noexcept {
        const UnitQuat c = canonical();
        const double s = c.vec().norm();
        if (s == 0.0) return {};
        const double angle = 2.0 * std::atan2(s, c.w_) * kDegPerRad;
        return c.vec() * (angle / s);
    }

    /// Equality as rotations: q and -q compare equal.
    bool same_rotation(const UnitQuat& o, double tol = 1e-9) const noexcept {
        const double d = std::abs(w_ * o.w_ + x_ * o.x_ + y_ * o.y_ + z_ * o.z_);
        return 1.0 - d <= tol;
    }

    double norm() const noexcept { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

    bool operator==(const UnitQuat&) const = default;

private:
    // Components already known to be (numerically) unit; renormalize cheaply.
    static UnitQuat raw(double w, double x, double y, double z) noexcept {
        UnitQuat q;
        const double n = std::sqrt(w * w + x * x + y * y + z * z);
        q.w_ = w / n;
        q.x_ = x / n;
        q.y_ = y / n;
        q.z_ = z / n;
        return q;
    }

    double w_ = 1.0;
    double x_ = 0.0;
    double y_ = 0.0;
    double z_ = 0.0;
};

struct Pose {
    Vec3 position;        // mm, world frame; the tooltip for a tool pose
    UnitQuat orientation; // tool-local -> world

    Vec3 to_world(const Vec3& local) const noexcept { return position + orientation.rotate(local); }
    Vec3 bit_axis() const noexcept { return orientation.rotate(axis::bit); }

    bool operator==(const Pose&) const = default;
};

struct SwingTwist {
    UnitQuat swing;
    UnitQuat twist;
};

/// Splits q into swing * twist, where twist is a rotation about `about` and
/// swing rotates about an axis orthogonal to it. When q is a half turn about
/// an axis orthogonal to `about` the split is not unique; the swing is then
/// taken about the part of tool-frame x orthogonal to `about` (z if `about`
/// is x itself).
inline SwingTwist swing_twist(const UnitQuat& q, const Vec3& about) {
    const double n = about.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw invalid_input("swing-twist axis must be non-zero");
    const Vec3 a = about / n;
    const UnitQuat c = q.canonical();
    const Vec3 proj = a * dot(c.vec(), a);
    const double twist_norm = std::hypot(c.w(), proj.norm());
    if (twist_norm < 1e-12) {
        Vec3 ref = axis::x - a * dot(axis::x, a);
        if (ref.norm() < 1e-6) ref = axis::z - a * dot(axis::z, a);
        const UnitQuat swing = UnitQuat::from_axis_angle(ref, 180.0);
        return {swing, (swing.inverse() * c).canonical()};
    }
    const UnitQuat twist(c.w() / twist_norm, proj.x / twist_norm, proj.y / twist_norm, proj.z / twist_norm);
    return {c * twist.inverse(), twist};
}

/// Error between tool and target with the bit-axis twist removed.
struct GuidanceError {
    Vec3 pe;          // target - tool, mm, world axes
    double pm = 0.0;  // |pe|, mm
    double re_x = 0.0;  // swing rotation vector, x component, degrees
    double re_z = 0.0;  // swing rotation vector, z component, degrees
    double rm = 0.0;    // swing angle, degrees

    bool operator==(const GuidanceError&) const = default;
};

/// Tool orientation relative to the target, in the target frame:
/// tor = tar * rel. This is the conjugate of tor * tar^-1 by tar (same
/// angle); working in the body frame makes the tool's own spin a pure
/// right-factor, so removing it leaves re_x/re_z untouched.
inline UnitQuat relative_rotation(const Pose& tool, const Pose& target) noexcept {
    return (target.orientation.inverse() * tool.orientation).canonical();
}

inline GuidanceError compute_error(const Pose& tool, const Pose& target) {
    if (!tool.position.finite() || !target.position.finite()) throw invalid_input("pose position must be finite");
    GuidanceError e;
    e.pe = target.position - tool.position;
    e.pm = e.pe.norm();
    const SwingTwist st = swing_twist(relative_rotation(tool, target), axis::bit);
    const Vec3 rv = st.swing.to_rotation_vector_deg();
    e.re_x = rv.x;
    e.re_z = rv.z;
    e.rm = std::hypot(rv.x, rv.z);
    return e;
}

/// World-frame axis about which a positive re_x / re_z is measured. This is
/// the tool frame with its bit-axis spin removed.
inline UnitQuat error_frame(const Pose& tool, const Pose& target) {
    const SwingTwist st = swing_twist(relative_rotation(tool, target), axis::bit);
    return tool.orientation * st.twist.inverse();
}

}  // namespace drillguide

#pragma once

// Seeded generators and independent reference computations shared by the
// unit suites and the acceptance binary. Oracles deliberately avoid the
// library's own algorithms: rotation matrices instead of quaternion algebra,
// brute-force ranks, enumeration and Monte-Carlo permutation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "drillguide/core.hpp"
#include "drillguide/geometry.hpp"

namespace oracle {

using drillguide::Pose;
using drillguide::UnitQuat;
using drillguide::Vec3;
namespace rng = drillguide::rng;

inline UnitQuat random_quat(rng::Stream& r) {
    double w, x, y, z, n;
    do {
        w = r.normal();
        x = r.normal();
        y = r.normal();
        z = r.normal();
        n = std::sqrt(w * w + x * x + y * y + z * z);
    } while (n < 1e-6);
    return UnitQuat(w / n, x / n, y / n, z / n);
}

inline Pose random_pose(rng::Stream& r, double extent = 100.0) {
    return {{r.uniform(-extent, extent), r.uniform(-extent, extent), r.uniform(-extent, extent)}, random_quat(r)};
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 matrix(const UnitQuat& q) {
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

inline Vec3 mul(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

inline Vec3 mul_transposed(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z, m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
}

inline double vector_angle_deg(const Vec3& a, const Vec3& b) {
    const Vec3 c{a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
    const double s = std::sqrt(c.x * c.x + c.y * c.y + c.z * c.z);
    const double d = a.x * b.x + a.y * b.y + a.z * b.z;
    return std::atan2(s, d) * 180.0 / 3.14159265358979323846;
}

/// Angle between the world bit axes of two orientations.
inline double bit_axis_angle_deg(const UnitQuat& tool, const UnitQuat& target) {
    const Vec3 y{0, 1, 0};
    return vector_angle_deg(mul(matrix(tool), y), mul(matrix(target), y));
}

/// Rotation vector (degrees) of the minimal rotation taking the target's bit
/// axis onto the tool's, expressed in the target frame.
inline Vec3 minimal_swing_vector_deg(const UnitQuat& tool, const UnitQuat& target) {
    const Vec3 v = mul_transposed(matrix(target), mul(matrix(tool), {0, 1, 0}));
    const Vec3 axis{v.z, 0.0, -v.x};  // y × v
    const double s = std::hypot(axis.x, axis.z);
    const double angle = vector_angle_deg({0, 1, 0}, v);
    if (s == 0.0) return {};
    return axis * (angle / s);
}

// ---------------------------------------------------------------------------
// Statistics

inline std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

/// Tie-corrected Friedman statistic on rows of per-condition values.
inline double friedman_q(const std::vector<std::vector<double>>& rows) {
    const double n = static_cast<double>(rows.size());
    const double k = static_cast<double>(rows.front().size());
    std::vector<double> sums(rows.front().size(), 0.0);
    double sum_sq = 0.0;
    for (const auto& row : rows) {
        const auto r = brute_ranks(row);
        for (std::size_t j = 0; j < r.size(); ++j) {
            sums[j] += r[j];
            sum_sq += r[j] * r[j];
        }
    }
    const double centre = n * (k + 1.0) / 2.0;
    double num = 0.0;
    for (double s : sums) num += (s - centre) * (s - centre);
    const double den = sum_sq - n * k * (k + 1.0) * (k + 1.0) / 4.0;
    return den == 0.0 ? 0.0 : (k - 1.0) * num / den;
}

/// Upper tail P(Q >= observed) by enumerating every within-row permutation
/// (first row fixed). Feasible for small designs only.
inline double friedman_enumerated_p(const std::vector<std::vector<double>>& rows) {
    const double observed = friedman_q(rows);
    std::vector<std::vector<std::vector<double>>> perms;
    for (const auto& row : rows) {
        std::vector<std::vector<double>> ps;
        std::vector<std::size_t> idx(row.size());
        std::iota(idx.begin(), idx.end(), 0);
        do {
            std::vector<double> p;
            for (std::size_t i : idx) p.push_back(row[i]);
            ps.push_back(p);
        } while (std::next_permutation(idx.begin(), idx.end()));
        perms.push_back(ps);
    }
    std::vector<std::vector<double>> cur(rows.size());
    cur[0] = rows[0];
    double hits = 0, total = 0;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == rows.size()) {
            ++total;
            if (friedman_q(cur) >= observed - 1e-9) ++hits;
            return;
        }
        for (const auto& p : perms[i]) {
            cur[i] = p;
            rec(i + 1);
        }
    };
    rec(1);
    return hits / total;
}

struct MonteCarlo {
    double p;
    double se;
};

inline MonteCarlo friedman_permutation_p(const std::vector<std::vector<double>>& rows, int permutations,
                                         std::uint64_t seed) {
    const double observed = friedman_q(rows);
    rng::Stream r(seed);
    auto cur = rows;
    int hits = 0;
    for (int it = 0; it < permutations; ++it) {
        for (auto& row : cur) {
            for (std::size_t i = row.size() - 1; i > 0; --i) {
                const auto j = static_cast<std::size_t>(r.next() % (i + 1));
                std::swap(row[i], row[j]);
            }
        }
        if (friedman_q(cur) >= observed - 1e-9) ++hits;
    }
    const double p = static_cast<double>(hits) / permutations;
    return {p, std::sqrt(std::max(p * (1 - p), 1.0 / permutations) / permutations)};
}

/// W+ of the non-zero differences a - b.
inline double wilcoxon_w_plus(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
    }
    std::vector<double> absd;
    for (double x : d) absd.push_back(std::abs(x));
    const auto r = brute_ranks(absd);
    double w = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0) w += r[i];
    }
    return w;
}

/// Two-sided and one-sided exact p by enumerating all 2^n sign patterns.
struct WilcoxonExact {
    double two_sided;
    double less;     // P(W+ <= observed)
    double greater;  // P(W+ >= observed)
};

inline WilcoxonExact wilcoxon_enumerated(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> absd;
    double observed = 0.0;
    {
        std::vector<double> d;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
        }
        for (double x : d) absd.push_back(std::abs(x));
        const auto r = brute_ranks(absd);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] > 0) observed += r[i];
        }
        absd = r;
    }
    const std::size_t n = absd.size();
    const double total = std::accumulate(absd.begin(), absd.end(), 0.0);
    const double centre = total / 2.0;
    double two = 0, le = 0, ge = 0;
    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1) w += absd[i];
        }
        if (std::abs(w - centre) >= std::abs(observed - centre) - 1e-9) ++two;
        if (w <= observed + 1e-9) ++le;
        if (w >= observed - 1e-9) ++ge;
    }
    const double c = static_cast<double>(count);
    return {two / c, le / c, ge / c};
}

inline double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Two-sided null p of a sample correlation from its exact density
/// f(r) ∝ (1 - r²)^((n-4)/2). With r = sin φ the integrand becomes cos^(n-3) φ,
/// which is smooth, so composite Simpson converges quickly.
inline double pearson_null_p(double r, std::size_t n) {
    const double power = static_cast<double>(n) - 3.0;
    auto f = [&](double phi) { return std::pow(std::cos(phi), power); };
    auto simpson = [&](double a, double b) {
        const int m = 20000;
        const double h = (b - a) / m;
        double s = f(a) + f(b);
        for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
        return s * h / 3.0;
    };
    const double half_pi = 1.57079632679489661923;
    const double tail = simpson(std::asin(std::min(1.0, std::abs(r))), half_pi);
    return std::min(1.0, tail / simpson(0.0, half_pi));
}

/// Spearman rank correlation.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return two_pass_pearson(brute_ranks(x), brute_ranks(y));
}

}  // namespace oracle

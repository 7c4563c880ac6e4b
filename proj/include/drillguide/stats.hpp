#pragma once

// Nonparametric tests for within-subject designs: Friedman with Kendall's W,
// Wilcoxon signed-rank, pairwise Bonferroni post hoc, and Pearson's r.
// All p-values are two-sided unless an Alternative is passed explicitly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "drillguide/core.hpp"

namespace drillguide::stats {

/// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

/// n_subjects x k_conditions matrix of per-subject means for one metric.
class SubjectMeans {
public:
    SubjectMeans(std::size_t subjects, std::size_t conditions)
        : n_(subjects), k_(conditions), cells_(subjects * conditions, std::numeric_limits<double>::quiet_NaN()) {}

    SubjectMeans(std::size_t subjects, std::size_t conditions, std::vector<double> row_major)
        : n_(subjects), k_(conditions), cells_(std::move(row_major)) {
        if (cells_.size() != n_ * k_) throw invalid_input("subject means: cell count does not match shape");
    }

    std::size_t subjects() const noexcept { return n_; }
    std::size_t conditions() const noexcept { return k_; }

    double& operator()(std::size_t s, std::size_t c) noexcept { return cells_[s * k_ + c]; }
    double operator()(std::size_t s, std::size_t c) const noexcept { return cells_[s * k_ + c]; }

    std::span<const double> row(std::size_t s) const noexcept { return {cells_.data() + s * k_, k_}; }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(n_);
        for (std::size_t s = 0; s < n_; ++s) out[s] = (*this)(s, c);
        return out;
    }

    /// Listwise completeness; throws naming the first missing cell.
    void require_complete() const {
        for (std::size_t s = 0; s < n_; ++s) {
            for (std::size_t c = 0; c < k_; ++c) {
                if (!std::isfinite((*this)(s, c))) {
                    throw invalid_input("missing cell (subject " + std::to_string(s) + ", condition " + std::to_string(c) + ")");
                }
            }
        }
    }

private:
    std::size_t n_;
    std::size_t k_;
    std::vector<double> cells_;
};

struct TestResult {
    std::string method;
    double statistic = 0.0;
    double p_value = 1.0;
    double effect_size = 0.0;  // Kendall's W (Friedman) or rank-biserial r (Wilcoxon)
    std::size_t n = 0;
    double z = 0.0;  // normal-approximation z where applicable, else 0

    bool operator==(const TestResult&) const = default;
};

enum class Alternative { TwoSided, Less, Greater };

// ---------------------------------------------------------------------------
// Friedman

namespace detail {

inline double chi2_upper(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

// Exact permutation distribution of sum_j R_j^2 (in doubled ranks) by
// dynamic programming over rows. Returns NaN when the state space would
// exceed `max_states`.
inline double friedman_exact_upper(const std::vector<std::vector<int>>& doubled_ranks, std::int64_t observed_sum_sq,
                                   std::size_t max_states = 4'000'000) {
    const std::size_t k = doubled_ranks.front().size();
    if (k > 6) return std::numeric_limits<double>::quiet_NaN();
    // Column sums of doubled ranks stay below 2^10 * 2 for n <= 100, k <= 6.
    constexpr int kBits = 10;
    auto pack = [&](const std::vector<int>& sums) {
        std::uint64_t key = 0;
        for (int s : sums) key = (key << kBits) | static_cast<std::uint64_t>(s);
        return key;
    };
    auto unpack = [&](std::uint64_t key) {
        std::vector<int> sums(k);
        for (std::size_t j = k; j-- > 0;) {
            sums[j] = static_cast<int>(key & ((1u << kBits) - 1));
            key >>= kBits;
        }
        return sums;
    };
    if (doubled_ranks.size() * 2 * k >= (1u << kBits)) return std::numeric_limits<double>::quiet_NaN();

    std::unordered_map<std::uint64_t, double> dist{{pack(std::vector<int>(k, 0)), 1.0}};
    for (const auto& row : doubled_ranks) {
        std::vector<int> perm = row;
        std::sort(perm.begin(), perm.end());
        std::vector<std::vector<int>> perms;
        do {
            perms.push_back(perm);
        } while (std::next_permutation(perm.begin(), perm.end()));
        const double w = 1.0 / static_cast<double>(perms.size());
        std::unordered_map<std::uint64_t, double> next;
        next.reserve(dist.size() * 4);
        for (const auto& [key, prob] : dist) {
            const auto sums = unpack(key);
            for (const auto& p : perms) {
                std::vector<int> s = sums;
                for (std::size_t j = 0; j < k; ++j) s[j] += p[j];
                next[pack(s)] += prob * w;
            }
        }
        if (next.size() > max_states) return std::numeric_limits<double>::quiet_NaN();
        dist = std::move(next);
    }
    double upper = 0.0;
    for (const auto& [key, prob] : dist) {
        std::int64_t ss = 0;
        for (int s : unpack(key)) ss += static_cast<std::int64_t>(s) * s;
        if (ss >= observed_sum_sq) upper += prob;
    }
    return std::min(1.0, upper);
}

}  // namespace detail

/// Friedman test on a complete subjects x conditions matrix (k >= 3).
/// Small designs get the exact permutation p-value ("friedman-exact");
/// larger ones the chi-square approximation ("friedman-chi2").
inline TestResult friedman(const SubjectMeans& m) {
    const std::size_t n = m.subjects();
    const std::size_t k = m.conditions();
    if (k < 3) throw invalid_input("Friedman test needs k >= 3 conditions; use the Wilcoxon signed-rank test for two");
    if (n < 2) throw invalid_input("Friedman test needs at least 2 subjects");
    m.require_complete();

    std::vector<double> rank_sums(k, 0.0);
    double sum_sq_ranks = 0.0;
    std::vector<std::vector<int>> doubled(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto r = average_ranks(m.row(s));
        doubled[s].resize(k);
        for (std::size_t c = 0; c < k; ++c) {
            rank_sums[c] += r[c];
            sum_sq_ranks += r[c] * r[c];
            doubled[s][c] = static_cast<int>(std::lround(2.0 * r[c]));
        }
    }
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    const double centre = nd * nd * kd * (kd + 1.0) * (kd + 1.0) / 4.0;
    double ss_between = -centre;
    for (double r : rank_sums) ss_between += r * r;
    const double denom = sum_sq_ranks - nd * kd * (kd + 1.0) * (kd + 1.0) / 4.0;

    TestResult res;
    res.n = n;
    if (denom <= 1e-12) {
        res.method = "friedman-exact";
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.effect_size = 0.0;
        return res;
    }
    const double q = std::max(0.0, (kd - 1.0) * ss_between / denom);
    res.statistic = q;
    res.effect_size = std::clamp(q / (nd * (kd - 1.0)), 0.0, 1.0);

    std::int64_t observed = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::int64_t col = 0;
        for (std::size_t s = 0; s < n; ++s) col += doubled[s][c];
        observed += col * col;
    }
    double p = std::numeric_limits<double>::quiet_NaN();
    const bool small = (k == 3 && n <= 20) || (k == 4 && n <= 12) || (k == 5 && n <= 6);
    if (small) p = detail::friedman_exact_upper(doubled, observed);
    if (std::isnan(p)) {
        res.method = "friedman-chi2";
        res.p_value = std::clamp(detail::chi2_upper(q, kd - 1.0), 0.0, 1.0);
    } else {
        res.method = "friedman-exact";
        res.p_value = std::clamp(p, 0.0, 1.0);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

inline constexpr std::size_t kWilcoxonExactMaxN = 25;
inline constexpr std::size_t kWilcoxonMinN = 5;

/// Paired test on d = a - b. The statistic is W+, the rank sum of positive
/// differences; zero differences are dropped before ranking.
inline TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                       Alternative alt = Alternative::TwoSided) {
    if (a.size() != b.size()) throw invalid_input("Wilcoxon signed-rank needs equal-length samples");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (!std::isfinite(d)) throw invalid_input("Wilcoxon signed-rank: non-finite value at index " + std::to_string(i));
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw Error("degenerate", "Wilcoxon signed-rank: all differences are zero");
    if (diffs.size() < kWilcoxonMinN) {
        throw Error("degenerate", "Wilcoxon signed-rank needs at least " + std::to_string(kWilcoxonMinN) +
                                      " non-zero differences, got " + std::to_string(diffs.size()));
    }
    const std::size_t n = diffs.size();
    std::vector<double> abs_d(n);
    std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(abs_d);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (diffs[i] > 0.0) w_plus += ranks[i];
    }
    const double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
    const double mean = total / 2.0;

    TestResult res;
    res.n = n;
    res.statistic = w_plus;
    res.effect_size = (w_plus - (total - w_plus)) / total;

    if (n <= kWilcoxonExactMaxN) {
        // Distribution of 2 * W+ over all 2^n sign assignments of the
        // actual (possibly tied) ranks.
        std::vector<int> doubled(n);
        int max_sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
            max_sum += doubled[i];
        }
        std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
        counts[0] = 1.0;
        int reach = 0;
        for (int r : doubled) {
            for (int s = reach; s >= 0; --s) {
                if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
            }
            reach += r;
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        const int obs = static_cast<int>(std::lround(2.0 * w_plus));
        const int centre2 = max_sum;  // 2 * (2 * mean)
        double p = 0.0;
        for (int s = 0; s <= max_sum; ++s) {
            const double c = counts[static_cast<std::size_t>(s)];
            if (c == 0.0) continue;
            bool in_tail = false;
            switch (alt) {
                case Alternative::TwoSided: in_tail = std::abs(2 * s - centre2) >= std::abs(2 * obs - centre2); break;
                case Alternative::Less: in_tail = s <= obs; break;
                case Alternative::Greater: in_tail = s >= obs; break;
            }
            if (in_tail) p += c;
        }
        res.method = "wilcoxon-exact";
        res.p_value = std::clamp(p / all, 0.0, 1.0);
        return res;
    }

    // Normal approximation with tie and continuity corrections.
    double tie_term = 0.0;
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double nd = static_cast<double>(n);
    const double sd = std::sqrt(nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0);
    auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    const double dev = w_plus - mean;
    double p = 1.0;
    switch (alt) {
        case Alternative::TwoSided: {
            const double z = std::max(0.0, std::abs(dev) - 0.5) / sd;
            res.z = dev < 0.0 ? -z : z;
            p = std::erfc(z / std::sqrt(2.0));
            break;
        }
        case Alternative::Less:
            res.z = (dev + 0.5) / sd;
            p = phi(res.z);
            break;
        case Alternative::Greater:
            res.z = (dev - 0.5) / sd;
            p = 1.0 - phi(res.z);
            break;
    }
    res.method = "wilcoxon-normal";
    res.p_value = std::clamp(p, 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------
// Bonferroni post hoc

struct PairwiseResult {
    std::size_t a = 0;
    std::size_t b = 0;
    TestResult test;  // Wilcoxon on a - b; method "degenerate" when untestable
    double p_bonf = 1.0;
    bool significant = false;  // p_bonf <= alpha

    bool operator==(const PairwiseResult&) const = default;
};

/// All k(k-1)/2 pairwise Wilcoxon tests with p multiplied by the number of
/// comparisons and clamped to 1. Pairs whose differences are all (or almost
/// all) zero cannot be tested and get p = 1.
inline std::vector<PairwiseResult> bonferroni_posthoc(const SubjectMeans& m, double alpha = 0.05) {
    m.require_complete();
    const std::size_t k = m.conditions();
    const double comparisons = static_cast<double>(k * (k - 1) / 2);
    std::vector<PairwiseResult> out;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            PairwiseResult r;
            r.a = i;
            r.b = j;
            const auto ca = m.column(i);
            const auto cb = m.column(j);
            try {
                r.test = wilcoxon_signed_rank(ca, cb);
            } catch (const Error& e) {
                if (e.code() != "degenerate") throw;
                r.test = TestResult{"degenerate", 0.0, 1.0, 0.0, m.subjects(), 0.0};
            }
            r.p_bonf = std::min(1.0, r.test.p_value * comparisons);
            r.significant = r.p_bonf <= alpha;
            out.push_back(r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pearson

struct Correlation {
    double r = 0.0;
    double p_value = 1.0;  // two-sided t test, n - 2 df
    std::size_t n = 0;
    std::string strength;

    bool operator==(const Correlation&) const = default;
};

/// |r| >= .6 strong, >= .4 moderate, >= .2 weak, otherwise very weak.
inline std::string correlation_strength(double r) {
    const double a = std::abs(r);
    if (a >= 0.6) return "strong";
    if (a >= 0.4) return "moderate";
    if (a >= 0.2) return "weak";
    return "very weak";
}

/// Product-moment correlation, accumulated in one pass with running
/// co-moments.
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw invalid_input("Pearson: samples differ in length");
    if (x.size() < 3) throw invalid_input("Pearson needs at least 3 pairs");
    double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x[i] - mx);
        syy += dy * (y[i] - my);
        sxy += dx * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw Error("undefined-correlation", "Pearson: constant input");
    Correlation c;
    c.n = x.size();
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(c.n - 2);
    if (std::abs(c.r) >= 1.0) {
        c.p_value = 0.0;
    } else {
        const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
        c.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
        c.p_value = std::clamp(c.p_value, 0.0, 1.0);
    }
    c.strength = correlation_strength(c.r);
    return c;
}

}  // namespace drillguide::stats

#pragma once

// Dataset analysis: per-metric Friedman + Bonferroni post hoc on subject
// means, per-condition correlations, optional NASA-TLX and demographics
// inputs, and the radar scoring (+1 per significant outperformance).

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drillguide/core.hpp"
#include "drillguide/harness.hpp"
#include "drillguide/record.hpp"
#include "drillguide/stats.hpp"

namespace drillguide {

inline constexpr std::array<const char*, 8> kMetrics{"PM", "PX", "PY", "PZ", "RM", "RX", "RZ", "TT"};

/// Metric value of a record. Per-axis components enter the analysis as
/// absolute errors; lower is better for every metric.
inline double metric_value(const TrialRecord& r, std::string_view metric) {
    if (metric == "PM") return r.error.pm;
    if (metric == "PX") return std::abs(r.error.pe.x);
    if (metric == "PY") return std::abs(r.error.pe.y);
    if (metric == "PZ") return std::abs(r.error.pe.z);
    if (metric == "RM") return r.error.rm;
    if (metric == "RX") return std::abs(r.error.re_x);
    if (metric == "RZ") return std::abs(r.error.re_z);
    if (metric == "TT") return r.task_time;
    throw invalid_input("unknown metric " + std::string(metric));
}

struct Descriptive {
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    std::size_t n = 0;

    bool operator==(const Descriptive&) const = default;
};

struct MetricBlock {
    std::string metric;
    std::vector<Descriptive> descriptive;  // per condition, over trials
    std::vector<std::vector<double>> subject_means;  // [condition][subject]
    std::optional<stats::TestResult> friedman;
    std::vector<stats::PairwiseResult> posthoc;
    std::string note;  // why a test was skipped, if it was

    bool operator==(const MetricBlock&) const = default;
};

struct CorrelationEntry {
    std::string condition;
    std::string x;
    std::string y;
    std::optional<stats::Correlation> result;  // empty when undefined (constant input, n < 3)

    bool operator==(const CorrelationEntry&) const = default;
};

struct StatsReport {
    std::vector<std::string> conditions;
    std::vector<int> subjects;
    std::size_t trials = 0;
    std::vector<MetricBlock> metrics;
    std::vector<CorrelationEntry> correlations;
    std::vector<MetricBlock> tlx;
    std::vector<CorrelationEntry> tlx_correlations;
    std::vector<CorrelationEntry> demographics;
    std::vector<std::string> radar_axes;
    std::vector<std::vector<int>> radar;  // [condition][axis]

    bool operator==(const StatsReport&) const = default;

    const MetricBlock* metric(std::string_view name) const {
        for (const auto& m : metrics) {
            if (m.metric == name) return &m;
        }
        return nullptr;
    }
};

/// Externally collected NASA-TLX scores, one row per subject and condition.
struct TlxRow {
    int subject = 0;
    Condition condition = Condition::EntryPoint;
    std::array<double, 6> scales{};
};
inline constexpr std::array<const char*, 6> kTlxScales{"mental", "physical", "temporal", "performance", "effort",
                                                       "frustration"};

struct DemographicsRow {
    int subject = 0;
    double age = 0.0;
    double gaming = 0.0;
};

namespace detail {

inline Descriptive describe(std::vector<double> v) {
    Descriptive d;
    d.n = v.size();
    if (v.empty()) return d;
    double sum = 0.0;
    for (double x : v) sum += x;
    d.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - d.mean) * (x - d.mean);
    d.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    d.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    return d;
}

// Friedman + post hoc on a [condition][subject] table.
inline void run_tests(MetricBlock& block) {
    const std::size_t k = block.subject_means.size();
    const std::size_t n = k ? block.subject_means.front().size() : 0;
    stats::SubjectMeans m(n, k);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t s = 0; s < n; ++s) m(s, c) = block.subject_means[c][s];
    }
    if (k >= 3 && n >= 2) {
        block.friedman = stats::friedman(m);
    } else {
        block.note = "Friedman test skipped: needs >= 3 conditions and >= 2 subjects";
    }
    if (k >= 2 && n >= 1) block.posthoc = stats::bonferroni_posthoc(m);
}

inline std::optional<stats::Correlation> try_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    try {
        return stats::pearson(x, y);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Whether condition a significantly outperforms b (lower values) on a block.
inline bool outperforms(const MetricBlock& block, std::size_t a, std::size_t b, double alpha = 0.05) {
    if (!block.friedman || block.friedman->p_value > alpha) return false;
    for (const auto& p : block.posthoc) {
        if (!p.significant) continue;
        // effect_size is the rank-biserial r of (first - second); negative
        // means the first condition has the lower values.
        if (p.a == a && p.b == b && p.test.effect_size < 0.0) return true;
        if (p.a == b && p.b == a && p.test.effect_size > 0.0) return true;
    }
    return false;
}

inline StatsReport analyze(const std::vector<TrialRecord>& records, const std::vector<TlxRow>* tlx = nullptr,
                           const std::vector<DemographicsRow>* demographics = nullptr) {
    if (records.empty()) throw Error("no-trials", "no trials in dataset");
    StatsReport rep;
    rep.trials = records.size();

    std::vector<Condition> conds;
    for (Condition c : kAllConditions) {
        if (std::any_of(records.begin(), records.end(), [&](const TrialRecord& r) { return r.condition == c; })) {
            conds.push_back(c);
            rep.conditions.emplace_back(to_string(c));
        }
    }
    std::set<int> subject_set;
    for (const auto& r : records) subject_set.insert(r.subject);
    rep.subjects.assign(subject_set.begin(), subject_set.end());
    auto cond_index = [&](Condition c) {
        return static_cast<std::size_t>(std::find(conds.begin(), conds.end(), c) - conds.begin());
    };
    auto subj_index = [&](int s) {
        return static_cast<std::size_t>(std::lower_bound(rep.subjects.begin(), rep.subjects.end(), s) - rep.subjects.begin());
    };
    const std::size_t k = conds.size();
    const std::size_t n = rep.subjects.size();

    // Listwise: every subject needs at least one trial in every condition.
    std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(n, 0));
    for (const auto& r : records) ++counts[cond_index(r.condition)][subj_index(r.subject)];
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t s = 0; s < n; ++s) {
            if (counts[c][s] == 0) {
                throw Error("schema", "subject " + std::to_string(rep.subjects[s]) + " has no trials for condition " +
                                          rep.conditions[c]);
            }
        }
    }

    for (const char* metric : kMetrics) {
        MetricBlock b;
        b.metric = metric;
        std::vector<std::vector<double>> per_cond(k);
        b.subject_means.assign(k, std::vector<double>(n, 0.0));
        for (const auto& r : records) {
            const double v = metric_value(r, metric);
            const std::size_t c = cond_index(r.condition);
            const std::size_t s = subj_index(r.subject);
            per_cond[c].push_back(v);
            b.subject_means[c][s] += v / static_cast<double>(counts[c][s]);
        }
        for (auto& v : per_cond) b.descriptive.push_back(detail::describe(std::move(v)));
        detail::run_tests(b);
        rep.metrics.push_back(std::move(b));
    }

    const auto& pm = rep.metric("PM")->subject_means;
    const auto& rm = rep.metric("RM")->subject_means;
    const auto& tt = rep.metric("TT")->subject_means;
    for (std::size_t c = 0; c < k; ++c) {
        rep.correlations.push_back({rep.conditions[c], "RM", "TT", detail::try_pearson(rm[c], tt[c])});
        rep.correlations.push_back({rep.conditions[c], "PM", "TT", detail::try_pearson(pm[c], tt[c])});
        rep.correlations.push_back({rep.conditions[c], "RM", "PM", detail::try_pearson(rm[c], pm[c])});
    }

    if (tlx && !tlx->empty()) {
        std::vector<std::vector<double>> overall(k, std::vector<double>(n, 0.0));
        for (std::size_t scale = 0; scale < kTlxScales.size(); ++scale) {
            MetricBlock b;
            b.metric = kTlxScales[scale];
            b.subject_means.assign(k, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
            std::vector<std::vector<std::vector<double>>> cells(k, std::vector<std::vector<double>>(n));
            for (const auto& row : *tlx) {
                const std::size_t c = cond_index(row.condition);
                const std::size_t s = subj_index(row.subject);
                if (c >= k || s >= n || rep.subjects[s] != row.subject) {
                    throw Error("schema", "tlx row for subject " + std::to_string(row.subject) + " / condition " +
                                              std::string(to_string(row.condition)) + " has no matching trials");
                }
                cells[c][s].push_back(row.scales[scale]);
            }
            std::vector<std::vector<double>> per_cond(k);
            for (std::size_t c = 0; c < k; ++c) {
                for (std::size_t s = 0; s < n; ++s) {
                    if (cells[c][s].empty()) {
                        throw Error("schema", "tlx is missing subject " + std::to_string(rep.subjects[s]) +
                                                  " condition " + rep.conditions[c]);
                    }
                    double sum = 0.0;
                    for (double v : cells[c][s]) sum += v;
                    b.subject_means[c][s] = sum / static_cast<double>(cells[c][s].size());
                    overall[c][s] += b.subject_means[c][s] / static_cast<double>(kTlxScales.size());
                    per_cond[c].insert(per_cond[c].end(), cells[c][s].begin(), cells[c][s].end());
                }
            }
            for (auto& v : per_cond) b.descriptive.push_back(detail::describe(std::move(v)));
            detail::run_tests(b);
            rep.tlx.push_back(std::move(b));
        }
        for (std::size_t c = 0; c < k; ++c) {
            rep.tlx_correlations.push_back({rep.conditions[c], "TLX", "TT", detail::try_pearson(overall[c], tt[c])});
        }
    }

    if (demographics && !demographics->empty()) {
        std::vector<double> age(n, std::numeric_limits<double>::quiet_NaN());
        std::vector<double> gaming(n, std::numeric_limits<double>::quiet_NaN());
        for (const auto& d : *demographics) {
            const std::size_t s = subj_index(d.subject);
            if (s < n && rep.subjects[s] == d.subject) {
                age[s] = d.age;
                gaming[s] = d.gaming;
            }
        }
        for (std::size_t s = 0; s < n; ++s) {
            if (!std::isfinite(age[s])) {
                throw Error("schema", "demographics is missing subject " + std::to_string(rep.subjects[s]));
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            rep.demographics.push_back({rep.conditions[c], "age", "PM", detail::try_pearson(age, pm[c])});
            rep.demographics.push_back({rep.conditions[c], "age", "RM", detail::try_pearson(age, rm[c])});
            rep.demographics.push_back({rep.conditions[c], "gaming", "PM", detail::try_pearson(gaming, pm[c])});
            rep.demographics.push_back({rep.conditions[c], "gaming", "RM", detail::try_pearson(gaming, rm[c])});
        }
    }

    for (const auto& b : rep.metrics) rep.radar_axes.push_back(b.metric);
    for (const auto& b : rep.tlx) rep.radar_axes.push_back("TLX-" + b.metric);
    rep.radar.assign(k, std::vector<int>(rep.radar_axes.size(), 0));
    std::vector<const MetricBlock*> blocks;
    for (const auto& b : rep.metrics) blocks.push_back(&b);
    for (const auto& b : rep.tlx) blocks.push_back(&b);
    for (std::size_t axis = 0; axis < blocks.size(); ++axis) {
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                if (a != b && outperforms(*blocks[axis], a, b)) ++rep.radar[a][axis];
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson test_json(const stats::TestResult& t) {
    return {{"method", t.method}, {"statistic", t.statistic}, {"p_value", t.p_value},
            {"effect_size", t.effect_size}, {"n", t.n}, {"z", t.z}};
}
inline stats::TestResult test_from(const nlohmann::json& j) {
    return {j.at("method").get<std::string>(), j.at("statistic").get<double>(), j.at("p_value").get<double>(),
            j.at("effect_size").get<double>(), j.at("n").get<std::size_t>(), j.at("z").get<double>()};
}

inline ojson block_json(const MetricBlock& b, const std::vector<std::string>& conds) {
    ojson desc = ojson::array();
    for (std::size_t c = 0; c < b.descriptive.size(); ++c) {
        const auto& d = b.descriptive[c];
        desc.push_back({{"condition", conds[c]}, {"mean", d.mean}, {"sd", d.sd}, {"median", d.median}, {"n", d.n}});
    }
    ojson post = ojson::array();
    for (const auto& p : b.posthoc) {
        post.push_back({{"a", conds[p.a]}, {"b", conds[p.b]}, {"test", test_json(p.test)}, {"p_bonf", p.p_bonf},
                        {"significant", p.significant}});
    }
    ojson means = ojson::object();
    for (std::size_t c = 0; c < b.subject_means.size(); ++c) means[conds[c]] = b.subject_means[c];
    return {{"metric", b.metric},
            {"descriptive", desc},
            {"friedman", b.friedman ? test_json(*b.friedman) : ojson(nullptr)},
            {"posthoc", post},
            {"subject_means", means},
            {"note", b.note}};
}

inline MetricBlock block_from(const nlohmann::json& j, const std::vector<std::string>& conds) {
    auto idx = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(conds.begin(), conds.end(), name) - conds.begin());
    };
    MetricBlock b;
    b.metric = j.at("metric").get<std::string>();
    for (const auto& d : j.at("descriptive")) {
        b.descriptive.push_back({d.at("mean").get<double>(), d.at("sd").get<double>(), d.at("median").get<double>(),
                                 d.at("n").get<std::size_t>()});
    }
    if (!j.at("friedman").is_null()) b.friedman = test_from(j.at("friedman"));
    for (const auto& p : j.at("posthoc")) {
        b.posthoc.push_back({idx(p.at("a").get<std::string>()), idx(p.at("b").get<std::string>()),
                             test_from(p.at("test")), p.at("p_bonf").get<double>(), p.at("significant").get<bool>()});
    }
    for (const auto& c : conds) b.subject_means.push_back(j.at("subject_means").at(c).get<std::vector<double>>());
    b.note = j.at("note").get<std::string>();
    return b;
}

inline ojson corr_json(const CorrelationEntry& e) {
    ojson j{{"condition", e.condition}, {"x", e.x}, {"y", e.y}};
    if (e.result) {
        j["r"] = e.result->r;
        j["p_value"] = e.result->p_value;
        j["n"] = e.result->n;
        j["strength"] = e.result->strength;
    } else {
        j["r"] = nullptr;
    }
    return j;
}

inline CorrelationEntry corr_from(const nlohmann::json& j) {
    CorrelationEntry e{j.at("condition").get<std::string>(), j.at("x").get<std::string>(), j.at("y").get<std::string>(),
                       std::nullopt};
    if (!j.at("r").is_null()) {
        e.result = stats::Correlation{j.at("r").get<double>(), j.at("p_value").get<double>(),
                                      j.at("n").get<std::size_t>(), j.at("strength").get<std::string>()};
    }
    return e;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const StatsReport& r) {
    using detail::ojson;
    ojson metrics = ojson::array();
    for (const auto& b : r.metrics) metrics.push_back(detail::block_json(b, r.conditions));
    ojson tlx = ojson::array();
    for (const auto& b : r.tlx) tlx.push_back(detail::block_json(b, r.conditions));
    auto corr_list = [](const std::vector<CorrelationEntry>& v) {
        ojson a = ojson::array();
        for (const auto& e : v) a.push_back(detail::corr_json(e));
        return a;
    };
    ojson radar = ojson::object();
    for (std::size_t c = 0; c < r.conditions.size(); ++c) {
        ojson row = ojson::object();
        for (std::size_t a = 0; a < r.radar_axes.size(); ++a) row[r.radar_axes[a]] = r.radar[c][a];
        radar[r.conditions[c]] = row;
    }
    return {{"version", "v1"},
            {"conditions", r.conditions},
            {"subjects", r.subjects},
            {"trials", r.trials},
            {"metrics", metrics},
            {"correlations", corr_list(r.correlations)},
            {"tlx", tlx},
            {"tlx_correlations", corr_list(r.tlx_correlations)},
            {"demographics", corr_list(r.demographics)},
            {"radar_axes", r.radar_axes},
            {"radar", radar}};
}

inline StatsReport report_from_json(const nlohmann::json& j) {
    StatsReport r;
    r.conditions = j.at("conditions").get<std::vector<std::string>>();
    r.subjects = j.at("subjects").get<std::vector<int>>();
    r.trials = j.at("trials").get<std::size_t>();
    for (const auto& b : j.at("metrics")) r.metrics.push_back(detail::block_from(b, r.conditions));
    for (const auto& b : j.at("tlx")) r.tlx.push_back(detail::block_from(b, r.conditions));
    for (const auto& e : j.at("correlations")) r.correlations.push_back(detail::corr_from(e));
    for (const auto& e : j.at("tlx_correlations")) r.tlx_correlations.push_back(detail::corr_from(e));
    for (const auto& e : j.at("demographics")) r.demographics.push_back(detail::corr_from(e));
    r.radar_axes = j.at("radar_axes").get<std::vector<std::string>>();
    for (const auto& c : r.conditions) {
        std::vector<int> row;
        for (const auto& a : r.radar_axes) row.push_back(j.at("radar").at(c).at(a).get<int>());
        r.radar.push_back(row);
    }
    return r;
}

inline std::string radar_csv(const StatsReport& r) {
    std::string out = "condition";
    for (const auto& a : r.radar_axes) out += "," + a;
    out += '\n';
    for (std::size_t c = 0; c < r.conditions.size(); ++c) {
        out += r.conditions[c];
        for (int v : r.radar[c]) out += "," + std::to_string(v);
        out += '\n';
    }
    return out;
}

inline std::string p_text(double p) {
    if (p < 0.001) return "<.001";
    std::string s = fixed(p, 3);
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    return s;
}

inline std::string report_text(const StatsReport& r) {
    std::ostringstream out;
    out << "subjects: " << r.subjects.size() << "  trials: " << r.trials << "\n\n";
    auto block_text = [&](const MetricBlock& b) {
        out << b.metric << "\n";
        for (std::size_t c = 0; c < r.conditions.size(); ++c) {
            const auto& d = b.descriptive[c];
            char line[160];
            std::snprintf(line, sizeof(line), "  %-11s mean %10.3f  sd %9.3f  median %9.3f  n %zu\n",
                          r.conditions[c].c_str(), d.mean, d.sd, d.median, d.n);
            out << line;
        }
        if (b.friedman) {
            out << "  Friedman chi2 = " << fixed(b.friedman->statistic, 2) << ", p " << p_text(b.friedman->p_value)
                << ", Kendall's W = " << fixed(b.friedman->effect_size, 2) << " (" << b.friedman->method << ")\n";
        } else {
            out << "  " << b.note << "\n";
        }
        for (const auto& p : b.posthoc) {
            if (!p.significant) continue;
            const bool a_lower = p.test.effect_size < 0.0;
            out << "  post hoc: " << r.conditions[a_lower ? p.a : p.b] << " < " << r.conditions[a_lower ? p.b : p.a]
                << " (pbonf " << p_text(p.p_bonf) << ")\n";
        }
        out << "\n";
    };
    for (const auto& b : r.metrics) block_text(b);
    if (!r.tlx.empty()) {
        out << "NASA-TLX\n\n";
        for (const auto& b : r.tlx) block_text(b);
    }
    auto corr_text = [&](const char* title, const std::vector<CorrelationEntry>& v) {
        if (v.empty()) return;
        out << title << "\n";
        for (const auto& e : v) {
            out << "  " << e.condition << " r(" << e.x << "," << e.y << ") = ";
            if (e.result) {
                out << fixed(e.result->r, 3) << ", p " << p_text(e.result->p_value) << " (" << e.result->strength << ")\n";
            } else {
                out << "undefined\n";
            }
        }
        out << "\n";
    };
    corr_text("Correlations (subject means)", r.correlations);
    corr_text("TLX correlations", r.tlx_correlations);
    corr_text("Demographics", r.demographics);
    out << "Radar scores\n" << radar_csv(r);
    return out.str();
}

// ---------------------------------------------------------------------------
// Optional inputs

inline std::vector<TlxRow> read_tlx_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("input", "cannot read " + path.string());
    std::string line;
    const std::string header = "subject,condition,mental,physical,temporal,performance,effort,frustration";
    if (!std::getline(in, line)) throw Error("schema", "row 0 column subject: tlx file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw Error("schema", "row 0 column subject: tlx header must be '" + header + "'");
    std::vector<TlxRow> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != 8) throw Error("schema", "row " + std::to_string(row) + " column subject: expected 8 cells");
        TlxRow t;
        t.subject = static_cast<int>(detail::parse_int(c[0], row, "subject"));
        const auto cond = parse_condition(c[1]);
        if (!cond) throw Error("schema", "row " + std::to_string(row) + " column condition: unknown condition '" + c[1] + "'");
        t.condition = *cond;
        for (std::size_t i = 0; i < 6; ++i) t.scales[i] = detail::parse_double(c[2 + i], row, kTlxScales[i]);
        rows.push_back(t);
    }
    return rows;
}

inline std::vector<DemographicsRow> read_demographics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("input", "cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("schema", "row 0 column subject: demographics file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "subject,age,gaming") throw Error("schema", "row 0 column subject: demographics header must be 'subject,age,gaming'");
    std::vector<DemographicsRow> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        if (c.size() != 3) throw Error("schema", "row " + std::to_string(row) + " column subject: expected 3 cells");
        rows.push_back({static_cast<int>(detail::parse_int(c[0], row, "subject")), detail::parse_double(c[1], row, "age"),
                        detail::parse_double(c[2], row, "gaming")});
    }
    return rows;
}

}  // namespace drillguide

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "drillguide/plots.hpp"
#include "drillguide/report.hpp"
#include "support.hpp"

using namespace drillguide;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(DRILLGUIDE_TEST_DATA) / "golden";

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<TrialRecord> golden_records() { return read_dataset_csv(kGolden / "dataset.csv"); }

std::filesystem::path scratch(const std::string& name, const std::string& text) {
    const auto dir = std::filesystem::temp_directory_path() / "drillguide_report_test";
    std::filesystem::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code() + ": " + e.what();
    }
    return "";
}

// rows[subject][condition] view of a block, as the oracles expect
std::vector<std::vector<double>> rows_of(const MetricBlock& b) {
    std::vector<std::vector<double>> rows(b.subject_means.front().size(), std::vector<double>(b.subject_means.size()));
    for (std::size_t c = 0; c < b.subject_means.size(); ++c) {
        for (std::size_t s = 0; s < rows.size(); ++s) rows[s][c] = b.subject_means[c][s];
    }
    return rows;
}

}  // namespace

TEST(Report, GoldenReportIsByteStable) {
    const StatsReport rep = analyze(golden_records());
    EXPECT_EQ(report_to_json(rep).dump(2) + "\n", slurp(kGolden / "report.json"));
}

TEST(Report, AnalysisIsDeterministic) {
    const auto records = golden_records();
    EXPECT_EQ(report_to_json(analyze(records)).dump(), report_to_json(analyze(records)).dump());
}

TEST(Report, SubjectMeansAndDescriptivesMatchDirectComputation) {
    const auto records = golden_records();
    const StatsReport rep = analyze(records);
    ASSERT_EQ(rep.conditions, (std::vector<std::string>{"EntryPoint", "TargetAxis", "DWEP", "DWTA"}));
    ASSERT_EQ(rep.subjects.size(), 6u);
    EXPECT_EQ(rep.trials, 48u);
    ASSERT_EQ(rep.metrics.size(), 8u);
    for (const auto& block : rep.metrics) {
        for (std::size_t c = 0; c < rep.conditions.size(); ++c) {
            std::vector<double> all;
            for (int s : rep.subjects) {
                double sum = 0.0;
                int count = 0;
                for (const auto& r : records) {
                    if (r.subject != s || to_string(r.condition) != rep.conditions[c]) continue;
                    sum += metric_value(r, block.metric);
                    all.push_back(metric_value(r, block.metric));
                    ++count;
                }
                EXPECT_NEAR(block.subject_means[c][static_cast<std::size_t>(s)], sum / count, 1e-12);
            }
            double mean = 0.0;
            for (double v : all) mean += v;
            mean /= static_cast<double>(all.size());
            std::sort(all.begin(), all.end());
            EXPECT_NEAR(block.descriptive[c].mean, mean, 1e-12);
            EXPECT_NEAR(block.descriptive[c].median, 0.5 * (all[5] + all[6]), 1e-12);
            EXPECT_EQ(block.descriptive[c].n, 12u);
        }
    }
}

TEST(Report, ComponentMetricsUseAbsoluteValues) {
    TrialRecord r;
    r.error.pe = {-1.5, 2.0, -3.0};
    r.error.re_x = -4.0;
    r.error.re_z = 5.0;
    EXPECT_EQ(metric_value(r, "PX"), 1.5);
    EXPECT_EQ(metric_value(r, "PZ"), 3.0);
    EXPECT_EQ(metric_value(r, "RX"), 4.0);
    EXPECT_EQ(metric_value(r, "RZ"), 5.0);
    EXPECT_THROW(metric_value(r, "QQ"), Error);
}

TEST(Report, FriedmanAndPostHocAgreeWithOracles) {
    const StatsReport rep = analyze(golden_records());
    for (const auto& block : rep.metrics) {
        ASSERT_TRUE(block.friedman.has_value()) << block.metric;
        const auto rows = rows_of(block);
        EXPECT_NEAR(block.friedman->statistic, oracle::friedman_q(rows), 1e-9) << block.metric;
        ASSERT_EQ(block.posthoc.size(), 6u);
        for (const auto& p : block.posthoc) {
            const auto& a = block.subject_means[p.a];
            const auto& b = block.subject_means[p.b];
            if (p.test.method == "degenerate") continue;
            const oracle::WilcoxonExact ex = oracle::wilcoxon_enumerated(a, b);
            EXPECT_NEAR(p.test.p_value, ex.two_sided, 1e-12);
            EXPECT_NEAR(p.p_bonf, std::min(1.0, 6.0 * ex.two_sided), 1e-12);
            EXPECT_EQ(p.significant, p.p_bonf <= 0.05);
        }
    }
    const MetricBlock* rm = rep.metric("RM");
    const auto mc = oracle::friedman_permutation_p(rows_of(*rm), 20000, 3);
    EXPECT_NEAR(rm->friedman->p_value, mc.p, 4.0 * mc.se + 1e-3);
}

TEST(Report, JsonRoundTrip) {
    const auto tlx = read_tlx_csv(kGolden / "tlx.csv");
    const auto demo = read_demographics_csv(kGolden / "demographics.csv");
    const StatsReport rep = analyze(golden_records(), &tlx, &demo);
    const std::string text = report_to_json(rep).dump(2);
    const StatsReport back = report_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back, rep);
    EXPECT_EQ(report_to_json(back).dump(2), text);
}

TEST(Report, IdenticalConditionsGiveNoSignificanceAndFlatRadar) {
    auto records = golden_records();
    // every condition gets the EntryPoint values of the same subject and trial slot
    std::map<std::pair<int, int>, TrialRecord> ep;
    std::map<std::pair<int, Condition>, int> slot;
    for (const auto& r : records) {
        if (r.condition == Condition::EntryPoint) ep[{r.subject, slot[{r.subject, r.condition}]++}] = r;
    }
    slot.clear();
    for (auto& r : records) {
        const TrialRecord& src = ep.at({r.subject, slot[{r.subject, r.condition}]++});
        r.error = src.error;
        r.task_time = src.task_time;
    }
    const StatsReport rep = analyze(records);
    for (const auto& b : rep.metrics) {
        ASSERT_TRUE(b.friedman.has_value());
        EXPECT_EQ(b.friedman->statistic, 0.0);
        EXPECT_EQ(b.friedman->p_value, 1.0);
        for (const auto& p : b.posthoc) EXPECT_FALSE(p.significant);
    }
    for (const auto& row : rep.radar) {
        for (int v : row) EXPECT_EQ(v, 0);
    }
}

TEST(Report, RadarAxesIncludeTlxScales) {
    const auto tlx = read_tlx_csv(kGolden / "tlx.csv");
    const StatsReport rep = analyze(golden_records(), &tlx, nullptr);
    ASSERT_EQ(rep.radar_axes.size(), 14u);
    EXPECT_EQ(rep.radar_axes[7], "TT");
    EXPECT_EQ(rep.radar_axes[8], "TLX-mental");
    EXPECT_EQ(rep.radar_axes[13], "TLX-frustration");
    ASSERT_EQ(rep.radar.size(), 4u);
    for (const auto& row : rep.radar) EXPECT_EQ(row.size(), 14u);
}

TEST(Report, RadarCountsSignificantOutperformance) {
    ExperimentConfig cfg;
    cfg.n_subjects = 12;
    cfg.trials_per_condition = 4;
    const StatsReport rep = analyze(run_experiment(cfg).records);
    int total = 0;
    for (std::size_t axis = 0; axis < rep.metrics.size(); ++axis) {
        const MetricBlock& b = rep.metrics[axis];
        for (std::size_t c = 0; c < rep.conditions.size(); ++c) {
            int expected = 0;
            const bool omnibus = b.friedman && b.friedman->p_value <= 0.05;
            for (const auto& p : b.posthoc) {
                if (!omnibus || p.p_bonf > 0.05) continue;
                // the better side of a pair is the one most subjects score lower on
                int a_lower = 0, b_lower = 0;
                for (std::size_t s = 0; s < rep.subjects.size(); ++s) {
                    a_lower += b.subject_means[p.a][s] < b.subject_means[p.b][s];
                    b_lower += b.subject_means[p.b][s] < b.subject_means[p.a][s];
                }
                if ((p.a == c && a_lower > b_lower) || (p.b == c && b_lower > a_lower)) ++expected;
            }
            EXPECT_EQ(rep.radar[c][axis], expected) << rep.conditions[c] << " " << rep.radar_axes[axis];
            EXPECT_LE(rep.radar[c][axis], 3);
            total += rep.radar[c][axis];
        }
    }
    EXPECT_GT(total, 0);
}

TEST(Report, OutperformsIsGatedOnTheOmnibusTest) {
    MetricBlock b;
    b.friedman = stats::TestResult{"friedman-chi2", 12.0, 0.2, 0.5, 10, 0.0};
    stats::PairwiseResult p;
    p.a = 0;
    p.b = 1;
    p.test.effect_size = -0.9;
    p.p_bonf = 0.01;
    p.significant = true;
    b.posthoc.push_back(p);
    EXPECT_FALSE(outperforms(b, 0, 1));
    b.friedman->p_value = 0.01;
    EXPECT_TRUE(outperforms(b, 0, 1));
    EXPECT_FALSE(outperforms(b, 1, 0));
    b.posthoc[0].test.effect_size = 0.9;
    EXPECT_TRUE(outperforms(b, 1, 0));
}

TEST(Report, TlxAndDemographicsIngestion) {
    const auto tlx = read_tlx_csv(kGolden / "tlx.csv");
    const auto demo = read_demographics_csv(kGolden / "demographics.csv");
    ASSERT_EQ(tlx.size(), 24u);
    EXPECT_EQ(tlx[0].subject, 0);
    EXPECT_EQ(tlx[0].condition, Condition::EntryPoint);
    EXPECT_EQ(tlx[0].scales[0], 34.0);
    EXPECT_EQ(tlx[0].scales[5], 37.0);
    ASSERT_EQ(demo.size(), 6u);
    EXPECT_EQ(demo[4].age, 41.0);
    EXPECT_EQ(demo[4].gaming, 5.0);

    const StatsReport rep = analyze(golden_records(), &tlx, &demo);
    ASSERT_EQ(rep.tlx.size(), 6u);
    EXPECT_EQ(rep.tlx[0].metric, "mental");
    EXPECT_EQ(rep.tlx[0].subject_means[0][0], 34.0);
    EXPECT_EQ(rep.tlx_correlations.size(), 4u);
    EXPECT_EQ(rep.demographics.size(), 16u);
    for (const auto& e : rep.demographics) {
        ASSERT_TRUE(e.result.has_value());
        EXPECT_EQ(e.result->n, 6u);
    }
    // age vs PM per condition, straight from the subject means
    std::vector<double> age;
    for (const auto& d : demo) age.push_back(d.age);
    EXPECT_NEAR(rep.demographics[0].result->r, oracle::two_pass_pearson(age, rep.metric("PM")->subject_means[0]), 1e-12);
}

TEST(Report, CorrelationsUseSubjectMeans) {
    const StatsReport rep = analyze(golden_records());
    ASSERT_EQ(rep.correlations.size(), 12u);
    for (std::size_t c = 0; c < 4; ++c) {
        const auto& e = rep.correlations[3 * c];
        EXPECT_EQ(e.x, "RM");
        EXPECT_EQ(e.y, "TT");
        ASSERT_TRUE(e.result.has_value());
        EXPECT_NEAR(e.result->r,
                    oracle::two_pass_pearson(rep.metric("RM")->subject_means[c], rep.metric("TT")->subject_means[c]),
                    1e-12);
        EXPECT_NEAR(e.result->p_value, oracle::pearson_null_p(e.result->r, 6), 1e-6);
    }
}

TEST(Report, TlxSchemaErrorsNameRowAndColumn) {
    const std::string header = "subject,condition,mental,physical,temporal,performance,effort,frustration\n";
    auto msg = error_of([&] { read_tlx_csv(scratch("bad_header.csv", "subject,cond\n")); });
    EXPECT_NE(msg.find("schema"), std::string::npos);
    EXPECT_NE(msg.find("row 0"), std::string::npos);

    msg = error_of([&] { read_tlx_csv(scratch("bad_cell.csv", header + "0,DWTA,1,2,3,x,5,6\n")); });
    EXPECT_NE(msg.find("row 1"), std::string::npos);
    EXPECT_NE(msg.find("performance"), std::string::npos);

    msg = error_of([&] { read_tlx_csv(scratch("bad_cond.csv", header + "0,DWTA,1,2,3,4,5,6\n1,Nope,1,2,3,4,5,6\n")); });
    EXPECT_NE(msg.find("row 2"), std::string::npos);
    EXPECT_NE(msg.find("condition"), std::string::npos);

    msg = error_of([&] { read_tlx_csv(std::filesystem::temp_directory_path() / "drillguide_no_such_dir" / "missing.csv"); });
    EXPECT_EQ(msg.rfind("input", 0), 0u);
}

TEST(Report, TlxMustCoverEveryCell) {
    auto tlx = read_tlx_csv(kGolden / "tlx.csv");
    tlx.pop_back();
    const auto msg = error_of([&] { analyze(golden_records(), &tlx, nullptr); });
    EXPECT_NE(msg.find("schema"), std::string::npos);
    EXPECT_NE(msg.find("subject 5"), std::string::npos);
}

TEST(Report, DemographicsSchemaErrors) {
    auto msg = error_of([&] { read_demographics_csv(scratch("demo_header.csv", "subject,age\n")); });
    EXPECT_NE(msg.find("schema"), std::string::npos);
    msg = error_of([&] { read_demographics_csv(scratch("demo_cell.csv", "subject,age,gaming\n0,30,2\n1,abc,2\n")); });
    EXPECT_NE(msg.find("row 2"), std::string::npos);
    EXPECT_NE(msg.find("age"), std::string::npos);

    auto demo = read_demographics_csv(kGolden / "demographics.csv");
    demo.erase(demo.begin() + 2);
    msg = error_of([&] { analyze(golden_records(), nullptr, &demo); });
    EXPECT_NE(msg.find("subject 2"), std::string::npos);
}

TEST(Report, MissingCellIsASchemaError) {
    auto records = golden_records();
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [](const TrialRecord& r) { return r.subject == 3 && r.condition == Condition::DWEP; }),
                  records.end());
    const auto msg = error_of([&] { analyze(records); });
    EXPECT_NE(msg.find("schema"), std::string::npos);
    EXPECT_NE(msg.find("subject 3"), std::string::npos);
    EXPECT_NE(msg.find("DWEP"), std::string::npos);
}

TEST(Report, EmptyDatasetIsNoTrials) {
    EXPECT_EQ(error_of([] { analyze({}); }).rfind("no-trials", 0), 0u);
}

TEST(Report, SingleSubjectSingleConditionDoesNotCrash) {
    auto records = golden_records();
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [](const TrialRecord& r) { return r.subject != 0 || r.condition != Condition::DWTA; }),
                  records.end());
    ASSERT_EQ(records.size(), 2u);
    const StatsReport rep = analyze(records);
    EXPECT_EQ(rep.conditions, std::vector<std::string>{"DWTA"});
    for (const auto& b : rep.metrics) {
        EXPECT_FALSE(b.friedman.has_value());
        EXPECT_FALSE(b.note.empty());
        EXPECT_TRUE(b.posthoc.empty());
    }
    for (const auto& e : rep.correlations) EXPECT_FALSE(e.result.has_value());
    EXPECT_EQ(report_from_json(report_to_json(rep)), rep);
    EXPECT_NE(report_text(rep).find("skipped"), std::string::npos);
    EXPECT_FALSE(radar_svg(rep).empty());
}

TEST(Report, TwoConditionsSkipFriedmanButRunPairwise) {
    auto records = golden_records();
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [](const TrialRecord& r) { return r.condition == Condition::DWEP || r.condition == Condition::DWTA; }),
                  records.end());
    const StatsReport rep = analyze(records);
    for (const auto& b : rep.metrics) {
        EXPECT_FALSE(b.friedman.has_value());
        EXPECT_EQ(b.posthoc.size(), 1u);
    }
}

TEST(Report, SimulatedDatasetHasAllEightFriedmanBlocks) {
    ExperimentConfig cfg;
    cfg.n_subjects = 8;
    cfg.trials_per_condition = 4;
    const StatsReport rep = analyze(run_experiment(cfg).records);
    ASSERT_EQ(rep.metrics.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(rep.metrics[i].metric, kMetrics[i]);
        ASSERT_TRUE(rep.metrics[i].friedman.has_value());
        EXPECT_GE(rep.metrics[i].friedman->p_value, 0.0);
        EXPECT_LE(rep.metrics[i].friedman->p_value, 1.0);
        EXPECT_GE(rep.metrics[i].friedman->effect_size, 0.0);
        EXPECT_LE(rep.metrics[i].friedman->effect_size, 1.0);
    }
}

TEST(Report, PValueText) {
    EXPECT_EQ(p_text(0.0004), "<.001");
    EXPECT_EQ(p_text(0.0123), ".012");
    EXPECT_EQ(p_text(1.0), "1.000");
}

TEST(Report, RadarCsvLayout) {
    StatsReport rep;
    rep.conditions = {"A", "B"};
    rep.radar_axes = {"PM", "TT"};
    rep.radar = {{1, 0}, {0, 2}};
    EXPECT_EQ(radar_csv(rep), "condition,PM,TT\nA,1,0\nB,0,2\n");
}

TEST(Plots, BoxStatsInterpolatesQuartiles) {
    const BoxStats b = box_stats({7, 1, 3, 5, 9});
    EXPECT_EQ(b.min, 1);
    EXPECT_EQ(b.q1, 3);
    EXPECT_EQ(b.median, 5);
    EXPECT_EQ(b.q3, 7);
    EXPECT_EQ(b.max, 9);
    const BoxStats c = box_stats({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(c.q1, 1.75);
    EXPECT_DOUBLE_EQ(c.median, 2.5);
    EXPECT_DOUBLE_EQ(c.q3, 3.25);
    EXPECT_THROW(box_stats({}), Error);
}

TEST(Plots, SvgOutputIsWellFormedAndStable) {
    const StatsReport rep = analyze(golden_records());
    const std::string box = box_plot_svg(*rep.metric("RM"), rep.conditions);
    EXPECT_EQ(box.rfind("<svg", 0), 0u);
    EXPECT_NE(box.find("</svg>"), std::string::npos);
    EXPECT_NE(box.find("DWTA"), std::string::npos);
    EXPECT_EQ(box, box_plot_svg(*rep.metric("RM"), rep.conditions));
    const std::string radar = radar_svg(rep);
    EXPECT_EQ(radar.rfind("<svg", 0), 0u);
    EXPECT_NE(radar.find("</svg>"), std::string::npos);
    for (const auto& a : rep.radar_axes) EXPECT_NE(radar.find(">" + a + "<"), std::string::npos) << a;
}

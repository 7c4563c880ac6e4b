// drillguide: simulate experiments, analyze datasets, replay trials, serve
// interactive sessions.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drillguide/harness.hpp"
#include "drillguide/plots.hpp"
#include "drillguide/report.hpp"
#include "drillguide/server.hpp"

namespace fs = std::filesystem;
using namespace drillguide;

namespace {

// Exit 2: the input is wrong. Exit 1: something failed while running.
int exit_code_for(const std::string& code) {
    static const char* const kInputCodes[] = {"config", "schema", "no-trials", "unknown-trial", "usage", "invalid-input", "input"};
    for (const char* c : kInputCodes) {
        if (code == c) return 2;
    }
    return 1;
}

int fail(const std::string& code, const std::string& detail) {
    std::string one_line = detail;
    for (char& c : one_line) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    std::cerr << "error: " << code << ": " << one_line << '\n';
    return exit_code_for(code);
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("DRILLGUIDE_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != std::string(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("config", std::string("DRILLGUIDE_SEED must be an unsigned integer, got '") + s + "'");
    }
}

ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_config(path);
}

// A dataset is either a CSV file or a directory holding dataset.csv.
fs::path dataset_file(const fs::path& p) { return fs::is_directory(p) ? p / "dataset.csv" : p; }

int simulate(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed, int workers) {
    ExperimentConfig cfg = config_or_default(config_path);
    if (!seed) seed = env_seed();
    if (seed) cfg.master_seed = *seed;
    cfg.validate();
    if (workers < 1) throw Error("usage", "--workers must be >= 1");
    const Dataset ds = run_experiment(cfg, workers);
    write_dataset(ds, out);
    std::cerr << "wrote " << ds.records.size() << " trials to " << (fs::path(out) / "dataset.csv").string() << '\n';
    return 0;
}

int analyze_cmd(const std::string& data, const std::string& tlx_path, const std::string& demo_path,
                const std::string& out) {
    const auto records = read_dataset_csv(dataset_file(data));
    std::vector<TlxRow> tlx;
    std::vector<DemographicsRow> demo;
    if (!tlx_path.empty()) tlx = read_tlx_csv(tlx_path);
    if (!demo_path.empty()) demo = read_demographics_csv(demo_path);
    const StatsReport rep = analyze(records, &tlx, &demo);
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("io", "cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
    write_text(dir / "report.txt", report_text(rep));
    write_text(dir / "radar.csv", radar_csv(rep));
    write_text(dir / "radar.svg", radar_svg(rep));
    for (const auto& b : rep.metrics) write_text(dir / ("box_" + b.metric + ".svg"), box_plot_svg(b, rep.conditions));
    for (const auto& b : rep.tlx) write_text(dir / ("box_tlx_" + b.metric + ".svg"), box_plot_svg(b, rep.conditions));
    std::cout << report_text(rep);
    return 0;
}

int replay(const std::string& data, int subject, int trial) {
    const fs::path csv = dataset_file(data);
    const fs::path config_path = csv.parent_path() / "config.json";
    if (!fs::exists(config_path)) throw Error("config", "replay needs " + config_path.string() + " next to the dataset");
    const ExperimentConfig cfg = load_config(config_path);
    const auto records = read_dataset_csv(csv);
    const TrialRecord* recorded = nullptr;
    for (const auto& r : records) {
        if (r.subject == subject && r.trial == trial) recorded = &r;
    }
    if (!recorded) {
        throw Error("unknown-trial", "no trial " + std::to_string(trial) + " for subject " + std::to_string(subject));
    }
    const auto plans = plan_experiment(cfg);
    const TrialPlan* plan = nullptr;
    for (const auto& p : plans) {
        if (p.subject == subject && p.trial == trial) plan = &p;
    }
    if (!plan || plan->agent.seed != recorded->seed) {
        throw Error("replay-mismatch", "config.json does not reproduce the recorded trial");
    }
    std::string buffer;
    const TrialRecord rerun = execute(*plan, cfg.widget, [&](const RenderFrame& f, const GuidanceError&) {
        buffer += to_json(f);
        buffer += '\n';
        if (buffer.size() > (1u << 16)) {
            std::cout << buffer;
            buffer.clear();
        }
    });
    std::cout << buffer << std::flush;
    if (csv_row(rerun) != csv_row(*recorded)) {
        throw Error("replay-mismatch", "replayed trial differs from the recorded row");
    }
    return 0;
}

int serve(int port, const std::string& config_path) {
    wire::Server server(config_or_default(config_path));
    const int bound = server.bind("127.0.0.1", port);
    if (bound < 0) throw Error("io", "cannot bind port " + std::to_string(port));
    std::cerr << "listening on http://127.0.0.1:" << bound << "/v1/stream\n";
    if (!server.listen_after_bind()) throw Error("io", "server stopped unexpectedly");
    return 0;
}

int validate_config(const std::string& path) {
    const ExperimentConfig cfg = load_config(path);
    cfg.validate();
    std::cout << "ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drill guidance widget simulator and analysis"};
    app.require_subcommand(1);

    std::string config, out, data, tlx, demographics;
    std::optional<std::uint64_t> seed;
    int workers = 1, subject = 0, trial = 0, port = 8080;

    auto* sim = app.add_subcommand("simulate", "Run the simulated experiment and write dataset.csv + config.json");
    sim->add_option("--config", config, "Experiment config JSON (defaults when omitted)");
    sim->add_option("--out", out, "Output directory")->required();
    sim->add_option("--seed", seed, "Master seed (falls back to DRILLGUIDE_SEED, then the config)");
    sim->add_option("--workers", workers, "Worker threads");

    auto* an = app.add_subcommand("analyze", "Analyze a dataset and write report files");
    an->add_option("--data", data, "dataset.csv or a directory containing it")->required();
    an->add_option("--tlx", tlx, "NASA-TLX CSV");
    an->add_option("--demographics", demographics, "Demographics CSV");
    an->add_option("--out", out, "Output directory")->required();

    auto* rp = app.add_subcommand("replay", "Re-run one recorded trial and print its frames as JSON lines");
    rp->add_option("--data", data, "dataset.csv or its directory (config.json must sit next to it)")->required();
    rp->add_option("--subject", subject, "Subject index")->required();
    rp->add_option("--trial", trial, "Trial index within the subject")->required();

    auto* sv = app.add_subcommand("serve", "Serve the interactive session protocol over HTTP");
    sv->add_option("--port", port, "TCP port (0 picks a free one)");
    sv->add_option("--config", config, "Experiment config JSON");

    auto* vc = app.add_subcommand("validate-config", "Check a config file");
    vc->add_option("--config", config, "Experiment config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    }

    try {
        if (*sim) return simulate(config, out, seed, workers);
        if (*an) return analyze_cmd(data, tlx, demographics, out);
        if (*rp) return replay(data, subject, trial);
        if (*sv) return serve(port, config);
        if (*vc) return validate_config(config);
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
    return fail("usage", "no command");
}

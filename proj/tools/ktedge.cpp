#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "kt/error.hpp"
#include "kt/experiment/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace kt;
using experiment::Experiment;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Options {
    fs::path config;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k;
    std::string label_source;
    std::string listen;
    std::string connect;
    std::size_t max_connections = 0;
    fs::path port_file;
    fs::path checkpoint;
    std::string set = "student_ol";
    fs::path report;
    fs::path expected;
    fs::path actual;
    bool quiet = false;
};

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

experiment::ExperimentConfig load(const Options& o) {
    auto cfg = experiment::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.k) {
        if (std::find(cfg.ks.begin(), cfg.ks.end(), *o.k) == cfg.ks.end())
            fail(Errc::config_validation, "--k " + std::to_string(*o.k) + " is not among the configured class counts");
        cfg.ks = {*o.k};
    }
    return cfg;
}

experiment::LogFn logger(const Options& o) {
    if (o.quiet) return {};
    return [](const std::string& m) { std::cerr << m << '\n'; };
}

std::size_t single_k(const experiment::ExperimentConfig& cfg, const std::string& cmd) {
    if (cfg.ks.size() != 1) fail(Errc::invalid_argument, cmd + " needs --k when the config sweeps class counts");
    return cfg.ks.front();
}

int run_command(const std::string& cmd, const Options& o) {
    if (cmd == "compare" && o.config.empty()) {
        if (o.expected.empty() || o.actual.empty())
            fail(Errc::invalid_argument, "compare needs --config, or --expected and --actual");
        experiment::compare_arms(o.expected, o.actual, o.out);
        return 0;
    }
    const auto cfg = load(o);
    const auto log = logger(o);
    if (cmd == "run") {
        experiment::run_all(cfg, o.out, log);
        return 0;
    }
    if (cmd == "serve-teacher") {
        Experiment ex(cfg, single_k(cfg, cmd), o.out, log);
        const auto ep = link::parse_endpoint(o.listen.empty() ? env_or("KTEDGE_LISTEN", cfg.listen) : o.listen);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        ex.serve_teacher(ep, o.max_connections, &g_stop, [&](std::uint16_t port) {
            if (o.port_file.empty()) return;
            std::ofstream(o.port_file) << port << '\n';
        });
        return 0;
    }
    if (cmd == "run-student") {
        Experiment ex(cfg, single_k(cfg, cmd), o.out, log);
        const auto ep = link::parse_endpoint(o.connect.empty() ? env_or("KTEDGE_CONNECT", cfg.listen) : o.connect);
        const auto r = ex.run_student(ep);
        if (r.stop_reason == protocol::StopReason::aborted) {
            std::cerr << "ktedge: run aborted after " << r.steps() << " steps: " << r.abort_message << '\n';
            return 2;
        }
        return 0;
    }
    if (cmd == "evaluate") {
        if (o.checkpoint.empty()) fail(Errc::invalid_argument, "evaluate needs --checkpoint");
        Experiment ex(cfg, single_k(cfg, cmd), o.out, log);
        const auto r = ex.evaluate(o.checkpoint, o.set);
        const auto path = o.report.empty() ? ex.dir() / "evaluate" / (o.checkpoint.stem().string() + "_" + o.set + ".csv")
                                           : o.report;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        metrics::write_report_csv(r, path);
        std::cout << path.string() << '\n';
        return 0;
    }
    for (auto k : cfg.ks) {
        Experiment ex(cfg, k, o.out, log);
        if (cmd == "pretrain") ex.pretrain();
        else if (cmd == "semitrain") ex.semitrain();
        else if (cmd == "run-kt") {
            std::optional<protocol::LabelSource> only;
            if (!o.label_source.empty()) only = protocol::parse_label_source(o.label_source);
            ex.run_kt(only);
        } else if (cmd == "compare") ex.compare();
    }
    return 0;
}

int exit_code(Errc c) {
    switch (c) {
        case Errc::config_validation:
        case Errc::stage_order:
        case Errc::invalid_argument:
        case Errc::class_count_mismatch:
        case Errc::non_bijective:
            return 1;
        default:
            return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge transformation between paired edge learners"};
    app.require_subcommand(1, 1);
    Options o;
    o.out = env_or("KTEDGE_OUT", "ktedge-out");

    auto common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
        if (needs_config) c->required();
        sub->add_option("--out", o.out, "output root (default $KTEDGE_OUT or ./ktedge-out)");
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_option("--k", o.k, "run a single class count from the config");
        sub->add_flag("--quiet,-q", o.quiet, "no progress output");
    };

    common(app.add_subcommand("run", "pretrain, semitrain, KT arms and comparison for every class count"));
    common(app.add_subcommand("pretrain", "train the teacher"));
    common(app.add_subcommand("semitrain", "train the student on its semi-training set"));
    auto* kt = app.add_subcommand("run-kt", "online KT run for the configured arms");
    common(kt);
    kt->add_option("--label-source", o.label_source, "run one arm only")
        ->check(CLI::IsMember({"pseudo", "ground_truth"}));
    auto* serve = app.add_subcommand("serve-teacher", "serve teacher labels over TCP");
    common(serve);
    serve->add_option("--listen", o.listen, "host:port (default $KTEDGE_LISTEN or the config)");
    serve->add_option("--max-connections", o.max_connections, "exit after serving this many runs (0: unlimited)");
    serve->add_option("--port-file", o.port_file, "write the bound port here once listening");
    auto* student = app.add_subcommand("run-student", "pseudo-label run against a remote teacher");
    common(student);
    student->add_option("--connect", o.connect, "host:port (default $KTEDGE_CONNECT or the config)");
    auto* eval = app.add_subcommand("evaluate", "score a checkpoint");
    common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--set", o.set, "evaluation set")
        ->check(CLI::IsMember({"teacher_ol", "student_ol", "teacher_pretrain", "student_semitrain"}));
    eval->add_option("--report", o.report, "report CSV path");
    auto* cmp = app.add_subcommand("compare", "offset tables between the expected and actual arms");
    common(cmp, false);
    cmp->add_option("--expected", o.expected, "expected arm directory")->check(CLI::ExistingDirectory);
    cmp->add_option("--actual", o.actual, "actual arm directory")->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        return run_command(app.get_subcommands().front()->get_name(), o);
    } catch (const Error& e) {
        std::cerr << "ktedge: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "ktedge: " << e.what() << '\n';
        return 2;
    }
}

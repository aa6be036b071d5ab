// Acceptance checks. Prints one line per criterion; `--criterion N` runs one.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "kt/error.hpp"
#include "kt/experiment/config.hpp"
#include "kt/experiment/pipeline.hpp"
#include "kt/metrics/metrics.hpp"
#include "kt/models/builders.hpp"
#include "kt/models/checkpoint.hpp"
#include "kt/nn/gradcheck.hpp"
#include "kt/nn/ops.hpp"

#ifndef KTEDGE_FASHION_MNIST_DEFAULT
#define KTEDGE_FASHION_MNIST_DEFAULT ""
#endif

namespace {

namespace fs = std::filesystem;
using namespace kt;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::fail;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("ktedge_acceptance_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json blob_config(std::size_t k, std::size_t per_class, double correctness, std::uint64_t seed) {
    return {{"seed", seed},
            {"k", k},
            {"synthetic", {{"samples_per_class", per_class}, {"image_size", 8}, {"noise", 0.6}, {"teacher_correctness", correctness}}},
            {"models", {{"teacher", {{"architecture", "oracle"}}}, {"student", {{"architecture", "mlp"}, {"hidden", 32}}}}},
            {"split", {{"student_semitrain", 5}}},
            {"kt", {{"trace_interval", 50}, {"trace_window", 100}}}};
}

/// Pretrain and semitrain through the pipeline, then hand back the pieces for in-memory KT runs.
struct Prepared {
    std::unique_ptr<experiment::Experiment> ex;
    std::unique_ptr<protocol::Teacher> teacher;
};

Prepared prepare(const json& j, const std::string& name) {
    const auto cfg = experiment::parse_config(j, ".");
    Prepared p;
    p.ex = std::make_unique<experiment::Experiment>(cfg, cfg.ks.front(), scratch(name));
    p.ex->pretrain();
    p.ex->semitrain();
    p.teacher = p.ex->load_teacher();
    return p;
}

protocol::RunResult run_arm(Prepared& p, protocol::LabelSource src) {
    const auto& cfg = p.ex->config();
    const auto& ws = p.ex->workspace();
    nn::Adam<float> adam(cfg.semitrain.adam);
    protocol::KtOptions opts;
    opts.trace_interval = cfg.trace_interval;
    opts.trace_window = cfg.trace_window;
    opts.stop = cfg.stop;
    opts.label_source = src;
    return protocol::kt_run(*p.teacher, p.ex->load_semitrained_student(), ws.splits.stream, ws.mapping, adam, opts);
}

double stream_accuracy(Prepared& p, const models::Model& student) {
    const auto& s = p.ex->workspace().splits.stream;
    const auto pred = experiment::predict_all(student, s.student);
    std::size_t right = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) right += pred[i] == s.truth.student[i];
    return static_cast<double>(right) / static_cast<double>(pred.size());
}

// 1 ---------------------------------------------------------------------------

Outcome parameter_count() {
    nn::Rng rng(1);
    const auto m = models::build_simplified_squeezenet<float>({40, 40, 3}, 7, rng);
    const auto params = m.parameter_count();
    const auto bytes = models::checkpoint_payload_bytes(m);
    const bool ok = params == 8479 && bytes == 33916 && models::squeezenet_parameter_count(3, 7) == 8479;
    return {ok ? Verdict::pass : Verdict::fail,
            std::to_string(params) + " parameters, " + std::to_string(bytes) + " payload bytes (expected 8479, 33916)"};
}

// 2 ---------------------------------------------------------------------------

nn::Tensor64 random_tensor(const nn::Shape& shape, nn::Rng& rng) {
    nn::Tensor64 t(shape);
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

Outcome gradient_suite() {
    constexpr int kInstances = 20;
    nn::Rng rng(2024);
    using Maker = std::function<std::pair<std::unique_ptr<nn::Layer<double>>, nn::Shape>(nn::Rng&)>;
    auto dim = [](nn::Rng& r, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(r.below(hi - lo + 1)); };
    const std::vector<std::pair<std::string, Maker>> layers = {
        {"conv_valid", [&](nn::Rng& r) {
             const auto c = dim(r, 1, 3), s = dim(r, 1, 2);
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::Conv2D<double>("c", c, dim(r, 1, 4), 3, s, nn::Padding::valid, r)),
                              nn::Shape{dim(r, 4, 7), dim(r, 4, 7), c}};
         }},
        {"conv_same", [&](nn::Rng& r) {
             const auto c = dim(r, 1, 3), k = dim(r, 0, 1) ? std::size_t{3} : std::size_t{1};
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::Conv2D<double>("c", c, dim(r, 1, 4), k, dim(r, 1, 2), nn::Padding::same, r)),
                              nn::Shape{dim(r, 3, 6), dim(r, 3, 6), c}};
         }},
        {"maxpool", [&](nn::Rng& r) {
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::MaxPool2D<double>("p", 3, 2)),
                              nn::Shape{dim(r, 3, 9), dim(r, 3, 9), dim(r, 1, 3)}};
         }},
        {"dropout", [&](nn::Rng& r) {
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::Dropout<double>("d", 0.5, r.next_u64())),
                              nn::Shape{dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 3)}};
         }},
        {"global_avg_pool", [&](nn::Rng& r) {
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::GlobalAvgPool<double>("g")),
                              nn::Shape{dim(r, 1, 5), dim(r, 1, 5), dim(r, 1, 4)}};
         }},
        {"mish", [&](nn::Rng& r) {
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::Mish<double>("m")),
                              nn::Shape{dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 3)}};
         }},
        {"dense", [&](nn::Rng& r) {
             const nn::Shape in{dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3)};
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::Dense<double>("d", nn::shape_size(in), dim(r, 1, 6), r)), in};
         }},
        {"fire_module", [&](nn::Rng& r) {
             const auto c = dim(r, 1, 4);
             return std::pair{std::unique_ptr<nn::Layer<double>>(new nn::FireModule<double>("f", c, dim(r, 1, 4), dim(r, 1, 4), r)),
                              nn::Shape{dim(r, 2, 5), dim(r, 2, 5), c}};
         }},
    };
    double worst = 0.0;
    std::string worst_name, failures;
    std::size_t checks = 0;
    for (const auto& [name, make] : layers) {
        double layer_worst = 0.0;
        for (int i = 0; i < kInstances; ++i) {
            auto [layer, shape] = make(rng);
            const auto x = random_tensor(shape, rng);
            layer_worst = std::max(layer_worst, nn::check_layer_gradients(*layer, x, nn::Mode::train, rng).max());
            ++checks;
        }
        if (layer_worst >= 1e-4) failures += " " + name;
        if (layer_worst > worst) {
            worst = layer_worst;
            worst_name = name;
        }
    }
    double loss_worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
        const std::size_t k = 2 + rng.below(6);
        const auto z = random_tensor({k}, rng);
        const std::size_t label = rng.below(k);
        const auto r = nn::scc_loss<double>(z.values(), label);
        loss_worst = std::max(loss_worst, nn::finite_diff_check([&](const nn::Tensor64& p) { return nn::scc_loss<double>(p.values(), label).loss; },
                                                                nn::Tensor64({k}, r.grad), z, 1e-5));
        ++checks;
    }
    if (loss_worst >= 1e-4) failures += " scc_loss";
    if (loss_worst > worst) {
        worst = loss_worst;
        worst_name = "scc_loss";
    }
    std::string detail = std::to_string(checks) + " checks over " + std::to_string(layers.size() + 1) +
                         " components, max relative error " + metrics::format_value(worst) + " (" + worst_name + ")";
    if (!failures.empty()) detail += ", over 1e-4:" + failures;
    return {failures.empty() ? Verdict::pass : Verdict::fail, detail};
}

// 3 ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
    auto p = prepare(blob_config(3, 300, 1.0, 31), "oracle");
    const auto expected = run_arm(p, protocol::LabelSource::ground_truth);
    const auto actual = run_arm(p, protocol::LabelSource::pseudo);
    const bool params = models::encode_checkpoint(expected.student) == models::encode_checkpoint(actual.student);
    const bool traces = expected.trace == actual.trace;
    return {params && traces && actual.steps() > 0 ? Verdict::pass : Verdict::fail,
            std::to_string(actual.steps()) + " steps, parameters " + (params ? "identical" : "differ") + ", traces " +
                (traces ? "identical" : "differ") + " (" + std::to_string(actual.trace.points.size()) + " points)"};
}

// 4 ---------------------------------------------------------------------------

Outcome four_cases() {
    auto perfect = prepare(blob_config(3, 300, 1.0, 41), "cases_oracle");
    const auto a = run_arm(perfect, protocol::LabelSource::pseudo);

    auto cfg = blob_config(2, 2505, 0.7, 43);
    cfg["split"]["ol"] = 2500;
    auto weak = prepare(cfg, "cases_weak");
    const auto b = run_arm(weak, protocol::LabelSource::pseudo);
    const double rate = static_cast<double>(b.case_counts[1] + b.case_counts[2]) / static_cast<double>(b.steps());

    const bool ok = a.case_counts[0] == 0 && a.case_counts[3] == 0 && a.steps() > 0 && b.steps() == 5000 &&
                    std::abs(rate - 0.70) <= 0.02;
    return {ok ? Verdict::pass : Verdict::fail,
            "oracle: case1=" + std::to_string(a.case_counts[0]) + " case4=" + std::to_string(a.case_counts[3]) + " over " +
                std::to_string(a.steps()) + " steps; correctness 0.7: (case2+case3)/steps = " + fmt(rate) + " over " +
                std::to_string(b.steps()) + " steps"};
}

// 5 ---------------------------------------------------------------------------

Outcome metrics_oracle() {
    nn::Rng rng(5);
    double worst = 0.0;
    bool micro_exact = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.below(6);
        std::vector<std::size_t> truth, pred;
        const std::size_t n = 1 + rng.below(400);
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = rng.below(k);
            truth.push_back(t);
            pred.push_back(rng.below(3) == 0 ? t : rng.below(k));
        }
        const auto r = metrics::report(metrics::score(truth, pred, k));
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
        const double acc = static_cast<double>(correct) / static_cast<double>(n);
        micro_exact = micro_exact && r.accuracy == acc && r.micro.precision == acc && r.micro.recall == acc && r.micro.f1 == acc;

        double mp = 0, mr = 0, mf = 0;
        for (std::size_t c = 0; c < k; ++c) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                tp += truth[i] == c && pred[i] == c;
                fp += truth[i] != c && pred[i] == c;
                fn += truth[i] == c && pred[i] != c;
            }
            const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
            const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
            mp += prec;
            mr += rec;
            mf += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        }
        const double kk = static_cast<double>(k);
        worst = std::max({worst, std::abs(r.macro.precision - mp / kk), std::abs(r.macro.recall - mr / kk),
                          std::abs(r.macro.f1 - mf / kk)});
    }
    const bool ok = micro_exact && worst <= 1e-12;
    return {ok ? Verdict::pass : Verdict::fail,
            std::string("100 matrices, micro = accuracy ") + (micro_exact ? "exactly" : "NOT exactly") +
                ", max macro deviation " + metrics::format_value(worst)};
}

// 6 ---------------------------------------------------------------------------

Outcome degradation() {
    const std::vector<double> levels{1.0, 0.9, 0.7};
    std::vector<double> means;
    for (double c : levels) {
        double sum = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto p = prepare(blob_config(3, 300, c, seed), "degradation");
            sum += stream_accuracy(p, run_arm(p, protocol::LabelSource::pseudo).student);
        }
        means.push_back(sum / 5.0);
    }
    const bool ok = means[0] >= means[1] && means[1] >= means[2];
    std::string detail = "mean final accuracy over 5 seeds by teacher correctness";
    for (std::size_t i = 0; i < levels.size(); ++i) detail += (i ? ", " : ": ") + fmt(levels[i], 1) + " -> " + fmt(means[i]);
    return {ok ? Verdict::pass : Verdict::fail, detail};
}

// 7 ---------------------------------------------------------------------------

std::uint32_t be32(const unsigned char* b) {
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void put_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

std::vector<unsigned char> read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes copies whose headers agree with the bytes present: the count becomes
/// the smallest of both declared counts, the complete images and the labels present.
std::pair<fs::path, fs::path> reconcile_idx(const fs::path& images, const fs::path& labels, const fs::path& dir,
                                            std::string& note) {
    const auto img = read_all(images), lab = read_all(labels);
    if (img.size() < 16 || lab.size() < 8) throw Error(Errc::truncated, "IDX header missing");
    const std::uint32_t declared_img = be32(&img[4]), rows = be32(&img[8]), cols = be32(&img[12]);
    const std::uint32_t declared_lab = be32(&lab[4]);
    const std::size_t frame = std::size_t{rows} * cols;
    const std::size_t present_img = (img.size() - 16) / frame, present_lab = lab.size() - 8;
    const std::size_t n = std::min({std::size_t{declared_img}, present_img, std::size_t{declared_lab}, present_lab});
    note += images.filename().string() + " declares " + std::to_string(declared_img) + " images and holds " +
            std::to_string(present_img) + ", " + labels.filename().string() + " declares " + std::to_string(declared_lab) +
            " labels; using the first " + std::to_string(n) + ". ";
    const auto out_img = dir / images.filename(), out_lab = dir / labels.filename();
    std::ofstream oi(out_img, std::ios::binary), ol(out_lab, std::ios::binary);
    oi.write(reinterpret_cast<const char*>(img.data()), 4);
    put_be32(oi, static_cast<std::uint32_t>(n));
    oi.write(reinterpret_cast<const char*>(img.data()) + 8, 8);
    oi.write(reinterpret_cast<const char*>(img.data()) + 16, static_cast<std::streamsize>(n * frame));
    ol.write(reinterpret_cast<const char*>(lab.data()), 4);
    put_be32(ol, static_cast<std::uint32_t>(n));
    ol.write(reinterpret_cast<const char*>(lab.data()) + 8, static_cast<std::streamsize>(n));
    return {out_img, out_lab};
}

fs::path fashion_dir() {
    if (const char* env = std::getenv("KTEDGE_FASHION_MNIST_DIR"); env && *env) return env;
    if (std::string(KTEDGE_FASHION_MNIST_DEFAULT).size()) return KTEDGE_FASHION_MNIST_DEFAULT;
    return "/root/data/fashion-mnist";
}

Outcome fashion_mnist() {
    const auto dir = fashion_dir();
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            const auto at = name.find("images-idx3-ubyte");
            if (at == std::string::npos) continue;
            auto label = name;
            label.replace(at, 17, "labels-idx1-ubyte");
            if (fs::exists(dir / label)) pairs.emplace_back(e.path(), dir / label);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    if (pairs.empty())
        return {Verdict::skip, "no Fashion MNIST IDX pair in " + dir.string() + " (set KTEDGE_FASHION_MNIST_DIR)"};

    std::string note;
    const auto work = scratch("fashion");
    fs::create_directories(work / "data");
    for (auto& [images, labels] : pairs) {
        try {
            (void)data::load_idx(images, labels);
        } catch (const Error& e) {
            if (e.code() != Errc::truncated && e.code() != Errc::dimension_mismatch) throw;
            note += "input rejected (" + std::string(e.what()) + "); ";
            std::tie(images, labels) = reconcile_idx(images, labels, work / "data", note);
        }
    }
    json source = {{"type", "idx"}, {"images", json::array()}, {"labels", json::array()}, {"class_names", data::fashion_mnist_class_names()}};
    for (const auto& [images, labels] : pairs) {
        source["images"].push_back(images.string());
        source["labels"].push_back(labels.string());
    }
    json student = source;
    student["resize"] = {{"size", 40}, {"channels", 3}};
    const json cfg_json = {{"name", "fashion-mnist-acceptance"},
                           {"seed", 1},
                           {"k", 2},
                           {"data", {{"teacher", source}, {"student", student}}},
                           {"models", {{"teacher", {{"architecture", "squeezenet"}}}, {"student", {{"architecture", "squeezenet"}}}}},
                           {"pretrain", {{"epochs", 20}}},
                           {"split", {{"teacher_pretrain", 3000}, {"ol", 1500}, {"student_semitrain", 1}}}};
    const auto cfg = experiment::parse_config(cfg_json, ".");
    experiment::run_all(cfg, work / "out");
    const auto k2 = work / "out" / "k2";
    const double teacher = metrics::read_report_json(k2 / "teacher" / "ol_report.json").accuracy;
    const double expected = metrics::read_report_json(k2 / "arm_ground_truth" / "report.json").accuracy;
    const double actual = metrics::read_report_json(k2 / "arm_pseudo" / "report.json").accuracy;
    const bool ok = teacher >= 0.95 && std::abs(expected - actual) <= 0.03;
    return {ok ? Verdict::pass : Verdict::fail,
            note + "teacher OL accuracy " + fmt(teacher) + " (>= 0.95), student expected " + fmt(expected) + ", actual " +
                fmt(actual) + ", gap " + fmt(std::abs(expected - actual) * 100.0, 2) + " points (<= 3)"};
}

// 8 ---------------------------------------------------------------------------

Outcome process_split() {
    auto cfg = blob_config(3, 250, 0.8, 81);
    cfg["synthetic"]["image_size"] = 16;
    cfg["models"]["student"] = {{"architecture", "squeezenet"}};
    auto p = prepare(cfg, "split");
    const auto local = run_arm(p, protocol::LabelSource::pseudo);

    std::promise<std::uint16_t> port;
    auto port_ready = port.get_future();
    std::thread server([&] {
        try {
            p.ex->serve_teacher({"127.0.0.1", 0}, 1, nullptr, [&](std::uint16_t bound) { port.set_value(bound); });
        } catch (...) {
            try {
                port.set_exception(std::current_exception());
            } catch (...) {
            }
        }
    });
    protocol::RunResult remote;
    std::string error;
    try {
        remote = p.ex->run_student({"127.0.0.1", port_ready.get()});
    } catch (const std::exception& e) {
        error = e.what();
    }
    server.join();
    if (!error.empty()) return {Verdict::fail, error};
    const bool params = models::encode_checkpoint(local.student) == models::encode_checkpoint(remote.student);
    const bool traces = local.trace == remote.trace;
    const bool ok = params && traces && remote.stop_reason == protocol::StopReason::stream_exhausted;
    return {ok ? Verdict::pass : Verdict::fail,
            std::to_string(remote.steps()) + " loopback steps with a SqueezeNet student, parameters " +
                (params ? "bit-identical" : "differ") + ", traces " + (traces ? "identical" : "differ")};
}

struct Criterion {
    int id;
    std::string title;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ktedge acceptance checks"};
    int only = 0;
    app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {1, "parameter count", 1, parameter_count},
        {2, "gradient suite", 120, gradient_suite},
        {3, "oracle equivalence", 60, oracle_equivalence},
        {4, "four-case soundness", 120, four_cases},
        {5, "metrics oracle", 10, metrics_oracle},
        {6, "degradation ordering", 300, degradation},
        {7, "desk-scale Fashion MNIST", 1800, fashion_mnist},
        {8, "process-split transparency", 120, process_split},
    };
    bool failed = false, skipped = false;
    for (const auto& c : criteria) {
        if (only && c.id != only) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        if (o.verdict == Verdict::pass && secs >= c.budget_s) {
            o.verdict = Verdict::fail;
            o.detail += ", over the time budget";
        }
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::skip ? "SKIP" : "FAIL";
        std::cout << "criterion " << c.id << " " << tag << "  " << c.title << ": " << o.detail << " [" << fmt(secs, 2)
                  << " s of " << c.budget_s << " s]" << std::endl;
        failed = failed || o.verdict == Verdict::fail;
        skipped = skipped || o.verdict == Verdict::skip;
    }
    if (failed) return 1;
    return only && skipped ? 77 : 0;
}

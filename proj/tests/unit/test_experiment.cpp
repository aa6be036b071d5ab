#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "kt/error.hpp"
#include "kt/experiment/config.hpp"
#include "kt/experiment/pipeline.hpp"
#include "kt/experiment/schema.hpp"
#include "kt/metrics/metrics.hpp"
#include "kt/models/checkpoint.hpp"

using namespace kt;
using namespace kt::experiment;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("ktedge_exp_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json synthetic_config(double correctness = 1.0) {
    auto j = json::parse(R"({
      "seed": 3,
      "k": 3,
      "synthetic": {"samples_per_class": 120, "image_size": 8, "noise": 0.6},
      "models": {"teacher": {"architecture": "oracle"}, "student": {"architecture": "mlp", "hidden": 12}},
      "semitrain": {"epochs": 4},
      "split": {"student_semitrain": 3},
      "kt": {"trace_interval": 25, "trace_window": 50}
    })");
    j["synthetic"]["teacher_correctness"] = correctness;
    return j;
}

std::vector<std::string> errors_of(const json& j) { return config_errors(j, fs::temp_directory_path()); }

bool mentions(const std::vector<std::string>& errs, const std::string& needle) {
    for (const auto& e : errs)
        if (e.find(needle) != std::string::npos) return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool throws_code(Errc code, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

}  // namespace

TEST_CASE("schema subset validator") {
    const auto schema = json::parse(R"({
      "type": "object", "required": ["a"], "additionalProperties": false,
      "properties": {
        "a": {"type": "integer", "minimum": 1},
        "b": {"type": "array", "minItems": 1, "items": {"enum": ["x", "y"]}},
        "c": {"anyOf": [{"type": "integer"}, {"type": "null"}]},
        "d": {"$ref": "#/$defs/s"}
      },
      "$defs": {"s": {"type": "string", "minLength": 2}}
    })");
    CHECK(validate_schema(json::parse(R"({"a": 2, "b": ["x"], "c": null, "d": "ok"})"), schema).empty());
    const auto errs = validate_schema(json::parse(R"({"b": [], "c": "s", "d": "o", "e": 1})"), schema);
    CHECK(mentions(errs, "missing required field 'a'"));
    CHECK(mentions(errs, "/b"));
    CHECK(mentions(errs, "/c"));
    CHECK(mentions(errs, "/d"));
    CHECK(mentions(errs, "/e"));
    CHECK_FALSE(validate_schema(json::parse(R"({"a": 1.5})"), schema).empty());
    CHECK_FALSE(validate_schema(json::parse(R"({"a": 0})"), schema).empty());
    CHECK_FALSE(validate_schema(json::parse(R"({"a": 1, "b": ["z"]})"), schema).empty());
    CHECK(config_schema().at("title") == "ktedge experiment configuration");
}

TEST_CASE("config validation lists every problem") {
    CHECK(errors_of(synthetic_config()).empty());

    auto bad = synthetic_config();
    bad.erase("seed");
    bad["k"] = 1;
    bad["bogus"] = true;
    bad["kt"]["arms"] = {"pseudo", "teacher"};
    const auto errs = errors_of(bad);
    CHECK(errs.size() >= 4);
    CHECK(mentions(errs, "seed"));
    CHECK(mentions(errs, "/k"));
    CHECK(mentions(errs, "/bogus"));
    CHECK(mentions(errs, "/kt/arms/1"));

    try {
        parse_config(bad, ".");
        FAIL("expected config_validation");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_validation);
        CHECK(std::string(e.what()).find("/bogus") != std::string::npos);
    }
}

TEST_CASE("config semantic checks") {
    auto both = synthetic_config();
    both["k_sweep"] = {2, 3};
    CHECK(mentions(errors_of(both), "exactly one of 'k' and 'k_sweep'"));

    auto none = synthetic_config();
    none.erase("synthetic");
    none["models"].erase("teacher");
    CHECK(mentions(errors_of(none), "exactly one of 'data' and 'synthetic'"));

    auto paths = synthetic_config();
    paths.erase("synthetic");
    paths["models"].erase("teacher");
    paths["data"] = json::parse(R"({"teacher": {"type": "idx", "images": ["missing-images"], "labels": ["missing-labels"]},
                                     "student": {"type": "image_dir"}})");
    const auto perrs = errors_of(paths);
    CHECK(mentions(perrs, "missing-images"));
    CHECK(mentions(perrs, "missing-labels"));
    CHECK(mentions(perrs, "/data/student"));

    auto ratio = synthetic_config();
    ratio["semitrain"]["validation_ratio"] = 0.2;
    CHECK(mentions(errors_of(ratio), "/semitrain"));

    auto faithful = synthetic_config();
    faithful["faithful"] = true;
    faithful["pretrain"] = {{"epochs", 20}};
    CHECK(mentions(errors_of(faithful), "/pretrain/epochs"));

    auto lists = synthetic_config();
    lists["split"]["ol"] = {10, 10};
    CHECK(mentions(errors_of(lists), "/split/ol"));

    auto arms = synthetic_config();
    arms["kt"]["arms"] = {"pseudo", "pseudo"};
    CHECK(mentions(errors_of(arms), "/kt/arms"));

    auto student = synthetic_config();
    student["models"]["student"]["architecture"] = "oracle";
    CHECK(mentions(errors_of(student), "/models/student"));

    auto listen = synthetic_config();
    listen["edge"] = {{"listen", "nowhere"}};
    CHECK(mentions(errors_of(listen), "/edge/listen"));

    auto pairs = synthetic_config();
    pairs["mapping"] = json::parse(R"({"pairs": [["0", "1"], ["0", "2"]]})");
    CHECK(mentions(errors_of(pairs), "mapped twice"));
}

TEST_CASE("config defaults and snapshot round trip") {
    const auto cfg = parse_config(synthetic_config(), ".");
    CHECK(cfg.ks == std::vector<std::size_t>{3});
    CHECK(cfg.teacher_model.architecture == "oracle");
    CHECK(cfg.semitrain.epochs == 4);
    CHECK(cfg.semitrain.batch_size == 1);
    CHECK(cfg.pretrain.epochs == 20);
    CHECK(cfg.pretrain.batch_size == 128);
    CHECK(cfg.arms.size() == 2);
    CHECK(cfg.timeout.count() == 5000);

    const auto snap = cfg.snapshot(3);
    CHECK(errors_of(snap).empty());
    const auto again = parse_config(snap, ".");
    CHECK(again.snapshot(3) == snap);

    auto faithful = synthetic_config();
    faithful["faithful"] = true;
    faithful.erase("semitrain");
    CHECK(parse_config(faithful, ".").pretrain.epochs == 100);
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("pipeline stages and artifacts") {
    const auto out = fresh_dir("stages");
    const auto cfg = parse_config(synthetic_config(), ".");
    Experiment ex(cfg, 3, out);
    CHECK(throws_code(Errc::stage_order, [&] { ex.run_kt(); }));
    CHECK(throws_code(Errc::stage_order, [&] { ex.semitrain(), ex.run_kt(); }));
    ex.pretrain();
    ex.run_kt(protocol::LabelSource::ground_truth);
    const auto dir = out / "k3";
    CHECK(fs::exists(dir / "arm_ground_truth" / "trace.csv"));
    CHECK_FALSE(fs::exists(dir / "arm_pseudo"));
    CHECK(throws_code(Errc::stage_order, [&] { ex.compare(); }));

    ex.run_kt(protocol::LabelSource::pseudo);
    ex.compare();
    for (const char* f : {"config.json", "manifest.json", "student/semitrained.ktck", "arm_pseudo/student.ktck",
                          "arm_pseudo/trace.csv", "arm_pseudo/report.csv", "arm_pseudo/report.json",
                          "arm_pseudo/cases.json", "comparison.csv", "per_class_f1.csv", "trace_comparison.csv"})
        CHECK_MESSAGE(fs::exists(dir / f), f);

    // oracle teacher: both arms coincide
    CHECK(slurp(dir / "arm_pseudo" / "trace.csv") == slurp(dir / "arm_ground_truth" / "trace.csv"));
    const auto cmp = slurp(dir / "comparison.csv");
    CHECK(cmp.find("accuracy,") != std::string::npos);
    std::istringstream rows(cmp);
    std::string line;
    std::getline(rows, line);
    CHECK(line == "metric,expected,actual,offset");
    while (std::getline(rows, line)) CHECK(line.substr(line.rfind(',') + 1) == "0");

    const auto manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("stages").at("run-kt").at("arms").size() == 2);

    const auto r = ex.evaluate(dir / "arm_pseudo" / "student.ktck", "student_ol");
    CHECK(r.accuracy == doctest::Approx(metrics::read_report_json(dir / "arm_pseudo" / "report.json").accuracy).epsilon(1e-6));
    CHECK(throws_code(Errc::invalid_argument, [&] { ex.evaluate(dir / "arm_pseudo" / "student.ktck", "nope"); }));

    // another config in the same directory is refused
    auto other_json = synthetic_config();
    other_json["seed"] = 4;
    Experiment other(parse_config(other_json, "."), 3, out);
    CHECK(throws_code(Errc::stage_order, [&] { other.run_kt(); }));
}

TEST_CASE("snapshot rerun reproduces reports exactly") {
    const auto a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
    run_all(parse_config(synthetic_config(0.8), "."), a);
    const auto snap = json::parse(slurp(a / "k3" / "config.json"));
    run_all(parse_config(snap, "."), b);
    for (const char* f : {"arm_pseudo/report.json", "arm_ground_truth/report.json", "arm_pseudo/trace.csv",
                          "comparison.csv", "arm_pseudo/student.ktck"})
        CHECK_MESSAGE(slurp(a / "k3" / f) == slurp(b / "k3" / f), f);
}

TEST_CASE("compare on identical directories gives zero offsets") {
    const auto out = fresh_dir("identical");
    run_all(parse_config(synthetic_config(0.7), "."), out);
    const auto arm = out / "k3" / "arm_pseudo";
    compare_arms(arm, arm, out);
    std::istringstream rows(slurp(out / "comparison.csv"));
    std::string line;
    std::getline(rows, line);
    int n = 0;
    while (std::getline(rows, line)) {
        CHECK(line.substr(line.rfind(',') + 1) == "0");
        ++n;
    }
    CHECK(n == 5);
    std::istringstream pc(slurp(out / "per_class_f1.csv"));
    std::getline(pc, line);
    CHECK(line == "class,expected_f1,actual_f1,offset");
}

TEST_CASE("class-count sweep writes one directory per k") {
    auto j = synthetic_config(0.7);
    j.erase("k");
    j["k_sweep"] = {2, 3, 4, 5, 6, 7};
    j["synthetic"]["samples_per_class"] = 60;
    const auto out = fresh_dir("sweep");
    run_all(parse_config(j, "."), out);
    for (int k = 2; k <= 7; ++k) CHECK(fs::exists(out / ("k" + std::to_string(k)) / "comparison.csv"));
    std::istringstream sweep(slurp(out / "sweep.csv"));
    std::string line;
    int rows = -1;
    bool positive = false;
    while (std::getline(sweep, line)) {
        if (rows >= 0) {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string c;
            while (std::getline(ss, c, ',')) cells.push_back(c);
            positive = positive || std::stod(cells.at(4)) > 0.0;
        }
        ++rows;
    }
    CHECK(rows == 6);
    CHECK(positive);
}

TEST_CASE("image directory sources with a class mapping") {
    const auto root = fresh_dir("imgsrc");
    for (const char* side : {"teacher", "student"})
        for (const char* cls : {"alpha", "beta"}) {
            const auto d = root / side / cls;
            fs::create_directories(d);
            for (int i = 0; i < 12; ++i) {
                nn::Tensor img({6, 6, 1}, std::string(cls) == "alpha" ? 0.1f : 0.9f);
                img[static_cast<std::size_t>(i)] = 0.5f;
                data::write_pgm(d / ("img" + std::to_string(i) + ".pgm"), img);
            }
        }
    const auto j = json::parse(R"({
      "seed": 1, "k": 2,
      "data": {"teacher": {"type": "image_dir", "roots": ["teacher"]},
               "student": {"type": "image_dir", "roots": ["student"], "resize": {"size": 4, "channels": 3}}},
      "mapping": {"pairs": [["alpha", "beta"], ["beta", "alpha"]]},
      "models": {"teacher": {"architecture": "mlp", "hidden": 4}, "student": {"architecture": "mlp", "hidden": 4}},
      "pretrain": {"epochs": 3, "batch_size": 4},
      "split": {"ol": 8, "student_semitrain": 1}
    })");
    const auto cfg = parse_config(j, root);
    const auto ws = build_workspace(cfg, 2);
    CHECK(ws.mapping.transform(0) == 1);
    CHECK(ws.student_ds->image_shape() == nn::Shape{4, 4, 3});
    CHECK(ws.splits.stream.size() == 16);
    CHECK(ws.splits.teacher_pretrain.size() == 8);
    const auto out = fresh_dir("imgsrc_out");
    run_all(cfg, out);
    CHECK(fs::exists(out / "k2" / "teacher" / "teacher.ktck"));
    CHECK(fs::exists(out / "k2" / "comparison.csv"));
}

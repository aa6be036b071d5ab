#include "kt/experiment/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "kt/error.hpp"
#include "kt/link/edge.hpp"
#include "kt/models/builders.hpp"
#include "kt/models/checkpoint.hpp"
#include "kt/data/synth.hpp"

namespace kt::experiment {

using nlohmann::json;

namespace {

std::shared_ptr<data::Dataset> load_pool(const SourceConfig& s, std::size_t k) {
    std::vector<data::Dataset> parts;
    if (s.type == "idx") {
        for (std::size_t i = 0; i < s.images.size(); ++i) parts.push_back(data::load_idx(s.images[i], s.labels[i], s.class_names));
    } else {
        for (const auto& root : s.roots) parts.push_back(data::load_image_directory(root));
    }
    return std::make_shared<data::Dataset>(data::merge_and_select(parts, k));
}

std::shared_ptr<const data::Dataset> resized(const std::shared_ptr<data::Dataset>& pool, const SourceConfig& s) {
    if (!s.resize_size) return pool;
    return std::make_shared<data::Dataset>(data::resize_and_expand(*pool, *s.resize_size, s.resize_channels));
}

models::Model build_model(const ModelConfig& m, const nn::Shape& shape, std::size_t k, std::uint64_t seed) {
    if (m.architecture == "squeezenet") return models::build_simplified_squeezenet_seeded<float>(shape, k, seed);
    if (m.architecture == "mlp") return models::build_mlp_seeded<float>(shape, m.hidden, k, seed);
    fail(Errc::invalid_argument, "cannot build a model of architecture '" + m.architecture + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(Errc::io, "write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(Errc::io, path.string() + ": " + e.what());
    }
}

void write_history(const std::vector<models::EpochRecord>& history, const fs::path& path) {
    std::ostringstream out;
    out << "epoch,loss,accuracy,val_loss,val_accuracy\n";
    for (const auto& e : history) {
        out << e.epoch << ',' << metrics::format_value(e.loss) << ',' << metrics::format_value(e.accuracy) << ','
            << (e.val_loss ? metrics::format_value(*e.val_loss) : "") << ','
            << (e.val_accuracy ? metrics::format_value(*e.val_accuracy) : "") << '\n';
    }
    write_text(path, out.str());
}

void write_report(const metrics::MetricsReport& r, const fs::path& stem) {
    metrics::write_report_csv(r, fs::path(stem.string() + ".csv"));
    metrics::write_report_json(r, fs::path(stem.string() + ".json"));
}

json splits_json(const data::SplitSummary& s) {
    return {{"teacher_available", s.teacher_available}, {"teacher_pretrain", s.teacher_pretrain},
            {"teacher_ol", s.teacher_ol},               {"student_available", s.student_available},
            {"student_semitrain", s.student_semitrain}, {"student_ol", s.student_ol}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

Workspace build_workspace(const ExperimentConfig& cfg, std::size_t k) {
    Workspace ws;
    data::SplitPlan plan;
    plan.teacher_pretrain = cfg.teacher_pretrain.resolve(k);
    plan.ol = cfg.ol.resolve(k);
    plan.student_semitrain = cfg.student_semitrain;
    plan.seed = derive_seed(cfg.seed, "split");

    if (cfg.synthetic) {
        data::SynthSpec spec;
        spec.n_classes = k;
        spec.samples_per_class = cfg.synthetic->samples_per_class;
        spec.image_size = cfg.synthetic->image_size;
        spec.noise = cfg.synthetic->noise;
        spec.teacher_correctness = cfg.synthetic->teacher_correctness;
        spec.seed = derive_seed(cfg.seed, "synthetic");
        auto pair = data::synth_task_pair(spec);
        ws.oracle_labels = std::move(pair.oracle_labels);
        ws.teacher_ds = std::make_shared<data::Dataset>(std::move(pair.teacher));
        ws.student_ds = std::make_shared<data::Dataset>(std::move(pair.student));
    } else if (cfg.teacher_source->same_pool(*cfg.student_source)) {
        auto pool = load_pool(*cfg.teacher_source, k);
        ws.teacher_ds = resized(pool, *cfg.teacher_source);
        const bool same_shape = cfg.teacher_source->resize_size == cfg.student_source->resize_size &&
                                cfg.teacher_source->resize_channels == cfg.student_source->resize_channels;
        ws.student_ds = same_shape ? ws.teacher_ds : resized(pool, *cfg.student_source);
        plan.shared_pool = true;
    } else {
        ws.teacher_ds = resized(load_pool(*cfg.teacher_source, k), *cfg.teacher_source);
        ws.student_ds = resized(load_pool(*cfg.student_source, k), *cfg.student_source);
    }

    if (cfg.mapping_pairs.empty()) {
        ws.mapping = protocol::ClassMapping::index_order(ws.teacher_ds->class_names, ws.student_ds->class_names);
    } else {
        std::vector<std::pair<std::string, std::string>> pairs;
        const auto& names = ws.teacher_ds->class_names;
        for (const auto& p : cfg.mapping_pairs)
            if (std::find(names.begin(), names.end(), p.first) != names.end()) pairs.push_back(p);
        ws.mapping = protocol::ClassMapping::build(ws.teacher_ds->class_names, ws.student_ds->class_names, pairs);
    }
    ws.splits = data::build_splits(ws.teacher_ds, ws.student_ds, ws.mapping, plan);
    return ws;
}

std::string arm_dir_name(protocol::LabelSource arm) { return "arm_" + protocol::label_source_name(arm); }

std::vector<std::size_t> predict_all(const models::Model& model, const data::SampleSequence& seq) {
    std::vector<std::size_t> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(models::predict_class(model, seq.sample(i)));
    return out;
}

Experiment::Experiment(ExperimentConfig cfg, std::size_t k, fs::path out_root, LogFn log)
    : cfg_(std::move(cfg)), k_(k), dir_(std::move(out_root) / ("k" + std::to_string(k))), log_(std::move(log)) {}

void Experiment::log(const std::string& msg) const {
    if (log_) log_("[k" + std::to_string(k_) + "] " + msg);
}

const Workspace& Experiment::workspace() {
    if (!ws_) {
        log("loading data");
        ws_ = build_workspace(cfg_, k_);
        log("stream length " + std::to_string(ws_->splits.stream.size()) + ", teacher pretrain set " +
            std::to_string(ws_->splits.teacher_pretrain.size()));
    }
    return *ws_;
}

std::string Experiment::config_digest() const { return hex64(protocol::fnv1a64(cfg_.snapshot(k_).dump())); }

json Experiment::read_manifest() const {
    const auto path = dir_ / "manifest.json";
    if (!fs::exists(path)) return json();
    return read_json(path);
}

void Experiment::record_stage(const std::string& stage, json info) {
    auto m = read_manifest();
    if (m.is_null() || m.value("config_digest", "") != config_digest())
        m = {{"k", k_}, {"config_digest", config_digest()}, {"stages", json::object()}};
    m["stages"][stage] = std::move(info);
    write_text(dir_ / "config.json", cfg_.snapshot(k_).dump(2) + "\n");
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
}

void Experiment::require_stage(const std::string& stage) const {
    const auto m = read_manifest();
    if (m.is_null()) fail(Errc::stage_order, "'" + stage + "' has not been run in " + dir_.string());
    if (m.value("config_digest", "") != config_digest())
        fail(Errc::stage_order, dir_.string() + " was produced by a different configuration; rerun '" + stage + "'");
    if (!m.at("stages").contains(stage))
        fail(Errc::stage_order, "'" + stage + "' has not been run in " + dir_.string());
}

void Experiment::pretrain() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& ws = workspace();
    const auto& stream = ws.splits.stream;
    json info = {{"architecture", cfg_.teacher_model.architecture}, {"splits", splits_json(ws.splits.summary)}};
    std::vector<std::size_t> predictions;
    if (cfg_.teacher_model.architecture == "oracle") {
        for (std::size_t i = 0; i < stream.size(); ++i)
            predictions.push_back(ws.oracle_labels.at(stream.teacher.source_index(i)));
    } else {
        auto model = build_model(cfg_.teacher_model, ws.teacher_ds->image_shape(), k_, derive_seed(cfg_.seed, "teacher.init"));
        log("pretraining teacher (" + std::to_string(model.parameter_count()) + " parameters, " +
            std::to_string(cfg_.pretrain.epochs) + " epochs)");
        nn::Rng rng(derive_seed(cfg_.seed, "teacher.fit"));
        auto fit = models::fit(model, ws.splits.teacher_pretrain, cfg_.pretrain, rng);
        fs::create_directories(dir_ / "teacher");
        models::save_checkpoint(fit.best, dir_ / "teacher" / "teacher.ktck");
        write_history(fit.history, dir_ / "teacher" / "history.csv");
        info["checkpoint"] = "teacher/teacher.ktck";
        info["best_epoch"] = fit.best_epoch;
        info["parameters"] = fit.best.parameter_count();
        predictions = predict_all(fit.best, stream.teacher);
    }
    if (!predictions.empty()) {
        const auto r = metrics::report(metrics::score(stream.truth.teacher, predictions, k_), ws.mapping.teacher_classes());
        write_report(r, dir_ / "teacher" / "ol_report");
        info["ol_accuracy"] = r.accuracy;
        log("teacher accuracy on its OL set " + metrics::format_value(r.accuracy));
    }
    info["seconds"] = seconds_since(t0);
    record_stage("pretrain", info);
}

void Experiment::semitrain() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& ws = workspace();
    auto model = build_model(cfg_.student_model, ws.student_ds->image_shape(), k_, derive_seed(cfg_.seed, "student.init"));
    log("semi-training student on " + std::to_string(ws.splits.student_semitrain.size()) + " examples");
    nn::Rng rng(derive_seed(cfg_.seed, "student.fit"));
    auto fit = models::fit(model, ws.splits.student_semitrain, cfg_.semitrain, rng);
    fs::create_directories(dir_ / "student");
    models::save_checkpoint(fit.best, dir_ / "student" / "semitrained.ktck");
    write_history(fit.history, dir_ / "student" / "history.csv");
    json info = {{"architecture", cfg_.student_model.architecture},
                 {"checkpoint", "student/semitrained.ktck"},
                 {"best_epoch", fit.best_epoch},
                 {"optimizer_steps", fit.optimizer_steps},
                 {"parameters", fit.best.parameter_count()},
                 {"splits", splits_json(ws.splits.summary)}};
    const auto& stream = ws.splits.stream;
    if (stream.size() > 0) {
        const auto r = metrics::report(metrics::score(stream.truth.student, predict_all(fit.best, stream.student), k_),
                                       ws.mapping.student_classes());
        write_report(r, dir_ / "student" / "ol_report");
        info["ol_accuracy"] = r.accuracy;
    }
    info["seconds"] = seconds_since(t0);
    record_stage("semitrain", info);
}

std::unique_ptr<protocol::Teacher> Experiment::load_teacher() {
    require_stage("pretrain");
    const auto& ws = workspace();
    if (cfg_.teacher_model.architecture == "oracle")
        return std::make_unique<protocol::OracleTeacher>(ws.oracle_labels, k_);
    return std::make_unique<protocol::ModelTeacher>(models::load_checkpoint(dir_ / "teacher" / "teacher.ktck"));
}

models::Model Experiment::load_semitrained_student() const {
    require_stage("semitrain");
    return models::load_checkpoint(dir_ / "student" / "semitrained.ktck");
}

void Experiment::write_arm(const fs::path& arm_dir, const protocol::RunResult& r, const std::string& label_source) {
    const auto& ws = workspace();
    const auto& stream = ws.splits.stream;
    fs::create_directories(arm_dir);
    models::save_checkpoint(r.student, arm_dir / "student.ktck");
    metrics::write_trace_csv(r.trace, arm_dir / "trace.csv");
    metrics::write_trace_json(r.trace, arm_dir / "trace.json");
    const auto rep = metrics::report(metrics::score(stream.truth.student, predict_all(r.student, stream.student), k_),
                                     ws.mapping.student_classes());
    write_report(rep, arm_dir / "report");

    const auto steps = r.steps();
    const auto& c = r.case_counts;
    json cases = {{"label_source", label_source},
                  {"steps", steps},
                  {"stream_length", stream.size()},
                  {"stop_reason", protocol::stop_reason_name(r.stop_reason)},
                  {"stop_uses_proxy", r.stop_uses_proxy},
                  {"case_counts", {{"1", c[0]}, {"2", c[1]}, {"3", c[2]}, {"4", c[3]}}},
                  {"teacher_correctness", steps ? static_cast<double>(c[1] + c[2]) / static_cast<double>(steps) : 0.0},
                  {"harmful_fraction", steps ? static_cast<double>(c[0] + c[3]) / static_cast<double>(steps) : 0.0}};
    if (!r.abort_message.empty()) cases["abort_message"] = r.abort_message;
    write_text(arm_dir / "cases.json", cases.dump(2) + "\n");

    std::ostringstream out;
    out << "step,teacher_prediction,label,student_prediction,loss,truth,case\n";
    for (const auto& s : r.records)
        out << s.step << ',' << (s.teacher_prediction ? std::to_string(*s.teacher_prediction) : "") << ',' << s.label
            << ',' << s.student_prediction << ',' << metrics::format_value(s.loss) << ','
            << (s.truth ? std::to_string(*s.truth) : "") << ',' << (s.step_case ? std::to_string(*s.step_case) : "")
            << '\n';
    write_text(arm_dir / "steps.csv", out.str());
    log(arm_dir.filename().string() + ": " + std::to_string(steps) + " steps, final accuracy " +
        metrics::format_value(rep.accuracy) + ", " + protocol::stop_reason_name(r.stop_reason));
}

void Experiment::run_kt(std::optional<protocol::LabelSource> only) {
    require_stage("pretrain");
    require_stage("semitrain");
    const auto teacher = load_teacher();
    const auto& ws = workspace();
    auto m = read_manifest();
    json arms = m.at("stages").contains("run-kt") ? m.at("stages").at("run-kt").value("arms", json::object()) : json::object();
    for (auto arm : cfg_.arms) {
        if (only && arm != *only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        log("KT run, " + protocol::label_source_name(arm) + " labels");
        nn::Adam<float> adam(cfg_.semitrain.adam);
        protocol::KtOptions opts;
        opts.trace_interval = cfg_.trace_interval;
        opts.trace_window = cfg_.trace_window;
        opts.stop = cfg_.stop;
        opts.label_source = arm;
        const auto r = protocol::kt_run(*teacher, load_semitrained_student(), ws.splits.stream, ws.mapping, adam, opts);
        write_arm(dir_ / arm_dir_name(arm), r, protocol::label_source_name(arm));
        arms[protocol::label_source_name(arm)] = {{"dir", arm_dir_name(arm)},
                                                  {"steps", r.steps()},
                                                  {"stop_reason", protocol::stop_reason_name(r.stop_reason)},
                                                  {"seconds", seconds_since(t0)}};
    }
    record_stage("run-kt", {{"arms", arms}});
}

void Experiment::compare() {
    require_stage("run-kt");
    const auto expected = dir_ / arm_dir_name(protocol::LabelSource::ground_truth);
    const auto actual = dir_ / arm_dir_name(protocol::LabelSource::pseudo);
    for (const auto& d : {expected, actual})
        if (!fs::exists(d / "report.json")) fail(Errc::stage_order, "compare needs both arms; missing " + d.string());
    compare_arms(expected, actual, dir_);
    record_stage("compare", {{"expected", expected.filename().string()}, {"actual", actual.filename().string()}});
}

void Experiment::serve_teacher(const link::Endpoint& ep, std::size_t max_connections, const std::atomic<bool>* stop,
                               const std::function<void(std::uint16_t)>& on_listening) {
    std::shared_ptr<const protocol::Teacher> teacher = load_teacher();
    const auto& ws = workspace();
    link::TeacherServer server(teacher, ws.splits.stream.teacher, ws.mapping);
    link::TcpListener listener(ep);
    log("teacher listening on " + ep.host + ":" + std::to_string(listener.port()));
    if (on_listening) on_listening(listener.port());
    server.serve(listener, max_connections, stop, cfg_.idle_timeout);
}

protocol::RunResult Experiment::run_student(const link::Endpoint& ep) {
    require_stage("semitrain");
    const auto t0 = std::chrono::steady_clock::now();
    auto student = load_semitrained_student();
    const auto& ws = workspace();
    auto conn = link::TcpStream::connect(ep, cfg_.timeout);
    log("connected to teacher at " + ep.str());
    nn::Adam<float> adam(cfg_.semitrain.adam);
    protocol::KtOptions opts;
    opts.trace_interval = cfg_.trace_interval;
    opts.trace_window = cfg_.trace_window;
    opts.stop = cfg_.stop;
    opts.label_source = protocol::LabelSource::pseudo;
    auto r = link::run_student_client(*conn, std::move(student), ws.splits.stream.student, &ws.splits.stream.truth.student,
                                      ws.mapping, adam, opts, {cfg_.timeout});
    write_arm(dir_ / kEdgeArmDir, r, "pseudo (edge)");
    record_stage("run-student", {{"dir", kEdgeArmDir},
                                 {"endpoint", ep.str()},
                                 {"steps", r.steps()},
                                 {"stop_reason", protocol::stop_reason_name(r.stop_reason)},
                                 {"seconds", seconds_since(t0)}});
    return r;
}

metrics::MetricsReport Experiment::evaluate(const fs::path& checkpoint, const std::string& set) {
    const auto model = models::load_checkpoint(checkpoint);
    const auto& ws = workspace();
    const auto& stream = ws.splits.stream;
    std::vector<std::size_t> truth, predicted;
    std::vector<std::string> names;
    if (set == "teacher_ol" || set == "student_ol") {
        const bool teacher = set == "teacher_ol";
        const auto& seq = teacher ? stream.teacher : stream.student;
        if (seq.size() && seq.sample(0).shape() != model.input_shape())
            fail(Errc::invalid_argument, "checkpoint expects " + nn::shape_str(model.input_shape()) + " inputs, " +
                                             set + " holds " + nn::shape_str(seq.sample(0).shape()));
        truth = teacher ? stream.truth.teacher : stream.truth.student;
        predicted = predict_all(model, seq);
        names = teacher ? ws.mapping.teacher_classes() : ws.mapping.student_classes();
    } else if (set == "teacher_pretrain" || set == "student_semitrain") {
        const bool teacher = set == "teacher_pretrain";
        const auto& examples = teacher ? ws.splits.teacher_pretrain : ws.splits.student_semitrain;
        for (const auto& ex : examples) {
            if (ex.image.shape() != model.input_shape())
                fail(Errc::invalid_argument, "checkpoint input shape does not match " + set);
            truth.push_back(ex.label);
            predicted.push_back(models::predict_class(model, ex.image));
        }
        names = teacher ? ws.mapping.teacher_classes() : ws.mapping.student_classes();
    } else {
        fail(Errc::invalid_argument, "unknown evaluation set '" + set +
                                         "' (teacher_ol, student_ol, teacher_pretrain, student_semitrain)");
    }
    if (model.num_classes() != k_)
        fail(Errc::architecture_mismatch, "checkpoint has " + std::to_string(model.num_classes()) + " classes, k = " +
                                              std::to_string(k_));
    return metrics::report(metrics::score(truth, predicted, k_), names);
}

void compare_arms(const fs::path& expected_dir, const fs::path& actual_dir, const fs::path& out_dir) {
    const auto e = metrics::read_report_json(expected_dir / "report.json");
    const auto a = metrics::read_report_json(actual_dir / "report.json");
    if (e.class_names != a.class_names)
        fail(Errc::invalid_argument, "arms were scored on different class lists");
    using metrics::format_value;

    std::ostringstream cmp;
    cmp << "metric,expected,actual,offset\n";
    const std::vector<std::tuple<const char*, double, double>> rows = {
        {"accuracy", e.accuracy, a.accuracy},
        {"micro_f1", e.micro.f1, a.micro.f1},
        {"macro_precision", e.macro.precision, a.macro.precision},
        {"macro_recall", e.macro.recall, a.macro.recall},
        {"macro_f1", e.macro.f1, a.macro.f1}};
    for (const auto& [name, x, y] : rows)
        cmp << name << ',' << format_value(x) << ',' << format_value(y) << ',' << format_value(x - y) << '\n';
    write_text(out_dir / "comparison.csv", cmp.str());

    std::ostringstream pc;
    pc << "class,expected_f1,actual_f1,offset\n";
    for (std::size_t c = 0; c < e.f1.size(); ++c)
        pc << e.class_names[c] << ',' << format_value(e.f1[c]) << ',' << format_value(a.f1[c]) << ','
           << format_value(e.f1[c] - a.f1[c]) << '\n';
    write_text(out_dir / "per_class_f1.csv", pc.str());

    const auto te = metrics::read_trace_csv(expected_dir / "trace.csv");
    const auto ta = metrics::read_trace_csv(actual_dir / "trace.csv");
    std::map<std::size_t, std::pair<std::string, std::string>> merged;
    for (const auto& p : te.points) merged[p.step].first = format_value(p.rolling_accuracy);
    for (const auto& p : ta.points) merged[p.step].second = format_value(p.rolling_accuracy);
    std::ostringstream tr;
    tr << "step,expected_rolling_accuracy,actual_rolling_accuracy\n";
    for (const auto& [step, v] : merged) tr << step << ',' << v.first << ',' << v.second << '\n';
    write_text(out_dir / "trace_comparison.csv", tr.str());
}

void run_all(const ExperimentConfig& cfg, const fs::path& out_root, LogFn log) {
    std::ostringstream sweep;
    sweep << "k,teacher_ol_accuracy,expected_accuracy,actual_accuracy,accuracy_offset,expected_macro_f1,"
             "actual_macro_f1,macro_f1_offset\n";
    bool both_arms = false;
    for (auto a : cfg.arms) both_arms = both_arms || a == protocol::LabelSource::ground_truth;
    both_arms = both_arms && cfg.arms.size() == 2;
    for (auto k : cfg.ks) {
        Experiment ex(cfg, k, out_root, log);
        ex.pretrain();
        ex.semitrain();
        ex.run_kt();
        if (both_arms) ex.compare();

        auto cell = [](const fs::path& p, auto get) -> std::string {
            if (!fs::exists(p)) return "";
            return metrics::format_value(get(metrics::read_report_json(p)));
        };
        auto acc = [](const metrics::MetricsReport& r) { return r.accuracy; };
        auto f1 = [](const metrics::MetricsReport& r) { return r.macro.f1; };
        const auto exp_report = ex.dir() / "arm_ground_truth" / "report.json";
        const auto act_report = ex.dir() / "arm_pseudo" / "report.json";
        std::string acc_off, f1_off;
        if (fs::exists(exp_report) && fs::exists(act_report)) {
            const auto re = metrics::read_report_json(exp_report), ra = metrics::read_report_json(act_report);
            acc_off = metrics::format_value(re.accuracy - ra.accuracy);
            f1_off = metrics::format_value(re.macro.f1 - ra.macro.f1);
        }
        sweep << k << ',' << cell(ex.dir() / "teacher" / "ol_report.json", acc) << ',' << cell(exp_report, acc) << ','
              << cell(act_report, acc) << ',' << acc_off << ',' << cell(exp_report, f1) << ',' << cell(act_report, f1)
              << ',' << f1_off << '\n';
    }
    write_text(out_root / "sweep.csv", sweep.str());
}

}  // namespace kt::experiment

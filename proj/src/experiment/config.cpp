#include "kt/experiment/config.hpp"

#include <fstream>
#include <set>

#include "kt/error.hpp"
#include "kt/experiment/schema.hpp"
#include "kt/link/transport.hpp"
#include "kt/nn/rng.hpp"
#include "kt/protocol/mapping.hpp"

namespace kt::experiment {

using nlohmann::json;

bool SourceConfig::same_pool(const SourceConfig& o) const {
    return type == o.type && images == o.images && labels == o.labels && roots == o.roots &&
           class_names == o.class_names;
}

std::vector<std::size_t> Counts::resolve(std::size_t k) const {
    if (uniform) return std::vector<std::size_t>(k, *uniform);
    return per_class;
}

models::TrainSettings faithful_pretrain_settings() {
    models::TrainSettings s;
    s.epochs = 100;
    s.batch_size = 128;
    s.validation_ratio = 0.2;
    s.monitor = models::Monitor::val_loss;
    return s;
}

models::TrainSettings faithful_semitrain_settings() {
    models::TrainSettings s;
    s.epochs = 10;
    s.batch_size = 1;
    s.validation_ratio = 0.0;
    s.monitor = models::Monitor::loss;
    return s;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose) {
    nn::Rng r(seed ^ protocol::fnv1a64(purpose));
    return r.next_u64();
}

namespace {

constexpr std::size_t kDeskPretrainEpochs = 20;
constexpr std::size_t kDefaultOlPerClass = 1500;

fs::path absolute_from(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

void check_source(const json& s, const std::string& ptr, const fs::path& base, std::vector<std::string>& errs) {
    const auto type = s.value("type", "");
    auto paths_exist = [&](const char* key) {
        if (!s.contains(key)) return;
        for (std::size_t i = 0; i < s.at(key).size(); ++i) {
            const auto p = absolute_from(base, s.at(key)[i].get<std::string>());
            if (!fs::exists(p)) errs.push_back(ptr + "/" + key + "/" + std::to_string(i) + ": path " + p.string() + " does not exist");
        }
    };
    if (type == "idx") {
        if (!s.contains("images") || !s.contains("labels"))
            errs.push_back(ptr + ": idx sources need 'images' and 'labels'");
        else if (s.at("images").size() != s.at("labels").size())
            errs.push_back(ptr + ": 'images' and 'labels' must list the same number of files");
        if (s.contains("roots")) errs.push_back(ptr + "/roots: only image_dir sources take 'roots'");
        paths_exist("images");
        paths_exist("labels");
    } else if (type == "image_dir") {
        if (!s.contains("roots")) errs.push_back(ptr + ": image_dir sources need 'roots'");
        if (s.contains("images") || s.contains("labels"))
            errs.push_back(ptr + ": image_dir sources take 'roots', not 'images'/'labels'");
        if (s.contains("class_names")) errs.push_back(ptr + "/class_names: image_dir sources name classes after their directories");
        paths_exist("roots");
    }
}

void check_train_faithful(const json& j, const char* key, const models::TrainSettings& ref,
                          std::vector<std::string>& errs) {
    if (!j.contains(key)) return;
    const auto& t = j.at(key);
    const std::string p = std::string("/") + key;
    if (t.contains("epochs") && t.at("epochs").get<std::size_t>() != ref.epochs)
        errs.push_back(p + "/epochs: faithful runs use " + std::to_string(ref.epochs));
    if (t.contains("batch_size") && t.at("batch_size").get<std::size_t>() != ref.batch_size)
        errs.push_back(p + "/batch_size: faithful runs use " + std::to_string(ref.batch_size));
    if (t.contains("validation_ratio") && t.at("validation_ratio").get<double>() != ref.validation_ratio)
        errs.push_back(p + "/validation_ratio: faithful runs use " + json(ref.validation_ratio).dump());
    if (t.contains("monitor") && t.at("monitor").get<std::string>() != models::monitor_name(ref.monitor))
        errs.push_back(p + "/monitor: faithful runs use " + models::monitor_name(ref.monitor));
    if (t.contains("learning_rate") && t.at("learning_rate").get<double>() != ref.adam.lr)
        errs.push_back(p + "/learning_rate: faithful runs use " + json(ref.adam.lr).dump());
}

std::vector<std::size_t> class_counts_of(const json& j) {
    if (j.contains("k")) return {j.at("k").get<std::size_t>()};
    if (j.contains("k_sweep")) return j.at("k_sweep").get<std::vector<std::size_t>>();
    return {};
}

void semantic_checks(const json& j, const fs::path& base, std::vector<std::string>& errs) {
    const bool has_k = j.contains("k"), has_sweep = j.contains("k_sweep");
    if (has_k == has_sweep) errs.push_back("/: give exactly one of 'k' and 'k_sweep'");
    if (has_sweep) {
        const auto ks = j.at("k_sweep").get<std::vector<std::size_t>>();
        if (std::set<std::size_t>(ks.begin(), ks.end()).size() != ks.size())
            errs.push_back("/k_sweep: class counts must be distinct");
    }
    const bool has_data = j.contains("data"), has_synth = j.contains("synthetic");
    if (has_data == has_synth) errs.push_back("/: give exactly one of 'data' and 'synthetic'");
    if (has_data) {
        for (const char* side : {"teacher", "student"})
            if (j.at("data").contains(side)) check_source(j.at("data").at(side), std::string("/data/") + side, base, errs);
    }

    const auto models = j.value("models", json::object());
    if (models.contains("student") && models.at("student").value("architecture", "") == "oracle")
        errs.push_back("/models/student/architecture: the student must be a trainable model");
    if (models.contains("teacher") && models.at("teacher").value("architecture", "") == "oracle" && !has_synth)
        errs.push_back("/models/teacher/architecture: an oracle teacher needs a 'synthetic' data block");

    if (j.value("faithful", false)) {
        check_train_faithful(j, "pretrain", faithful_pretrain_settings(), errs);
        check_train_faithful(j, "semitrain", faithful_semitrain_settings(), errs);
    }
    for (const char* key : {"pretrain", "semitrain"}) {
        const auto t = j.value(key, json::object());
        const double ratio = t.value("validation_ratio", std::string(key) == "pretrain" ? 0.2 : 0.0);
        const auto monitor = t.value("monitor", std::string(key) == "pretrain" ? "val_loss" : "loss");
        if ((ratio > 0.0) != (monitor == "val_loss"))
            errs.push_back(std::string("/") + key + ": validation_ratio > 0 is required exactly when monitor is val_loss");
    }

    const auto split = j.value("split", json::object());
    for (const char* key : {"teacher_pretrain", "ol"}) {
        if (!split.contains(key) || !split.at(key).is_array()) continue;
        for (auto k : class_counts_of(j))
            if (split.at(key).size() != k)
                errs.push_back("/split/" + std::string(key) + ": per-class list has " +
                               std::to_string(split.at(key).size()) + " entries but k = " + std::to_string(k));
    }

    const auto kt = j.value("kt", json::object());
    if (kt.contains("arms")) {
        const auto arms = kt.at("arms").get<std::vector<std::string>>();
        if (std::set<std::string>(arms.begin(), arms.end()).size() != arms.size())
            errs.push_back("/kt/arms: arms must be distinct");
    }
    if (j.contains("mapping") && j.at("mapping").contains("pairs")) {
        std::set<std::string> sources, targets;
        for (const auto& p : j.at("mapping").at("pairs")) {
            if (!sources.insert(p[0].get<std::string>()).second)
                errs.push_back("/mapping/pairs: teacher class '" + p[0].get<std::string>() + "' is mapped twice");
            if (!targets.insert(p[1].get<std::string>()).second)
                errs.push_back("/mapping/pairs: student class '" + p[1].get<std::string>() + "' is a target twice");
        }
    }
    if (j.contains("edge") && j.at("edge").contains("listen")) {
        try {
            (void)link::parse_endpoint(j.at("edge").at("listen").get<std::string>());
        } catch (const Error& e) {
            errs.push_back(std::string("/edge/listen: ") + e.what());
        }
    }
}

}  // namespace

std::vector<std::string> config_errors(const json& j, const fs::path& base_dir) {
    auto errs = validate_schema(j, config_schema());
    if (errs.empty()) semantic_checks(j, base_dir, errs);
    return errs;
}

namespace {

SourceConfig parse_source(const json& s, const fs::path& base) {
    SourceConfig c;
    c.type = s.at("type").get<std::string>();
    for (const char* key : {"images", "labels", "roots"}) {
        if (!s.contains(key)) continue;
        auto& dst = std::string(key) == "images" ? c.images : std::string(key) == "labels" ? c.labels : c.roots;
        for (const auto& p : s.at(key)) dst.push_back(absolute_from(base, p.get<std::string>()));
    }
    if (s.contains("class_names")) c.class_names = s.at("class_names").get<std::vector<std::string>>();
    if (s.contains("resize")) {
        c.resize_size = s.at("resize").at("size").get<std::size_t>();
        c.resize_channels = s.at("resize").value("channels", std::size_t{3});
    }
    return c;
}

models::TrainSettings parse_train(const json& t, models::TrainSettings s) {
    s.epochs = t.value("epochs", s.epochs);
    s.batch_size = t.value("batch_size", s.batch_size);
    s.validation_ratio = t.value("validation_ratio", s.validation_ratio);
    if (t.contains("monitor")) s.monitor = models::parse_monitor(t.at("monitor").get<std::string>());
    s.adam.lr = t.value("learning_rate", s.adam.lr);
    return s;
}

Counts parse_counts(const json& j) {
    Counts c;
    if (j.is_number()) c.uniform = j.get<std::size_t>();
    if (j.is_array()) c.per_class = j.get<std::vector<std::size_t>>();
    return c;
}

json counts_json(const Counts& c) {
    if (c.uniform) return *c.uniform;
    if (!c.per_class.empty()) return c.per_class;
    return nullptr;
}

json train_json(const models::TrainSettings& s) {
    return {{"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"validation_ratio", s.validation_ratio},
            {"monitor", models::monitor_name(s.monitor)},
            {"learning_rate", s.adam.lr}};
}

json source_json(const SourceConfig& s) {
    json j = {{"type", s.type}};
    auto strings = [](const std::vector<fs::path>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(p.string());
        return out;
    };
    if (!s.images.empty()) j["images"] = strings(s.images);
    if (!s.labels.empty()) j["labels"] = strings(s.labels);
    if (!s.roots.empty()) j["roots"] = strings(s.roots);
    if (!s.class_names.empty()) j["class_names"] = s.class_names;
    if (s.resize_size) j["resize"] = {{"size", *s.resize_size}, {"channels", s.resize_channels}};
    return j;
}

json model_json(const ModelConfig& m) { return {{"architecture", m.architecture}, {"hidden", m.hidden}}; }

}  // namespace

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    const auto errs = config_errors(j, base_dir);
    if (!errs.empty()) {
        std::string msg = std::to_string(errs.size()) + " problem(s) in the configuration";
        for (const auto& e : errs) msg += "\n  " + e;
        fail(Errc::config_validation, msg);
    }
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ks = class_counts_of(j);
    c.faithful = j.value("faithful", false);
    if (j.contains("data")) {
        c.teacher_source = parse_source(j.at("data").at("teacher"), base_dir);
        c.student_source = parse_source(j.at("data").at("student"), base_dir);
    } else {
        const auto& s = j.at("synthetic");
        SyntheticConfig syn;
        syn.samples_per_class = s.value("samples_per_class", syn.samples_per_class);
        syn.image_size = s.value("image_size", syn.image_size);
        syn.noise = s.value("noise", syn.noise);
        syn.teacher_correctness = s.value("teacher_correctness", syn.teacher_correctness);
        c.synthetic = syn;
    }
    if (j.contains("mapping") && j.at("mapping").contains("pairs"))
        for (const auto& p : j.at("mapping").at("pairs"))
            c.mapping_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());

    const auto models = j.value("models", json::object());
    c.teacher_model.architecture = c.synthetic ? "oracle" : "squeezenet";
    c.student_model.architecture = c.synthetic ? "mlp" : "squeezenet";
    for (auto [key, dst] : {std::pair{"teacher", &c.teacher_model}, std::pair{"student", &c.student_model}}) {
        if (!models.contains(key)) continue;
        dst->architecture = models.at(key).at("architecture").get<std::string>();
        dst->hidden = models.at(key).value("hidden", dst->hidden);
    }

    auto pre_defaults = faithful_pretrain_settings();
    if (!c.faithful) pre_defaults.epochs = kDeskPretrainEpochs;
    c.pretrain = parse_train(j.value("pretrain", json::object()), pre_defaults);
    c.semitrain = parse_train(j.value("semitrain", json::object()), faithful_semitrain_settings());

    const auto split = j.value("split", json::object());
    c.student_semitrain = split.value("student_semitrain", std::size_t{1});
    if (split.contains("teacher_pretrain")) c.teacher_pretrain = parse_counts(split.at("teacher_pretrain"));
    if (split.contains("ol")) c.ol = parse_counts(split.at("ol"));
    if (c.teacher_pretrain.empty() && c.ol.empty())
        c.ol.uniform = c.synthetic ? c.synthetic->samples_per_class - std::min(c.synthetic->samples_per_class, c.student_semitrain)
                                   : kDefaultOlPerClass;

    const auto kt = j.value("kt", json::object());
    c.trace_interval = kt.value("trace_interval", c.trace_interval);
    c.trace_window = kt.value("trace_window", c.trace_window);
    if (kt.contains("arms")) {
        c.arms.clear();
        for (const auto& a : kt.at("arms")) c.arms.push_back(protocol::parse_label_source(a.get<std::string>()));
    }
    c.stop.cadence = c.trace_interval;
    if (kt.contains("stop")) {
        const auto& s = kt.at("stop");
        if (s.contains("threshold") && !s.at("threshold").is_null()) c.stop.threshold = s.at("threshold").get<double>();
        c.stop.window = s.value("window", c.stop.window);
        c.stop.cadence = s.value("cadence", c.stop.cadence);
    }
    const auto edge = j.value("edge", json::object());
    c.timeout = std::chrono::milliseconds(edge.value("timeout_ms", c.timeout.count()));
    c.idle_timeout = std::chrono::milliseconds(edge.value("idle_timeout_ms", c.idle_timeout.count()));
    c.listen = edge.value("listen", c.listen);
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::config_validation, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(Errc::config_validation, path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

json ExperimentConfig::snapshot(std::size_t k) const {
    json j = {{"name", name}, {"seed", seed}, {"k", k}, {"faithful", faithful}};
    if (synthetic)
        j["synthetic"] = {{"samples_per_class", synthetic->samples_per_class},
                          {"image_size", synthetic->image_size},
                          {"noise", synthetic->noise},
                          {"teacher_correctness", synthetic->teacher_correctness}};
    else
        j["data"] = {{"teacher", source_json(*teacher_source)}, {"student", source_json(*student_source)}};
    if (!mapping_pairs.empty()) {
        json pairs = json::array();
        for (const auto& [t, s] : mapping_pairs) pairs.push_back({t, s});
        j["mapping"] = {{"pairs", pairs}};
    }
    j["models"] = {{"teacher", model_json(teacher_model)}, {"student", model_json(student_model)}};
    j["pretrain"] = train_json(pretrain);
    j["semitrain"] = train_json(semitrain);
    j["split"] = {{"teacher_pretrain", counts_json(teacher_pretrain)},
                  {"ol", counts_json(ol)},
                  {"student_semitrain", student_semitrain}};
    json arm_names = json::array();
    for (auto a : arms) arm_names.push_back(protocol::label_source_name(a));
    j["kt"] = {{"trace_interval", trace_interval},
               {"trace_window", trace_window},
               {"arms", arm_names},
               {"stop",
                {{"threshold", stop.threshold ? json(*stop.threshold) : json(nullptr)},
                 {"window", stop.window},
                 {"cadence", stop.cadence}}}};
    j["edge"] = {{"timeout_ms", timeout.count()}, {"idle_timeout_ms", idle_timeout.count()}, {"listen", listen}};
    return j;
}

}  // namespace kt::experiment

#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kt/models/trainer.hpp"
#include "kt/protocol/kt_run.hpp"

namespace kt::experiment {

namespace fs = std::filesystem;

struct SourceConfig {
    std::string type;  // idx | image_dir
    std::vector<fs::path> images;
    std::vector<fs::path> labels;
    std::vector<fs::path> roots;
    std::vector<std::string> class_names;
    std::optional<std::size_t> resize_size;
    std::size_t resize_channels = 3;

    /// Same files, ignoring resize settings.
    bool same_pool(const SourceConfig& other) const;
};

struct SyntheticConfig {
    std::size_t samples_per_class = 200;
    std::size_t image_size = 8;
    double noise = 0.2;
    double teacher_correctness = 1.0;
};

struct ModelConfig {
    std::string architecture;  // squeezenet | mlp | oracle
    std::size_t hidden = 32;
};

/// Per-class counts: absent, one count for every class, or an explicit vector.
struct Counts {
    std::optional<std::size_t> uniform;
    std::vector<std::size_t> per_class;

    bool empty() const { return !uniform && per_class.empty(); }
    std::vector<std::size_t> resolve(std::size_t k) const;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::vector<std::size_t> ks;
    bool faithful = false;

    std::optional<SourceConfig> teacher_source;
    std::optional<SourceConfig> student_source;
    std::optional<SyntheticConfig> synthetic;

    std::vector<std::pair<std::string, std::string>> mapping_pairs;  // empty: index order

    ModelConfig teacher_model;
    ModelConfig student_model;
    models::TrainSettings pretrain;
    models::TrainSettings semitrain;

    Counts teacher_pretrain;
    Counts ol;
    std::size_t student_semitrain = 1;

    std::size_t trace_interval = 100;
    std::size_t trace_window = 100;
    std::vector<protocol::LabelSource> arms{protocol::LabelSource::ground_truth, protocol::LabelSource::pseudo};
    protocol::StopCondition stop{};

    std::chrono::milliseconds timeout{5000};
    std::chrono::milliseconds idle_timeout{60000};
    std::string listen = "127.0.0.1:7700";

    /// Fully resolved configuration for one class count: defaults filled in,
    /// paths absolute, a single "k". Parsing it yields an identical run.
    nlohmann::json snapshot(std::size_t k) const;
};

/// Schema violations followed by semantic problems; empty when valid.
std::vector<std::string> config_errors(const nlohmann::json& j, const fs::path& base_dir);

/// Throws config_validation listing every problem, one per line.
ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir);
ExperimentConfig load_config(const fs::path& path);

/// Training settings required by faithful runs.
models::TrainSettings faithful_pretrain_settings();
models::TrainSettings faithful_semitrain_settings();

/// Independent seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose);

}  // namespace kt::experiment

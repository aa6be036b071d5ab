#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "kt/data/splits.hpp"
#include "kt/experiment/config.hpp"
#include "kt/link/transport.hpp"
#include "kt/metrics/metrics.hpp"
#include "kt/protocol/kt_run.hpp"

namespace kt::experiment {

/// Datasets, mapping and splits for one class count.
struct Workspace {
    std::shared_ptr<const data::Dataset> teacher_ds;
    std::shared_ptr<const data::Dataset> student_ds;
    protocol::ClassMapping mapping;
    data::Splits splits;
    std::vector<std::size_t> oracle_labels;  // synthetic runs only
};

Workspace build_workspace(const ExperimentConfig& cfg, std::size_t k);

std::string arm_dir_name(protocol::LabelSource arm);
inline constexpr const char* kEdgeArmDir = "arm_pseudo_edge";

using LogFn = std::function<void(const std::string&)>;

/// The staged pipeline for one class count, rooted at <out>/k<k>. Every stage
/// writes its outputs and records itself in manifest.json; later stages refuse
/// to run when an earlier one is missing or was produced by another config.
class Experiment {
public:
    Experiment(ExperimentConfig cfg, std::size_t k, fs::path out_root, LogFn log = {});

    const fs::path& dir() const { return dir_; }
    std::size_t k() const { return k_; }
    const ExperimentConfig& config() const { return cfg_; }
    const Workspace& workspace();

    void pretrain();
    void semitrain();
    /// Runs the configured arms, or only `only`.
    void run_kt(std::optional<protocol::LabelSource> only = std::nullopt);
    /// Writes comparison.csv, per_class_f1.csv and trace_comparison.csv for the
    /// two in-process arms.
    void compare();

    /// Serves teacher labels. `on_listening` receives the bound port.
    void serve_teacher(const link::Endpoint& ep, std::size_t max_connections, const std::atomic<bool>* stop,
                       const std::function<void(std::uint16_t)>& on_listening = {});
    /// Pseudo-label arm against a remote teacher; outputs go to arm_pseudo_edge.
    protocol::RunResult run_student(const link::Endpoint& ep);

    /// Scores a checkpoint on one of: teacher_ol, student_ol, teacher_pretrain, student_semitrain.
    metrics::MetricsReport evaluate(const fs::path& checkpoint, const std::string& set);

    std::unique_ptr<protocol::Teacher> load_teacher();
    models::Model load_semitrained_student() const;

private:
    void log(const std::string& msg) const;
    std::string config_digest() const;
    nlohmann::json read_manifest() const;
    void record_stage(const std::string& stage, nlohmann::json info);
    void require_stage(const std::string& stage) const;
    void write_arm(const fs::path& arm_dir, const protocol::RunResult& r, const std::string& label_source);

    ExperimentConfig cfg_;
    std::size_t k_;
    fs::path dir_;
    LogFn log_;
    std::optional<Workspace> ws_;
};

/// Reads two arm directories and writes the offset tables into out_dir.
void compare_arms(const fs::path& expected_dir, const fs::path& actual_dir, const fs::path& out_dir);

/// Full pipeline for every configured class count plus sweep.csv at the root.
void run_all(const ExperimentConfig& cfg, const fs::path& out_root, LogFn log = {});

/// Infer-mode predictions over a sample sequence.
std::vector<std::size_t> predict_all(const models::Model& model, const data::SampleSequence& seq);

}  // namespace kt::experiment

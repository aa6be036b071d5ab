#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kt/data/splits.hpp"
#include "kt/metrics/metrics.hpp"
#include "kt/models/model.hpp"
#include "kt/nn/adam.hpp"
#include "kt/protocol/mapping.hpp"

namespace kt::protocol {

/// argmax(softmax(logits)) of an inference-only model, lowest index on ties.
std::size_t teacher_predict(const models::Model& teacher, const nn::Tensor& x);

/// Read-only label generator. source_index is the sample's position in its
/// dataset; model teachers ignore it, simulated oracles key on it.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual std::size_t num_classes() const = 0;
    virtual std::size_t predict(const nn::Tensor& x, std::size_t source_index) const = 0;
};

class ModelTeacher final : public Teacher {
public:
    explicit ModelTeacher(models::Model model) : model_(std::move(model)) {}
    std::size_t num_classes() const override { return model_.num_classes(); }
    std::size_t predict(const nn::Tensor& x, std::size_t) const override { return teacher_predict(model_, x); }
    const models::Model& model() const { return model_; }

private:
    models::Model model_;
};

/// Replays precomputed labels indexed by source index.
class OracleTeacher final : public Teacher {
public:
    OracleTeacher(std::vector<std::size_t> labels, std::size_t num_classes);
    std::size_t num_classes() const override { return k_; }
    std::size_t predict(const nn::Tensor& x, std::size_t source_index) const override;

private:
    std::vector<std::size_t> labels_;
    std::size_t k_;
};

enum class LabelSource { pseudo, ground_truth };
std::string label_source_name(LabelSource s);
LabelSource parse_label_source(const std::string& s);

/// Rolling-accuracy stop rule. Without a threshold the stream always runs to
/// the end. Checked every `cadence` steps once `window` steps have elapsed.
struct StopCondition {
    std::optional<double> threshold;
    std::size_t window = 1000;
    std::size_t cadence = 100;
};

/// True iff the last stop.window samples exist and their accuracy is >= threshold.
bool stop_check(std::span<const metrics::TraceSample> history, const StopCondition& stop);

/// (student correct, pseudo-label correct): (T,F)->1, (T,T)->2, (F,T)->3, (F,F)->4.
int step_case(bool student_correct, bool pseudo_label_correct);
/// Cases 1 and 4 are the harmful ones.
bool case_is_harmful(int c);

struct StepRecord {
    std::size_t step = 0;
    std::optional<std::size_t> teacher_prediction;
    std::size_t label = 0;  // student-space label used for the update
    std::size_t student_prediction = 0;
    double loss = 0.0;
    std::optional<std::size_t> truth;
    std::optional<int> step_case;
};

enum class StopReason { stream_exhausted, threshold_met, aborted };
std::string stop_reason_name(StopReason r);

struct RunResult {
    models::Model student;
    metrics::TrainingTrace trace;
    std::vector<StepRecord> records;
    std::array<std::size_t, 4> case_counts{};
    StopReason stop_reason = StopReason::stream_exhausted;
    std::string abort_message;
    /// True when the stop rule had no ground truth and measured agreement with
    /// the training labels instead.
    bool stop_uses_proxy = false;

    std::size_t steps() const { return records.size(); }
};

struct KtOptions {
    std::size_t trace_interval = 100;
    std::size_t trace_window = 100;
    StopCondition stop{};
    LabelSource label_source = LabelSource::pseudo;
};

/// Returns the teacher-space label for stream position `step`. May throw
/// timeout, connection_closed or protocol errors, which abort the run.
using TeacherLabelFn = std::function<std::size_t(std::size_t step)>;

/// The KT loop over the student's side of a stream. `truth` is optional
/// simulation data: it feeds diagnostics and, for the ground-truth arm, the
/// labels. With label_source = pseudo the update path never reads it.
RunResult kt_run_with(const TeacherLabelFn& teacher_label, models::Model student,
                      const data::SampleSequence& student_stream, const std::vector<std::size_t>* truth,
                      const ClassMapping& mapping, nn::Adam<float>& optimizer, const KtOptions& options);

RunResult kt_run(const Teacher& teacher, models::Model student, const data::PairedStream& stream,
                 const ClassMapping& mapping, nn::Adam<float>& optimizer, const KtOptions& options);

}  // namespace kt::protocol

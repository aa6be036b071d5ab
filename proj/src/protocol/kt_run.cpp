#include "kt/protocol/kt_run.hpp"

#include "kt/error.hpp"
#include "kt/models/model.hpp"
#include "kt/nn/ops.hpp"

namespace kt::protocol {

std::size_t teacher_predict(const models::Model& teacher, const nn::Tensor& x) {
    if (x.shape() != teacher.input_shape())
        fail(Errc::invalid_argument, "teacher expects input " + nn::shape_str(teacher.input_shape()) + ", got " +
                                         nn::shape_str(x.shape()));
    return models::predict_class(teacher, x);
}

OracleTeacher::OracleTeacher(std::vector<std::size_t> labels, std::size_t num_classes)
    : labels_(std::move(labels)), k_(num_classes) {
    for (auto l : labels_) require(l < k_, "oracle label out of range");
}

std::size_t OracleTeacher::predict(const nn::Tensor&, std::size_t source_index) const {
    require(source_index < labels_.size(), "oracle has no label for sample " + std::to_string(source_index));
    return labels_[source_index];
}

std::string label_source_name(LabelSource s) { return s == LabelSource::pseudo ? "pseudo" : "ground_truth"; }

LabelSource parse_label_source(const std::string& s) {
    if (s == "pseudo") return LabelSource::pseudo;
    if (s == "ground_truth") return LabelSource::ground_truth;
    fail(Errc::invalid_argument, "label source must be 'pseudo' or 'ground_truth', got '" + s + "'");
}

bool stop_check(std::span<const metrics::TraceSample> history, const StopCondition& stop) {
    if (!stop.threshold || stop.window == 0 || history.size() < stop.window) return false;
    std::size_t correct = 0;
    for (std::size_t i = history.size() - stop.window; i < history.size(); ++i) correct += history[i].correct;
    return static_cast<double>(correct) / static_cast<double>(stop.window) >= *stop.threshold;
}

int step_case(bool student_correct, bool pseudo_label_correct) {
    if (student_correct) return pseudo_label_correct ? 2 : 1;
    return pseudo_label_correct ? 3 : 4;
}

bool case_is_harmful(int c) { return c == 1 || c == 4; }

std::string stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::stream_exhausted: return "stream_exhausted";
        case StopReason::threshold_met: return "threshold_met";
        case StopReason::aborted: return "aborted";
    }
    return "unknown";
}

RunResult kt_run_with(const TeacherLabelFn& teacher_label, models::Model student,
                      const data::SampleSequence& student_stream, const std::vector<std::size_t>* truth,
                      const ClassMapping& mapping, nn::Adam<float>& optimizer, const KtOptions& options) {
    require(options.trace_interval >= 1 && options.trace_window >= 1, "trace interval and window must be >= 1");
    require(options.stop.cadence >= 1, "stop cadence must be >= 1");
    if (options.stop.threshold)
        require(*options.stop.threshold > 0.0 && *options.stop.threshold <= 1.0, "stop threshold must lie in (0, 1]");
    if (truth && truth->size() != student_stream.size())
        fail(Errc::paired_stream, "ground truth has " + std::to_string(truth->size()) + " labels for " +
                                      std::to_string(student_stream.size()) + " samples");
    if (options.label_source == LabelSource::ground_truth && !truth)
        fail(Errc::invalid_argument, "the ground-truth arm needs ground-truth labels");
    if (mapping.size() != student.num_classes())
        fail(Errc::class_count_mismatch, "mapping has " + std::to_string(mapping.size()) + " classes, student " +
                                             std::to_string(student.num_classes()));

    RunResult result;
    result.trace.interval = options.trace_interval;
    result.trace.window = options.trace_window;
    result.stop_uses_proxy = truth == nullptr;
    result.records.reserve(student_stream.size());
    std::vector<metrics::TraceSample> history;
    history.reserve(student_stream.size());

    try {
        for (std::size_t i = 0; i < student_stream.size(); ++i) {
            StepRecord rec;
            rec.step = i;
            if (options.label_source == LabelSource::pseudo) {
                rec.teacher_prediction = teacher_label(i);
                rec.label = mapping.transform(*rec.teacher_prediction);
            } else {
                rec.label = (*truth)[i];
            }
            const auto outcome = models::train_step_with_prediction(student, student_stream.sample(i), rec.label,
                                                                    optimizer);
            rec.loss = outcome.loss;
            rec.student_prediction = outcome.prediction;
            if (truth) {
                rec.truth = (*truth)[i];
                rec.step_case = step_case(rec.student_prediction == *rec.truth, rec.label == *rec.truth);
                ++result.case_counts[static_cast<std::size_t>(*rec.step_case - 1)];
            }
            const std::size_t reference = rec.truth ? *rec.truth : rec.label;
            history.push_back({rec.student_prediction == reference, rec.loss});
            result.records.push_back(rec);

            const std::size_t done = i + 1;
            if (done % options.trace_interval == 0) metrics::trace_update(result.trace, history);
            if (done % options.stop.cadence == 0 && stop_check(history, options.stop)) {
                result.stop_reason = StopReason::threshold_met;
                break;
            }
        }
    } catch (const Error& e) {
        if (e.code() != Errc::timeout && e.code() != Errc::connection_closed && e.code() != Errc::protocol) throw;
        result.stop_reason = StopReason::aborted;
        result.abort_message = e.what();
    }
    result.student = std::move(student);
    return result;
}

RunResult kt_run(const Teacher& teacher, models::Model student, const data::PairedStream& stream,
                 const ClassMapping& mapping, nn::Adam<float>& optimizer, const KtOptions& options) {
    if (stream.teacher.size() != stream.student.size())
        fail(Errc::paired_stream, "teacher stream has " + std::to_string(stream.teacher.size()) +
                                      " samples, student stream " + std::to_string(stream.student.size()));
    if (teacher.num_classes() != mapping.size())
        fail(Errc::class_count_mismatch, "teacher has " + std::to_string(teacher.num_classes()) +
                                             " classes, mapping " + std::to_string(mapping.size()));
    const std::vector<std::size_t>* truth = stream.truth.student.empty() && stream.size() > 0 ? nullptr
                                                                                              : &stream.truth.student;
    auto label = [&](std::size_t i) { return teacher.predict(stream.teacher.sample(i), stream.teacher.source_index(i)); };
    return kt_run_with(label, std::move(student), stream.student, truth, mapping, optimizer, options);
}

}  // namespace kt::protocol

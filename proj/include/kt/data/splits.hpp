#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "kt/data/dataset.hpp"
#include "kt/protocol/mapping.hpp"

namespace kt::data {

/// Ordered samples with no label access. source_index() is the position in the
/// underlying dataset, used only to key simulated oracles.
class SampleSequence {
public:
    SampleSequence() = default;
    SampleSequence(std::shared_ptr<const Dataset> ds, std::vector<std::size_t> indices);

    std::size_t size() const { return indices_.size(); }
    const nn::Tensor& sample(std::size_t i) const;
    std::size_t source_index(std::size_t i) const { return indices_.at(i); }
    const std::vector<std::size_t>& source_indices() const { return indices_; }

private:
    std::shared_ptr<const Dataset> ds_;
    std::vector<std::size_t> indices_;
};

/// Simulation-only labels kept apart from the sample views.
struct GroundTruth {
    std::vector<std::size_t> teacher;
    std::vector<std::size_t> student;
};

struct PairedStream {
    SampleSequence teacher;
    SampleSequence student;
    GroundTruth truth;

    std::size_t size() const { return teacher.size(); }
    /// Throws paired_stream on length mismatch or when truth.student[i] !=
    /// mapping.transform(truth.teacher[i]) for some i.
    void validate(const protocol::ClassMapping& mapping) const;
};

/// Per-class counts are indexed by teacher class. An empty teacher_pretrain
/// means "all examples not used by the OL set"; an empty ol means "all examples
/// not used for pretraining". At least one must be given.
struct SplitPlan {
    std::vector<std::size_t> teacher_pretrain;
    std::vector<std::size_t> ol;
    std::size_t student_semitrain = 1;
    std::uint64_t seed = 0;
    /// Both datasets index the same underlying examples (for instance one pool
    /// and a resized copy of it); the student then avoids the teacher's picks.
    bool shared_pool = false;
};

struct SplitSummary {
    std::vector<std::size_t> teacher_available, teacher_pretrain, teacher_ol;
    std::vector<std::size_t> student_available, student_semitrain, student_ol;
};

struct Splits {
    LabeledSet teacher_pretrain;
    LabeledSet student_semitrain;
    PairedStream stream;
    SplitSummary summary;
    std::vector<std::size_t> teacher_pretrain_indices;
    std::vector<std::size_t> student_semitrain_indices;
};

/// Samples every subset without replacement. The OL label sequence is shuffled
/// once and each position draws one teacher and one student sample of matching
/// classes. With a shared pool, or when both arguments point at the same
/// dataset, the student draws only from examples the teacher did not take.
Splits build_splits(std::shared_ptr<const Dataset> teacher_ds, std::shared_ptr<const Dataset> student_ds,
                    const protocol::ClassMapping& mapping, const SplitPlan& plan);

}  // namespace kt::data

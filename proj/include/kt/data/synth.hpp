#pragma once

#include <cstdint>
#include <vector>

#include "kt/data/dataset.hpp"

namespace kt::data {

struct SynthSpec {
    std::size_t n_classes = 2;
    std::size_t samples_per_class = 100;
    std::size_t image_size = 8;
    double noise = 0.1;
    double teacher_correctness = 1.0;
    std::uint64_t seed = 0;
};

/// Two independent blob tasks with the same class count. oracle_labels[i] is the
/// label a simulated teacher reports for teacher example i: the true class with
/// probability teacher_correctness, otherwise a uniformly drawn other class.
/// The images do not depend on teacher_correctness.
struct SyntheticPair {
    Dataset teacher;
    Dataset student;
    std::vector<std::size_t> oracle_labels;
};

SyntheticPair synth_task_pair(const SynthSpec& spec);

/// Class prototype of the blob task: a Gaussian bump whose centre sits on a
/// circle at an angle determined by the class.
nn::Tensor blob_prototype(std::size_t cls, std::size_t n_classes, std::size_t image_size, bool student_task);

}  // namespace kt::data

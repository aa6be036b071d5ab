#include "kt/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kt/error.hpp"
#include "kt/nn/rng.hpp"

namespace kt::data {

nn::Tensor blob_prototype(std::size_t cls, std::size_t n_classes, std::size_t image_size, bool student_task) {
    const double n = static_cast<double>(image_size);
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(cls) + (student_task ? 0.5 : 0.0)) /
                         static_cast<double>(n_classes);
    const double radius = (student_task ? 0.22 : 0.30) * n;
    const double sigma = (student_task ? 0.12 : 0.16) * n;
    const double cy = (n - 1) / 2 + radius * std::sin(angle);
    const double cx = (n - 1) / 2 + radius * std::cos(angle);
    nn::Tensor img({image_size, image_size, 1});
    for (std::size_t y = 0; y < image_size; ++y)
        for (std::size_t x = 0; x < image_size; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            img.at(y, x, 0) = static_cast<float>(std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma)));
        }
    return img;
}

namespace {

Dataset make_task(const SynthSpec& spec, bool student_task, nn::Rng& rng) {
    Dataset ds;
    ds.class_names = numbered_class_names(spec.n_classes);
    std::vector<nn::Tensor> protos;
    for (std::size_t c = 0; c < spec.n_classes; ++c)
        protos.push_back(blob_prototype(c, spec.n_classes, spec.image_size, student_task));
    for (std::size_t i = 0; i < spec.samples_per_class; ++i)
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            nn::Tensor img = protos[c];
            for (auto& v : img.values())
                v = std::clamp(v + static_cast<float>(spec.noise * rng.normal()), 0.0f, 1.0f);
            ds.add(std::move(img), c);
        }
    return ds;
}

}  // namespace

SyntheticPair synth_task_pair(const SynthSpec& spec) {
    require(spec.n_classes >= 2, "synthetic tasks need at least two classes");
    require(spec.samples_per_class >= 1, "samples_per_class must be >= 1");
    require(spec.image_size >= 2, "image_size must be >= 2");
    require(spec.noise >= 0.0, "noise must be >= 0");
    require(spec.teacher_correctness >= 0.0 && spec.teacher_correctness <= 1.0,
            "teacher_correctness must lie in [0, 1]");

    nn::Rng base(spec.seed);
    nn::Rng teacher_rng(base.fork_seed()), student_rng(base.fork_seed()), oracle_rng(base.fork_seed());
    SyntheticPair out;
    out.teacher = make_task(spec, false, teacher_rng);
    out.student = make_task(spec, true, student_rng);
    out.oracle_labels.reserve(out.teacher.size());
    for (auto truth : out.teacher.labels) {
        if (oracle_rng.uniform01() < spec.teacher_correctness) {
            out.oracle_labels.push_back(truth);
        } else {
            const auto r = static_cast<std::size_t>(oracle_rng.below(spec.n_classes - 1));
            out.oracle_labels.push_back(r >= truth ? r + 1 : r);
        }
    }
    return out;
}

}  // namespace kt::data

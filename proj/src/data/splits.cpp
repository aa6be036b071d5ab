#include "kt/data/splits.hpp"

#include <algorithm>
#include <span>

#include "kt/error.hpp"
#include "kt/nn/rng.hpp"

namespace kt::data {

SampleSequence::SampleSequence(std::shared_ptr<const Dataset> ds, std::vector<std::size_t> indices)
    : ds_(std::move(ds)), indices_(std::move(indices)) {
    require(ds_ != nullptr || indices_.empty(), "sample sequence without a dataset");
    for (auto i : indices_) require(i < ds_->size(), "sample index " + std::to_string(i) + " out of range");
}

const nn::Tensor& SampleSequence::sample(std::size_t i) const { return ds_->images.at(indices_.at(i)); }

void PairedStream::validate(const protocol::ClassMapping& mapping) const {
    if (teacher.size() != student.size() || truth.teacher.size() != teacher.size() ||
        truth.student.size() != student.size())
        fail(Errc::paired_stream, "stream lengths differ: teacher " + std::to_string(teacher.size()) + ", student " +
                                      std::to_string(student.size()) + ", truth " +
                                      std::to_string(truth.teacher.size()) + "/" +
                                      std::to_string(truth.student.size()));
    for (std::size_t i = 0; i < truth.teacher.size(); ++i)
        if (mapping.transform(truth.teacher[i]) != truth.student[i])
            fail(Errc::paired_stream, "position " + std::to_string(i) + " pairs teacher class " +
                                          std::to_string(truth.teacher[i]) + " with student class " +
                                          std::to_string(truth.student[i]));
}

namespace {

std::string class_label(const Dataset& ds, std::size_t c) { return "class " + std::to_string(c) + " (" + ds.class_names[c] + ")"; }

}  // namespace

Splits build_splits(std::shared_ptr<const Dataset> teacher_ds, std::shared_ptr<const Dataset> student_ds,
                    const protocol::ClassMapping& mapping, const SplitPlan& plan) {
    require(teacher_ds && student_ds, "build_splits: missing dataset");
    const std::size_t k = mapping.size();
    if (teacher_ds->num_classes() != k || student_ds->num_classes() != k)
        fail(Errc::class_count_mismatch, "teacher dataset has " + std::to_string(teacher_ds->num_classes()) +
                                             " classes, student dataset " +
                                             std::to_string(student_ds->num_classes()) + ", mapping " +
                                             std::to_string(k));
    require(!plan.teacher_pretrain.empty() || !plan.ol.empty(), "split plan needs pretrain or OL counts");
    require(plan.teacher_pretrain.empty() || plan.teacher_pretrain.size() == k,
            "teacher_pretrain needs one count per class");
    require(plan.ol.empty() || plan.ol.size() == k, "ol needs one count per class");
    require(plan.student_semitrain >= 1, "student_semitrain must be >= 1");

    const bool shared = plan.shared_pool || teacher_ds == student_ds;
    if (shared && teacher_ds->size() != student_ds->size())
        fail(Errc::dimension_mismatch, "a shared pool needs datasets of equal size");
    nn::Rng rng(plan.seed);
    Splits out;
    auto& sum = out.summary;

    auto t_pools = teacher_ds->indices_by_class();
    for (auto& p : t_pools) rng.shuffle(std::span<std::size_t>(p));
    sum.teacher_available.resize(k);
    sum.teacher_pretrain.resize(k);
    sum.teacher_ol.resize(k);
    std::vector<bool> taken(shared ? teacher_ds->size() : 0, false);
    std::vector<std::vector<std::size_t>> t_ol(k);
    for (std::size_t c = 0; c < k; ++c) {
        const auto avail = t_pools[c].size();
        sum.teacher_available[c] = avail;
        std::size_t pre, ol;
        if (plan.ol.empty()) {
            pre = plan.teacher_pretrain[c];
            if (pre > avail)
                fail(Errc::insufficient_examples, "teacher " + class_label(*teacher_ds, c) + " needs " +
                                                      std::to_string(pre) + " pretrain examples, short by " +
                                                      std::to_string(pre - avail));
            ol = avail - pre;
        } else {
            ol = plan.ol[c];
            pre = plan.teacher_pretrain.empty() ? (avail >= ol ? avail - ol : 0) : plan.teacher_pretrain[c];
            if (pre + ol > avail)
                fail(Errc::insufficient_examples, "teacher " + class_label(*teacher_ds, c) + " needs " +
                                                      std::to_string(pre + ol) + " examples, short by " +
                                                      std::to_string(pre + ol - avail));
        }
        sum.teacher_pretrain[c] = pre;
        sum.teacher_ol[c] = ol;
        t_ol[c].assign(t_pools[c].begin(), t_pools[c].begin() + static_cast<std::ptrdiff_t>(ol));
        const auto pre_begin = t_pools[c].begin() + static_cast<std::ptrdiff_t>(ol);
        out.teacher_pretrain_indices.insert(out.teacher_pretrain_indices.end(), pre_begin,
                                            pre_begin + static_cast<std::ptrdiff_t>(pre));
        if (shared)
            for (std::size_t j = 0; j < ol + pre; ++j) taken[t_pools[c][j]] = true;
    }

    auto s_pools = student_ds->indices_by_class();
    sum.student_available.resize(k);
    sum.student_semitrain.assign(k, plan.student_semitrain);
    sum.student_ol.resize(k);
    std::vector<std::vector<std::size_t>> s_ol(k);
    for (std::size_t s = 0; s < k; ++s) {
        auto& pool = s_pools[s];
        if (shared) std::erase_if(pool, [&](std::size_t i) { return taken[i]; });
        rng.shuffle(std::span<std::size_t>(pool));
        const auto need = plan.student_semitrain + sum.teacher_ol[mapping.inverse(s)];
        sum.student_available[s] = pool.size();
        sum.student_ol[s] = sum.teacher_ol[mapping.inverse(s)];
        if (need > pool.size())
            fail(Errc::insufficient_examples, "student " + class_label(*student_ds, s) + " needs " +
                                                  std::to_string(need) + " examples, short by " +
                                                  std::to_string(need - pool.size()));
        out.student_semitrain_indices.insert(out.student_semitrain_indices.end(), pool.begin(),
                                             pool.begin() + static_cast<std::ptrdiff_t>(plan.student_semitrain));
        s_ol[s].assign(pool.begin() + static_cast<std::ptrdiff_t>(plan.student_semitrain),
                       pool.begin() + static_cast<std::ptrdiff_t>(need));
    }

    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < k; ++c) order.insert(order.end(), sum.teacher_ol[c], c);
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<std::size_t> t_next(k, 0), s_next(k, 0), t_idx, s_idx;
    t_idx.reserve(order.size());
    s_idx.reserve(order.size());
    auto& truth = out.stream.truth;
    for (auto c : order) {
        const auto s = mapping.transform(c);
        t_idx.push_back(t_ol[c][t_next[c]++]);
        s_idx.push_back(s_ol[s][s_next[s]++]);
        truth.teacher.push_back(c);
        truth.student.push_back(s);
    }
    out.stream.teacher = SampleSequence(teacher_ds, std::move(t_idx));
    out.stream.student = SampleSequence(student_ds, std::move(s_idx));
    out.teacher_pretrain = teacher_ds->subset(out.teacher_pretrain_indices);
    out.student_semitrain = student_ds->subset(out.student_semitrain_indices);
    out.stream.validate(mapping);
    return out;
}

}  // namespace kt::data

#include "kt/models/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "kt/nn/ops.hpp"

namespace kt::models {

std::string monitor_name(Monitor m) { return m == Monitor::loss ? "loss" : "val_loss"; }

Monitor parse_monitor(const std::string& s) {
    if (s == "loss") return Monitor::loss;
    if (s == "val_loss") return Monitor::val_loss;
    fail(Errc::invalid_argument, "unknown checkpoint monitor '" + s + "'");
}

void TrainSettings::validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(validation_ratio >= 0.0 && validation_ratio < 1.0, "validation_ratio must lie in [0, 1)");
    require((validation_ratio > 0.0) == (monitor == Monitor::val_loss),
            "validation_ratio > 0 is required exactly when monitoring val_loss");
}

SplitIndices stratified_split(const std::vector<std::size_t>& labels, double ratio, nn::Rng& rng) {
    require(ratio >= 0.0 && ratio < 1.0, "validation ratio must lie in [0, 1)");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    const auto n = labels.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));

    struct Quota {
        std::size_t cls, take, cap;
        double frac;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [cls, idx] : by_class) {
        const double exact = static_cast<double>(idx.size()) * ratio;
        const std::size_t cap = idx.size() - 1;
        const std::size_t take = std::min(cap, static_cast<std::size_t>(std::floor(exact)));
        quotas.push_back({cls, take, cap, exact - std::floor(exact)});
        assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return quotas[a].frac > quotas[b].frac; });
    for (bool progress = true; assigned < n_val && progress;) {
        progress = false;
        for (auto q : order) {
            if (assigned >= n_val) break;
            if (quotas[q].take < quotas[q].cap) {
                ++quotas[q].take;
                ++assigned;
                progress = true;
            }
        }
    }

    SplitIndices out;
    for (const auto& q : quotas) {
        auto idx = by_class[q.cls];
        rng.shuffle(std::span<std::size_t>(idx));
        out.validation.insert(out.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q.take));
        out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(q.take), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    return out;
}

Evaluation evaluate_loss(const Model& model, const data::LabeledSet& examples, const std::vector<std::size_t>& subset) {
    require(!subset.empty(), "evaluate_loss: empty example set");
    double loss = 0.0;
    std::size_t correct = 0;
    for (auto i : subset) {
        const auto& ex = examples.at(i);
        const auto logits = model.predict_logits(ex.image);
        loss += nn::scc_loss<float>(logits.values(), ex.label).loss;
        if (nn::argmax<float>(logits.values()) == ex.label) ++correct;
    }
    const auto n = static_cast<double>(subset.size());
    return {loss / n, static_cast<double>(correct) / n};
}

Evaluation evaluate_loss(const Model& model, const data::LabeledSet& examples) {
    std::vector<std::size_t> all(examples.size());
    std::iota(all.begin(), all.end(), 0);
    return evaluate_loss(model, examples, all);
}

FitResult fit(Model& model, const data::LabeledSet& examples, const TrainSettings& settings, nn::Rng& rng) {
    require(!examples.empty(), "fit: empty dataset");
    settings.validate();
    for (const auto& ex : examples)
        require(ex.label < model.num_classes(), "fit: label " + std::to_string(ex.label) + " out of range");

    SplitIndices split;
    if (settings.validation_ratio > 0.0) {
        std::vector<std::size_t> labels;
        labels.reserve(examples.size());
        for (const auto& ex : examples) labels.push_back(ex.label);
        split = stratified_split(labels, settings.validation_ratio, rng);
        require(!split.validation.empty(), "fit: validation split is empty");
    } else {
        split.train.resize(examples.size());
        std::iota(split.train.begin(), split.train.end(), 0);
    }

    FitResult result;
    result.train_size = split.train.size();
    result.validation_size = split.validation.size();
    nn::Adam<float> optimizer(settings.adam);
    std::optional<Model> best;
    std::vector<std::size_t> order = split.train;

    for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
            const std::size_t end = std::min(order.size(), start + settings.batch_size);
            const float scale = 1.0f / static_cast<float>(end - start);
            model.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = examples[order[k]];
                const auto logits = model.forward(ex.image, Mode::train);
                auto l = nn::scc_loss<float>(logits.values(), ex.label);
                batch_loss += l.loss;
                if (nn::argmax<float>(logits.values()) == ex.label) ++correct;
                for (auto& g : l.grad) g *= scale;
                model.backward(nn::Tensor(logits.shape(), std::move(l.grad)));
            }
            auto params = model.params();
            optimizer.step(params);
            loss_sum += batch_loss / static_cast<double>(end - start);
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(batches);
        rec.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (!split.validation.empty()) {
            const auto val = evaluate_loss(model, examples, split.validation);
            rec.val_loss = val.loss;
            rec.val_accuracy = val.accuracy;
        }
        const double monitored = settings.monitor == Monitor::loss ? rec.loss : *rec.val_loss;
        if (!best || monitored < result.best_value) {
            best = model;
            result.best_epoch = epoch;
            result.best_value = monitored;
        }
        result.history.push_back(rec);
    }
    result.optimizer_steps = optimizer.steps();
    result.best = std::move(*best);
    return result;
}

}  // namespace kt::models

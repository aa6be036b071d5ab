#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kt/data/example.hpp"
#include "kt/models/model.hpp"
#include "kt/nn/adam.hpp"
#include "kt/nn/rng.hpp"

namespace kt::models {

enum class Monitor { loss, val_loss };

std::string monitor_name(Monitor m);
Monitor parse_monitor(const std::string& s);

/// Loss is always sparse categorical cross-entropy and the optimizer Adam.
struct TrainSettings {
    std::size_t epochs = 10;
    std::size_t batch_size = 1;
    double validation_ratio = 0.0;
    Monitor monitor = Monitor::loss;
    nn::AdamConfig adam{};

    /// Throws invalid-argument unless validation_ratio > 0 exactly when monitoring val_loss.
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;      // mean train-mode batch loss over the epoch
    double accuracy = 0.0;  // train-mode accuracy over the epoch
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
};

struct FitResult {
    std::vector<EpochRecord> history;
    Model best;                  // parameters at the end of the best epoch
    std::size_t best_epoch = 0;  // 1-based
    double best_value = 0.0;     // monitored value of the best epoch
    std::size_t optimizer_steps = 0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Stratified split: the validation set has round(n * ratio) examples, drawn per
/// class in proportion to class size (largest remainder), never taking a
/// class's last training example.
SplitIndices stratified_split(const std::vector<std::size_t>& labels, double ratio, nn::Rng& rng);

/// Shuffled mini-batch training with ModelCheckpoint semantics: after every
/// epoch the monitored value is compared and the best parameters retained;
/// ties keep the earlier epoch. `model` ends with its final-epoch parameters.
FitResult fit(Model& model, const data::LabeledSet& examples, const TrainSettings& settings, nn::Rng& rng);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Infer-mode mean loss and accuracy.
Evaluation evaluate_loss(const Model& model, const data::LabeledSet& examples);
Evaluation evaluate_loss(const Model& model, const data::LabeledSet& examples, const std::vector<std::size_t>& subset);

}  // namespace kt::models

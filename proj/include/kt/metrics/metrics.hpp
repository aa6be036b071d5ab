#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kt::metrics {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

    std::size_t classes() const { return k_; }
    void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * k_ + predicted); }
    std::uint64_t total() const;
    std::uint64_t correct() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix score(std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k);
ConfusionMatrix score(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t k);

struct Averages {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    double accuracy = 0.0;
    Averages micro;
    Averages macro;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::string> class_names;
    ConfusionMatrix confusion;
};

/// Per-class ratios with a zero denominator are 0. Macro values average over all
/// k classes. Throws invalid_argument on an empty matrix.
MetricsReport report(const ConfusionMatrix& cm, std::vector<std::string> class_names = {});

struct TracePoint {
    std::size_t step = 0;  // number of samples trained when recorded
    double rolling_accuracy = 0.0;
    double rolling_loss = 0.0;
    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct TrainingTrace {
    std::size_t interval = 100;
    std::size_t window = 100;
    std::vector<TracePoint> points;

    friend bool operator==(const TrainingTrace&, const TrainingTrace&) = default;
};

struct TraceSample {
    bool correct = false;
    double loss = 0.0;
};

/// `history` is every sample so far in step order. Appends one point for each
/// completed interval not yet recorded; each point averages the last
/// min(window, step) samples.
void trace_update(TrainingTrace& trace, std::span<const TraceSample> history);

/// Six significant digits.
std::string format_value(double v);

void write_report_csv(const MetricsReport& r, const std::filesystem::path& path);
void write_report_json(const MetricsReport& r, const std::filesystem::path& path);
void write_trace_csv(const TrainingTrace& t, const std::filesystem::path& path);
void write_trace_json(const TrainingTrace& t, const std::filesystem::path& path);

MetricsReport read_report_csv(const std::filesystem::path& path);
MetricsReport read_report_json(const std::filesystem::path& path);
TrainingTrace read_trace_csv(const std::filesystem::path& path);

std::string report_json_text(const MetricsReport& r);

}  // namespace kt::metrics

#include "kt/metrics/metrics.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kt/error.hpp"

namespace kt::metrics {

namespace fs = std::filesystem;
using nlohmann::json;

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
    require(truth < k_ && predicted < k_, "label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                                              ") outside " + std::to_string(k_) + " classes");
    counts_[truth * k_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::correct() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += counts_[i * k_ + i];
    return s;
}

ConfusionMatrix score(std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k) {
    ConfusionMatrix cm(k);
    for (const auto& [t, p] : pairs) cm.add(t, p);
    return cm;
}

ConfusionMatrix score(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t k) {
    require(truth.size() == predicted.size(), "score: truth and prediction lengths differ");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

MetricsReport report(const ConfusionMatrix& cm, std::vector<std::string> class_names) {
    const auto k = cm.classes();
    const auto total = cm.total();
    require(total > 0, "cannot report on an empty confusion matrix");
    if (class_names.empty())
        for (std::size_t i = 0; i < k; ++i) class_names.push_back(std::to_string(i));
    require(class_names.size() == k, "class name count differs from the matrix size");

    MetricsReport r;
    r.class_names = std::move(class_names);
    r.confusion = cm;
    std::uint64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const auto tp = cm.at(c, c);
        std::uint64_t fp = 0, fn = 0;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn;
        const double p = ratio(tp, tp + fp), rc = ratio(tp, tp + fn);
        r.precision.push_back(p);
        r.recall.push_back(rc);
        r.f1.push_back(f1_of(p, rc));
    }
    r.accuracy = ratio(cm.correct(), total);
    r.micro.precision = ratio(tp_sum, tp_sum + fp_sum);
    r.micro.recall = ratio(tp_sum, tp_sum + fn_sum);
    r.micro.f1 = ratio(2 * tp_sum, 2 * tp_sum + fp_sum + fn_sum);
    for (std::size_t c = 0; c < k; ++c) {
        r.macro.precision += r.precision[c];
        r.macro.recall += r.recall[c];
        r.macro.f1 += r.f1[c];
    }
    r.macro.precision /= static_cast<double>(k);
    r.macro.recall /= static_cast<double>(k);
    r.macro.f1 /= static_cast<double>(k);
    return r;
}

void trace_update(TrainingTrace& trace, std::span<const TraceSample> history) {
    require(trace.interval >= 1 && trace.window >= 1, "trace interval and window must be >= 1");
    std::size_t next = trace.points.empty() ? trace.interval : trace.points.back().step + trace.interval;
    for (; next <= history.size(); next += trace.interval) {
        const std::size_t begin = next > trace.window ? next - trace.window : 0;
        std::size_t correct = 0;
        double loss = 0.0;
        for (std::size_t i = begin; i < next; ++i) {
            correct += history[i].correct ? 1 : 0;
            loss += history[i].loss;
        }
        const auto n = static_cast<double>(next - begin);
        trace.points.push_back({next, static_cast<double>(correct) / n, loss / n});
    }
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

double rounded(double v) { return std::stod(format_value(v)); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back().push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back().push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back().push_back(c);
        }
    }
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header)
        fail(Errc::io, path.string() + ": expected header '" + header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split_csv_line(line));
    return rows;
}

double parse_number(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(Errc::io, "malformed number '" + s + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(Errc::io, "write failed for " + path.string());
}

json averages_json(const Averages& a) {
    return {{"precision", rounded(a.precision)}, {"recall", rounded(a.recall)}, {"f1", rounded(a.f1)}};
}

}  // namespace

void write_report_csv(const MetricsReport& r, const fs::path& path) {
    std::ostringstream out;
    out << "class,precision,recall,f1\n";
    for (std::size_t c = 0; c < r.f1.size(); ++c)
        out << csv_field(r.class_names[c]) << ',' << format_value(r.precision[c]) << ','
            << format_value(r.recall[c]) << ',' << format_value(r.f1[c]) << '\n';
    out << "accuracy," << format_value(r.accuracy) << ",,\n";
    out << "micro," << format_value(r.micro.precision) << ',' << format_value(r.micro.recall) << ','
        << format_value(r.micro.f1) << '\n';
    out << "macro," << format_value(r.macro.precision) << ',' << format_value(r.macro.recall) << ','
        << format_value(r.macro.f1) << '\n';
    write_text(path, out.str());
}

std::string report_json_text(const MetricsReport& r) {
    json classes = json::array();
    for (std::size_t c = 0; c < r.f1.size(); ++c)
        classes.push_back({{"class", r.class_names[c]},
                           {"precision", rounded(r.precision[c])},
                           {"recall", rounded(r.recall[c])},
                           {"f1", rounded(r.f1[c])}});
    json confusion = json::array();
    for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < r.confusion.classes(); ++p) row.push_back(r.confusion.at(t, p));
        confusion.push_back(row);
    }
    json j = {{"accuracy", rounded(r.accuracy)},
              {"micro", averages_json(r.micro)},
              {"macro", averages_json(r.macro)},
              {"classes", classes},
              {"confusion", confusion}};
    return j.dump(2) + "\n";
}

void write_report_json(const MetricsReport& r, const fs::path& path) { write_text(path, report_json_text(r)); }

void write_trace_csv(const TrainingTrace& t, const fs::path& path) {
    std::ostringstream out;
    out << "step,rolling_accuracy,rolling_loss\n";
    for (const auto& p : t.points)
        out << p.step << ',' << format_value(p.rolling_accuracy) << ',' << format_value(p.rolling_loss) << '\n';
    write_text(path, out.str());
}

void write_trace_json(const TrainingTrace& t, const fs::path& path) {
    json points = json::array();
    for (const auto& p : t.points)
        points.push_back({{"step", p.step},
                          {"rolling_accuracy", rounded(p.rolling_accuracy)},
                          {"rolling_loss", rounded(p.rolling_loss)}});
    write_text(path, json{{"interval", t.interval}, {"window", t.window}, {"points", points}}.dump(2) + "\n");
}

MetricsReport read_report_csv(const fs::path& path) {
    const auto rows = read_csv(path, "class,precision,recall,f1");
    if (rows.size() < 3) fail(Errc::io, path.string() + ": missing summary rows");
    MetricsReport r;
    const auto n_classes = rows.size() - 3;
    for (std::size_t i = 0; i < n_classes; ++i) {
        if (rows[i].size() != 4) fail(Errc::io, path.string() + ": malformed class row");
        r.class_names.push_back(rows[i][0]);
        r.precision.push_back(parse_number(rows[i][1]));
        r.recall.push_back(parse_number(rows[i][2]));
        r.f1.push_back(parse_number(rows[i][3]));
    }
    const auto& acc = rows[n_classes];
    const auto& mic = rows[n_classes + 1];
    const auto& mac = rows[n_classes + 2];
    if (acc.size() != 4 || acc[0] != "accuracy" || mic.size() != 4 || mic[0] != "micro" || mac.size() != 4 ||
        mac[0] != "macro")
        fail(Errc::io, path.string() + ": malformed summary rows");
    r.accuracy = parse_number(acc[1]);
    r.micro = {parse_number(mic[1]), parse_number(mic[2]), parse_number(mic[3])};
    r.macro = {parse_number(mac[1]), parse_number(mac[2]), parse_number(mac[3])};
    return r;
}

MetricsReport read_report_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    try {
        const auto j = json::parse(in);
        MetricsReport r;
        r.accuracy = j.at("accuracy").get<double>();
        auto averages = [&](const char* key) {
            const auto& a = j.at(key);
            return Averages{a.at("precision").get<double>(), a.at("recall").get<double>(), a.at("f1").get<double>()};
        };
        r.micro = averages("micro");
        r.macro = averages("macro");
        for (const auto& c : j.at("classes")) {
            r.class_names.push_back(c.at("class").get<std::string>());
            r.precision.push_back(c.at("precision").get<double>());
            r.recall.push_back(c.at("recall").get<double>());
            r.f1.push_back(c.at("f1").get<double>());
        }
        const auto& conf = j.at("confusion");
        r.confusion = ConfusionMatrix(conf.size());
        for (std::size_t t = 0; t < conf.size(); ++t)
            for (std::size_t p = 0; p < conf.size(); ++p)
                r.confusion.add(t, p, conf.at(t).at(p).get<std::uint64_t>());
        return r;
    } catch (const json::exception& e) {
        fail(Errc::io, path.string() + ": " + e.what());
    }
}

TrainingTrace read_trace_csv(const fs::path& path) {
    TrainingTrace t;
    for (const auto& row : read_csv(path, "step,rolling_accuracy,rolling_loss")) {
        if (row.size() != 3) fail(Errc::io, path.string() + ": malformed trace row");
        t.points.push_back({static_cast<std::size_t>(parse_number(row[0])), parse_number(row[1]),
                            parse_number(row[2])});
    }
    if (t.points.size() >= 1) t.interval = t.points.front().step;
    return t;
}

}  // namespace kt::metrics

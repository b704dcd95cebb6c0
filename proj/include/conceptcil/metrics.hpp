#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "conceptcil/concept_pool.hpp"
#include "conceptcil/fusion_head.hpp"

namespace conceptcil {

struct StageMetrics {
    std::size_t stage = 0;
    double accuracy = 0.0;
    double mcr = 0.0;
    std::vector<std::optional<double>> per_class_recall;  // nullopt: no test samples
    std::vector<std::size_t> class_counts;

    std::size_t n_seen_classes() const noexcept { return per_class_recall.size(); }
};

/// Accuracy and mean class recall from a prediction table over `num_classes` classes.
/// Classes without test samples are left out of the MCR mean.
inline StageMetrics compute_stage_metrics(std::span<const std::size_t> predicted,
                                          std::span<const std::size_t> truth, std::size_t num_classes) {
    if (predicted.size() != truth.size()) throw EvaluationError("metrics: prediction/label count mismatch");
    if (truth.empty()) throw EvaluationError("metrics: empty test set");
    std::vector<std::size_t> correct(num_classes, 0), count(num_classes, 0);
    std::size_t total_correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes) {
            throw EvaluationError("metrics: test label " + std::to_string(truth[i]) +
                                  " is not a seen class");
        }
        ++count[truth[i]];
        if (predicted[i] == truth[i]) {
            ++correct[truth[i]];
            ++total_correct;
        }
    }
    StageMetrics m;
    m.accuracy = static_cast<double>(total_correct) / static_cast<double>(truth.size());
    m.class_counts = count;
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (count[c] == 0) {
            m.per_class_recall.emplace_back(std::nullopt);
            continue;
        }
        const double r = static_cast<double>(correct[c]) / static_cast<double>(count[c]);
        m.per_class_recall.emplace_back(r);
        recall_sum += r;
        ++present;
    }
    m.mcr = recall_sum / static_cast<double>(present);
    return m;
}

inline StageMetrics evaluate_stage(const FusionParams& p, const Matrix& h, const Matrix& features,
                                   std::span<const std::size_t> labels, double alpha) {
    if (features.rows() == 0) throw EvaluationError("evaluate_stage: empty test set");
    const Prediction pred = predict(p, features, h, alpha);
    return compute_stage_metrics(pred.classes, labels, p.num_classes());
}

struct AggregateMetrics {
    double avg_accuracy = 0.0;
    double last_accuracy = 0.0;
    double avg_mcr = 0.0;
    double last_mcr = 0.0;
};

inline AggregateMetrics aggregate(std::span<const StageMetrics> stages) {
    if (stages.empty()) throw EvaluationError("aggregate: no stages");
    AggregateMetrics a;
    for (const auto& s : stages) {
        a.avg_accuracy += s.accuracy;
        a.avg_mcr += s.mcr;
    }
    a.avg_accuracy /= static_cast<double>(stages.size());
    a.avg_mcr /= static_cast<double>(stages.size());
    a.last_accuracy = stages.back().accuracy;
    a.last_mcr = stages.back().mcr;
    return a;
}

inline std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
    return buf;
}

/// stage,accuracy,mcr,n_seen_classes with metrics in percent.
inline std::string metrics_csv(std::span<const StageMetrics> stages) {
    std::string out = "stage,accuracy,mcr,n_seen_classes\n";
    for (const auto& s : stages) {
        out += std::to_string(s.stage) + "," + percent(s.accuracy) + "," + percent(s.mcr) + "," +
               std::to_string(s.n_seen_classes()) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-class mean attention over concepts, paired with the ground-truth concept mask.

struct AttentionExport {
    std::vector<std::string> class_names;    // seen classes, in class-id order
    std::vector<std::string> concept_texts;  // pool order
    Matrix mean_attention;                   // C_seen × N, NaN rows for classes without samples
    Matrix mask;                             // C_seen × N, 1 iff concept ∈ S(c)
    std::vector<std::size_t> counts;

    std::vector<std::string> empty_classes() const {
        std::vector<std::string> out;
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c] == 0) out.push_back(class_names[c]);
        return out;
    }
};

inline AttentionExport attention_matrix(const FusionParams& p, const ConceptPool& pool,
                                        const Matrix& features, std::span<const std::size_t> labels,
                                        std::span<const std::string> class_names) {
    const std::size_t c_seen = p.num_classes();
    if (class_names.size() < c_seen) throw EvaluationError("attention_matrix: missing class names");
    const Matrix& h = pool.features();
    const std::size_t n = h.rows();
    AttentionExport out;
    out.class_names.assign(class_names.begin(), class_names.begin() + static_cast<std::ptrdiff_t>(c_seen));
    for (const auto& c : pool.concepts()) out.concept_texts.push_back(c.text);
    out.mean_attention = Matrix(c_seen, n);
    out.mask = Matrix(c_seen, n);
    out.counts.assign(c_seen, 0);
    if (features.rows() > 0) {
        const ForwardTrace t = forward(p, features, h);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= c_seen) throw EvaluationError("attention_matrix: label is not a seen class");
            ++out.counts[labels[i]];
            for (std::size_t j = 0; j < n; ++j) out.mean_attention(labels[i], j) += t.attention(i, j);
        }
    }
    for (std::size_t c = 0; c < c_seen; ++c) {
        for (std::size_t j = 0; j < n; ++j) {
            out.mean_attention(c, j) = out.counts[c] == 0
                                           ? std::numeric_limits<double>::quiet_NaN()
                                           : out.mean_attention(c, j) / static_cast<double>(out.counts[c]);
        }
        for (std::size_t id : pool.class_concepts(out.class_names[c])) out.mask(c, id) = 1.0;
    }
    return out;
}

namespace detail {
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

/// Header: class, attn:<concept>..., mask:<concept>..., n_samples. A leading '#' line lists
/// classes with no test samples (their attention cells are "nan").
inline std::string attention_csv(const AttentionExport& e) {
    std::ostringstream out;
    const auto empty = e.empty_classes();
    if (!empty.empty()) {
        out << "# classes_without_test_samples=";
        for (std::size_t i = 0; i < empty.size(); ++i) out << (i ? ";" : "") << empty[i];
        out << "\n";
    }
    out << "class";
    for (const auto& t : e.concept_texts) out << "," << detail::csv_field("attn:" + t);
    for (const auto& t : e.concept_texts) out << "," << detail::csv_field("mask:" + t);
    out << ",n_samples\n";
    for (std::size_t c = 0; c < e.class_names.size(); ++c) {
        out << detail::csv_field(e.class_names[c]);
        for (std::size_t j = 0; j < e.concept_texts.size(); ++j)
            out << "," << detail::format_real(e.mean_attention(c, j));
        for (std::size_t j = 0; j < e.concept_texts.size(); ++j) out << "," << (e.mask(c, j) > 0 ? 1 : 0);
        out << "," << e.counts[c] << "\n";
    }
    return out.str();
}

}  // namespace conceptcil

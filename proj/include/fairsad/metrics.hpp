#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fairsad {

// All metrics are percentages in [0, 100], computed over `nodes`.

double delta_dp(std::span<const int> predictions, std::span<const int> sensitive,
                std::span<const std::size_t> nodes);
double delta_eo(std::span<const int> predictions, std::span<const int> labels,
                std::span<const int> sensitive, std::span<const std::size_t> nodes);
// Mann-Whitney statistic, ties count one half.
double auc(std::span<const double> scores, std::span<const int> labels,
           std::span<const std::size_t> nodes);
// 0 when precision + recall is 0.
double f1(std::span<const int> predictions, std::span<const int> labels,
          std::span<const std::size_t> nodes);

// sigmoid(logit) >= threshold, i.e. logit >= logit(threshold).
std::vector<int> threshold_predictions(std::span<const double> logits, double threshold = 0.5);

struct Metrics {
    double auc = 0.0;
    double f1 = 0.0;
    double delta_dp = 0.0;
    double delta_eo = 0.0;
};

Metrics compute_metrics(std::span<const double> logits, std::span<const int> labels,
                        std::span<const int> sensitive, std::span<const std::size_t> nodes);

struct MetricSummary {
    std::vector<double> per_seed;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};

MetricSummary summarize(std::vector<double> values);

struct MetricsReport {
    MetricSummary auc;
    MetricSummary f1;
    MetricSummary delta_dp;
    MetricSummary delta_eo;

    static MetricsReport aggregate(std::span<const Metrics> runs);
    // Pairs of (name, summary) in a fixed order.
    std::vector<std::pair<std::string, const MetricSummary*>> rows() const;
};

}  // namespace fairsad

#include "fairsad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fairsad {

namespace {

void check_index(std::size_t v, std::size_t n, const char* what) {
    if (v >= n) {
        throw std::out_of_range(std::string(what) + ": node " + std::to_string(v) +
                                " outside " + std::to_string(n) + " entries");
    }
}

double rate_gap(std::size_t hits0, std::size_t count0, std::size_t hits1, std::size_t count1) {
    const double r0 = static_cast<double>(hits0) / static_cast<double>(count0);
    const double r1 = static_cast<double>(hits1) / static_cast<double>(count1);
    return 100.0 * std::abs(r0 - r1);
}

}  // namespace

double delta_dp(std::span<const int> predictions, std::span<const int> sensitive,
                std::span<const std::size_t> nodes) {
    std::size_t count[2] = {0, 0};
    std::size_t hits[2] = {0, 0};
    for (const std::size_t v : nodes) {
        check_index(v, std::min(predictions.size(), sensitive.size()), "delta_dp");
        const int g = sensitive[v] == 1 ? 1 : 0;
        ++count[g];
        hits[g] += predictions[v] == 1 ? 1 : 0;
    }
    if (count[0] == 0 || count[1] == 0) {
        throw std::invalid_argument("delta_dp: empty sensitive group");
    }
    return rate_gap(hits[0], count[0], hits[1], count[1]);
}

double delta_eo(std::span<const int> predictions, std::span<const int> labels,
                std::span<const int> sensitive, std::span<const std::size_t> nodes) {
    std::size_t count[2] = {0, 0};
    std::size_t hits[2] = {0, 0};
    const std::size_t n = std::min({predictions.size(), labels.size(), sensitive.size()});
    for (const std::size_t v : nodes) {
        check_index(v, n, "delta_eo");
        if (labels[v] != 1) {
            continue;
        }
        const int g = sensitive[v] == 1 ? 1 : 0;
        ++count[g];
        hits[g] += predictions[v] == 1 ? 1 : 0;
    }
    if (count[0] == 0 || count[1] == 0) {
        throw std::invalid_argument("delta_eo: a sensitive group has no positive labels");
    }
    return rate_gap(hits[0], count[0], hits[1], count[1]);
}

double auc(std::span<const double> scores, std::span<const int> labels,
           std::span<const std::size_t> nodes) {
    std::vector<std::pair<double, int>> items;
    items.reserve(nodes.size());
    for (const std::size_t v : nodes) {
        check_index(v, std::min(scores.size(), labels.size()), "auc");
        if (std::isnan(scores[v])) {
            throw std::invalid_argument("auc: NaN score at node " + std::to_string(v));
        }
        items.emplace_back(scores[v], labels[v] == 1 ? 1 : 0);
    }
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // Rank-sum with tied blocks sharing credit: each negative in a tied block
    // counts half for every positive in the same block.
    double correct = 0.0;
    std::size_t negatives_below = 0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        std::size_t pos = 0;
        std::size_t neg = 0;
        while (j < items.size() && items[j].first == items[i].first) {
            (items[j].second == 1 ? pos : neg) += 1;
            ++j;
        }
        correct += static_cast<double>(pos) *
                   (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(neg));
        negatives_below += neg;
        positives += pos;
        i = j;
    }
    if (positives == 0 || negatives_below == 0) {
        throw std::invalid_argument("auc: evaluation nodes contain a single class");
    }
    return 100.0 * correct / (static_cast<double>(positives) * static_cast<double>(negatives_below));
}

double f1(std::span<const int> predictions, std::span<const int> labels,
          std::span<const std::size_t> nodes) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (const std::size_t v : nodes) {
        check_index(v, std::min(predictions.size(), labels.size()), "f1");
        const bool p = predictions[v] == 1;
        const bool y = labels[v] == 1;
        tp += p && y ? 1 : 0;
        fp += p && !y ? 1 : 0;
        fn += !p && y ? 1 : 0;
    }
    if (tp == 0) {
        return 0.0;
    }
    return 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::vector<int> threshold_predictions(std::span<const double> logits, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("threshold_predictions: threshold must lie in (0,1)");
    }
    const double cut = std::log(threshold / (1.0 - threshold));
    std::vector<int> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] >= cut ? 1 : 0;
    }
    return out;
}

Metrics compute_metrics(std::span<const double> logits, std::span<const int> labels,
                        std::span<const int> sensitive, std::span<const std::size_t> nodes) {
    const std::vector<int> predicted = threshold_predictions(logits);
    Metrics m;
    m.auc = auc(logits, labels, nodes);
    m.f1 = f1(predicted, labels, nodes);
    m.delta_dp = delta_dp(predicted, sensitive, nodes);
    m.delta_eo = delta_eo(predicted, labels, sensitive, nodes);
    return m;
}

MetricSummary summarize(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("summarize: no values");
    }
    MetricSummary s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double sq = 0.0;
        for (const double v : values) {
            sq += (v - s.mean) * (v - s.mean);
        }
        s.std = std::sqrt(sq / (n - 1.0));
    }
    s.per_seed = std::move(values);
    return s;
}

MetricsReport MetricsReport::aggregate(std::span<const Metrics> runs) {
    std::vector<double> a, f, dp, eo;
    for (const Metrics& m : runs) {
        a.push_back(m.auc);
        f.push_back(m.f1);
        dp.push_back(m.delta_dp);
        eo.push_back(m.delta_eo);
    }
    MetricsReport r;
    r.auc = summarize(std::move(a));
    r.f1 = summarize(std::move(f));
    r.delta_dp = summarize(std::move(dp));
    r.delta_eo = summarize(std::move(eo));
    return r;
}

std::vector<std::pair<std::string, const MetricSummary*>> MetricsReport::rows() const {
    return {{"auc", &auc}, {"f1", &f1}, {"delta_dp", &delta_dp}, {"delta_eo", &delta_eo}};
}

}  // namespace fairsad

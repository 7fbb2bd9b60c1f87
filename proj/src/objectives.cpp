#include "fairsad/objectives.hpp"

#include <cmath>
#include <algorithm>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace fairsad {

namespace {

std::vector<std::size_t> all_nodes(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = i;
    }
    return out;
}

void check_nodes(std::span<const std::size_t> nodes, std::size_t n, const char* what) {
    if (nodes.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty training mask");
    }
    for (const std::size_t v : nodes) {
        if (v >= n) {
            throw std::out_of_range(std::string(what) + ": node " + std::to_string(v) +
                                    " outside " + std::to_string(n) + " rows");
        }
    }
}

std::shared_ptr<ad::RowLabels> binary_targets(std::span<const int> labels,
                                              std::span<const std::size_t> nodes) {
    auto targets = std::make_shared<ad::RowLabels>();
    targets->labels.assign(labels.size(), -1);
    for (const std::size_t v : nodes) {
        if (labels[v] != 0 && labels[v] != 1) {
            throw std::invalid_argument("classification_loss: node " + std::to_string(v) +
                                        " has no binary label");
        }
        targets->labels[v] = labels[v];
    }
    return targets;
}

// Row of (s_i - mean s) / |nodes| on the selected nodes, zero elsewhere.
Matrix centered_weights(std::span<const int> sensitive, std::span<const std::size_t> nodes,
                        std::size_t n) {
    if (sensitive.size() != n) {
        throw std::invalid_argument("mask_covariance_loss: " + std::to_string(sensitive.size()) +
                                    " sensitive values for " + std::to_string(n) + " rows");
    }
    const std::vector<std::size_t> every = nodes.empty() ? all_nodes(n) : std::vector<std::size_t>{};
    const std::span<const std::size_t> chosen = nodes.empty() ? std::span(every) : nodes;
    double mean = 0.0;
    std::size_t ones = 0;
    for (const std::size_t v : chosen) {
        if (v >= n) {
            throw std::out_of_range("mask_covariance_loss: node " + std::to_string(v) +
                                    " out of range");
        }
        ones += sensitive[v] == 1 ? 1 : 0;
        mean += sensitive[v];
    }
    if (ones == 0 || ones == chosen.size()) {
        throw std::invalid_argument("mask_covariance_loss: sensitive attribute has a single group");
    }
    const double count = static_cast<double>(chosen.size());
    mean /= count;
    Matrix w(1, n);
    for (const std::size_t v : chosen) {
        w[v] = (sensitive[v] - mean) / count;
    }
    return w;
}

}  // namespace

LossBreakdown total_loss(double l_c, double l_dc, double l_d, double l_m, double alpha,
                         double beta) {
    if (alpha < 0.0 || beta < 0.0) {
        throw std::invalid_argument("total_loss: alpha and beta must be non-negative");
    }
    LossBreakdown b;
    b.classification = l_c;
    b.distance_correlation = l_dc;
    b.discriminator = l_d;
    b.mask = l_m;
    b.alpha = alpha;
    b.beta = beta;
    b.total = l_c + alpha * (l_dc + l_d) + beta * l_m;
    return b;
}

ad::NodeId classification_loss(ad::Tape& tape, ad::NodeId logits, std::span<const int> labels,
                               std::span<const std::size_t> nodes) {
    check_nodes(nodes, labels.size(), "classification_loss");
    return tape.bce_with_logits(logits, binary_targets(labels, nodes));
}

ad::NodeId dcov_squared(ad::Tape& tape, ad::NodeId a, ad::NodeId b) {
    if (tape.value(a).rows() < 2) {
        throw std::invalid_argument("dcov_squared: need at least 2 rows");
    }
    return tape.sum(tape.distance_covariance(a, b));
}

ad::NodeId dcov_squared_composite(ad::Tape& tape, ad::NodeId a, ad::NodeId b) {
    const Matrix& av = tape.value(a);
    if (av.rows() < 2) {
        throw std::invalid_argument("dcov_squared: need at least 2 rows");
    }
    if (!av.same_shape(tape.value(b))) {
        throw std::invalid_argument("dcov_squared: shape mismatch " + av.shape_string() + " vs " +
                                    tape.value(b).shape_string());
    }
    // av refers into the tape, which grows below.
    const std::size_t cols = av.cols();
    std::vector<ad::NodeId> terms;
    for (std::size_t j = 0; j < cols; ++j) {
        const ad::NodeId ca = tape.double_center(tape.pairwise_distance(tape.slice_cols(a, j, j + 1)));
        const ad::NodeId cb = tape.double_center(tape.pairwise_distance(tape.slice_cols(b, j, j + 1)));
        terms.push_back(tape.mean(tape.mul(ca, cb)));
    }
    ad::NodeId total = terms.front();
    for (std::size_t j = 1; j < terms.size(); ++j) {
        total = tape.add(total, terms[j]);
    }
    return total;
}

ad::NodeId distance_correlation_loss(ad::Tape& tape, ad::NodeId masked, std::size_t channels) {
    if (channels == 0) {
        throw std::invalid_argument("distance_correlation_loss: channels must be >= 1");
    }
    const std::size_t width = tape.value(masked).cols() / channels;
    if (width * channels != tape.value(masked).cols()) {
        throw std::invalid_argument("distance_correlation_loss: width " +
                                    std::to_string(tape.value(masked).cols()) +
                                    " not divisible by " + std::to_string(channels));
    }
    std::vector<ad::NodeId> blocks;
    std::vector<ad::NodeId> self;
    for (std::size_t k = 0; k < channels; ++k) {
        blocks.push_back(tape.slice_cols(masked, k * width, (k + 1) * width));
    }
    if (channels > 1) {
        for (std::size_t k = 0; k < channels; ++k) {
            self.push_back(dcov_squared(tape, blocks[k], blocks[k]));
        }
    }
    std::optional<ad::NodeId> total;
    for (std::size_t k1 = 0; k1 < channels; ++k1) {
        for (std::size_t k2 = k1 + 1; k2 < channels; ++k2) {
            const ad::NodeId denom = tape.sqrt(tape.relu(tape.mul(self[k1], self[k2])));
            if (!(tape.scalar(denom) >= kDcorGuard)) {
                continue;
            }
            const ad::NodeId term = tape.divide(dcov_squared(tape, blocks[k1], blocks[k2]), denom);
            total = total ? tape.add(*total, term) : term;
        }
    }
    return total ? *total : tape.constant(Matrix(1, 1, 0.0));
}

ad::NodeId discriminator_loss(ad::Tape& tape, std::span<const ad::NodeId> channel_logits,
                              std::span<const std::size_t> nodes) {
    if (channel_logits.empty()) {
        throw std::invalid_argument("discriminator_loss: no channels");
    }
    const std::size_t n = tape.value(channel_logits.front()).rows();
    check_nodes(nodes, n, "discriminator_loss");
    if (channel_logits.size() == 1) {
        return tape.constant(Matrix(1, 1, 0.0));
    }
    std::optional<ad::NodeId> total;
    for (std::size_t k = 0; k < channel_logits.size(); ++k) {
        auto targets = std::make_shared<ad::RowLabels>();
        targets->labels.assign(n, -1);
        for (const std::size_t v : nodes) {
            targets->labels[v] = static_cast<int>(k);
        }
        const ad::NodeId term = tape.softmax_cross_entropy(channel_logits[k], std::move(targets));
        total = total ? tape.add(*total, term) : term;
    }
    return *total;
}

ad::NodeId mask_covariance_loss(ad::Tape& tape, ad::NodeId masked,
                                std::span<const int> sensitive,
                                std::span<const std::size_t> nodes) {
    const ad::NodeId w = tape.constant(centered_weights(sensitive, nodes, tape.value(masked).rows()));
    return tape.sum(tape.abs(tape.matmul(w, masked)));
}

LossNodes combine_losses(ad::Tape& tape, ad::NodeId l_c, ad::NodeId l_dc, ad::NodeId l_d,
                         ad::NodeId l_m, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) {
        throw std::invalid_argument("total_loss: alpha and beta must be non-negative");
    }
    const ad::NodeId macro = tape.scale(tape.add(l_dc, l_d), alpha);
    const ad::NodeId total = tape.add(tape.add(l_c, macro), tape.scale(l_m, beta));
    return {l_c, l_dc, l_d, l_m, total};
}

double classification_loss(const Matrix& logits, std::span<const int> labels,
                           std::span<const std::size_t> nodes) {
    ad::Tape tape;
    return tape.scalar(classification_loss(tape, tape.constant(logits), labels, nodes));
}

double dcov_squared(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("dcov_squared: shape mismatch " + a.shape_string() + " vs " +
                                    b.shape_string());
    }
    if (a.rows() < 2) {
        throw std::invalid_argument("dcov_squared: need at least 2 rows");
    }
    const Matrix at = a.transpose();
    const Matrix bt = b.transpose();
    double total = 0.0;
    for (std::size_t j = 0; j < at.rows(); ++j) {
        total += ad::kernels::column_distance_covariance(at.row(j), bt.row(j));
    }
    return total;
}

double distance_correlation(const Matrix& a, const Matrix& b) {
    const double denom = std::sqrt(std::max(0.0, dcov_squared(a, a) * dcov_squared(b, b)));
    if (!(denom >= kDcorGuard)) {
        return 0.0;
    }
    return dcov_squared(a, b) / denom;
}

double distance_correlation_loss(const Matrix& masked, std::size_t channels) {
    ad::Tape tape;
    return tape.scalar(distance_correlation_loss(tape, tape.constant(masked), channels));
}

double discriminator_loss(std::span<const Matrix> channel_logits,
                          std::span<const std::size_t> nodes) {
    ad::Tape tape;
    std::vector<ad::NodeId> ids;
    for (const Matrix& m : channel_logits) {
        ids.push_back(tape.constant(m));
    }
    return tape.scalar(discriminator_loss(tape, ids, nodes));
}

double mask_covariance_loss(const Matrix& masked, std::span<const int> sensitive,
                            std::span<const std::size_t> nodes) {
    double total = 0.0;
    for (const double c : column_covariance_with(masked, sensitive, nodes)) {
        total += std::abs(c);
    }
    return total;
}

std::vector<double> column_covariance_with(const Matrix& values, std::span<const int> sensitive,
                                           std::span<const std::size_t> nodes) {
    const Matrix w = centered_weights(sensitive, nodes, values.rows());
    const Matrix cov = matmul(w, values);
    return {cov.data().begin(), cov.data().end()};
}

}  // namespace fairsad

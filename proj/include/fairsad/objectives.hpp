#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fairsad/matrix.hpp"
#include "fairsad/tape.hpp"

namespace fairsad {

struct LossBreakdown {
    double classification = 0.0;         // L_c
    double distance_correlation = 0.0;  // L_dc
    double discriminator = 0.0;          // L_d
    double mask = 0.0;                   // L_m
    double total = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

// total = L_c + alpha (L_dc + L_d) + beta L_m. Throws on negative weights.
LossBreakdown total_loss(double l_c, double l_dc, double l_d, double l_m, double alpha,
                         double beta);

// Denominators below this make a channel pair contribute nothing to L_dc.
inline constexpr double kDcorGuard = 1e-12;

// ---- Tape builders. Each returns a 1x1 node. ----

// Mean BCE-with-logits over `nodes` (labels 0/1).
ad::NodeId classification_loss(ad::Tape& tape, ad::NodeId logits, std::span<const int> labels,
                               std::span<const std::size_t> nodes);

// Sum over columns of the per-column squared distance covariance, through the
// fused streaming primitive.
ad::NodeId dcov_squared(ad::Tape& tape, ad::NodeId a, ad::NodeId b);

// Same quantity assembled from pairwise_distance / double_center / mul / mean.
// O(n^2) memory; used to cross-check the fused primitive.
ad::NodeId dcov_squared_composite(ad::Tape& tape, ad::NodeId a, ad::NodeId b);

// Sum over channel pairs of dCov^2(k1,k2) / sqrt(dCov^2(k1,k1) dCov^2(k2,k2)).
// The guard is decided from the values at record time.
ad::NodeId distance_correlation_loss(ad::Tape& tape, ad::NodeId masked, std::size_t channels);

// Sum over channels k of the mean softmax cross-entropy of channel_logits[k]
// against label k, restricted to `nodes`. Zero for a single channel.
ad::NodeId discriminator_loss(ad::Tape& tape, std::span<const ad::NodeId> channel_logits,
                              std::span<const std::size_t> nodes);

// Sum over columns of |mean((s - mean s) * c)| over `nodes`; an empty span
// means every node. Throws if the selected nodes cover only one group.
ad::NodeId mask_covariance_loss(ad::Tape& tape, ad::NodeId masked,
                                std::span<const int> sensitive,
                                std::span<const std::size_t> nodes = {});

struct LossNodes {
    ad::NodeId classification;
    ad::NodeId distance_correlation;
    ad::NodeId discriminator;
    ad::NodeId mask;
    ad::NodeId total;
};

LossNodes combine_losses(ad::Tape& tape, ad::NodeId l_c, ad::NodeId l_dc, ad::NodeId l_d,
                         ad::NodeId l_m, double alpha, double beta);

// ---- Value-level counterparts. ----

double classification_loss(const Matrix& logits, std::span<const int> labels,
                           std::span<const std::size_t> nodes);
double dcov_squared(const Matrix& a, const Matrix& b);
// One pair term of L_dc, 0 under the guard.
double distance_correlation(const Matrix& a, const Matrix& b);
double distance_correlation_loss(const Matrix& masked, std::size_t channels);
double discriminator_loss(std::span<const Matrix> channel_logits,
                          std::span<const std::size_t> nodes);
double mask_covariance_loss(const Matrix& masked, std::span<const int> sensitive,
                            std::span<const std::size_t> nodes = {});

// Per-column covariance with s over `nodes` (empty = all), signed.
std::vector<double> column_covariance_with(const Matrix& values, std::span<const int> sensitive,
                                           std::span<const std::size_t> nodes = {});

}  // namespace fairsad

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fairsad {

struct GradcheckOptions {
    std::size_t points = 20;
    std::uint64_t seed = 20240601;
    double step = 1e-5;
    double tolerance = 1e-4;
};

struct GradcheckEntry {
    std::string name;
    double max_error = 0.0;  // worst relative error over all points
    std::size_t points = 0;
    bool passed = false;
};

// Finite-difference check of every tape primitive (as a random weighted sum of
// its output) and of the four training losses, each at `points` random points
// chosen away from kinks.
std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckOptions& options = {});

bool all_passed(const std::vector<GradcheckEntry>& entries);

}  // namespace fairsad

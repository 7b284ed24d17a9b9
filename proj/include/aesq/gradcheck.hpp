#pragma once

#include <string>
#include <vector>

namespace aesq {

struct GradCheckRow {
    std::string op;
    double max_rel_error = 0.0;
    double tolerance = 1e-4;

    bool passed() const { return max_rel_error < tolerance; }
};

// Central-difference verification of every differentiable op class and the
// full model loss at toy dims. Deterministic given the seed.
std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed = 7);

}  // namespace aesq

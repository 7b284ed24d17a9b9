#pragma once

#include "aesq/tensor.hpp"

#include <vector>

namespace aesq {

// K non-negative bin masses summing to 1.
struct ScoreDistribution {
    Eigen::VectorXd bins;

    int k() const { return static_cast<int>(bins.size()); }
};

// Validates bins (non-negative, sum within 1e-6 of 1) and renormalizes the
// sum to exactly 1. Throws std::invalid_argument naming the offending bin
// or the bad sum.
ScoreDistribution validate_dos(const Eigen::VectorXd& bins);

// Expectation over bin indices 1..K.
double dos_to_mos(const ScoreDistribution& d);

// Non-decreasing, final element 1.
Eigen::VectorXd cdf(const ScoreDistribution& d);

// sqrt((1/K) * sum_k |CDF_d(k) - CDF_dhat(k)|^2).
double emd_loss(const ScoreDistribution& d, const ScoreDistribution& d_hat);

// Differentiable EMD of a predicted 1xK distribution row against a fixed
// target. The sqrt is shifted by eps to keep the gradient finite at 0.
Tensor emd_loss_t(const Tensor& d_hat, const ScoreDistribution& target, double eps = 1e-12);

// Spearman rank correlation with averaged ranks for ties.
double srcc(const std::vector<double>& x, const std::vector<double>& y);

// Pearson linear correlation.
double plcc(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace aesq

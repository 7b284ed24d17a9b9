#include "aesq/metrics.hpp"

#include "aesq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aesq {

ScoreDistribution validate_dos(const Eigen::VectorXd& bins) {
    if (bins.size() < 2) throw std::invalid_argument("validate_dos: need K >= 2 bins");
    for (Eigen::Index i = 0; i < bins.size(); ++i) {
        if (!(bins(i) >= 0.0))
            throw std::invalid_argument("validate_dos: bin " + std::to_string(i) +
                                        " is negative (" + std::to_string(bins(i)) + ")");
    }
    const double s = bins.sum();
    if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("validate_dos: bins sum to " + std::to_string(s) +
                                    ", expected 1");
    return ScoreDistribution{bins / s};
}

double dos_to_mos(const ScoreDistribution& d) {
    if (d.k() < 2 || d.bins.minCoeff() < 0.0 || std::abs(d.bins.sum() - 1.0) > 1e-6)
        throw std::invalid_argument("dos_to_mos: not a valid score distribution");
    double s = 0.0;
    for (Eigen::Index i = 0; i < d.bins.size(); ++i) s += (static_cast<double>(i) + 1.0) * d.bins(i);
    return s;
}

Eigen::VectorXd cdf(const ScoreDistribution& d) {
    Eigen::VectorXd c(d.bins.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d.bins.size(); ++i) {
        acc += d.bins(i);
        c(i) = acc;
    }
    return c;
}

double emd_loss(const ScoreDistribution& d, const ScoreDistribution& d_hat) {
    if (d.k() != d_hat.k())
        throw std::invalid_argument("emd_loss: bin counts disagree: " + std::to_string(d.k()) +
                                    " vs " + std::to_string(d_hat.k()));
    const Eigen::VectorXd diff = cdf(d) - cdf(d_hat);
    return std::sqrt(diff.squaredNorm() / static_cast<double>(d.k()));
}

Tensor emd_loss_t(const Tensor& d_hat, const ScoreDistribution& target, double eps) {
    if (d_hat.rows() != 1 || d_hat.cols() != target.k())
        throw std::invalid_argument("emd_loss_t: prediction must be 1x" +
                                    std::to_string(target.k()));
    Tensor target_cdf(Mat(cdf(target).transpose()));
    Tensor diff = sub(prefix_sum_cols(d_hat), target_cdf);
    Tensor mse = scale(sum(square(diff)), 1.0 / static_cast<double>(target.k()));
    return sqrt_shifted(mse, eps);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double plcc(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("plcc: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("plcc: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw UndefinedCorrelationError("plcc: zero-variance input");
    return sxy / std::sqrt(sxx * syy);
}

double srcc(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("srcc: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("srcc: need at least 2 points");
    return plcc(average_ranks(x), average_ranks(y));
}

}  // namespace aesq

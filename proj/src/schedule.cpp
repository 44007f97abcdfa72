#include "lcmkit/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcmkit {

NoiseSchedule::NoiseSchedule(int n, double beta_start, double beta_end, double sigma_data,
                             double kappa)
    : sigma_data_(sigma_data), kappa_(kappa) {
    if (n < 2) throw std::invalid_argument("schedule: N must be >= 2, got " + std::to_string(n));
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1, got " +
                                    std::to_string(beta_start) + ", " + std::to_string(beta_end));
    }
    beta_.resize(n);
    for (int i = 0; i < n; ++i) {
        beta_[i] = beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                    static_cast<double>(n - 1);
    }
    finish_init();
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, double sigma_data, double kappa)
    : beta_(std::move(betas)), sigma_data_(sigma_data), kappa_(kappa) {
    for (size_t i = 0; i < beta_.size(); ++i) {
        if (!(beta_[i] > 0.0 && beta_[i] < 1.0)) {
            throw std::invalid_argument("schedule: beta out of (0,1) at step " + std::to_string(i + 1));
        }
        if (i > 0 && beta_[i] < beta_[i - 1]) {
            throw std::invalid_argument("schedule: beta must be nondecreasing");
        }
    }
    finish_init();
}

void NoiseSchedule::finish_init() {
    const int n = static_cast<int>(beta_.size());
    alpha_bar_.resize(n + 1);
    alpha_.resize(n + 1);
    sigma_.resize(n + 1);
    alpha_bar_[0] = 1.0;
    for (int t = 1; t <= n; ++t) alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t - 1]);
    for (int t = 0; t <= n; ++t) {
        alpha_[t] = std::sqrt(alpha_bar_[t]);
        sigma_[t] = std::sqrt(1.0 - alpha_bar_[t]);
    }
}

void NoiseSchedule::check_t(int t) const {
    if (t < 0 || t > n()) {
        throw std::out_of_range("schedule: t=" + std::to_string(t) + " outside [0," +
                                std::to_string(n()) + "]");
    }
}

Tensor NoiseSchedule::perturb(const Tensor& z0, int t, const Tensor& noise) const {
    check_t(t);
    if (z0.shape() != noise.shape()) {
        throw ShapeError("perturb: shape mismatch " + shape_str(z0.shape()) + " vs " +
                         shape_str(noise.shape()));
    }
    if (t == 0) return Tensor::from(z0.data(), z0.shape());
    return add(mul_scalar(z0, alpha_[t]), mul_scalar(noise, sigma_[t]));
}

void NoiseSchedule::boundary_coeffs(int t, double& c_skip, double& c_out) const {
    check_t(t);
    const double u = static_cast<double>(t) / kappa_;
    const double sd2 = sigma_data_ * sigma_data_;
    c_skip = sd2 / (u * u + sd2);
    c_out = sigma_data_ * u / std::sqrt(u * u + sd2);
}

std::vector<int> NoiseSchedule::sampling_grid(int steps) const {
    if (steps < 1 || steps > n()) {
        throw std::out_of_range("sampling_grid: steps=" + std::to_string(steps) +
                                " outside [1," + std::to_string(n()) + "]");
    }
    std::vector<int> grid(steps);
    for (int j = 0; j < steps; ++j) {
        grid[j] = static_cast<int>(std::llround(static_cast<double>((steps - j)) *
                                                static_cast<double>(n()) /
                                                static_cast<double>(steps)));
    }
    return grid;
}

}  // namespace lcmkit

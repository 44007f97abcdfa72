#pragma once

#include <cstdint>
#include <vector>

#include "lcmkit/tensor.hpp"

namespace lcmkit {

// Discrete variance-preserving noise schedule. alpha(t)^2 + sigma(t)^2 == 1
// at every t, alpha(0) == 1 exactly.
class NoiseSchedule {
public:
    // Linear betas from beta_start to beta_end over N steps.
    NoiseSchedule(int n, double beta_start, double beta_end, double sigma_data, double kappa);
    // Explicit betas (tests construct exact schedules through this).
    NoiseSchedule(std::vector<double> betas, double sigma_data, double kappa);

    int n() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { return beta_.at(t - 1); }          // t in [1, N]
    double alpha_bar(int t) const { return alpha_bar_.at(t); }    // t in [0, N]
    double alpha(int t) const { return alpha_.at(t); }
    double sigma(int t) const { return sigma_.at(t); }
    double sigma_data() const { return sigma_data_; }
    double kappa() const { return kappa_; }

    // alpha(t) * z0 + sigma(t) * noise; t == 0 returns z0 unchanged.
    Tensor perturb(const Tensor& z0, int t, const Tensor& noise) const;

    // Boundary parameterization coefficients: (1, 0) at t == 0, c_skip
    // decreasing and c_out increasing in t.
    void boundary_coeffs(int t, double& c_skip, double& c_out) const;

    // `steps` indices evenly spaced on [1, N], largest first, including N.
    std::vector<int> sampling_grid(int steps) const;

    void check_t(int t) const;

private:
    void finish_init();

    std::vector<double> beta_;        // 1-based conceptually, stored 0-based
    std::vector<double> alpha_bar_;   // size N+1, alpha_bar_[0] == 1
    std::vector<double> alpha_;       // sqrt(alpha_bar)
    std::vector<double> sigma_;       // sqrt(1 - alpha_bar)
    double sigma_data_;
    double kappa_;
};

}  // namespace lcmkit

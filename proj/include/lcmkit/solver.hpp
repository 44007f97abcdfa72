#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "lcmkit/schedule.hpp"
#include "lcmkit/tensor.hpp"

namespace lcmkit {

// Batched noise predictor: (z, t, classes) -> eps_hat. Implementations wrap a
// network or a closed-form oracle. `classes` has one entry per batch item and
// may hold the null class.
using EpsFn = std::function<Tensor(const Tensor& z, int t, const std::vector<int>& classes)>;

// One deterministic solver update from t_src down to t_dst, returned as the
// increment z_hat(t_dst) - z. t_dst == t_src is the degenerate zero step.
Tensor ddim_increment(const NoiseSchedule& sched, const Tensor& z, int t_src, int t_dst,
                      const Tensor& eps_hat);

// (1 + omega) * delta_cond - omega * delta_uncond
Tensor cfg_increment(const Tensor& delta_cond, const Tensor& delta_uncond, double omega);

// Single skip from t_src to t_dst combining both guidance branches of `eps`.
// `classes` selects the conditional branch; the unconditional branch uses
// `null_class` for every item.
Tensor k_step_estimate(const NoiseSchedule& sched, const EpsFn& eps, const Tensor& z, int t_src,
                       int t_dst, const std::vector<int>& classes, int null_class, double omega);

// Isotropic Gaussian data distribution with a closed-form score; the oracle
// everything solver-side is validated against.
struct GaussianWorld {
    std::vector<double> mean;
    double stddev = 0.0;

    int dim() const { return static_cast<int>(mean.size()); }

    // Exact minimizer of the noise-prediction loss at (x, t).
    Tensor optimal_eps(const NoiseSchedule& sched, const Tensor& x, int t) const;

    // Point of the exact deterministic trajectory at time t, given its state
    // x_from at time t_from. Requires stddev > 0.
    std::vector<double> trajectory_point(const NoiseSchedule& sched, const std::vector<double>& x_from,
                                         int t_from, int t) const;

    EpsFn eps_fn(const NoiseSchedule& sched) const;
};

// Solver validation against the Gaussian oracles; prints one line per check.
// Returns true when every check passes.
bool run_oracle_checks(std::ostream& os);

}  // namespace lcmkit

#pragma once

#include <functional>
#include <vector>

#include "lcmkit/nn.hpp"
#include "lcmkit/rng.hpp"
#include "lcmkit/schedule.hpp"
#include "lcmkit/solver.hpp"
#include "lcmkit/teacher.hpp"

namespace lcmkit {

struct DistillConfig {
    int k = 20;
    double omega_min = 4.0;
    double omega_max = 12.0;
    double mu = 0.95;
    double eta = 0.5;
    double lr = 9.6e-5;
    int steps = 4000;
    int batch = 64;
    bool omega_per_item = false;
};

enum class Branch { Student, Ema };

// Student network with its slow-moving target copy and the distillation
// hyperparameters. Both copies share one architecture.
class ConsistencyModel {
public:
    ConsistencyModel(const DenoiserNet& init, const NoiseSchedule& schedule,
                     const DistillConfig& cfg);

    // Boundary-parameterized map to the trajectory origin. t == 0 returns z
    // bitwise without evaluating the network.
    Tensor consistency_fn(Branch which, const Tensor& z, const std::vector<int>& classes,
                          const std::vector<double>& omega, int t) const;
    Tensor consistency_fn(Branch which, const Tensor& z, const std::vector<int>& classes,
                          double omega, int t) const;

    // theta_minus <- mu * theta_minus + (1 - mu) * theta, outside any graph.
    void ema_update(double mu);

    DenoiserNet& net() { return net_; }
    const DenoiserNet& net() const { return net_; }
    DenoiserNet& ema_net() { return ema_net_; }
    const DenoiserNet& ema_net() const { return ema_net_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const DistillConfig& config() const { return cfg_; }

private:
    DenoiserNet net_;       // theta
    DenoiserNet ema_net_;   // theta minus
    NoiseSchedule schedule_;
    DistillConfig cfg_;
};

// c_skip(t) z + c_out(t) (z - sigma_t eps) / alpha_t
Tensor consistency_parameterize(const NoiseSchedule& sched, const Tensor& z, const Tensor& eps,
                                int t);

// Draw of the lower grid index n ~ U{1, N-k}.
int sample_skip_start(RngStream& stream, int n_total, int k);

// One distillation update: perturb the batch to t=n+k, build the solver
// target through the frozen teacher, take a student gradient step on the
// Huber gap, then move the EMA copy. Returns the scalar loss.
double distill_step(ConsistencyModel& model, const EpsFn& teacher_eps, const Tensor& z0,
                    const std::vector<int>& classes, RngStream& stream, AdamW& opt);

// Loss plumbing against arbitrary maps, for oracle-driven tests.
// f(z, t) -> origin estimate.
using ConsistencyFn = std::function<Tensor(const Tensor& z, int t)>;
double distill_loss_value(const NoiseSchedule& sched, const EpsFn& teacher_eps,
                          const ConsistencyFn& f_student, const ConsistencyFn& f_target,
                          const Tensor& z0, const std::vector<int>& classes, int null_class,
                          int n, int k, double omega, const Tensor& noise, double eta);

// Few-step stochastic sampling with the EMA weights: one evaluation from pure
// noise at t=N, then steps-1 renoise-and-map iterations. Exactly `steps`
// network evaluations, single branch.
Tensor lcm_sample(const ConsistencyModel& model, int steps, double omega,
                  const std::vector<int>& classes, RngStream& stream);

}  // namespace lcmkit

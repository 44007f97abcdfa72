#pragma once

#include <cstdint>
#include <vector>

#include "lcmkit/data.hpp"
#include "lcmkit/nn.hpp"
#include "lcmkit/rng.hpp"
#include "lcmkit/schedule.hpp"
#include "lcmkit/solver.hpp"

namespace lcmkit {

// Decoupled-weight-decay moment-based optimizer.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double weight_decay = 0.01, double eps = 1e-8);

    void step();
    void zero_grad();
    double lr() const { return lr_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, weight_decay_, eps_;
    std::int64_t t_ = 0;
};

struct TrainConfig {
    int steps = 20000;
    int batch = 64;
    double lr = 9.6e-5;
    double p_uncond = 0.1;
};

struct TrainStats {
    long null_labels = 0;
    long total_labels = 0;
};

// Noise-prediction diffusion model. The guidance-scale input of the shared
// network class is held at zero here so a student can start from an exact
// parameter copy.
struct TeacherModel {
    DenoiserNet net;
    NoiseSchedule schedule;

    Tensor predict(const Tensor& z, int t, const std::vector<int>& classes) const;
    Tensor predict(const Tensor& z, const std::vector<int>& t, const std::vector<int>& classes) const;
    EpsFn eps_fn() const;
};

// Mean over batch items and elements of |eps_hat - noise|^2 at the perturbed
// points alpha(t) z0 + sigma(t) noise. t has one entry per item.
Tensor epsilon_loss(const TeacherModel& teacher, const Tensor& z0, const std::vector<int>& t,
                    const Tensor& noise, const std::vector<int>& classes);

// Trains a fresh teacher on `data`. Classes are dropped to the null token
// with probability p_uncond so both guidance branches are meaningful later.
// Aborts with a diagnostic if the loss turns non-finite.
TeacherModel train_teacher(const ToyDataset& data, const ModelConfig& model_cfg,
                           const NoiseSchedule& schedule, const TrainConfig& train_cfg,
                           const RngStream& stream, std::vector<double>* loss_curve = nullptr,
                           TrainStats* stats = nullptr);

// Iterative two-branch guided sampling over sampling_grid(steps); makes
// exactly 2 * steps network evaluations. Returns (count, L, D).
Tensor ddim_sample(const TeacherModel& teacher, int steps, double omega,
                   const std::vector<int>& classes, RngStream& stream);

// Same solver loop against an arbitrary predictor (tests inject oracles).
Tensor ddim_sample_with(const EpsFn& eps, const NoiseSchedule& schedule, int steps, double omega,
                        const std::vector<int>& classes, int null_class, Shape item_shape,
                        RngStream& stream);

}  // namespace lcmkit

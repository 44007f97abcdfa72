#include "lcmkit/consistency.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcmkit {

ConsistencyModel::ConsistencyModel(const DenoiserNet& init, const NoiseSchedule& schedule,
                                   const DistillConfig& cfg)
    : net_(init.clone()), ema_net_(init.clone()), schedule_(schedule), cfg_(cfg) {
    if (cfg.k < 1 || cfg.k >= schedule.n()) {
        throw std::invalid_argument("distill: k=" + std::to_string(cfg.k) +
                                    " outside [1," + std::to_string(schedule.n() - 1) + "]");
    }
    if (cfg.omega_min > cfg.omega_max) throw std::invalid_argument("distill: omega_min > omega_max");
    if (cfg.mu < 0.0 || cfg.mu >= 1.0) throw std::invalid_argument("distill: mu outside [0,1)");
    if (cfg.eta <= 0.0) throw std::invalid_argument("distill: eta must be > 0");
}

Tensor consistency_parameterize(const NoiseSchedule& sched, const Tensor& z, const Tensor& eps,
                                int t) {
    double c_skip, c_out;
    sched.boundary_coeffs(t, c_skip, c_out);
    const double a = sched.alpha(t), s = sched.sigma(t);
    Tensor origin = mul_scalar(sub(z, mul_scalar(eps, s)), 1.0 / a);
    return add(mul_scalar(z, c_skip), mul_scalar(origin, c_out));
}

Tensor ConsistencyModel::consistency_fn(Branch which, const Tensor& z,
                                        const std::vector<int>& classes,
                                        const std::vector<double>& omega, int t) const {
    schedule_.check_t(t);
    if (t == 0) return Tensor::from(z.data(), z.shape());
    const DenoiserNet& net = which == Branch::Student ? net_ : ema_net_;
    std::vector<int> tv(classes.size(), t);
    Tensor eps = net.forward(z, tv, classes, omega);
    return consistency_parameterize(schedule_, z, eps, t);
}

Tensor ConsistencyModel::consistency_fn(Branch which, const Tensor& z,
                                        const std::vector<int>& classes, double omega,
                                        int t) const {
    return consistency_fn(which, z, classes, std::vector<double>(classes.size(), omega), t);
}

void ConsistencyModel::ema_update(double mu) {
    if (mu < 0.0 || mu >= 1.0) throw std::invalid_argument("ema: mu outside [0,1)");
    auto src = net_.named_parameters();
    auto dst = ema_net_.named_parameters();
    for (size_t i = 0; i < src.size(); ++i) {
        auto& d = dst[i].second.mutable_data();
        const auto& s = src[i].second.data();
        for (size_t j = 0; j < d.size(); ++j) d[j] = mu * d[j] + (1.0 - mu) * s[j];
    }
}

int sample_skip_start(RngStream& stream, int n_total, int k) {
    return static_cast<int>(stream.uniform_int(1, n_total - k));
}

namespace {

// Target-side k-step estimate with one guidance scale per item; runs outside
// any graph.
Tensor k_step_estimate_per_item(const NoiseSchedule& sched, const EpsFn& eps, const Tensor& z,
                                int t_src, int t_dst, const std::vector<int>& classes,
                                int null_class, const std::vector<double>& omega) {
    NoGradGuard ng;
    Tensor dc = ddim_increment(sched, z, t_src, t_dst, eps(z, t_src, classes));
    std::vector<int> null_classes(classes.size(), null_class);
    Tensor du = ddim_increment(sched, z, t_src, t_dst, eps(z, t_src, null_classes));
    const std::int64_t B = z.dim(0);
    const std::int64_t item = z.numel() / B;
    std::vector<double> out(z.numel());
    for (std::int64_t i = 0; i < B; ++i) {
        const double w = omega[i];
        for (std::int64_t j = 0; j < item; ++j) {
            const std::int64_t ix = i * item + j;
            out[ix] = z.data()[ix] + (1.0 + w) * dc.data()[ix] - w * du.data()[ix];
        }
    }
    return Tensor::from(std::move(out), z.shape());
}

}  // namespace

double distill_step(ConsistencyModel& model, const EpsFn& teacher_eps, const Tensor& z0,
                    const std::vector<int>& classes, RngStream& stream, AdamW& opt) {
    const auto& cfg = model.config();
    const auto& sched = model.schedule();
    const int n = sample_skip_start(stream, sched.n(), cfg.k);

    std::vector<double> omega(classes.size());
    if (cfg.omega_per_item) {
        for (auto& w : omega) w = stream.uniform(cfg.omega_min, cfg.omega_max);
    } else {
        omega.assign(classes.size(), stream.uniform(cfg.omega_min, cfg.omega_max));
    }

    Tensor noise = gaussian(stream, z0.shape());
    Tensor z_hi = sched.perturb(z0, n + cfg.k, noise);

    Tensor target;
    {
        NoGradGuard ng;
        Tensor z_hat = k_step_estimate_per_item(sched, teacher_eps, z_hi, n + cfg.k, n, classes,
                                                model.net().config().null_class(), omega);
        target = model.consistency_fn(Branch::Ema, z_hat, classes, omega, n);
    }
    Tensor pred = model.consistency_fn(Branch::Student, z_hi, classes, omega, n + cfg.k);
    Tensor loss = huber(pred, target, cfg.eta);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw std::runtime_error("distill: non-finite loss " + std::to_string(value));
    }
    opt.zero_grad();
    backward(loss);
    opt.step();
    model.ema_update(cfg.mu);
    return value;
}

double distill_loss_value(const NoiseSchedule& sched, const EpsFn& teacher_eps,
                          const ConsistencyFn& f_student, const ConsistencyFn& f_target,
                          const Tensor& z0, const std::vector<int>& classes, int null_class,
                          int n, int k, double omega, const Tensor& noise, double eta) {
    Tensor z_hi = sched.perturb(z0, n + k, noise);
    Tensor z_hat = k_step_estimate(sched, teacher_eps, z_hi, n + k, n, classes, null_class, omega);
    return huber(f_student(z_hi, n + k), f_target(z_hat, n), eta).item();
}

Tensor lcm_sample(const ConsistencyModel& model, int steps, double omega,
                  const std::vector<int>& classes, RngStream& stream) {
    NoGradGuard ng;
    const auto& sched = model.schedule();
    const auto& cfg = model.net().config();
    const std::int64_t count = static_cast<std::int64_t>(classes.size());
    Shape shape{count, cfg.tokens, cfg.channels};
    if (count == 0) return Tensor::zeros(shape);

    const auto grid = sched.sampling_grid(steps);
    Tensor z = gaussian(stream, shape);
    Tensor x = model.consistency_fn(Branch::Ema, z, classes, omega, grid[0]);
    for (int j = 1; j < steps; ++j) {
        Tensor z_t = sched.perturb(x, grid[j], gaussian(stream, shape));
        x = model.consistency_fn(Branch::Ema, z_t, classes, omega, grid[j]);
    }
    return x;
}

}  // namespace lcmkit

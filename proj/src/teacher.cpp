#include "lcmkit/teacher.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcmkit {

AdamW::AdamW(std::vector<Tensor> params, double lr, double beta1, double beta2,
             double weight_decay, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      weight_decay_(weight_decay), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].numel(), 0.0);
        v_[i].assign(params_[i].numel(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto g = params_[i].grad();
        auto& p = params_[i].mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[j]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Tensor TeacherModel::predict(const Tensor& z, int t, const std::vector<int>& classes) const {
    return predict(z, std::vector<int>(classes.size(), t), classes);
}

Tensor TeacherModel::predict(const Tensor& z, const std::vector<int>& t,
                             const std::vector<int>& classes) const {
    // The teacher never conditions on a guidance scale; its omega input is 0.
    return net.forward(z, t, classes, std::vector<double>(classes.size(), 0.0));
}

EpsFn TeacherModel::eps_fn() const {
    return [net = net](const Tensor& z, int t, const std::vector<int>& classes) {
        NoGradGuard ng;
        return net.forward(z, std::vector<int>(classes.size(), t), classes,
                           std::vector<double>(classes.size(), 0.0));
    };
}

Tensor epsilon_loss(const TeacherModel& teacher, const Tensor& z0, const std::vector<int>& t,
                    const Tensor& noise, const std::vector<int>& classes) {
    if (z0.shape() != noise.shape()) {
        throw ShapeError("epsilon_loss: shape mismatch " + shape_str(z0.shape()) + " vs " +
                         shape_str(noise.shape()));
    }
    const std::int64_t B = z0.dim(0);
    // Per-item perturbation times: scale rows of z0 and noise individually.
    const std::int64_t item = z0.numel() / B;
    std::vector<double> zt(z0.numel());
    for (std::int64_t i = 0; i < B; ++i) {
        teacher.schedule.check_t(t[i]);
        const double a = teacher.schedule.alpha(t[i]);
        const double s = teacher.schedule.sigma(t[i]);
        for (std::int64_t j = 0; j < item; ++j) {
            zt[i * item + j] = a * z0.data()[i * item + j] + s * noise.data()[i * item + j];
        }
    }
    Tensor z_t = Tensor::from(std::move(zt), z0.shape());
    Tensor eps_hat = teacher.predict(z_t, t, classes);
    return mse(eps_hat, noise);
}

TeacherModel train_teacher(const ToyDataset& data, const ModelConfig& model_cfg,
                           const NoiseSchedule& schedule, const TrainConfig& train_cfg,
                           const RngStream& stream, std::vector<double>* loss_curve,
                           TrainStats* stats) {
    ModelConfig cfg = model_cfg;
    cfg.tokens = data.tokens();
    cfg.channels = data.channels();
    cfg.num_classes = data.num_classes();
    cfg.max_timestep = schedule.n();

    TeacherModel teacher{DenoiserNet(cfg, stream.split("init")), schedule};
    AdamW opt(teacher.net.parameters(), train_cfg.lr);

    RngStream data_stream = stream.split("data");
    RngStream t_stream = stream.split("timesteps");
    RngStream noise_stream = stream.split("noise");
    RngStream drop_stream = stream.split("cond-drop");

    const int B = train_cfg.batch;
    for (int step = 0; step < train_cfg.steps; ++step) {
        std::vector<int> classes(B);
        for (int i = 0; i < B; ++i) {
            classes[i] = static_cast<int>(data_stream.uniform_int(0, data.num_classes() - 1));
        }
        Tensor z0 = data.sample_batch(classes, data_stream);
        for (int i = 0; i < B; ++i) {
            if (drop_stream.uniform() < train_cfg.p_uncond) classes[i] = cfg.null_class();
            if (stats) {
                ++stats->total_labels;
                if (classes[i] == cfg.null_class()) ++stats->null_labels;
            }
        }
        std::vector<int> t(B);
        for (int i = 0; i < B; ++i) {
            t[i] = static_cast<int>(t_stream.uniform_int(1, schedule.n()));
        }
        Tensor noise = gaussian(noise_stream, z0.shape());

        Tensor loss = epsilon_loss(teacher, z0, t, noise, classes);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw std::runtime_error("train_teacher: non-finite loss " + std::to_string(value) +
                                     " at step " + std::to_string(step));
        }
        if (loss_curve) loss_curve->push_back(value);
        opt.zero_grad();
        backward(loss);
        opt.step();
    }
    return teacher;
}

Tensor ddim_sample_with(const EpsFn& eps, const NoiseSchedule& schedule, int steps, double omega,
                        const std::vector<int>& classes, int null_class, Shape item_shape,
                        RngStream& stream) {
    const std::int64_t count = static_cast<std::int64_t>(classes.size());
    Shape shape{count};
    shape.insert(shape.end(), item_shape.begin(), item_shape.end());
    if (count == 0) return Tensor::zeros(shape);

    Tensor z = gaussian(stream, shape);
    const auto grid = schedule.sampling_grid(steps);
    for (int i = 0; i < steps; ++i) {
        const int t_src = grid[i];
        const int t_dst = i + 1 < steps ? grid[i + 1] : 0;
        z = k_step_estimate(schedule, eps, z, t_src, t_dst, classes, null_class, omega);
    }
    return z;
}

Tensor ddim_sample(const TeacherModel& teacher, int steps, double omega,
                   const std::vector<int>& classes, RngStream& stream) {
    NoGradGuard ng;
    const auto& cfg = teacher.net.config();
    return ddim_sample_with(teacher.eps_fn(), teacher.schedule, steps, omega, classes,
                            cfg.null_class(), {cfg.tokens, cfg.channels}, stream);
}

}  // namespace lcmkit

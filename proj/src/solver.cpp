#include "lcmkit/solver.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lcmkit {

Tensor ddim_increment(const NoiseSchedule& sched, const Tensor& z, int t_src, int t_dst,
                      const Tensor& eps_hat) {
    sched.check_t(t_src);
    sched.check_t(t_dst);
    if (t_dst > t_src) {
        throw std::invalid_argument("ddim: t_dst=" + std::to_string(t_dst) + " above t_src=" +
                                    std::to_string(t_src));
    }
    if (z.shape() != eps_hat.shape()) {
        throw ShapeError("ddim: shape mismatch " + shape_str(z.shape()) + " vs " +
                         shape_str(eps_hat.shape()));
    }
    if (t_dst == t_src) return Tensor::zeros(z.shape());

    const double a_src = sched.alpha(t_src), s_src = sched.sigma(t_src);
    const double a_dst = sched.alpha(t_dst), s_dst = sched.sigma(t_dst);
    // z0_hat = (z - sigma_src * eps) / alpha_src; endpoint = alpha_dst * z0_hat + sigma_dst * eps
    Tensor z0_hat = mul_scalar(sub(z, mul_scalar(eps_hat, s_src)), 1.0 / a_src);
    Tensor endpoint = add(mul_scalar(z0_hat, a_dst), mul_scalar(eps_hat, s_dst));
    return sub(endpoint, z);
}

Tensor cfg_increment(const Tensor& delta_cond, const Tensor& delta_uncond, double omega) {
    if (delta_cond.shape() != delta_uncond.shape()) {
        throw ShapeError("cfg: shape mismatch " + shape_str(delta_cond.shape()) + " vs " +
                         shape_str(delta_uncond.shape()));
    }
    return sub(mul_scalar(delta_cond, 1.0 + omega), mul_scalar(delta_uncond, omega));
}

Tensor k_step_estimate(const NoiseSchedule& sched, const EpsFn& eps, const Tensor& z, int t_src,
                       int t_dst, const std::vector<int>& classes, int null_class, double omega) {
    Tensor delta_cond = ddim_increment(sched, z, t_src, t_dst, eps(z, t_src, classes));
    std::vector<int> null_classes(classes.size(), null_class);
    Tensor delta_uncond = ddim_increment(sched, z, t_src, t_dst, eps(z, t_src, null_classes));
    return add(z, cfg_increment(delta_cond, delta_uncond, omega));
}

Tensor GaussianWorld::optimal_eps(const NoiseSchedule& sched, const Tensor& x, int t) const {
    sched.check_t(t);
    const double a = sched.alpha(t), s = sched.sigma(t);
    const double denom = a * a * stddev * stddev + s * s;
    if (denom <= 0.0) {
        throw std::domain_error("optimal_eps: degenerate noiseless point (t=0 with stddev=0)");
    }
    const std::int64_t n = x.numel();
    const std::int64_t d = dim();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = s * (x.data()[i] - a * mean[i % d]) / denom;
    }
    return Tensor::from(std::move(out), x.shape());
}

std::vector<double> GaussianWorld::trajectory_point(const NoiseSchedule& sched,
                                                    const std::vector<double>& x_from, int t_from,
                                                    int t) const {
    if (stddev <= 0.0) throw std::domain_error("trajectory_point: requires stddev > 0");
    const double a0 = sched.alpha(t_from), s0 = sched.sigma(t_from);
    const double a1 = sched.alpha(t), s1 = sched.sigma(t);
    const double q0 = std::sqrt(a0 * a0 * stddev * stddev + s0 * s0);
    const double q1 = std::sqrt(a1 * a1 * stddev * stddev + s1 * s1);
    std::vector<double> out(x_from.size());
    for (size_t i = 0; i < x_from.size(); ++i) {
        out[i] = a1 * mean[i % mean.size()] + (q1 / q0) * (x_from[i] - a0 * mean[i % mean.size()]);
    }
    return out;
}

EpsFn GaussianWorld::eps_fn(const NoiseSchedule& sched) const {
    return [world = *this, sched](const Tensor& z, int t, const std::vector<int>&) {
        return world.optimal_eps(sched, z, t);
    };
}

namespace {

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// Run DDIM with the exact noise oracle over a uniform grid from N to 0.
std::vector<double> ddim_endpoint(const NoiseSchedule& sched, const GaussianWorld& world,
                                  const std::vector<double>& x_start, int steps) {
    const int n = sched.n();
    Tensor z = Tensor::from(x_start, {static_cast<std::int64_t>(x_start.size())});
    int t_cur = n;
    for (int j = 1; j <= steps; ++j) {
        const int t_next = static_cast<int>(std::llround(
            static_cast<double>(n) * (1.0 - static_cast<double>(j) / steps)));
        Tensor eps = world.optimal_eps(sched, z, t_cur);
        z = add(z, ddim_increment(sched, z, t_cur, t_next, eps));
        t_cur = t_next;
    }
    return z.data();
}

bool check(std::ostream& os, const std::string& name, bool ok, double value, double bound) {
    os << (ok ? "[PASS] " : "[FAIL] ") << name << " (value=" << value << ", bound=" << bound
       << ")\n";
    return ok;
}

}  // namespace

bool run_oracle_checks(std::ostream& os) {
    bool all_ok = true;
    NoiseSchedule sched(1000, 1e-4, 0.02, 0.5, 10.0);

    // Delta data: one solver step from any t recovers the data point exactly.
    {
        GaussianWorld delta{{0.7, -1.2, 0.25}, 0.0};
        double worst = 0.0;
        for (int t : {1000, 500, 100, 7}) {
            Tensor x = Tensor::from({1.9, -0.3, 0.55});
            Tensor z = sched.perturb(x, t, Tensor::from({0.4, 1.3, -0.8}));
            Tensor eps = delta.optimal_eps(sched, z, t);
            Tensor rec = add(z, ddim_increment(sched, z, t, 0, eps));
            for (int i = 0; i < 3; ++i) {
                worst = std::max(worst, std::abs(rec.data()[i] - delta.mean[i]));
            }
        }
        all_ok &= check(os, "delta-data one-step recovery", worst <= 1e-10, worst, 1e-10);
    }

    // Gaussian world: endpoint error against the exact trajectory shrinks
    // monotonically as the uniform step count doubles, and is small at 256.
    {
        GaussianWorld world{{0.4, -0.9}, 0.7};
        const std::vector<double> x_start{1.3, 0.2};
        const auto exact = world.trajectory_point(sched, x_start, sched.n(), 0);
        double prev = 1e300, last = 0.0;
        bool monotone = true;
        for (int steps : {8, 16, 32, 64, 128, 256}) {
            const auto endpoint = ddim_endpoint(sched, world, x_start, steps);
            last = rel_err(endpoint, exact);
            monotone &= last < prev;
            prev = last;
        }
        all_ok &= check(os, "multi-step endpoint error monotone over {8..256}", monotone,
                        last, prev);
        all_ok &= check(os, "256-step endpoint relative error", last <= 1e-2, last, 1e-2);
    }

    // Single k=20 skip agrees with 20 composed unit steps.
    {
        GaussianWorld world{{-0.2, 0.6}, 0.5};
        const int t_hi = 700, k = 20;
        Tensor z = Tensor::from({0.9, -1.1});
        Tensor skip = add(z, ddim_increment(sched, z, t_hi, t_hi - k,
                                            world.optimal_eps(sched, z, t_hi)));
        Tensor composed = z;
        for (int t = t_hi; t > t_hi - k; --t) {
            composed = add(composed, ddim_increment(sched, composed, t, t - 1,
                                                    world.optimal_eps(sched, composed, t)));
        }
        const double gap = rel_err(skip.data(), composed.data());
        all_ok &= check(os, "k=20 skip vs composed unit steps", gap <= 5e-2, gap, 5e-2);
    }

    return all_ok;
}

}  // namespace lcmkit

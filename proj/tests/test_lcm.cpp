#include <doctest.h>

#include <cmath>

#include "lcmkit/consistency.hpp"

using namespace lcmkit;

namespace {

NoiseSchedule short_schedule() { return NoiseSchedule(200, 1e-4, 0.02, 0.5, 10.0); }

ModelConfig rings_model() {
    ModelConfig cfg;
    cfg.tokens = 1;
    cfg.channels = 2;
    cfg.width = 32;
    cfg.blocks = 2;
    cfg.heads = 2;
    cfg.ffn = 64;
    cfg.num_classes = 8;
    cfg.max_timestep = 200;
    return cfg;
}

DistillConfig quick_distill() {
    DistillConfig d;
    d.k = 20;
    d.steps = 10;
    d.batch = 16;
    d.lr = 1e-3;
    return d;
}

ConsistencyModel fresh_model(std::uint64_t seed) {
    return ConsistencyModel(DenoiserNet(rings_model(), RngStream(seed)), short_schedule(),
                            quick_distill());
}

}  // namespace

TEST_CASE("hyperparameter invariants are enforced") {
    DenoiserNet net(rings_model(), RngStream(1));
    NoiseSchedule sched = short_schedule();
    DistillConfig d = quick_distill();

    d.k = 0;
    CHECK_THROWS_AS(ConsistencyModel(net, sched, d), std::invalid_argument);
    d.k = 200;
    CHECK_THROWS_AS(ConsistencyModel(net, sched, d), std::invalid_argument);
    d = quick_distill();
    d.omega_min = 5.0;
    d.omega_max = 4.0;
    CHECK_THROWS_AS(ConsistencyModel(net, sched, d), std::invalid_argument);
    d = quick_distill();
    d.mu = 1.0;
    CHECK_THROWS_AS(ConsistencyModel(net, sched, d), std::invalid_argument);
    d = quick_distill();
    d.eta = 0.0;
    CHECK_THROWS_AS(ConsistencyModel(net, sched, d), std::invalid_argument);
}

TEST_CASE("boundary condition holds bitwise at t=0") {
    ConsistencyModel model = fresh_model(2);
    RngStream rng(3);
    Tensor z = gaussian(rng, {4, 1, 2});
    const std::vector<int> classes{0, 1, 2, 3};

    Tensor out = model.consistency_fn(Branch::Student, z, classes, 5.0, 0);
    CHECK(out.data() == z.data());
    Tensor out_ema = model.consistency_fn(Branch::Ema, z, classes, 5.0, 0);
    CHECK(out_ema.data() == z.data());
    CHECK(model.net().eval_count() == 0);  // no network evaluation at the boundary
}

TEST_CASE("zero noise predictor reduces to forced algebra") {
    ConsistencyModel model = fresh_model(4);
    auto& out_proj = model.net().out_proj_;
    std::fill(out_proj.w.mutable_data().begin(), out_proj.w.mutable_data().end(), 0.0);
    std::fill(out_proj.b.mutable_data().begin(), out_proj.b.mutable_data().end(), 0.0);

    RngStream rng(5);
    Tensor z = gaussian(rng, {2, 1, 2});
    const int t = 60;
    Tensor out = model.consistency_fn(Branch::Student, z, {0, 1}, 5.0, t);

    const NoiseSchedule sched = short_schedule();
    double c_skip, c_out;
    sched.boundary_coeffs(t, c_skip, c_out);
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const double expected = c_skip * z.data()[i] + c_out * z.data()[i] / sched.alpha(t);
        CHECK(out.data()[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("parameterization matches hand evaluation with the oracle predictor") {
    NoiseSchedule sched = short_schedule();
    GaussianWorld world{{0.4, -0.7}, 0.5};
    const int t = 120;
    Tensor z = Tensor::from({0.9, -0.1}, {2});
    Tensor eps = world.optimal_eps(sched, z, t);

    Tensor got = consistency_parameterize(sched, z, eps, t);

    double c_skip, c_out;
    sched.boundary_coeffs(t, c_skip, c_out);
    for (int i = 0; i < 2; ++i) {
        const double origin = (z.data()[i] - sched.sigma(t) * eps.data()[i]) / sched.alpha(t);
        CHECK(got.data()[i] == doctest::Approx(c_skip * z.data()[i] + c_out * origin).epsilon(1e-13));
    }
}

TEST_CASE("huber values and continuity") {
    CHECK(huber(Tensor::from({0.5}), Tensor::from({0.0}), 1.0).item() ==
          doctest::Approx(0.125).epsilon(1e-15));
    CHECK(huber(Tensor::from({2.0}), Tensor::from({0.0}), 1.0).item() ==
          doctest::Approx(1.5).epsilon(1e-15));

    // both branches meet at |r| = eta with value eta^2 / 2
    const double eta = 0.37;
    const double quad = 0.5 * eta * eta;
    const double lin = eta * (eta - 0.5 * eta);
    CHECK(quad == doctest::Approx(lin).epsilon(1e-15));
    CHECK(huber(Tensor::from({eta}), Tensor::from({0.0}), eta).item() ==
          doctest::Approx(quad).epsilon(1e-15));

    CHECK_THROWS_AS(huber(Tensor::from({1.0}), Tensor::from({1.0, 2.0}), 1.0), ShapeError);
    CHECK_THROWS_AS(huber(Tensor::from({1.0}), Tensor::from({1.0}), 0.0), std::invalid_argument);
}

TEST_CASE("huber is positive unless the inputs coincide") {
    RngStream rng(6);
    Tensor a = gaussian(rng, {8});
    CHECK(huber(a, Tensor::from(a.data(), a.shape()), 0.5).item() == 0.0);
    for (int i = 0; i < 8; ++i) {
        auto shifted = a.data();
        shifted[i] += 1e-9;
        CHECK(huber(a, Tensor::from(shifted, a.shape()), 0.5).item() > 0.0);
    }
}

TEST_CASE("ema update arithmetic and geometric convergence") {
    ConsistencyModel model = fresh_model(7);

    // force theta = 0, theta_minus = 1 on one parameter and check 0.95
    auto student = model.net().named_parameters();
    auto ema = model.ema_net().named_parameters();
    std::fill(student[0].second.mutable_data().begin(), student[0].second.mutable_data().end(), 0.0);
    std::fill(ema[0].second.mutable_data().begin(), ema[0].second.mutable_data().end(), 1.0);
    model.ema_update(0.95);
    for (double v : ema[0].second.data()) CHECK(v == doctest::Approx(0.95).epsilon(1e-15));

    // repeated updates contract the gap by mu each time
    double prev_gap = 0.95;
    for (int i = 0; i < 5; ++i) {
        model.ema_update(0.95);
        const double gap = ema[0].second.data()[0];
        CHECK(gap == doctest::Approx(prev_gap * 0.95).epsilon(1e-12));
        prev_gap = gap;
    }

    // mu = 0 copies the student
    model.ema_update(0.0);
    auto student_now = model.net().named_parameters();
    auto ema_now = model.ema_net().named_parameters();
    for (size_t i = 0; i < student_now.size(); ++i) {
        CHECK(ema_now[i].second.data() == student_now[i].second.data());
    }
}

TEST_CASE("skip-start draws stay in range") {
    RngStream rng(8);
    const int n_total = 200, k = 20;
    int lo = n_total, hi = 0;
    for (int i = 0; i < 100000; ++i) {
        const int n = sample_skip_start(rng, n_total, k);
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(lo == 1);
    CHECK(hi == n_total - k);
}

TEST_CASE("distill step isolates gradients and freezes the teacher") {
    NoiseSchedule sched = short_schedule();
    ModelConfig cfg = rings_model();
    TeacherModel teacher{DenoiserNet(cfg, RngStream(9)), sched};
    const auto teacher_before = teacher.net.named_parameters();
    std::vector<std::vector<double>> teacher_data;
    for (auto& [name, p] : teacher_before) teacher_data.push_back(p.data());

    ConsistencyModel model(teacher.net, sched, quick_distill());
    AdamW opt(model.net().parameters(), 1e-3);

    RngStream step_stream(10);
    RngStream data_rng(11);
    Tensor z0 = gaussian(data_rng, {16, 1, 2});
    std::vector<int> classes(16, 3);

    const double loss = distill_step(model, teacher.eps_fn(), z0, classes, step_stream, opt);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);

    // teacher parameters are bitwise untouched and receive no gradient
    const auto teacher_after = teacher.net.named_parameters();
    for (size_t i = 0; i < teacher_after.size(); ++i) {
        CHECK(teacher_after[i].second.data() == teacher_data[i]);
        CHECK_FALSE(teacher_after[i].second.has_grad());
    }
    // the EMA branch receives no gradient either
    for (auto& [name, p] : model.ema_net().named_parameters()) {
        CHECK_FALSE(p.has_grad());
    }
    // and the student moved
    bool moved = false;
    auto student_now = model.net().named_parameters();
    for (size_t i = 0; i < student_now.size() && !moved; ++i) {
        moved = student_now[i].second.data() != teacher_data[i];
    }
    CHECK(moved);
}

TEST_CASE("self-consistent maps give zero loss on delta data") {
    NoiseSchedule sched = short_schedule();
    GaussianWorld delta{{0.6, -0.4}, 0.0};
    const EpsFn teacher_eps = delta.eps_fn(sched);

    // the exact consistency function of zero-variance data sends everything
    // to the data point
    const ConsistencyFn exact = [&](const Tensor& z, int t) {
        if (t == 0) return Tensor::from(z.data(), z.shape());
        std::vector<double> m(z.numel());
        for (std::int64_t i = 0; i < z.numel(); ++i) m[i] = delta.mean[i % 2];
        return Tensor::from(std::move(m), z.shape());
    };

    RngStream rng(12);
    Tensor z0 = Tensor::from({0.6, -0.4, 0.6, -0.4}, {2, 1, 2});
    Tensor noise = gaussian(rng, {2, 1, 2});
    const double loss = distill_loss_value(sched, teacher_eps, exact, exact, z0, {0, 1}, 8,
                                           /*n=*/40, /*k=*/20, /*omega=*/6.0, noise, 0.5);
    CHECK(loss == 0.0);
}

TEST_CASE("lcm sampling") {
    ConsistencyModel model = fresh_model(13);

    SUBCASE("steps=1 makes exactly one evaluation") {
        RngStream s(14);
        const long before = model.ema_net().eval_count();
        Tensor out = lcm_sample(model, 1, 5.0, {0, 1, 2}, s);
        CHECK(model.ema_net().eval_count() - before == 1);
        CHECK(model.net().eval_count() == 0);
        CHECK(out.shape() == Shape{3, 1, 2});
    }
    SUBCASE("steps=2 makes exactly two evaluations") {
        RngStream s(15);
        const long before = model.ema_net().eval_count();
        lcm_sample(model, 2, 5.0, {0}, s);
        CHECK(model.ema_net().eval_count() - before == 2);
    }
    SUBCASE("bitwise deterministic per (seed, steps, omega, classes)") {
        RngStream s1(16), s2(16);
        Tensor a = lcm_sample(model, 4, 5.0, {1, 2}, s1);
        Tensor b = lcm_sample(model, 4, 5.0, {1, 2}, s2);
        CHECK(a.data() == b.data());
    }
    SUBCASE("sampling reads the EMA weights") {
        RngStream s1(17), s2(17);
        Tensor before = lcm_sample(model, 2, 5.0, {0}, s1);
        // moving the student without touching the EMA copy must not change samples
        auto& w = model.net().out_proj_.w.mutable_data();
        for (auto& v : w) v += 0.5;
        Tensor after = lcm_sample(model, 2, 5.0, {0}, s2);
        CHECK(before.data() == after.data());
    }
    SUBCASE("count=0 yields an empty tensor without consuming the stream") {
        RngStream s(18);
        const auto counter = s.counter();
        Tensor out = lcm_sample(model, 3, 5.0, {}, s);
        CHECK(out.numel() == 0);
        CHECK(s.counter() == counter);
    }
}

TEST_CASE("boundary condition survives training") {
    NoiseSchedule sched = short_schedule();
    TeacherModel teacher{DenoiserNet(rings_model(), RngStream(19)), sched};
    ConsistencyModel model(teacher.net, sched, quick_distill());
    AdamW opt(model.net().parameters(), 1e-3);

    RngStream step_stream(20);
    RngStream data_rng(21);
    for (int step = 0; step < 10; ++step) {
        Tensor z0 = gaussian(data_rng, {8, 1, 2});
        distill_step(model, teacher.eps_fn(), z0, std::vector<int>(8, step % 8), step_stream, opt);
    }
    RngStream rng(22);
    Tensor z = gaussian(rng, {4, 1, 2});
    const std::vector<int> classes{0, 1, 2, 3};
    CHECK(model.consistency_fn(Branch::Student, z, classes, 5.0, 0).data() == z.data());
    CHECK(model.consistency_fn(Branch::Ema, z, classes, 5.0, 0).data() == z.data());
}

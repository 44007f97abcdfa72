#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lcmkit/checkpoint.hpp"
#include "lcmkit/commands.hpp"
#include "lcmkit/config.hpp"
#include "lcmkit/metrics.hpp"

using namespace lcmkit;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "lcmkit-test";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const char* kConfigText = R"(
# desk-scale smoke config
schedule.N = 100
schedule.beta_start = 1e-4
schedule.beta_end = 0.02
schedule.sigma_data = 0.5
schedule.kappa = 10.0
model.blocks = 1
model.width = 16
model.heads = 2
model.ffn = 32
model.use_rope = true
model.use_rmsnorm = true
model.use_swiglu = true
teacher.lr = 1e-3
teacher.steps = 4
teacher.batch = 8
teacher.p_uncond = 0.1
distill.k = 10
distill.omega_min = 4
distill.omega_max = 12
distill.mu = 0.95
distill.eta = 0.5
distill.lr = 1e-3
distill.steps = 3
sample.steps = 2
sample.omega = 5
data.name = rings2d
seed = 7
eval.count = 64
)";

std::string write_config(const std::string& name, const std::string& text) {
    const auto path = temp_dir() / name;
    std::ofstream out(path);
    out << text;
    return path.string();
}

}  // namespace

TEST_CASE("gaussian_w2 closed forms") {
    SUBCASE("identical Gaussians") {
        const std::vector<double> m{0.3, -0.2};
        const std::vector<double> c{0.5, 0.1, 0.1, 0.7};
        CHECK(std::abs(gaussian_w2(m, c, m, c)) <= 1e-12);
    }
    SUBCASE("mean shift only") {
        const std::vector<double> eye{1, 0, 0, 1};
        CHECK(gaussian_w2({0, 0}, eye, {1, 0}, eye) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("isotropic covariances, equal means") {
        const double s1 = 0.6, s2 = 1.1;
        const std::vector<double> c1{s1 * s1, 0, 0, s1 * s1};
        const std::vector<double> c2{s2 * s2, 0, 0, s2 * s2};
        CHECK(gaussian_w2({0.4, 0.4}, c1, {0.4, 0.4}, c2) ==
              doctest::Approx(2.0 * (s1 - s2) * (s1 - s2)).epsilon(1e-10));
    }
    SUBCASE("non-PSD covariance is rejected") {
        const std::vector<double> eye{1, 0, 0, 1};
        const std::vector<double> indefinite{1, 0, 0, -1};
        const std::vector<double> asym{1, 0.5, -0.5, 1};
        CHECK_THROWS_AS(gaussian_w2({0, 0}, indefinite, {0, 0}, eye), std::invalid_argument);
        CHECK_THROWS_AS(gaussian_w2({0, 0}, eye, {0, 0}, asym), std::invalid_argument);
    }
}

TEST_CASE("empirical frechet on dataset draws") {
    const ToyDataset data = ToyDataset::make("rings2d");
    auto mixture_draw = [&](std::uint64_t seed, int count) {
        RngStream s(seed);
        std::vector<int> classes(count);
        for (auto& c : classes) c = static_cast<int>(s.uniform_int(0, 7));
        return to_rows(data.sample_batch(classes, s));
    };

    const auto a = mixture_draw(1, 2000);
    SUBCASE("zero on identical sets, symmetric otherwise") {
        CHECK(std::abs(empirical_frechet(a, a)) <= 1e-12);
        const auto b = mixture_draw(2, 2000);
        const double ab = empirical_frechet(a, b);
        const double ba = empirical_frechet(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
    }
    SUBCASE("noise floor is small, mode collapse is far above it") {
        const auto b = mixture_draw(2, 2000);
        const double floor = empirical_frechet(a, b);
        CHECK(floor > 0.0);
        CHECK(floor < 0.05);

        RngStream s(3);
        std::vector<int> one_mode(2000, 0);
        const auto collapsed = to_rows(data.sample_batch(one_mode, s));
        CHECK(empirical_frechet(a, collapsed) > floor);
        CHECK(empirical_frechet(a, collapsed) > 10.0 * floor);
    }
    SUBCASE("needs two samples per side") {
        CHECK_THROWS_AS(empirical_frechet(a, {a[0]}), std::invalid_argument);
    }
}

TEST_CASE("per-class fidelity") {
    const ToyDataset data = ToyDataset::make("rings2d");

    SUBCASE("exact centers score zero") {
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        for (int c = 0; c < 8; ++c) {
            rows.push_back(data.class_template(c));
            labels.push_back(c);
        }
        CHECK(per_class_fidelity(rows, labels, data) == 0.0);
    }
    SUBCASE("true conditional sits at the Rayleigh mean") {
        RngStream s(4);
        std::vector<int> labels(2000);
        for (auto& c : labels) c = static_cast<int>(s.uniform_int(0, 7));
        const auto rows = to_rows(data.sample_batch(labels, s));
        const double expected = 0.1 * std::sqrt(M_PI / 2.0);  // mean of a 2d Rayleigh
        CHECK(per_class_fidelity(rows, labels, data) ==
              doctest::Approx(expected).epsilon(0.10));
    }
    SUBCASE("ignored conditioning scores the inter-center distance") {
        RngStream s(5);
        std::vector<int> real(2000), claimed(2000);
        for (int i = 0; i < 2000; ++i) {
            real[i] = static_cast<int>(s.uniform_int(0, 7));
            claimed[i] = static_cast<int>(s.uniform_int(0, 7));
        }
        const auto rows = to_rows(data.sample_batch(real, s));
        const double got = per_class_fidelity(rows, claimed, data);

        // Monte Carlo estimate of mean |center_u - center_c| over uniform pairs
        double mc = 0.0;
        for (int u = 0; u < 8; ++u) {
            for (int c = 0; c < 8; ++c) {
                const auto cu = data.class_template(u);
                const auto cc = data.class_template(c);
                mc += std::hypot(cu[0] - cc[0], cu[1] - cc[1]);
            }
        }
        mc /= 64.0;
        CHECK(got == doctest::Approx(mc).epsilon(0.10));
        CHECK(got > 5.0 * 0.1 * std::sqrt(M_PI / 2.0));
    }
    SUBCASE("unknown class is rejected") {
        CHECK_THROWS_AS(per_class_fidelity({{0.0, 0.0}}, {8}, data), std::out_of_range);
    }
}

TEST_CASE("dataset generators") {
    SUBCASE("deterministic per class and seed") {
        const ToyDataset data = ToyDataset::make("seqtoy");
        RngStream s1(6), s2(6);
        Tensor a = data.sample(2, s1);
        Tensor b = data.sample(2, s2);
        CHECK(a.data() == b.data());
        CHECK(a.shape() == Shape{16, 4});
    }
    SUBCASE("rings2d centers live on the unit circle") {
        const ToyDataset data = ToyDataset::make("rings2d");
        CHECK(data.num_classes() == 8);
        for (int c = 0; c < 8; ++c) {
            const auto t = data.class_template(c);
            CHECK(std::hypot(t[0], t[1]) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("unknown dataset name") {
        CHECK_THROWS_AS(ToyDataset::make("bogus"), std::invalid_argument);
    }
}

TEST_CASE("checkpoint round trips") {
    const auto dir = temp_dir();
    NoiseSchedule sched(100, 1e-4, 0.02, 0.5, 10.0);
    ScheduleSpec spec{100, 1e-4, 0.02, 0.5, 10.0};
    ModelConfig cfg;
    cfg.tokens = 1;
    cfg.channels = 2;
    cfg.width = 16;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ffn = 32;
    cfg.num_classes = 8;
    cfg.max_timestep = 100;

    SUBCASE("teacher: save-load-save is byte-identical") {
        TeacherModel teacher{DenoiserNet(cfg, RngStream(30)), sched};
        const auto p1 = (dir / "t1.ckpt").string();
        const auto p2 = (dir / "t2.ckpt").string();
        save_checkpoint(Checkpoint::of_teacher(teacher, spec), p1);
        Checkpoint loaded = load_checkpoint(p1);
        TeacherModel again = loaded.to_teacher();
        save_checkpoint(Checkpoint::of_teacher(again, spec), p2);
        CHECK(read_bytes(p1) == read_bytes(p2));

        // parameters that went through one load round-trip bitwise
        Checkpoint reloaded = load_checkpoint(p2);
        TeacherModel third = reloaded.to_teacher();
        const auto a = again.net.named_parameters();
        const auto b = third.net.named_parameters();
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.data() == b[i].second.data());
    }
    SUBCASE("student: both parameter sets and hyperparameters survive") {
        DistillConfig dcfg;
        dcfg.k = 10;
        ConsistencyModel model(DenoiserNet(cfg, RngStream(31)), sched, dcfg);
        model.ema_update(0.5);  // make theta and theta-minus differ? (they start equal)
        model.net().cond_embed_.mutable_data()[0] += 0.25;
        const auto path = (dir / "s1.ckpt").string();
        save_checkpoint(Checkpoint::of_student(model, spec), path);
        Checkpoint loaded = load_checkpoint(path);
        CHECK(loaded.kind == ModelKind::Lcm);
        CHECK(loaded.hyper.k == 10);
        CHECK(loaded.hyper.mu == doctest::Approx(0.95));
        ConsistencyModel again = loaded.to_student();
        // student and ema copies differ exactly as saved
        CHECK(again.net().cond_embed_.data()[0] !=
              again.ema_net().cond_embed_.data()[0]);
    }
    SUBCASE("corrupted magic") {
        const auto path = (dir / "bad_magic.ckpt").string();
        TeacherModel teacher{DenoiserNet(cfg, RngStream(32)), sched};
        save_checkpoint(Checkpoint::of_teacher(teacher, spec), path);
        auto bytes = read_bytes(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
        try {
            load_checkpoint(path);
            FAIL("expected bad magic");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::BadMagic);
        }
    }
    SUBCASE("version mismatch") {
        const auto path = (dir / "bad_version.ckpt").string();
        TeacherModel teacher{DenoiserNet(cfg, RngStream(33)), sched};
        save_checkpoint(Checkpoint::of_teacher(teacher, spec), path);
        auto bytes = read_bytes(path);
        bytes[4] = 9;
        std::ofstream(path, std::ios::binary) << bytes;
        try {
            load_checkpoint(path);
            FAIL("expected bad version");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::BadVersion);
        }
    }
    SUBCASE("truncated file") {
        const auto path = (dir / "trunc.ckpt").string();
        TeacherModel teacher{DenoiserNet(cfg, RngStream(34)), sched};
        save_checkpoint(Checkpoint::of_teacher(teacher, spec), path);
        auto bytes = read_bytes(path);
        bytes.resize(bytes.size() / 2);
        std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
        try {
            load_checkpoint(path);
            FAIL("expected truncation error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::Truncated);
        }
    }
    SUBCASE("wrong kind for the requested model") {
        const auto path = (dir / "kind.ckpt").string();
        TeacherModel teacher{DenoiserNet(cfg, RngStream(35)), sched};
        save_checkpoint(Checkpoint::of_teacher(teacher, spec), path);
        try {
            load_checkpoint(path).to_student();
            FAIL("expected arch mismatch");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::ArchMismatch);
        }
    }
}

TEST_CASE("config parsing") {
    SUBCASE("full config parses with typed access") {
        Config cfg = Config::parse_text(kConfigText);
        CHECK(cfg.schedule_spec().n == 100);
        CHECK(cfg.model_config().width == 16);
        CHECK(cfg.train_config().batch == 8);
        CHECK(cfg.distill_config().k == 10);
        CHECK(cfg.distill_config().batch == 8);
        CHECK(cfg.dataset_name() == "rings2d");
        CHECK(cfg.seed() == 7);
        CHECK(cfg.get_int_or("eval.count", 2000) == 64);
        CHECK_FALSE(cfg.distill_config().omega_per_item);
    }
    SUBCASE("missing key is named") {
        std::string text = kConfigText;
        text.replace(text.find("seed = 7"), 8, "");
        CHECK_THROWS_WITH_AS(Config::parse_text(text), doctest::Contains("seed"),
                             std::runtime_error);
    }
    SUBCASE("unknown key is rejected") {
        CHECK_THROWS_WITH_AS(Config::parse_text(std::string(kConfigText) + "\nbogus.key = 1\n"),
                             doctest::Contains("bogus.key"), std::runtime_error);
    }
    SUBCASE("non-numeric value is rejected at typed access") {
        std::string text = kConfigText;
        text.replace(text.find("teacher.lr = 1e-3"), 17, "teacher.lr = fast");
        Config cfg = Config::parse_text(text);
        CHECK_THROWS_WITH_AS(cfg.train_config(), doctest::Contains("teacher.lr"),
                             std::runtime_error);
    }
}

TEST_CASE("sample csv round trip") {
    std::vector<std::vector<double>> rows{{0.125, -3.5}, {1e-17, 2.0}};
    std::vector<int> labels{3, 7};
    const std::string csv = samples_to_csv(rows, labels);
    CHECK(csv.rfind("class,dim0,dim1\n", 0) == 0);

    const auto path = (temp_dir() / "samples.csv").string();
    write_file_atomic(path, csv);
    std::vector<std::vector<double>> back_rows;
    std::vector<int> back_labels;
    read_samples_csv(path, back_rows, back_labels);
    CHECK(back_labels == labels);
    REQUIRE(back_rows.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) CHECK(back_rows[i] == rows[i]);
}

TEST_CASE("commands are deterministic end to end at smoke scale") {
    const auto dir = temp_dir();
    const std::string cfg_path = write_config("smoke.cfg", kConfigText);
    const std::string teacher_path = (dir / "teacher.ckpt").string();
    const std::string student_path = (dir / "student.ckpt").string();
    std::ostringstream log;

    cmd_train_teacher(cfg_path, teacher_path, log);
    const std::string teacher_bytes = read_bytes(teacher_path);
    cmd_train_teacher(cfg_path, teacher_path, log);
    CHECK(read_bytes(teacher_path) == teacher_bytes);

    cmd_distill(teacher_path, cfg_path, student_path, log);
    const std::string student_bytes = read_bytes(student_path);
    cmd_distill(teacher_path, cfg_path, student_path, log);
    CHECK(read_bytes(student_path) == student_bytes);

    // teacher checkpoints refuse to act as students and vice versa
    CHECK_THROWS_AS(load_checkpoint(teacher_path).to_student(), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(student_path).to_teacher(), CheckpointError);

    // a config with a different architecture is an arch mismatch at distill
    std::string other = kConfigText;
    other.replace(other.find("model.width = 16"), 16, "model.width = 32");
    const std::string other_path = write_config("smoke_other.cfg", other);
    try {
        cmd_distill(teacher_path, other_path, student_path, log);
        FAIL("expected arch mismatch");
    } catch (const CheckpointError& e) {
        CHECK(e.kind == CheckpointError::Kind::ArchMismatch);
    }

    const std::string csv_path = (dir / "samples.csv").string();
    SampleStats stats = cmd_sample(student_path, 2, 5.0, "all", 32, csv_path, log);
    CHECK(stats.nfe_per_sample == 2);
    const std::string csv_bytes = read_bytes(csv_path);
    cmd_sample(student_path, 2, 5.0, "all", 32, csv_path, log);
    CHECK(read_bytes(csv_path) == csv_bytes);

    SampleStats teacher_stats = cmd_sample(teacher_path, 5, 2.0, "0", 8,
                                           (dir / "tsamples.csv").string(), log);
    CHECK(teacher_stats.nfe_per_sample == 10);

    const std::string report_path = (dir / "report.json").string();
    EvalReport rep = cmd_eval(csv_path, "rings2d", report_path, 0, 64);
    CHECK(rep.sample_count == 32);
    const std::string report_bytes = read_bytes(report_path);
    cmd_eval(csv_path, "rings2d", report_path, 0, 64);
    CHECK(read_bytes(report_path) == report_bytes);
    CHECK(report_bytes.find("empirical_frechet") != std::string::npos);
    CHECK(report_bytes.find("per_class_fidelity") != std::string::npos);
    CHECK(report_bytes.find("noise_floor") != std::string::npos);
    CHECK(report_bytes.find("wall_clock_per_sample") != std::string::npos);

    // sweep CSV: header plus one fully populated row per grid point, rerun
    // byte-identical
    const std::string sweep_path = (dir / "sweep.csv").string();
    cmd_sweep("steps", {1, 2, 4}, cfg_path, sweep_path, log);
    const std::string sweep_bytes = read_bytes(sweep_path);
    CHECK(sweep_bytes.rfind("steps,nfe,frechet,fidelity\n", 0) == 0);
    int lines = 0;
    for (char ch : sweep_bytes) lines += ch == '\n';
    CHECK(lines == 4);
    cmd_sweep("steps", {1, 2, 4}, cfg_path, sweep_path, log);
    CHECK(read_bytes(sweep_path) == sweep_bytes);
}

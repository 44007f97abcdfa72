#include "lcmkit/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "lcmkit/checkpoint.hpp"
#include "lcmkit/consistency.hpp"
#include "lcmkit/solver.hpp"
#include "lcmkit/teacher.hpp"

namespace lcmkit {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<int> make_class_vector(const std::string& cond, int num_classes, int count) {
    std::vector<int> classes(count);
    if (cond == "all") {
        for (int i = 0; i < count; ++i) classes[i] = i % num_classes;
    } else {
        int c;
        try {
            c = std::stoi(cond);
        } catch (const std::exception&) {
            throw std::runtime_error("sample: --cond must be a class index or 'all', got '" +
                                     cond + "'");
        }
        if (c < 0 || c >= num_classes) {
            throw std::runtime_error("sample: class " + std::to_string(c) + " outside [0," +
                                     std::to_string(num_classes - 1) + "]");
        }
        classes.assign(count, c);
    }
    return classes;
}

// Reference draws from the full class mixture, for distance metrics.
std::vector<std::vector<double>> reference_draw(const ToyDataset& data, int count,
                                                RngStream stream) {
    std::vector<int> classes(count);
    for (int i = 0; i < count; ++i) {
        classes[i] = static_cast<int>(stream.uniform_int(0, data.num_classes() - 1));
    }
    return to_rows(data.sample_batch(classes, stream));
}

struct EvalContext {
    ToyDataset data;
    std::vector<std::vector<double>> ref_a, ref_b;
    double noise_floor;

    static EvalContext make(const std::string& dataset_name, std::uint64_t seed, int ref_count) {
        EvalContext ctx{ToyDataset::make(dataset_name), {}, {}, 0.0};
        RngStream root(seed);
        ctx.ref_a = reference_draw(ctx.data, ref_count, root.split("eval-ref-a"));
        ctx.ref_b = reference_draw(ctx.data, ref_count, root.split("eval-ref-b"));
        ctx.noise_floor = empirical_frechet(ctx.ref_a, ctx.ref_b);
        return ctx;
    }

    EvalReport report(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                      std::uint64_t seed, long nfe) const {
        EvalReport rep;
        rep.metrics.emplace_back("empirical_frechet", empirical_frechet(rows, ref_a));
        rep.metrics.emplace_back("per_class_fidelity", per_class_fidelity(rows, labels, data));
        rep.metrics.emplace_back("noise_floor", noise_floor);
        rep.sample_count = static_cast<long>(rows.size());
        rep.seed = seed;
        rep.nfe = nfe;
        return rep;
    }
};

}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json m;
    for (const auto& [name, value] : metrics) m[name] = value;
    j["metrics"] = m;
    j["sample_count"] = sample_count;
    j["seed"] = seed;
    j["nfe"] = nfe;
    j["wall_clock_per_sample"] = wall_clock_per_sample;
    return j.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
    }
}

std::string samples_to_csv(const std::vector<std::vector<double>>& rows,
                           const std::vector<int>& labels) {
    if (rows.size() != labels.size()) throw std::invalid_argument("csv: labels must pair with rows");
    std::ostringstream out;
    const size_t dim = rows.empty() ? 0 : rows[0].size();
    out << "class";
    for (size_t j = 0; j < dim; ++j) out << ",dim" << j;
    out << "\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        out << labels[i];
        for (double v : rows[i]) out << "," << fmt_double(v);
        out << "\n";
    }
    return out.str();
}

void read_samples_csv(const std::string& path, std::vector<std::vector<double>>& rows,
                      std::vector<int>& labels) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
    if (line.rfind("class", 0) != 0) throw std::runtime_error("csv: missing header in " + path);
    rows.clear();
    labels.clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        if (!std::getline(ls, cell, ',')) continue;
        labels.push_back(std::stoi(cell));
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
}

void cmd_train_teacher(const std::string& config_path, const std::string& out_path,
                       std::ostream& log) {
    const Config cfg = Config::parse_file(config_path);
    const ToyDataset data = ToyDataset::make(cfg.dataset_name());
    const ScheduleSpec spec = cfg.schedule_spec();
    const auto start = std::chrono::steady_clock::now();

    std::vector<double> losses;
    TeacherModel teacher = train_teacher(data, cfg.model_config(), spec.build(),
                                         cfg.train_config(), RngStream(cfg.seed()).split("teacher"),
                                         &losses);
    save_checkpoint(Checkpoint::of_teacher(teacher, spec), out_path);
    log << "trained teacher on " << data.name() << " for " << losses.size() << " steps in "
        << seconds_since(start) << " s; final loss " << losses.back() << "\n";
}

void cmd_distill(const std::string& teacher_path, const std::string& config_path,
                 const std::string& out_path, std::ostream& log) {
    const Config cfg = Config::parse_file(config_path);
    const Checkpoint teacher_ckpt = load_checkpoint(teacher_path);
    const ToyDataset data = ToyDataset::make(cfg.dataset_name());

    ModelConfig expect = cfg.model_config();
    expect.tokens = data.tokens();
    expect.channels = data.channels();
    expect.num_classes = data.num_classes();
    if (!(teacher_ckpt.arch == expect) || !(teacher_ckpt.schedule == cfg.schedule_spec())) {
        throw CheckpointError(CheckpointError::Kind::ArchMismatch,
                              "distill: teacher checkpoint does not match the config's "
                              "architecture or schedule");
    }

    TeacherModel teacher = teacher_ckpt.to_teacher();
    const DistillConfig dcfg = cfg.distill_config();
    ConsistencyModel model(teacher.net, teacher.schedule, dcfg);
    AdamW opt(model.net().parameters(), dcfg.lr);
    const EpsFn teacher_eps = teacher.eps_fn();

    RngStream stream = RngStream(cfg.seed()).split("distill");
    RngStream data_stream = stream.split("data");
    RngStream step_stream = stream.split("steps");

    const auto start = std::chrono::steady_clock::now();
    double last_loss = 0.0;
    for (int step = 0; step < dcfg.steps; ++step) {
        std::vector<int> classes(dcfg.batch);
        for (int i = 0; i < dcfg.batch; ++i) {
            classes[i] = static_cast<int>(data_stream.uniform_int(0, data.num_classes() - 1));
        }
        Tensor z0 = data.sample_batch(classes, data_stream);
        last_loss = distill_step(model, teacher_eps, z0, classes, step_stream, opt);
    }
    save_checkpoint(Checkpoint::of_student(model, cfg.schedule_spec()), out_path);
    log << "distilled for " << dcfg.steps << " steps (k=" << dcfg.k << ") in "
        << seconds_since(start) << " s; final loss " << last_loss << "\n";
}

SampleStats cmd_sample(const std::string& model_path, int steps, double omega,
                       const std::string& cond, int count, const std::string& out_path,
                       std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(model_path);
    const std::uint64_t seed = 0;  // sampling runs on a fixed stream; vary via distinct outputs
    RngStream stream = RngStream(seed).split("sample");

    SampleStats stats;
    stats.count = count;
    Tensor samples;
    std::vector<int> classes = make_class_vector(cond, ckpt.arch.num_classes, count);
    const auto start = std::chrono::steady_clock::now();
    if (ckpt.kind == ModelKind::Teacher) {
        TeacherModel teacher = ckpt.to_teacher();
        samples = ddim_sample(teacher, steps, omega, classes, stream);
        stats.nfe_per_sample = 2L * steps;
    } else {
        ConsistencyModel model = ckpt.to_student();
        samples = lcm_sample(model, steps, omega, classes, stream);
        stats.nfe_per_sample = steps;
    }
    stats.wall_seconds_per_sample = count > 0 ? seconds_since(start) / count : 0.0;

    write_file_atomic(out_path, samples_to_csv(to_rows(samples), classes));
    log << "wrote " << count << " samples to " << out_path << "; nfe_per_sample="
        << stats.nfe_per_sample << " wall_clock_per_sample=" << stats.wall_seconds_per_sample
        << " s\n";
    return stats;
}

EvalReport cmd_eval(const std::string& samples_path, const std::string& dataset_name,
                    const std::string& out_path, std::uint64_t seed, int ref_count) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    read_samples_csv(samples_path, rows, labels);
    const EvalContext ctx = EvalContext::make(dataset_name, seed, ref_count);
    EvalReport rep = ctx.report(rows, labels, seed, 0);
    if (!out_path.empty()) write_file_atomic(out_path, rep.to_json());
    return rep;
}

namespace {

struct SweepEnv {
    Config cfg;
    ToyDataset data;
    ScheduleSpec spec;
    TeacherModel teacher;
    EvalContext eval;
    double teacher_frechet;  // 50-step two-branch baseline at omega=2
};

SweepEnv make_sweep_env(const std::string& config_path, std::ostream& log) {
    Config cfg = Config::parse_file(config_path);
    ToyDataset data = ToyDataset::make(cfg.dataset_name());
    ScheduleSpec spec = cfg.schedule_spec();
    const int eval_count = cfg.get_int_or("eval.count", 2000);

    auto start = std::chrono::steady_clock::now();
    TeacherModel teacher = train_teacher(data, cfg.model_config(), spec.build(),
                                         cfg.train_config(),
                                         RngStream(cfg.seed()).split("teacher"), nullptr);
    log << "sweep: teacher trained in " << seconds_since(start) << " s\n";

    EvalContext eval = EvalContext::make(cfg.dataset_name(), cfg.seed(), eval_count);
    RngStream tstream = RngStream(cfg.seed()).split("sweep-teacher-sample");
    std::vector<int> classes(eval_count);
    for (int i = 0; i < eval_count; ++i) classes[i] = i % data.num_classes();
    Tensor tsamples = ddim_sample(teacher, 50, 2.0, classes, tstream);
    const double tf = empirical_frechet(to_rows(tsamples), eval.ref_a);
    log << "sweep: teacher 50-step frechet " << tf << " (noise floor " << eval.noise_floor
        << ")\n";
    return SweepEnv{std::move(cfg), std::move(data), spec, std::move(teacher), std::move(eval), tf};
}

// Distill under the sweep config with `k`, recording the evaluation metric
// every `interval` steps. Rows come back as (step, frechet).
std::vector<std::pair<int, double>> distill_trace(const SweepEnv& env, int k, int interval) {
    DistillConfig dcfg = env.cfg.distill_config();
    dcfg.k = k;
    ConsistencyModel model(env.teacher.net, env.teacher.schedule, dcfg);
    AdamW opt(model.net().parameters(), dcfg.lr);
    const EpsFn teacher_eps = env.teacher.eps_fn();

    RngStream stream = RngStream(env.cfg.seed()).split("distill");
    RngStream data_stream = stream.split("data");
    RngStream step_stream = stream.split("steps");
    const int eval_count = static_cast<int>(env.eval.ref_a.size());

    std::vector<std::pair<int, double>> trace;
    for (int step = 1; step <= dcfg.steps; ++step) {
        std::vector<int> classes(dcfg.batch);
        for (int i = 0; i < dcfg.batch; ++i) {
            classes[i] = static_cast<int>(data_stream.uniform_int(0, env.data.num_classes() - 1));
        }
        Tensor z0 = env.data.sample_batch(classes, data_stream);
        distill_step(model, teacher_eps, z0, classes, step_stream, opt);

        if (step % interval == 0 || step == dcfg.steps) {
            RngStream sstream = RngStream(env.cfg.seed()).split("sweep-eval-" + std::to_string(step));
            std::vector<int> eval_classes(eval_count);
            for (int i = 0; i < eval_count; ++i) eval_classes[i] = i % env.data.num_classes();
            Tensor samples = lcm_sample(model, env.cfg.sample_steps(), env.cfg.sample_omega(),
                                        eval_classes, sstream);
            trace.emplace_back(step, empirical_frechet(to_rows(samples), env.eval.ref_a));
        }
    }
    return trace;
}

ConsistencyModel distill_under(const SweepEnv& env) {
    DistillConfig dcfg = env.cfg.distill_config();
    ConsistencyModel model(env.teacher.net, env.teacher.schedule, dcfg);
    AdamW opt(model.net().parameters(), dcfg.lr);
    const EpsFn teacher_eps = env.teacher.eps_fn();
    RngStream stream = RngStream(env.cfg.seed()).split("distill");
    RngStream data_stream = stream.split("data");
    RngStream step_stream = stream.split("steps");
    for (int step = 0; step < dcfg.steps; ++step) {
        std::vector<int> classes(dcfg.batch);
        for (int i = 0; i < dcfg.batch; ++i) {
            classes[i] = static_cast<int>(data_stream.uniform_int(0, env.data.num_classes() - 1));
        }
        Tensor z0 = env.data.sample_batch(classes, data_stream);
        distill_step(model, teacher_eps, z0, classes, step_stream, opt);
    }
    return model;
}

constexpr int kSweepEvalInterval = 500;

}  // namespace

void cmd_sweep(const std::string& kind, const std::vector<double>& grid,
               const std::string& config_path, const std::string& out_path, std::ostream& log) {
    if (grid.empty()) throw std::runtime_error("sweep: empty grid");
    SweepEnv env = make_sweep_env(config_path, log);
    const int eval_count = static_cast<int>(env.eval.ref_a.size());
    std::ostringstream csv;

    if (kind == "k") {
        const double threshold = 2.0 * env.teacher_frechet;
        csv << "k,step,frechet,threshold\n";
        std::vector<std::vector<std::pair<int, double>>> traces(grid.size());
        std::vector<std::thread> workers;
        for (size_t gi = 0; gi < grid.size(); ++gi) {
            workers.emplace_back([&, gi] {
                traces[gi] = distill_trace(env, static_cast<int>(grid[gi]), kSweepEvalInterval);
            });
        }
        for (auto& w : workers) w.join();
        for (size_t gi = 0; gi < grid.size(); ++gi) {
            for (const auto& [step, frechet] : traces[gi]) {
                csv << static_cast<int>(grid[gi]) << "," << step << "," << fmt_double(frechet)
                    << "," << fmt_double(threshold) << "\n";
            }
        }
    } else if (kind == "omega") {
        ConsistencyModel model = distill_under(env);
        csv << "omega,steps,nfe,frechet,fidelity\n";
        for (double omega : grid) {
            for (int steps : {1, 2, 4, 8}) {
                RngStream sstream = RngStream(env.cfg.seed())
                                        .split("sweep-omega-" + fmt_double(omega) + "-" +
                                               std::to_string(steps));
                std::vector<int> classes(eval_count);
                for (int i = 0; i < eval_count; ++i) classes[i] = i % env.data.num_classes();
                Tensor samples = lcm_sample(model, steps, omega, classes, sstream);
                const auto rows = to_rows(samples);
                csv << fmt_double(omega) << "," << steps << "," << steps << ","
                    << fmt_double(empirical_frechet(rows, env.eval.ref_a)) << ","
                    << fmt_double(per_class_fidelity(rows, classes, env.data)) << "\n";
            }
        }
    } else if (kind == "steps") {
        ConsistencyModel model = distill_under(env);
        csv << "steps,nfe,frechet,fidelity\n";
        for (double steps_d : grid) {
            const int steps = static_cast<int>(steps_d);
            RngStream sstream =
                RngStream(env.cfg.seed()).split("sweep-steps-" + std::to_string(steps));
            std::vector<int> classes(eval_count);
            for (int i = 0; i < eval_count; ++i) classes[i] = i % env.data.num_classes();
            const auto start = std::chrono::steady_clock::now();
            Tensor samples = lcm_sample(model, steps, env.cfg.sample_omega(), classes, sstream);
            const double per_sample = seconds_since(start) / eval_count;
            const auto rows = to_rows(samples);
            csv << steps << "," << steps << ","
                << fmt_double(empirical_frechet(rows, env.eval.ref_a)) << ","
                << fmt_double(per_class_fidelity(rows, classes, env.data)) << "\n";
            log << "sweep steps=" << steps << ": wall_clock_per_sample=" << per_sample << " s\n";
        }
    } else {
        throw std::runtime_error("sweep: unknown kind '" + kind + "' (expected k|omega|steps)");
    }
    write_file_atomic(out_path, csv.str());
    log << "wrote sweep CSV to " << out_path << "\n";
}

bool cmd_oracle_check(std::ostream& os) { return run_oracle_checks(os); }

EvalReport cmd_ablate(const std::string& drop, const std::string& config_path, std::ostream& out,
                      std::ostream& log) {
    Config cfg = Config::parse_file(config_path);
    ModelConfig mcfg = cfg.model_config();
    if (drop == "rope") {
        mcfg.use_rope = false;
    } else if (drop == "rmsnorm") {
        mcfg.use_rmsnorm = false;
    } else if (drop == "swiglu") {
        mcfg.use_swiglu = false;
    } else if (drop != "none") {
        throw std::runtime_error("ablate: unknown --drop '" + drop +
                                 "' (expected rope|rmsnorm|swiglu)");
    }

    const ToyDataset data = ToyDataset::make(cfg.dataset_name());
    const ScheduleSpec spec = cfg.schedule_spec();
    const int eval_count = cfg.get_int_or("eval.count", 2000);

    auto start = std::chrono::steady_clock::now();
    TeacherModel teacher = train_teacher(data, mcfg, spec.build(), cfg.train_config(),
                                         RngStream(cfg.seed()).split("teacher"), nullptr);
    log << "ablate(" << drop << "): teacher trained in " << seconds_since(start) << " s\n";

    const DistillConfig dcfg = cfg.distill_config();
    ConsistencyModel model(teacher.net, teacher.schedule, dcfg);
    AdamW opt(model.net().parameters(), dcfg.lr);
    const EpsFn teacher_eps = teacher.eps_fn();
    RngStream stream = RngStream(cfg.seed()).split("distill");
    RngStream data_stream = stream.split("data");
    RngStream step_stream = stream.split("steps");
    start = std::chrono::steady_clock::now();
    for (int step = 0; step < dcfg.steps; ++step) {
        std::vector<int> classes(dcfg.batch);
        for (int i = 0; i < dcfg.batch; ++i) {
            classes[i] = static_cast<int>(data_stream.uniform_int(0, data.num_classes() - 1));
        }
        Tensor z0 = data.sample_batch(classes, data_stream);
        distill_step(model, teacher_eps, z0, classes, step_stream, opt);
    }
    log << "ablate(" << drop << "): distilled in " << seconds_since(start) << " s\n";

    std::vector<int> classes(eval_count);
    for (int i = 0; i < eval_count; ++i) classes[i] = i % data.num_classes();
    RngStream sstream = RngStream(cfg.seed()).split("ablate-sample");
    start = std::chrono::steady_clock::now();
    Tensor samples = lcm_sample(model, cfg.sample_steps(), cfg.sample_omega(), classes, sstream);
    log << "ablate(" << drop << "): wall_clock_per_sample="
        << seconds_since(start) / eval_count << " s\n";

    const EvalContext ctx = EvalContext::make(cfg.dataset_name(), cfg.seed(), eval_count);
    EvalReport rep = ctx.report(to_rows(samples), classes, cfg.seed(), cfg.sample_steps());
    out << rep.to_json();
    return rep;
}

}  // namespace lcmkit

#include "lcmkit/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace lcmkit {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;

using Err = CheckpointError;

struct Writer {
    std::ofstream out;

    void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void params(const std::vector<std::pair<std::string, Tensor>>& ps) {
        u32(static_cast<std::uint32_t>(ps.size()));
        for (const auto& [name, t] : ps) {
            str(name);
            u32(static_cast<std::uint32_t>(t.rank()));
            for (int i = 0; i < t.rank(); ++i) u32(static_cast<std::uint32_t>(t.dim(i)));
            for (double v : t.data()) f32(static_cast<float>(v));
        }
    }
};

struct Reader {
    std::ifstream in;

    void bytes(void* p, size_t n) {
        in.read(static_cast<char*>(p), n);
        if (in.gcount() != static_cast<std::streamsize>(n)) {
            throw Err(Err::Kind::Truncated, "checkpoint: unexpected end of file");
        }
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw Err(Err::Kind::BadData, "checkpoint: absurd string length");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<std::pair<std::string, Tensor>> params() {
        const std::uint32_t count = u32();
        std::vector<std::pair<std::string, Tensor>> out;
        out.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = str();
            const std::uint32_t rank = u32();
            if (rank > 8) throw Err(Err::Kind::BadData, "checkpoint: absurd tensor rank");
            Shape shape(rank);
            for (auto& d : shape) d = static_cast<std::int64_t>(u32());
            std::vector<double> data(shape_numel(shape));
            for (auto& v : data) v = static_cast<double>(f32());
            out.emplace_back(std::move(name), Tensor::from(std::move(data), std::move(shape)));
        }
        return out;
    }
};

void assign_params(DenoiserNet& net, const std::vector<std::pair<std::string, Tensor>>& stored) {
    auto live = net.named_parameters();
    if (live.size() != stored.size()) {
        throw Err(Err::Kind::ArchMismatch,
                  "checkpoint: parameter count " + std::to_string(stored.size()) +
                      " does not match architecture (" + std::to_string(live.size()) + ")");
    }
    for (size_t i = 0; i < live.size(); ++i) {
        if (live[i].first != stored[i].first || live[i].second.shape() != stored[i].second.shape()) {
            throw Err(Err::Kind::ArchMismatch,
                      "checkpoint: parameter '" + stored[i].first + "' " +
                          shape_str(stored[i].second.shape()) + " does not match architecture");
        }
        live[i].second.mutable_data() = stored[i].second.data();
    }
}

}  // namespace

Checkpoint Checkpoint::of_teacher(const TeacherModel& teacher, const ScheduleSpec& spec) {
    Checkpoint c;
    c.kind = ModelKind::Teacher;
    c.arch = teacher.net.config();
    c.schedule = spec;
    c.params = teacher.net.named_parameters();
    return c;
}

Checkpoint Checkpoint::of_student(const ConsistencyModel& model, const ScheduleSpec& spec) {
    Checkpoint c;
    c.kind = ModelKind::Lcm;
    c.arch = model.net().config();
    c.schedule = spec;
    c.hyper = model.config();
    c.params = model.net().named_parameters();
    c.ema_params = model.ema_net().named_parameters();
    return c;
}

TeacherModel Checkpoint::to_teacher() const {
    if (kind != ModelKind::Teacher) {
        throw Err(Err::Kind::ArchMismatch, "checkpoint: not a teacher checkpoint");
    }
    DenoiserNet net(arch, RngStream(0));
    assign_params(net, params);
    return TeacherModel{std::move(net), schedule.build()};
}

ConsistencyModel Checkpoint::to_student() const {
    if (kind != ModelKind::Lcm) {
        throw Err(Err::Kind::ArchMismatch, "checkpoint: not a distilled-model checkpoint");
    }
    DenoiserNet net(arch, RngStream(0));
    assign_params(net, params);
    ConsistencyModel model(net, schedule.build(), hyper);
    if (!ema_params.empty()) {
        assign_params(model.ema_net(), ema_params);
    }
    return model;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        Writer w;
        w.out.open(tmp, std::ios::binary | std::ios::trunc);
        if (!w.out) throw std::runtime_error("checkpoint: cannot open " + tmp);
        w.bytes(kMagic, 4);
        w.u32(kVersion);
        w.u8(static_cast<std::uint8_t>(c.kind));
        w.u8(c.ema_params.empty() ? 0 : 1);
        w.u8(0);
        w.u8(0);

        w.u32(c.arch.tokens);
        w.u32(c.arch.channels);
        w.u32(c.arch.width);
        w.u32(c.arch.blocks);
        w.u32(c.arch.heads);
        w.u32(c.arch.ffn);
        w.u32(c.arch.num_classes);
        w.u8(c.arch.use_rope);
        w.u8(c.arch.use_rmsnorm);
        w.u8(c.arch.use_swiglu);
        w.u8(0);

        w.u32(c.schedule.n);
        w.f64(c.schedule.beta_start);
        w.f64(c.schedule.beta_end);
        w.f64(c.schedule.sigma_data);
        w.f64(c.schedule.kappa);

        w.u32(c.hyper.k);
        w.f64(c.hyper.omega_min);
        w.f64(c.hyper.omega_max);
        w.f64(c.hyper.mu);
        w.f64(c.hyper.eta);

        w.params(c.params);
        w.params(c.ema_params);
        w.out.flush();
        if (!w.out) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("checkpoint: cannot rename " + tmp + " to " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw Err(Err::Kind::BadMagic, "checkpoint: bad magic in " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw Err(Err::Kind::BadVersion,
                  "checkpoint: version " + std::to_string(version) + ", expected " +
                      std::to_string(kVersion));
    }

    Checkpoint c;
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw Err(Err::Kind::BadData, "checkpoint: unknown model kind");
    c.kind = static_cast<ModelKind>(kind);
    const std::uint8_t has_ema = r.u8();
    r.u8();
    r.u8();

    c.arch.tokens = static_cast<int>(r.u32());
    c.arch.channels = static_cast<int>(r.u32());
    c.arch.width = static_cast<int>(r.u32());
    c.arch.blocks = static_cast<int>(r.u32());
    c.arch.heads = static_cast<int>(r.u32());
    c.arch.ffn = static_cast<int>(r.u32());
    c.arch.num_classes = static_cast<int>(r.u32());
    c.arch.use_rope = r.u8() != 0;
    c.arch.use_rmsnorm = r.u8() != 0;
    c.arch.use_swiglu = r.u8() != 0;
    r.u8();

    c.schedule.n = static_cast<int>(r.u32());
    c.schedule.beta_start = r.f64();
    c.schedule.beta_end = r.f64();
    c.schedule.sigma_data = r.f64();
    c.schedule.kappa = r.f64();
    c.arch.max_timestep = c.schedule.n;

    c.hyper.k = static_cast<int>(r.u32());
    c.hyper.omega_min = r.f64();
    c.hyper.omega_max = r.f64();
    c.hyper.mu = r.f64();
    c.hyper.eta = r.f64();

    c.params = r.params();
    c.ema_params = r.params();
    if (has_ema != (c.ema_params.empty() ? 0 : 1)) {
        throw Err(Err::Kind::BadData, "checkpoint: ema flag does not match stored arrays");
    }
    return c;
}

}  // namespace lcmkit

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcmkit/consistency.hpp"
#include "lcmkit/nn.hpp"
#include "lcmkit/schedule.hpp"
#include "lcmkit/teacher.hpp"

namespace lcmkit {

// Parameters of the linear schedule as written to disk; the runtime
// NoiseSchedule is derived from these.
struct ScheduleSpec {
    int n = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double sigma_data = 0.5;
    double kappa = 10.0;

    NoiseSchedule build() const { return NoiseSchedule(n, beta_start, beta_end, sigma_data, kappa); }
    bool operator==(const ScheduleSpec&) const = default;
};

struct CheckpointError : std::runtime_error {
    enum class Kind { BadMagic, BadVersion, Truncated, ArchMismatch, BadData };
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

enum class ModelKind : std::uint8_t { Teacher = 0, Lcm = 1 };

// Serialized model archive: "ALCM" magic, format version, architecture
// descriptor, schedule and distillation hyperparameters, then named float32
// little-endian parameter arrays for theta and optionally theta-minus.
struct Checkpoint {
    ModelKind kind = ModelKind::Teacher;
    ModelConfig arch;
    ScheduleSpec schedule;
    DistillConfig hyper;  // k / omega range / mu / eta meaningful for Lcm only

    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> ema_params;  // empty for teachers

    static Checkpoint of_teacher(const TeacherModel& teacher, const ScheduleSpec& spec);
    static Checkpoint of_student(const ConsistencyModel& model, const ScheduleSpec& spec);

    TeacherModel to_teacher() const;
    ConsistencyModel to_student() const;
};

// Whole-file atomic write (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lcmkit

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lcmkit/checkpoint.hpp"
#include "lcmkit/consistency.hpp"
#include "lcmkit/nn.hpp"
#include "lcmkit/teacher.hpp"

namespace lcmkit {

// Flat `key = value` file with '#' comments. Every required key must be
// present; keys outside the known set are rejected to catch typos.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin = "<string>");

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    bool has(const std::string& key) const;
    // Optional keys fall back to the given default.
    double get_double_or(const std::string& key, double fallback) const;
    int get_int_or(const std::string& key, int fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    // Typed views over the key groups.
    ScheduleSpec schedule_spec() const;
    ModelConfig model_config() const;   // data-dependent fields filled from dataset()
    TrainConfig train_config() const;
    DistillConfig distill_config() const;
    std::string dataset_name() const;
    std::uint64_t seed() const;
    int sample_steps() const;
    double sample_omega() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace lcmkit

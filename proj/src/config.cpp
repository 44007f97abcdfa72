#include "lcmkit/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lcmkit {

namespace {

constexpr std::array kRequiredKeys = {
    "schedule.N", "schedule.beta_start", "schedule.beta_end", "schedule.sigma_data",
    "schedule.kappa", "model.blocks", "model.width", "model.heads", "model.ffn",
    "model.use_rope", "model.use_rmsnorm", "model.use_swiglu", "teacher.lr", "teacher.steps",
    "teacher.batch", "teacher.p_uncond", "distill.k", "distill.omega_min", "distill.omega_max",
    "distill.mu", "distill.eta", "distill.lr", "distill.steps", "sample.steps", "sample.omega",
    "data.name", "seed",
};

constexpr std::array kOptionalKeys = {
    "distill.omega_per_item",
    "eval.count",
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool known_key(const std::string& key) {
    return std::find(kRequiredKeys.begin(), kRequiredKeys.end(), key) != kRequiredKeys.end() ||
           std::find(kOptionalKeys.begin(), kOptionalKeys.end(), key) != kOptionalKeys.end();
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_text(text.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: " + origin + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_key(key)) {
            throw std::runtime_error("config: " + origin + ":" + std::to_string(lineno) +
                                     ": unknown key '" + key + "'");
        }
        if (cfg.values_.count(key)) {
            throw std::runtime_error("config: " + origin + ":" + std::to_string(lineno) +
                                     ": duplicate key '" + key + "'");
        }
        cfg.values_[key] = value;
    }
    for (const char* key : kRequiredKeys) {
        if (!cfg.values_.count(key)) {
            throw std::runtime_error("config: " + origin + ": missing required key '" +
                                     std::string(key) + "'");
        }
    }
    return cfg;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get(key);
    size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' has non-numeric value '" + v + "'");
    }
    if (pos != v.size()) {
        throw std::runtime_error("config: key '" + key + "' has non-numeric value '" + v + "'");
    }
    return out;
}

int Config::get_int(const std::string& key) const {
    const double d = get_double(key);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) {
        throw std::runtime_error("config: key '" + key + "' must be an integer, got '" + get(key) +
                                 "'");
    }
    return i;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: key '" + key + "' must be true/false, got '" + v + "'");
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

double Config::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}
int Config::get_int_or(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}
bool Config::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

ScheduleSpec Config::schedule_spec() const {
    ScheduleSpec s;
    s.n = get_int("schedule.N");
    s.beta_start = get_double("schedule.beta_start");
    s.beta_end = get_double("schedule.beta_end");
    s.sigma_data = get_double("schedule.sigma_data");
    s.kappa = get_double("schedule.kappa");
    return s;
}

ModelConfig Config::model_config() const {
    ModelConfig m;
    m.blocks = get_int("model.blocks");
    m.width = get_int("model.width");
    m.heads = get_int("model.heads");
    m.ffn = get_int("model.ffn");
    m.use_rope = get_bool("model.use_rope");
    m.use_rmsnorm = get_bool("model.use_rmsnorm");
    m.use_swiglu = get_bool("model.use_swiglu");
    m.max_timestep = get_int("schedule.N");
    return m;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.lr = get_double("teacher.lr");
    t.steps = get_int("teacher.steps");
    t.batch = get_int("teacher.batch");
    t.p_uncond = get_double("teacher.p_uncond");
    return t;
}

DistillConfig Config::distill_config() const {
    DistillConfig d;
    d.k = get_int("distill.k");
    d.omega_min = get_double("distill.omega_min");
    d.omega_max = get_double("distill.omega_max");
    d.mu = get_double("distill.mu");
    d.eta = get_double("distill.eta");
    d.lr = get_double("distill.lr");
    d.steps = get_int("distill.steps");
    d.batch = get_int("teacher.batch");
    d.omega_per_item = get_bool_or("distill.omega_per_item", false);
    return d;
}

std::string Config::dataset_name() const { return get("data.name"); }

std::uint64_t Config::seed() const {
    return static_cast<std::uint64_t>(std::stoull(get("seed")));
}

int Config::sample_steps() const { return get_int("sample.steps"); }
double Config::sample_omega() const { return get_double("sample.omega"); }

}  // namespace lcmkit

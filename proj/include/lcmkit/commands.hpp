#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lcmkit/config.hpp"
#include "lcmkit/metrics.hpp"

namespace lcmkit {

// Metric report emitted by eval/ablate. Timing is never written into report
// files or CSVs so reruns stay byte-identical; measured timings go to the log
// stream instead.
struct EvalReport {
    std::vector<std::pair<std::string, double>> metrics;
    long sample_count = 0;
    std::uint64_t seed = 0;
    long nfe = 0;
    double wall_clock_per_sample = 0.0;

    std::string to_json() const;
};

struct SampleStats {
    long count = 0;
    long nfe_per_sample = 0;
    double wall_seconds_per_sample = 0.0;
};

// Whole-file atomic text write (temp + rename).
void write_file_atomic(const std::string& path, const std::string& content);

// Sample CSV: header `class,dim0,...`, one row per sample, %.17g floats.
std::string samples_to_csv(const std::vector<std::vector<double>>& rows,
                           const std::vector<int>& labels);
void read_samples_csv(const std::string& path, std::vector<std::vector<double>>& rows,
                      std::vector<int>& labels);

// CLI subcommand bodies. Each is deterministic given (config, seed) except
// for timings, which are only logged.
void cmd_train_teacher(const std::string& config_path, const std::string& out_path,
                       std::ostream& log);
void cmd_distill(const std::string& teacher_path, const std::string& config_path,
                 const std::string& out_path, std::ostream& log);
SampleStats cmd_sample(const std::string& model_path, int steps, double omega,
                       const std::string& cond, int count, const std::string& out_path,
                       std::ostream& log);
EvalReport cmd_eval(const std::string& samples_path, const std::string& dataset_name,
                    const std::string& out_path, std::uint64_t seed = 0, int ref_count = 2000);
void cmd_sweep(const std::string& kind, const std::vector<double>& grid,
               const std::string& config_path, const std::string& out_path, std::ostream& log);
bool cmd_oracle_check(std::ostream& os);
EvalReport cmd_ablate(const std::string& drop, const std::string& config_path, std::ostream& out,
                      std::ostream& log);

}  // namespace lcmkit

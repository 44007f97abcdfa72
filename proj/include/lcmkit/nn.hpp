#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lcmkit/rng.hpp"
#include "lcmkit/tensor.hpp"

namespace lcmkit {

struct ModelConfig {
    int tokens = 1;        // L
    int channels = 2;      // D
    int width = 64;        // d
    int blocks = 2;
    int heads = 4;
    int ffn = 128;         // d_ff
    int num_classes = 8;   // real classes; the table reserves one extra row for the null token
    bool use_rope = true;
    bool use_rmsnorm = true;
    bool use_swiglu = true;
    int max_timestep = 1000;

    int null_class() const { return num_classes; }
    bool operator==(const ModelConfig&) const = default;
};

struct Linear {
    Tensor w;  // (in, out)
    Tensor b;  // (out) or undefined
    Tensor apply(const Tensor& x) const;  // x (..., in) -> (..., out)
};

// Sinusoidal feature map followed by a two-layer MLP; used for both the
// timestep and the guidance-scale inputs.
struct ScalarEmbed {
    Linear fc1, fc2;
    Tensor apply(const std::vector<double>& values, int width) const;
};

struct TransformerBlock {
    Tensor norm1_gain, norm2_gain;
    Linear wq, wk, wv, wo;
    Linear ffn1, ffn2, ffn3;  // ffn2 is the SwiGLU gate companion; unused when the toggle is off

    // Attention sublayer on a normalized input; exposed for ablation tests.
    Tensor attention(const Tensor& x_norm, const ModelConfig& cfg) const;
    Tensor feed_forward(const Tensor& x_norm, const ModelConfig& cfg) const;
    Tensor norm(const Tensor& x, const Tensor& gain, const ModelConfig& cfg) const;
};

// Conditional noise predictor: pre-norm transformer over L tokens with
// additive (time + class + guidance-scale) conditioning per item.
class DenoiserNet {
public:
    DenoiserNet() = default;
    DenoiserNet(const ModelConfig& cfg, const RngStream& init_stream);

    // z (B, L, D) -> predicted noise (B, L, D). t, c, omega have B entries.
    Tensor forward(const Tensor& z, const std::vector<int>& t, const std::vector<int>& c,
                   const std::vector<double>& omega) const;

    // Per-item conditioning vector (B, width).
    Tensor conditioning(const std::vector<int>& t, const std::vector<int>& c,
                        const std::vector<double>& omega) const;

    const ModelConfig& config() const { return cfg_; }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;

    // Deep copy with fresh parameter storage (plain copies alias parameters,
    // like the tensors they hold).
    DenoiserNet clone() const;

    // Number of forward() invocations since construction; each batched call
    // counts once, matching per-sample NFE accounting.
    long eval_count() const { return eval_count_ ? eval_count_->load() : 0; }

    ModelConfig cfg_;
    Linear token_proj_;
    ScalarEmbed time_embed_;
    Tensor cond_embed_;  // (num_classes + 1, width), last row is the null token
    ScalarEmbed omega_embed_;
    std::vector<TransformerBlock> blocks_;
    Linear out_proj_;

private:
    std::shared_ptr<std::atomic<long>> eval_count_;
};

// Standalone pieces named by role; the block methods call these.
Tensor swiglu(const Tensor& x, const Linear& w1, const Linear& w2, const Linear& w3);
std::vector<double> sinusoid_features(double value, int width);

}  // namespace lcmkit

#pragma once

#include <string>
#include <vector>

#include "lcmkit/rng.hpp"
#include "lcmkit/tensor.hpp"

namespace lcmkit {

// Synthetic conditional datasets with known class templates.
//
// rings2d: one token of two channels; class c in {0..7} is a Gaussian blob of
// std 0.1 centered on the unit circle at angle 2*pi*c/8.
//
// seqtoy: 16 tokens of four channels; class c in {0..3} puts channel j at
// position p on sin(2*pi*(c+1)*p/16 + phase_j) plus N(0, 0.05^2) noise, with
// fixed per-channel phases.
class ToyDataset {
public:
    static ToyDataset make(const std::string& name);

    const std::string& name() const { return name_; }
    int num_classes() const { return num_classes_; }
    int tokens() const { return tokens_; }
    int channels() const { return channels_; }
    int item_dim() const { return tokens_ * channels_; }

    // One item (L, D) for class c; fully determined by (c, stream state).
    Tensor sample(int c, RngStream& stream) const;

    // Batch (n, L, D) with the given per-item classes.
    Tensor sample_batch(const std::vector<int>& classes, RngStream& stream) const;

    // Noiseless class template, flattened to item_dim() values.
    std::vector<double> class_template(int c) const;

    // Root-mean-square magnitude of items, for scale-relative assertions.
    double rms_scale() const;

private:
    std::string name_;
    int num_classes_ = 0;
    int tokens_ = 0;
    int channels_ = 0;
};

}  // namespace lcmkit

#include "lcmkit/data.hpp"

#include <cmath>
#include <stdexcept>

namespace lcmkit {

namespace {

constexpr double kRingNoise = 0.1;
constexpr double kSeqNoise = 0.05;

double seq_phase(int channel) { return M_PI * channel / 4.0; }

}  // namespace

ToyDataset ToyDataset::make(const std::string& name) {
    ToyDataset d;
    d.name_ = name;
    if (name == "rings2d") {
        d.num_classes_ = 8;
        d.tokens_ = 1;
        d.channels_ = 2;
    } else if (name == "seqtoy") {
        d.num_classes_ = 4;
        d.tokens_ = 16;
        d.channels_ = 4;
    } else {
        throw std::invalid_argument("dataset: unknown name '" + name + "'");
    }
    return d;
}

std::vector<double> ToyDataset::class_template(int c) const {
    if (c < 0 || c >= num_classes_) {
        throw std::out_of_range("dataset: class " + std::to_string(c) + " outside [0," +
                                std::to_string(num_classes_ - 1) + "]");
    }
    std::vector<double> out(item_dim());
    if (name_ == "rings2d") {
        const double angle = 2.0 * M_PI * c / num_classes_;
        out[0] = std::cos(angle);
        out[1] = std::sin(angle);
    } else {
        for (int p = 0; p < tokens_; ++p) {
            for (int j = 0; j < channels_; ++j) {
                out[p * channels_ + j] =
                    std::sin(2.0 * M_PI * (c + 1) * p / tokens_ + seq_phase(j));
            }
        }
    }
    return out;
}

Tensor ToyDataset::sample(int c, RngStream& stream) const {
    std::vector<double> v = class_template(c);
    const double noise = name_ == "rings2d" ? kRingNoise : kSeqNoise;
    Tensor n = gaussian(stream, {item_dim()});
    for (int i = 0; i < item_dim(); ++i) v[i] += noise * n.data()[i];
    return Tensor::from(std::move(v), {tokens_, channels_});
}

Tensor ToyDataset::sample_batch(const std::vector<int>& classes, RngStream& stream) const {
    const std::int64_t n = static_cast<std::int64_t>(classes.size());
    std::vector<double> out(n * item_dim());
    for (std::int64_t i = 0; i < n; ++i) {
        Tensor item = sample(classes[i], stream);
        std::copy(item.data().begin(), item.data().end(), out.begin() + i * item_dim());
    }
    return Tensor::from(std::move(out), {n, tokens_, channels_});
}

double ToyDataset::rms_scale() const {
    double acc = 0.0;
    for (int c = 0; c < num_classes_; ++c) {
        const auto t = class_template(c);
        for (double v : t) acc += v * v;
    }
    const double noise = name_ == "rings2d" ? kRingNoise : kSeqNoise;
    return std::sqrt(acc / (num_classes_ * item_dim()) + noise * noise);
}

}  // namespace lcmkit

#include "lcmkit/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace lcmkit {

namespace {

Tensor init_weight(Shape shape, const RngStream& init, const std::string& name, double scale) {
    RngStream s = init.split(name);
    Tensor t = gaussian(s, std::move(shape));
    t = mul_scalar(t, scale);
    // Re-wrap as a leaf so the scaling above is not part of any graph.
    Tensor leaf = Tensor::from(t.data(), t.shape());
    leaf.set_requires_grad(true);
    return leaf;
}

Linear make_linear(int in, int out, bool bias, const RngStream& init, const std::string& name) {
    Linear l;
    l.w = init_weight({in, out}, init, name + ".w", 0.02);
    if (bias) {
        l.b = Tensor::zeros({out}, true);
    }
    return l;
}

}  // namespace

Tensor Linear::apply(const Tensor& x) const {
    const std::int64_t in = w.dim(0), out = w.dim(1);
    const std::int64_t rows = x.numel() / in;
    Tensor flat = reshape(x, {rows, in});
    Tensor y = matmul(flat, w);
    if (b.defined()) {
        // broadcast bias over rows via add_token_bias on a (1, rows, out) view
        y = reshape(add_token_bias(reshape(y, {1, rows, out}),
                                   reshape(b, Shape{1, out})),
                    {rows, out});
    }
    Shape out_shape(x.shape());
    out_shape.back() = out;
    return reshape(y, std::move(out_shape));
}

std::vector<double> sinusoid_features(double value, int width) {
    // Interleaved sin/cos with geometric frequencies, base 10000.
    std::vector<double> f(width);
    const int half = width / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / width);
        f[2 * i] = std::sin(value * freq);
        f[2 * i + 1] = std::cos(value * freq);
    }
    if (width % 2 != 0) f[width - 1] = 0.0;
    return f;
}

Tensor ScalarEmbed::apply(const std::vector<double>& values, int width) const {
    const std::int64_t B = static_cast<std::int64_t>(values.size());
    std::vector<double> feat(B * width);
    for (std::int64_t i = 0; i < B; ++i) {
        const auto f = sinusoid_features(values[i], width);
        std::copy(f.begin(), f.end(), feat.begin() + i * width);
    }
    Tensor x = Tensor::from(std::move(feat), {B, width});
    return fc2.apply(silu(fc1.apply(x)));
}

Tensor swiglu(const Tensor& x, const Linear& w1, const Linear& w2, const Linear& w3) {
    return w3.apply(mul(silu(w1.apply(x)), w2.apply(x)));
}

Tensor TransformerBlock::norm(const Tensor& x, const Tensor& gain, const ModelConfig& cfg) const {
    return cfg.use_rmsnorm ? rmsnorm(x, gain) : layernorm(x, gain);
}

Tensor TransformerBlock::attention(const Tensor& x_norm, const ModelConfig& cfg) const {
    const std::int64_t B = x_norm.dim(0), L = x_norm.dim(1), d = x_norm.dim(2);
    const std::int64_t H = cfg.heads, dh = d / H;

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {B, L, H, dh}), {0, 2, 1, 3});  // (B, H, L, dh)
    };
    Tensor q = split_heads(wq.apply(x_norm));
    Tensor k = split_heads(wk.apply(x_norm));
    if (cfg.use_rope) {
        std::vector<double> positions(L);
        for (std::int64_t i = 0; i < L; ++i) positions[i] = static_cast<double>(i);
        q = rope_rotate(q, positions);
        k = rope_rotate(k, positions);
    }
    Tensor v = split_heads(wv.apply(x_norm));

    Tensor logits = mul_scalar(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor probs = softmax_lastdim(logits);
    Tensor ctx = matmul(probs, v);                               // (B, H, L, dh)
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, L, d});
    return wo.apply(merged);
}

Tensor TransformerBlock::feed_forward(const Tensor& x_norm, const ModelConfig& cfg) const {
    if (cfg.use_swiglu) return swiglu(x_norm, ffn1, ffn2, ffn3);
    return ffn3.apply(silu(ffn1.apply(x_norm)));
}

DenoiserNet::DenoiserNet(const ModelConfig& cfg, const RngStream& init_stream)
    : cfg_(cfg), eval_count_(std::make_shared<std::atomic<long>>(0)) {
    if (cfg.width % cfg.heads != 0) {
        throw std::invalid_argument("model: width must be divisible by heads");
    }
    if ((cfg.width / cfg.heads) % 2 != 0) {
        throw std::invalid_argument("model: head dim must be even for rotary pairs");
    }
    token_proj_ = make_linear(cfg.channels, cfg.width, true, init_stream, "token_proj");
    out_proj_ = make_linear(cfg.width, cfg.channels, true, init_stream, "out_proj");
    time_embed_.fc1 = make_linear(cfg.width, cfg.width, true, init_stream, "time_embed.fc1");
    time_embed_.fc2 = make_linear(cfg.width, cfg.width, true, init_stream, "time_embed.fc2");
    omega_embed_.fc1 = make_linear(cfg.width, cfg.width, true, init_stream, "omega_embed.fc1");
    omega_embed_.fc2 = make_linear(cfg.width, cfg.width, true, init_stream, "omega_embed.fc2");
    cond_embed_ = init_weight({cfg.num_classes + 1, cfg.width}, init_stream, "cond_embed", 0.02);

    blocks_.resize(cfg.blocks);
    for (int i = 0; i < cfg.blocks; ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        auto& blk = blocks_[i];
        blk.norm1_gain = Tensor::full({cfg.width}, 1.0, true);
        blk.norm2_gain = Tensor::full({cfg.width}, 1.0, true);
        blk.wq = make_linear(cfg.width, cfg.width, false, init_stream, p + "attn.wq");
        blk.wk = make_linear(cfg.width, cfg.width, false, init_stream, p + "attn.wk");
        blk.wv = make_linear(cfg.width, cfg.width, false, init_stream, p + "attn.wv");
        blk.wo = make_linear(cfg.width, cfg.width, false, init_stream, p + "attn.wo");
        blk.ffn1 = make_linear(cfg.width, cfg.ffn, false, init_stream, p + "ffn.w1");
        blk.ffn2 = make_linear(cfg.width, cfg.ffn, false, init_stream, p + "ffn.w2");
        blk.ffn3 = make_linear(cfg.ffn, cfg.width, false, init_stream, p + "ffn.w3");
    }
}

Tensor DenoiserNet::conditioning(const std::vector<int>& t, const std::vector<int>& c,
                                 const std::vector<double>& omega) const {
    std::vector<double> tv(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0 || t[i] > cfg_.max_timestep) {
            throw std::out_of_range("forward: t=" + std::to_string(t[i]) + " outside [0," +
                                    std::to_string(cfg_.max_timestep) + "]");
        }
        tv[i] = static_cast<double>(t[i]);
    }
    std::vector<std::int64_t> cv(c.size());
    for (size_t i = 0; i < c.size(); ++i) {
        if (c[i] < 0 || c[i] > cfg_.num_classes) {
            throw std::out_of_range("forward: class " + std::to_string(c[i]) + " outside [0," +
                                    std::to_string(cfg_.num_classes) + "]");
        }
        cv[i] = c[i];
    }
    Tensor cond = add(time_embed_.apply(tv, cfg_.width), embedding_lookup(cond_embed_, cv));
    return add(cond, omega_embed_.apply(omega, cfg_.width));
}

Tensor DenoiserNet::forward(const Tensor& z, const std::vector<int>& t, const std::vector<int>& c,
                            const std::vector<double>& omega) const {
    eval_count_->fetch_add(1, std::memory_order_relaxed);
    if (z.rank() != 3 || z.dim(1) != cfg_.tokens || z.dim(2) != cfg_.channels) {
        throw ShapeError("forward: expected (B," + std::to_string(cfg_.tokens) + "," +
                         std::to_string(cfg_.channels) + "), got " + shape_str(z.shape()));
    }
    const size_t B = static_cast<size_t>(z.dim(0));
    if (t.size() != B || c.size() != B || omega.size() != B) {
        throw ShapeError("forward: conditioning vectors must have batch length");
    }

    Tensor x = add_token_bias(token_proj_.apply(z), conditioning(t, c, omega));
    for (const auto& blk : blocks_) {
        x = add(x, blk.attention(blk.norm(x, blk.norm1_gain, cfg_), cfg_));
        x = add(x, blk.feed_forward(blk.norm(x, blk.norm2_gain, cfg_), cfg_));
    }
    return out_proj_.apply(x);
}

std::vector<std::pair<std::string, Tensor>> DenoiserNet::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto lin = [&out](const std::string& name, const Linear& l) {
        out.emplace_back(name + ".w", l.w);
        if (l.b.defined()) out.emplace_back(name + ".b", l.b);
    };
    lin("token_proj", token_proj_);
    lin("time_embed.fc1", time_embed_.fc1);
    lin("time_embed.fc2", time_embed_.fc2);
    out.emplace_back("cond_embed", cond_embed_);
    lin("omega_embed.fc1", omega_embed_.fc1);
    lin("omega_embed.fc2", omega_embed_.fc2);
    for (size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        out.emplace_back(p + "norm1.gain", blocks_[i].norm1_gain);
        out.emplace_back(p + "norm2.gain", blocks_[i].norm2_gain);
        lin(p + "attn.wq", blocks_[i].wq);
        lin(p + "attn.wk", blocks_[i].wk);
        lin(p + "attn.wv", blocks_[i].wv);
        lin(p + "attn.wo", blocks_[i].wo);
        lin(p + "ffn.w1", blocks_[i].ffn1);
        lin(p + "ffn.w2", blocks_[i].ffn2);
        lin(p + "ffn.w3", blocks_[i].ffn3);
    }
    lin("out_proj", out_proj_);
    return out;
}

std::vector<Tensor> DenoiserNet::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

DenoiserNet DenoiserNet::clone() const {
    DenoiserNet copy(cfg_, RngStream(0));
    auto src = named_parameters();
    auto dst = copy.named_parameters();
    for (size_t i = 0; i < src.size(); ++i) {
        dst[i].second.mutable_data() = src[i].second.data();
    }
    return copy;
}

}  // namespace lcmkit

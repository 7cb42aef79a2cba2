#include "nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fe2e {

namespace {

Tensor glorot_init(int rows, int cols, Rng& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = rng.uniform(-a, a);
    return Tensor::from_data({rows, cols}, std::move(data), true);
}

}  // namespace

Linear::Linear(int in, int out, Rng& rng) {
    w = glorot_init(in, out, rng);
    b = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, w), b); }

AttentionBlock::AttentionBlock(int d, Rng& rng) : dim(d) {
    wq = glorot_init(d, d, rng);
    wk = glorot_init(d, d, rng);
    wv = glorot_init(d, d, rng);
    wo = glorot_init(d, d, rng);
}

Tensor AttentionBlock::forward(const Tensor& tokens, const GridMask* mask) const {
    if (tokens.ndim() != 3) throw_numeric("attention expects [batch, seq, dim]");
    if (tokens.dim(2) != dim) throw_numeric("attention dim mismatch");
    Tensor q = matmul(tokens, wq);
    Tensor k = matmul(tokens, wk);
    Tensor v = matmul(tokens, wv);
    Tensor scores = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(dim)));
    Tensor attn = masked_softmax(scores, mask);
    return matmul(matmul(attn, v), wo);
}

GridMask make_attention_mask(int seq_len, AttnMaskKind kind, int half_split) {
    GridMask mask(seq_len, seq_len, 1);
    if (kind == AttnMaskKind::BlockDiagonal) {
        if (half_split <= 0 || half_split >= seq_len) {
            throw_numeric("block-diagonal mask requires 0 < half_split < seq_len");
        }
        for (int i = 0; i < seq_len; ++i) {
            for (int j = 0; j < seq_len; ++j) {
                bool same_half = (i < half_split) == (j < half_split);
                mask.at(j, i) = same_half ? 1 : 0;
            }
        }
    }
    return mask;
}

VelocityModel::VelocityModel(const VelocityModelConfig& cfg) : cfg_(cfg) {
    if (cfg_.state_dim <= 0 || cfg_.cond_dim <= 0) throw_numeric("model dims must be positive");
    Rng rng(cfg_.init_seed);
    if (cfg_.with_attention) {
        if (cfg_.seq_len <= 0) throw_numeric("token mode requires seq_len");
        if (cfg_.attn_blocks < 1) throw_numeric("token mode requires >= 1 attention block");
        int channels = cfg_.cond_dim + (cfg_.accepts_time ? 1 : 0);
        int d = cfg_.token_width > 0 ? cfg_.token_width : cfg_.state_dim;
        embed_ = Linear(channels, d, rng);
        {
            // learned positional embeddings; the zero-start half is otherwise
            // position-blind
            std::vector<double> pos(static_cast<std::size_t>(cfg_.seq_len) * d);
            for (double& v : pos) v = 0.02 * rng.normal();
            pos_embed_ = Tensor::from_data({cfg_.seq_len, d}, std::move(pos), true);
        }
        attn_.clear();
        block_mlp_.clear();
        ln_gain_.clear();
        ln_bias_.clear();
        for (int b = 0; b < cfg_.attn_blocks; ++b) {
            attn_.emplace_back(d, rng);
            block_mlp_.emplace_back(d, cfg_.hidden_width, rng);
            block_mlp_.emplace_back(cfg_.hidden_width, d, rng);
            for (int l = 0; l < 2; ++l) {
                ln_gain_.push_back(Tensor::full({d}, 1.0, true));
                ln_bias_.push_back(Tensor::zeros({d}, true));
            }
        }
        out_proj_ = Linear(d, cfg_.state_dim, rng);
        mask_ = make_attention_mask(cfg_.seq_len, cfg_.mask_kind, cfg_.half_split);
    } else {
        int in = input_width();
        mlp_.clear();
        if (cfg_.hidden_layers == 0) {
            mlp_.emplace_back(in, cfg_.state_dim, rng);
        } else {
            mlp_.emplace_back(in, cfg_.hidden_width, rng);
            for (int i = 1; i < cfg_.hidden_layers; ++i) {
                mlp_.emplace_back(cfg_.hidden_width, cfg_.hidden_width, rng);
            }
            mlp_.emplace_back(cfg_.hidden_width, cfg_.state_dim, rng);
        }
    }
    register_params();
}

int VelocityModel::input_width() const {
    return cfg_.cond_dim + (cfg_.accepts_state ? cfg_.state_dim : 0) + (cfg_.accepts_time ? 1 : 0);
}

void VelocityModel::register_params() {
    params_.clear();
    auto reg = [&](const std::string& name, const Tensor& t) { params_.push_back({name, t}); };
    if (cfg_.with_attention) {
        reg("embed.w", embed_.w);
        reg("embed.b", embed_.b);
        reg("pos", pos_embed_);
        for (std::size_t b = 0; b < attn_.size(); ++b) {
            std::string p = "block." + std::to_string(b) + ".";
            reg(p + "attn.wq", attn_[b].wq);
            reg(p + "attn.wk", attn_[b].wk);
            reg(p + "attn.wv", attn_[b].wv);
            reg(p + "attn.wo", attn_[b].wo);
            reg(p + "mlp.0.w", block_mlp_[2 * b].w);
            reg(p + "mlp.0.b", block_mlp_[2 * b].b);
            reg(p + "mlp.1.w", block_mlp_[2 * b + 1].w);
            reg(p + "mlp.1.b", block_mlp_[2 * b + 1].b);
            if (cfg_.layer_norm_blocks) {
                reg(p + "ln1.g", ln_gain_[2 * b]);
                reg(p + "ln1.b", ln_bias_[2 * b]);
                reg(p + "ln2.g", ln_gain_[2 * b + 1]);
                reg(p + "ln2.b", ln_bias_[2 * b + 1]);
            }
        }
        reg("out.w", out_proj_.w);
        reg("out.b", out_proj_.b);
    } else {
        for (std::size_t i = 0; i < mlp_.size(); ++i) {
            reg("mlp." + std::to_string(i) + ".w", mlp_[i].w);
            reg("mlp." + std::to_string(i) + ".b", mlp_[i].b);
        }
    }
}

void VelocityModel::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

VelocityModel::Forward VelocityModel::forward_vector(const Tensor& z_x, const Tensor* z_state,
                                                     const Tensor* t) {
    if (cfg_.with_attention) throw_numeric("forward_vector on a token-mode model");
    if (cfg_.accepts_state != (z_state != nullptr)) {
        throw_numeric("model state input does not match its configuration");
    }
    if (cfg_.accepts_time != (t != nullptr)) {
        throw_numeric("model time input does not match its configuration");
    }
    int batch = z_x.dim(0);
    if (z_x.dim(1) != cfg_.cond_dim) throw_numeric("condition width mismatch");

    std::vector<Tensor> parts{z_x};
    if (z_state) {
        if (z_state->dim(0) != batch || z_state->dim(1) != cfg_.state_dim) {
            throw_numeric("state width mismatch");
        }
        parts.push_back(*z_state);
    }
    if (t) {
        if (t->numel() != batch) throw_numeric("time vector length mismatch");
        parts.push_back(reshape(*t, {batch, 1}));
    }
    Tensor x = parts.size() == 1 ? parts[0] : concat_cols(parts);

    ++forward_count_;
    int feature_layer = cfg_.feature_layer >= 0
                            ? std::min(cfg_.feature_layer, static_cast<int>(mlp_.size()) - 2)
                            : static_cast<int>(mlp_.size()) - 2;  // penultimate activation
    Tensor h = x;
    Tensor feats = x;
    for (std::size_t i = 0; i < mlp_.size(); ++i) {
        h = mlp_[i].forward(h);
        if (i + 1 < mlp_.size()) {
            h = gelu(h);
            if (static_cast<int>(i) == feature_layer) feats = h;
        }
    }
    return {h, feats};
}

VelocityModel::Forward VelocityModel::forward_tokens(const Tensor& tokens) {
    if (!cfg_.with_attention) throw_numeric("forward_tokens on a vector-mode model");
    if (tokens.ndim() != 3) throw_numeric("token input must be [batch, seq, channels]");
    if (tokens.dim(1) != cfg_.seq_len) throw_numeric("sequence length mismatch");
    int channels = cfg_.cond_dim + (cfg_.accepts_time ? 1 : 0);
    if (tokens.dim(2) != channels) throw_numeric("token channel mismatch");

    ++forward_count_;
    int feature_block = cfg_.feature_layer >= 0
                            ? std::min(cfg_.feature_layer, static_cast<int>(attn_.size()) - 1)
                            : static_cast<int>(attn_.size()) - 1;
    Tensor x = add(embed_.forward(tokens), pos_embed_);  // [B, S, D] + positions
    Tensor feature_tokens = x;
    for (std::size_t b = 0; b < attn_.size(); ++b) {
        Tensor n1 = cfg_.layer_norm_blocks ? layer_norm(x, ln_gain_[2 * b], ln_bias_[2 * b]) : x;
        x = add(x, attn_[b].forward(n1, &mask_));
        Tensor n2 = cfg_.layer_norm_blocks
                        ? layer_norm(x, ln_gain_[2 * b + 1], ln_bias_[2 * b + 1])
                        : x;
        Tensor m = block_mlp_[2 * b + 1].forward(gelu(block_mlp_[2 * b].forward(n2)));
        x = add(x, m);
        if (static_cast<int>(b) == feature_block) feature_tokens = x;
    }

    // pooled block features: mean over the sequence
    int batch = tokens.dim(0);
    int d = cfg_.token_width > 0 ? cfg_.token_width : cfg_.state_dim;
    std::vector<double> onesv(static_cast<std::size_t>(cfg_.seq_len), 1.0 / cfg_.seq_len);
    Tensor w = Tensor::from_data({cfg_.seq_len, 1}, std::move(onesv), false);
    Tensor pooled = reshape(matmul(transpose_last2(feature_tokens), w), {batch, d});

    Tensor out = out_proj_.forward(x);
    return {out, pooled};
}

namespace {

constexpr char kMagic[8] = {'F', 'E', '2', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw_io("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ofstream& f, const std::vector<double>& data) {
    for (double v : data) {
        auto u = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        f.write(reinterpret_cast<const char*>(b), 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_u32(f, static_cast<std::uint32_t>(p.name.size()));
        f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_u32(f, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) write_u32(f, static_cast<std::uint32_t>(d));
        write_f64_le(f, p.tensor.values());
    }
    if (!f) throw_io("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, std::vector<NamedParam>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw_io("bad checkpoint magic: " + path);
    std::uint32_t version = read_u32(f);
    if (version != kVersion) throw_io("unsupported checkpoint version");
    std::uint32_t count = read_u32(f);
    if (count != params.size()) throw_io("checkpoint tensor count does not match the model");
    for (auto& p : params) {
        std::uint32_t name_len = read_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f || name != p.name) throw_io("checkpoint tensor name mismatch: expected " + p.name);
        std::uint32_t rank = read_u32(f);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(f));
        if (shape != p.tensor.shape()) throw_io("checkpoint tensor shape mismatch for " + p.name);
        auto& dst = p.tensor.values();
        for (auto& v : dst) {
            unsigned char b[8];
            f.read(reinterpret_cast<char*>(b), 8);
            if (!f) throw_io("checkpoint truncated in " + p.name);
            std::uint64_t u = 0;
            for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
            v = std::bit_cast<double>(u);
        }
    }
}

}  // namespace fe2e

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace fe2e {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// y = x W + b with W [in, out].
struct Linear {
    Tensor w;
    Tensor b;

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x) const;
};

enum class AttnMaskKind {
    Full,           // global attention over the whole sequence
    BlockDiagonal,  // tokens attend only within their own half
};

// Single-head scaled dot-product attention with output projection.
struct AttentionBlock {
    Tensor wq, wk, wv, wo;
    int dim = 0;

    AttentionBlock() = default;
    AttentionBlock(int d, Rng& rng);
    // tokens [batch, seq, dim]; mask rows/cols cover the full sequence.
    Tensor forward(const Tensor& tokens, const GridMask* mask) const;
};

GridMask make_attention_mask(int seq_len, AttnMaskKind kind, int half_split);

struct VelocityModelConfig {
    int cond_dim = 2;        // z^x width (vector mode) or token channels (token mode)
    int state_dim = 2;       // output width; equals the flow latent width
    bool accepts_state = true;
    bool accepts_time = true;
    int hidden_width = 32;
    int hidden_layers = 2;   // hidden affine layers; 0 means a single affine map
    int feature_layer = -1;  // dispersion hook: hidden layer (vector) or block
                             // (token) whose activations are exposed; -1 = last
    bool with_attention = false;
    int attn_blocks = 2;     // token mode: stacked attention+MLP blocks
    int token_width = 0;     // internal residual width; 0 means state_dim
    bool layer_norm_blocks = false;  // pre-LN inside token blocks
    int seq_len = 0;         // token mode only
    int half_split = 0;      // token mode only; boundary for block-diagonal masking
    AttnMaskKind mask_kind = AttnMaskKind::Full;
    std::uint64_t init_seed = 1;
};

// Parameterized velocity map f_theta. In vector mode the inputs are
// concatenated as [z_x | z_state | t]; in token mode the model embeds
// [batch, seq, channels] tokens, applies global attention and a per-token MLP
// with residual connections, and projects back to channel space.
class VelocityModel {
public:
    explicit VelocityModel(const VelocityModelConfig& cfg);

    const VelocityModelConfig& config() const { return cfg_; }

    struct Forward {
        Tensor out;
        Tensor features;  // penultimate features [batch, feat_dim], dispersion hook
    };

    // Vector mode. z_state / t must be provided iff the config accepts them.
    Forward forward_vector(const Tensor& z_x, const Tensor* z_state, const Tensor* t);

    // Token mode; tokens [batch, seq, channels(+1 when accepts_time)].
    Forward forward_tokens(const Tensor& tokens);

    std::vector<NamedParam>& parameters() { return params_; }
    const std::vector<NamedParam>& parameters() const { return params_; }
    void zero_grad();

    std::uint64_t forward_count() const { return forward_count_; }
    void reset_forward_count() { forward_count_ = 0; }

    int input_width() const;  // vector mode concatenated width

private:
    VelocityModelConfig cfg_;
    std::vector<Linear> mlp_;          // vector-mode affine stack
    Linear embed_;                     // token mode
    Linear out_proj_;                  // token mode
    std::vector<AttentionBlock> attn_; // token mode, one per block
    std::vector<Linear> block_mlp_;    // token mode, two linears per block
    std::vector<Tensor> ln_gain_;      // token mode, two LayerNorms per block
    std::vector<Tensor> ln_bias_;
    Tensor pos_embed_;                 // token mode, [seq, dim]
    GridMask mask_;
    std::vector<NamedParam> params_;
    std::uint64_t forward_count_ = 0;

    void register_params();
};

// Flat binary checkpoint: magic, version, tensor count, then per tensor
// name length / name / rank / dims / raw little-endian 64-bit data.
void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params);
void load_checkpoint(const std::string& path, std::vector<NamedParam>& params);

}  // namespace fe2e

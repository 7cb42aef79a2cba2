#pragma once

#include <cstdint>
#include <vector>

#include "depth_codec.hpp"
#include "flow.hpp"
#include "nn.hpp"
#include "optim.hpp"
#include "scenes.hpp"
#include "tensor.hpp"

namespace fe2e {

// Width-concatenated token layout: condition tokens on the left half, flow
// start tokens on the right; outputs [p_l, p_r] carry depth and normal
// supervision respectively.
struct SplitOutput {
    Tensor p_l;
    Tensor p_r;
};

// First/second halves along the sequence axis; the length must be even.
SplitOutput split_output(const Tensor& output);

// mean_b( ||v_D - p_l||^2 + ||v_N - p_r||^2 )
Tensor joint_loss(const Tensor& p_l, const Tensor& p_r, const Tensor& v_d, const Tensor& v_n);

struct JointTokenConfig {
    int grid = 8;    // tokens per side of one half
    int patch = 4;   // pixels per token side; scene resolution = grid * patch
    QuantScheme depth_scheme{QuantKind::Logarithmic, 0.1, 80.0};
    bool swap_halves = false;  // put normals left / depth right for symmetry tests

    int tokens_per_half() const { return grid * grid; }
    int token_dim() const { return patch * patch; }
    int resolution() const { return grid * patch; }
};

// Scene set turned into token tensors: condition tokens from the image proxy,
// BF16-quantized depth labels and patch-averaged normals as targets.
struct TokenDataset {
    Tensor cond;      // [n, half, dim]
    Tensor depth_v;   // [n, half, dim]
    Tensor normal_v;  // [n, half, dim]
    std::vector<int> pool;
    std::vector<NormalizedLabel> depth_labels;  // per scene, at full resolution
    JointTokenConfig cfg;

    int size() const { return cond.defined() ? cond.dim(0) : 0; }
};

TokenDataset build_token_dataset(const std::vector<SceneSample>& scenes,
                                 const JointTokenConfig& cfg);

// Reassembles a [half, dim] token block into the full-resolution label grid.
GridD tokens_to_grid(const std::vector<double>& tokens, const JointTokenConfig& cfg);

// Single-task supervision follows the editor's original protocol: the loss is
// applied to the flow (noise) half p_r only. The joint configuration keeps the
// flow task on p_r and repurposes the condition-aligned half p_l for depth.
enum class JointTask { Depth, Normal, Joint };

struct JointTrainConfig {
    JointTask task = JointTask::Joint;
    FlowObjectiveKind objective = FlowObjectiveKind::ConsistentVelocityFixedStart;
    AttnMaskKind mask_kind = AttnMaskKind::Full;
    int epochs = 15;
    int batch_size = 8;
    int hidden_width = 32;
    int token_width = 0;  // internal residual width; 0 keeps the token dim
    AdamWParams adamw;
    double final_lr_fraction = 1.0;   // cosine decay toward lr * fraction
    double decay_start_fraction = 0.0;  // keep full lr until this share of steps
    double warmup_fraction = 0.0;     // linear lr warmup over this share of steps
    double clip_grad_norm = 0.0;     // global-norm gradient clipping; 0 disables
    double lambda_disp = 0.5;
    double disp_tau = 1.0;
    bool disp_include_self = true;
    double pool_mix_prob = 0.9;
    std::uint64_t seed = 1;
    std::uint64_t init_seed = 1;
};

VelocityModel make_token_model(const JointTokenConfig& tok, const JointTrainConfig& cfg);

struct JointEpochStat {
    int epoch = 0;
    double depth_loss = 0.0;
    double normal_loss = 0.0;
};

struct JointTrainResult {
    std::vector<JointEpochStat> trace;
    double final_depth_mse = 0.0;    // latent-space test MSE on the depth half
    double final_normal_mse = 0.0;
    std::uint64_t forward_passes = 0;
    std::uint64_t optimizer_steps = 0;
};

// One forward per batch regardless of how many halves are supervised.
JointTrainResult train_joint(VelocityModel& model, const TokenDataset& train_data,
                             const TokenDataset& test_data, const JointTrainConfig& cfg);

struct TokenPrediction {
    Tensor depth_tokens;   // p_l of the final forward
    Tensor normal_tokens;  // integrated right-half state
};

// Objective-appropriate inference: fixed start for cvfs, one exact step from a
// Gaussian start for cv, N-step Euler over the right half for direct. The
// depth prediction reads p_l under joint training and the integrated flow
// half under single-task depth training.
TokenPrediction infer_tokens_flow(VelocityModel& model, const TokenDataset& data,
                                  FlowObjectiveKind objective, JointTask task, int euler_steps,
                                  std::uint64_t seed);

// Latent test MSE of fixed-start inference per task half.
void token_mse(VelocityModel& model, const TokenDataset& data, JointTask task, double* depth_mse,
               double* normal_mse);

// Consistency between the two predicted halves: normals finite-differenced
// from the decoded depth prediction vs the predicted normal tokens, as a mean
// angular error in degrees over token centers.
double predicted_depth_normal_consistency(VelocityModel& model, const TokenDataset& data,
                                          const std::vector<SceneSample>& scenes,
                                          JointTask task);

struct CrossHalfProbe {
    double grad_into_left_from_right_loss = 0.0;
    double grad_into_right_from_left_loss = 0.0;
};

// Backpropagates one half's loss and measures the gradient magnitude reaching
// the other half's input tokens.
CrossHalfProbe cross_half_gradient_probe(VelocityModel& model, const TokenDataset& data,
                                         int batch_size = 4);

}  // namespace fe2e

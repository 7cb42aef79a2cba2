#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nn.hpp"
#include "optim.hpp"
#include "tensor.hpp"

namespace fe2e {

enum class FlowObjectiveKind {
    DirectAdapt,                  // f(z_x, z_t, t), Gaussian start, N-step Euler inference
    ConsistentVelocity,           // f(z_x, z_y0), Gaussian start, one exact integration
    ConsistentVelocityFixedStart  // f(z_x), zero start, single deterministic evaluation
};

const char* flow_objective_name(FlowObjectiveKind kind);
FlowObjectiveKind flow_objective_from_name(const std::string& name);

struct FlowObjective {
    FlowObjectiveKind kind = FlowObjectiveKind::ConsistentVelocityFixedStart;
    int euler_steps = 50;  // DirectAdapt inference only

    bool accepts_time() const { return kind == FlowObjectiveKind::DirectAdapt; }
    bool accepts_state() const { return kind != FlowObjectiveKind::ConsistentVelocityFixedStart; }
};

// One training batch of the flow path z_t = t z1 + (1-t) z0.
struct FlowBatch {
    Tensor z_x;   // [batch, cond]
    Tensor z_y1;  // [batch, dim]
    Tensor z_y0;  // [batch, dim]
    Tensor t;     // [batch], in [0,1]

    void validate() const;
};

// Elementwise linear interpolation t z1 + (1-t) z0.
Tensor interpolate(const FlowBatch& batch);

// E || (z1 - z0) - f(z_x, z_t, t) ||^2, mean over the batch.
Tensor fm_loss(VelocityModel& model, const FlowBatch& batch);

// E || (z1 - z0) - f(z_x, z_y0) ||^2; the model sees only the start point.
Tensor cv_loss(VelocityModel& model, const FlowBatch& batch);

// E || z1 - f(z_x) ||^2; requires an all-zero start.
Tensor cvfs_loss(VelocityModel& model, const FlowBatch& batch);

// State-and-time velocity field for Euler integration, batched over rows.
using VelocityField = std::function<Tensor(const Tensor& z, double t)>;

// Left-endpoint explicit Euler from t=0 to t=1 with step 1/steps.
Tensor euler_integrate(const VelocityField& field, const Tensor& z0, int steps);

// Euler inference through a model; gradient recording is disabled.
Tensor euler_infer(VelocityModel& model, const Tensor& z_x, const Tensor& z_y0, int steps);

// Fixed-start deterministic inference: returns f(z_x) directly.
Tensor single_step_infer(VelocityModel& model, const Tensor& z_x);

struct FieldPoint {
    double z1 = 0.0, z2 = 0.0, t = 0.0;
};
struct FieldArrow {
    double z1 = 0.0, z2 = 0.0, t = 0.0, v1 = 0.0, v2 = 0.0;
};

// Evaluates a 2D model over a (z, t) lattice for diagnostics/plotting.
std::vector<FieldArrow> velocity_field_grid(VelocityModel& model, const Tensor& z_x,
                                            const std::vector<FieldPoint>& lattice);

// Marginal rectified-flow velocity for a two-point target mixture {a, b} with
// start z0 ~ N(0, sigma0^2 I): the posterior-mean of (c - z)/(1 - t).
FieldArrow two_point_posterior_velocity(const double a[2], const double b[2], double sigma0,
                                        const FieldPoint& p);

// Paired condition -> target samples; the identity map stands in for the VAE.
struct FlowDataset {
    Tensor x;                // [n, cond_dim]
    Tensor y;                // [n, state_dim]
    std::vector<int> pool;   // optional per-sample pool tag for mixed sampling

    int size() const { return x.defined() ? x.dim(0) : 0; }
};

// Toy regression families: z_y1 = g(z_x) with g linear or smooth nonlinear.
FlowDataset make_linear_task(int n, int cond_dim, int state_dim, std::uint64_t seed);
FlowDataset make_nonlinear_task(int n, int cond_dim, int state_dim, std::uint64_t seed);

// Row split sharing the underlying task: [0, n_train) and [n_train, n).
std::pair<FlowDataset, FlowDataset> split_dataset(const FlowDataset& data, int n_train);

struct FlowTrainConfig {
    FlowObjective objective;
    int epochs = 30;
    int batch_size = 32;
    AdamWParams adamw;               // lr 1e-4 unless overridden
    double lambda_disp = 0.5;
    double disp_tau = 1.0;
    bool disp_include_self = true;
    double pool_mix_prob = 0.9;      // P(first pool) when the dataset is pooled
    std::uint64_t seed = 1;
};

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double test_mse = 0.0;
};

struct FlowTrainResult {
    std::vector<EpochStat> trace;
    double final_test_mse = 0.0;
};

// Objective-specific loss for one batch, shared by train and the ablations.
Tensor objective_loss(VelocityModel& model, const FlowObjective& objective, const FlowBatch& batch);

// Test-time inference MSE under the objective's own inference path.
double inference_mse(VelocityModel& model, const FlowObjective& objective, const FlowDataset& data,
                     std::uint64_t eval_seed);

// Minibatch training with the objective's loss plus lambda * dispersion loss.
FlowTrainResult train_flow(VelocityModel& model, const FlowObjective& objective,
                           const FlowDataset& train_data, const FlowDataset& test_data,
                           const FlowTrainConfig& cfg);

}  // namespace fe2e

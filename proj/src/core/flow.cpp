#include "flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"

namespace fe2e {

const char* flow_objective_name(FlowObjectiveKind kind) {
    switch (kind) {
        case FlowObjectiveKind::DirectAdapt: return "direct";
        case FlowObjectiveKind::ConsistentVelocity: return "cv";
        case FlowObjectiveKind::ConsistentVelocityFixedStart: return "cvfs";
    }
    return "unknown";
}

FlowObjectiveKind flow_objective_from_name(const std::string& name) {
    if (name == "direct") return FlowObjectiveKind::DirectAdapt;
    if (name == "cv") return FlowObjectiveKind::ConsistentVelocity;
    if (name == "cvfs") return FlowObjectiveKind::ConsistentVelocityFixedStart;
    throw_usage("unknown objective '" + name + "' (expected direct|cv|cvfs)");
}

void FlowBatch::validate() const {
    int b = z_x.dim(0);
    if (z_y1.dim(0) != b || z_y0.dim(0) != b || t.numel() != b) {
        throw_numeric("flow batch tensors disagree on batch size");
    }
    if (z_y1.shape() != z_y0.shape()) throw_numeric("flow batch start/target shape mismatch");
    for (double tv : t.values()) {
        if (!(tv >= 0.0 && tv <= 1.0)) throw_numeric("flow batch times must lie in [0,1]");
    }
}

Tensor interpolate(const FlowBatch& batch) {
    batch.validate();
    int b = batch.z_y1.dim(0);
    int d = batch.z_y1.dim(1);
    std::vector<double> out(static_cast<std::size_t>(b) * d);
    for (int i = 0; i < b; ++i) {
        double tv = batch.t.values()[i];
        for (int j = 0; j < d; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * d + j;
            out[k] = tv * batch.z_y1.values()[k] + (1.0 - tv) * batch.z_y0.values()[k];
        }
    }
    return Tensor::from_data({b, d}, std::move(out));
}

namespace {

Tensor velocity_target(const FlowBatch& batch) {
    int b = batch.z_y1.dim(0);
    int d = batch.z_y1.dim(1);
    std::vector<double> v(static_cast<std::size_t>(b) * d);
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = batch.z_y1.values()[k] - batch.z_y0.values()[k];
    }
    return Tensor::from_data({b, d}, std::move(v));
}

}  // namespace

namespace {

struct LossParts {
    Tensor loss;
    Tensor features;
};

LossParts fm_loss_parts(VelocityModel& model, const FlowBatch& batch) {
    batch.validate();
    if (!model.config().accepts_time || !model.config().accepts_state) {
        throw_numeric("fm_loss requires a model consuming (z_x, z_t, t)");
    }
    Tensor z_t = interpolate(batch);
    Tensor v = velocity_target(batch);
    auto f = model.forward_vector(batch.z_x, &z_t, &batch.t);
    return {mean_squared_norm(f.out, v), f.features};
}

LossParts cv_loss_parts(VelocityModel& model, const FlowBatch& batch) {
    batch.validate();
    if (model.config().accepts_time || !model.config().accepts_state) {
        throw_numeric("cv_loss requires a model consuming (z_x, z_y0) without time");
    }
    Tensor v = velocity_target(batch);
    auto f = model.forward_vector(batch.z_x, &batch.z_y0, nullptr);
    return {mean_squared_norm(f.out, v), f.features};
}

LossParts cvfs_loss_parts(VelocityModel& model, const FlowBatch& batch) {
    batch.validate();
    if (model.config().accepts_time || model.config().accepts_state) {
        throw_numeric("cvfs_loss requires a condition-only model");
    }
    for (double v : batch.z_y0.values()) {
        if (v != 0.0) throw_numeric("cvfs_loss requires an all-zero start");
    }
    auto f = model.forward_vector(batch.z_x, nullptr, nullptr);
    return {mean_squared_norm(f.out, batch.z_y1), f.features};  // v = z1 - 0
}

LossParts objective_loss_parts(VelocityModel& model, const FlowObjective& objective,
                               const FlowBatch& batch) {
    switch (objective.kind) {
        case FlowObjectiveKind::DirectAdapt: return fm_loss_parts(model, batch);
        case FlowObjectiveKind::ConsistentVelocity: return cv_loss_parts(model, batch);
        case FlowObjectiveKind::ConsistentVelocityFixedStart: return cvfs_loss_parts(model, batch);
    }
    throw_numeric("unreachable objective kind");
}

}  // namespace

Tensor fm_loss(VelocityModel& model, const FlowBatch& batch) { return fm_loss_parts(model, batch).loss; }

Tensor cv_loss(VelocityModel& model, const FlowBatch& batch) { return cv_loss_parts(model, batch).loss; }

Tensor cvfs_loss(VelocityModel& model, const FlowBatch& batch) { return cvfs_loss_parts(model, batch).loss; }

Tensor objective_loss(VelocityModel& model, const FlowObjective& objective, const FlowBatch& batch) {
    return objective_loss_parts(model, objective, batch).loss;
}

Tensor euler_integrate(const VelocityField& field, const Tensor& z0, int steps) {
    if (steps < 1) throw_numeric("euler_integrate requires steps >= 1");
    Tensor z = Tensor::from_data(z0.shape(), z0.values());
    double h = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        double t = static_cast<double>(k) * h;  // left endpoint
        Tensor v = field(z, t);
        if (v.shape() != z.shape()) throw_numeric("velocity field changed the state shape");
        auto& zv = z.values();
        const auto& vv = v.values();
        for (std::size_t i = 0; i < zv.size(); ++i) zv[i] += h * vv[i];
    }
    return z;
}

Tensor euler_infer(VelocityModel& model, const Tensor& z_x, const Tensor& z_y0, int steps) {
    if (steps < 1) throw_numeric("euler_infer requires steps >= 1");
    NoGradGuard no_grad;
    const auto& cfg = model.config();
    if (cfg.accepts_time && cfg.accepts_state) {
        VelocityField field = [&](const Tensor& z, double t) {
            Tensor tv = Tensor::full({z.dim(0)}, t);
            return model.forward_vector(z_x, &z, &tv).out;
        };
        return euler_integrate(field, z_y0, steps);
    }
    if (cfg.accepts_state) {
        // consistent velocity: the field is fixed by the start point
        Tensor v = model.forward_vector(z_x, &z_y0, nullptr).out;
        VelocityField field = [&](const Tensor&, double) { return v; };
        return euler_integrate(field, z_y0, steps);
    }
    Tensor v = model.forward_vector(z_x, nullptr, nullptr).out;
    VelocityField field = [&](const Tensor&, double) { return v; };
    return euler_integrate(field, z_y0, steps);
}

Tensor single_step_infer(VelocityModel& model, const Tensor& z_x) {
    NoGradGuard no_grad;
    const auto& cfg = model.config();
    if (cfg.accepts_time || cfg.accepts_state) {
        throw_numeric("single_step_infer requires a fixed-start (condition-only) model");
    }
    return model.forward_vector(z_x, nullptr, nullptr).out;
}

std::vector<FieldArrow> velocity_field_grid(VelocityModel& model, const Tensor& z_x,
                                            const std::vector<FieldPoint>& lattice) {
    if (model.config().state_dim != 2) throw_numeric("velocity_field_grid requires a 2D latent");
    NoGradGuard no_grad;
    std::vector<FieldArrow> arrows;
    arrows.reserve(lattice.size());
    const auto& cfg = model.config();
    for (const auto& p : lattice) {
        Tensor z = Tensor::from_data({1, 2}, {p.z1, p.z2});
        Tensor tv = Tensor::full({1}, p.t);
        Tensor v;
        if (cfg.accepts_time && cfg.accepts_state) {
            v = model.forward_vector(z_x, &z, &tv).out;
        } else if (cfg.accepts_state) {
            v = model.forward_vector(z_x, &z, nullptr).out;
        } else {
            v = model.forward_vector(z_x, nullptr, nullptr).out;
        }
        arrows.push_back({p.z1, p.z2, p.t, v.values()[0], v.values()[1]});
    }
    return arrows;
}

FieldArrow two_point_posterior_velocity(const double a[2], const double b[2], double sigma0,
                                        const FieldPoint& p) {
    if (!(sigma0 > 0.0)) throw_numeric("two_point_posterior_velocity needs sigma0 > 0");
    if (!(p.t >= 0.0 && p.t < 1.0)) throw_numeric("posterior velocity is defined for t in [0,1)");
    double sig = (1.0 - p.t) * sigma0;
    auto log_w = [&](const double c[2]) {
        double dx = p.z1 - p.t * c[0];
        double dy = p.z2 - p.t * c[1];
        return -(dx * dx + dy * dy) / (2.0 * sig * sig);
    };
    double la = log_w(a), lb = log_w(b);
    double m = std::max(la, lb);
    double wa = std::exp(la - m), wb = std::exp(lb - m);
    double norm = wa + wb;
    wa /= norm;
    wb /= norm;
    double inv = 1.0 / (1.0 - p.t);
    return {p.z1, p.z2, p.t,
            wa * (a[0] - p.z1) * inv + wb * (b[0] - p.z1) * inv,
            wa * (a[1] - p.z2) * inv + wb * (b[1] - p.z2) * inv};
}

namespace {

Tensor random_matrix(int rows, int cols, Rng& rng, double scl = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = scl * rng.normal();
    return Tensor::from_data({rows, cols}, std::move(data));
}

}  // namespace

FlowDataset make_linear_task(int n, int cond_dim, int state_dim, std::uint64_t seed) {
    if (n <= 0) throw_numeric("dataset size must be positive");
    Rng rng(Rng::derive(seed, 0xA11CE));
    Tensor map = random_matrix(cond_dim, state_dim, rng, 1.0 / std::sqrt(cond_dim));
    FlowDataset ds;
    ds.x = random_matrix(n, cond_dim, rng);
    ds.y = matmul(ds.x, map);
    return ds;
}

FlowDataset make_nonlinear_task(int n, int cond_dim, int state_dim, std::uint64_t seed) {
    if (n <= 0) throw_numeric("dataset size must be positive");
    Rng rng(Rng::derive(seed, 0xBEE5));
    Tensor a = random_matrix(cond_dim, state_dim, rng, 1.0 / std::sqrt(cond_dim));
    Tensor b = random_matrix(cond_dim, state_dim, rng, 1.0 / std::sqrt(cond_dim));
    FlowDataset ds;
    ds.x = random_matrix(n, cond_dim, rng);
    Tensor lin = matmul(ds.x, a);
    Tensor aux = matmul(ds.x, b);
    std::vector<double> y(lin.values().size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::tanh(lin.values()[i]) + 0.5 * std::sin(2.0 * aux.values()[i]);
    }
    ds.y = Tensor::from_data({n, state_dim}, std::move(y));
    return ds;
}

std::pair<FlowDataset, FlowDataset> split_dataset(const FlowDataset& data, int n_train) {
    if (n_train <= 0 || n_train >= data.size()) throw_numeric("split_dataset: bad split point");
    int n = data.size();
    int cd = data.x.dim(1);
    int sd = data.y.dim(1);
    auto take = [&](int lo, int hi) {
        FlowDataset part;
        part.x = Tensor::from_data({hi - lo, cd},
                                   std::vector<double>(data.x.values().begin() + static_cast<std::ptrdiff_t>(lo) * cd,
                                                       data.x.values().begin() + static_cast<std::ptrdiff_t>(hi) * cd));
        part.y = Tensor::from_data({hi - lo, sd},
                                   std::vector<double>(data.y.values().begin() + static_cast<std::ptrdiff_t>(lo) * sd,
                                                       data.y.values().begin() + static_cast<std::ptrdiff_t>(hi) * sd));
        if (!data.pool.empty()) {
            part.pool.assign(data.pool.begin() + lo, data.pool.begin() + hi);
        }
        return part;
    };
    return {take(0, n_train), take(n_train, n)};
}

namespace {

FlowBatch assemble_batch(const FlowDataset& data, const std::vector<int>& idx,
                         const FlowObjective& objective, Rng& rng) {
    int b = static_cast<int>(idx.size());
    int cd = data.x.dim(1);
    int sd = data.y.dim(1);
    FlowBatch batch;
    std::vector<double> xs(static_cast<std::size_t>(b) * cd);
    std::vector<double> ys(static_cast<std::size_t>(b) * sd);
    for (int i = 0; i < b; ++i) {
        std::copy_n(data.x.values().data() + static_cast<std::size_t>(idx[i]) * cd, cd,
                    xs.data() + static_cast<std::size_t>(i) * cd);
        std::copy_n(data.y.values().data() + static_cast<std::size_t>(idx[i]) * sd, sd,
                    ys.data() + static_cast<std::size_t>(i) * sd);
    }
    batch.z_x = Tensor::from_data({b, cd}, std::move(xs));
    batch.z_y1 = Tensor::from_data({b, sd}, std::move(ys));

    std::vector<double> z0(static_cast<std::size_t>(b) * sd, 0.0);
    if (objective.accepts_state()) {
        for (double& v : z0) v = rng.normal();
    }
    batch.z_y0 = Tensor::from_data({b, sd}, std::move(z0));

    std::vector<double> ts(static_cast<std::size_t>(b), 0.0);
    if (objective.accepts_time()) {
        for (double& v : ts) v = rng.uniform();
    }
    batch.t = Tensor::from_data({b}, std::move(ts));
    return batch;
}

// Mixed pools: each element drawn independently, P(pool 0) = mix_prob.
std::vector<int> draw_mixed_indices(const FlowDataset& data, int batch_size, double mix_prob,
                                    Rng& rng) {
    std::vector<int> pool_a, pool_b;
    for (int i = 0; i < data.size(); ++i) {
        (data.pool[static_cast<std::size_t>(i)] == 0 ? pool_a : pool_b).push_back(i);
    }
    if (pool_a.empty() || pool_b.empty()) throw_numeric("mixed sampling requires both pools nonempty");
    std::vector<int> idx(static_cast<std::size_t>(batch_size));
    for (auto& i : idx) {
        const auto& pool = rng.bernoulli(mix_prob) ? pool_a : pool_b;
        i = pool[rng.index(pool.size())];
    }
    return idx;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[rng.index(static_cast<std::uint64_t>(i) + 1)]);
    }
    return idx;
}

}  // namespace

double inference_mse(VelocityModel& model, const FlowObjective& objective, const FlowDataset& data,
                     std::uint64_t eval_seed) {
    if (data.size() == 0) throw_numeric("inference_mse on an empty dataset");
    NoGradGuard no_grad;
    int n = data.size();
    int sd = data.y.dim(1);
    Tensor pred;
    if (objective.kind == FlowObjectiveKind::ConsistentVelocityFixedStart) {
        pred = single_step_infer(model, data.x);
    } else {
        Rng rng(Rng::derive(eval_seed, 0xE7A1));
        std::vector<double> z0(static_cast<std::size_t>(n) * sd);
        for (double& v : z0) v = rng.normal();
        Tensor start = Tensor::from_data({n, sd}, std::move(z0));
        int steps = objective.kind == FlowObjectiveKind::DirectAdapt ? objective.euler_steps : 1;
        pred = euler_infer(model, data.x, start, steps);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
        double diff = pred.values()[i] - data.y.values()[i];
        total += diff * diff;
    }
    return total / static_cast<double>(n);
}

FlowTrainResult train_flow(VelocityModel& model, const FlowObjective& objective,
                           const FlowDataset& train_data, const FlowDataset& test_data,
                           const FlowTrainConfig& cfg) {
    if (train_data.size() == 0) throw_numeric("train_flow requires a nonempty dataset");
    if (cfg.batch_size <= 0 || cfg.epochs < 0) throw_numeric("bad training configuration");

    AdamW opt(model.parameters(), cfg.adamw);
    Rng rng(Rng::derive(cfg.seed, 0x7261696E));
    FlowTrainResult result;

    bool pooled = !train_data.pool.empty();
    int steps_per_epoch = (train_data.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        double sample_count = 0.0;
        std::vector<int> epoch_order;
        if (!pooled) epoch_order = shuffled_indices(train_data.size(), rng);
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<int> idx;
            if (pooled) {
                idx = draw_mixed_indices(train_data, cfg.batch_size, cfg.pool_mix_prob, rng);
            } else {
                int lo = step * cfg.batch_size;
                int hi = std::min<int>(lo + cfg.batch_size, train_data.size());
                idx.assign(epoch_order.begin() + lo, epoch_order.begin() + hi);
            }
            FlowBatch batch = assemble_batch(train_data, idx, objective, rng);
            LossParts parts = objective_loss_parts(model, objective, batch);
            Tensor loss = parts.loss;
            if (cfg.lambda_disp != 0.0) {
                loss = add(loss, scale(dispersion_loss(parts.features, cfg.disp_tau,
                                                       cfg.disp_include_self),
                                       cfg.lambda_disp));
            }
            model.zero_grad();
            loss.backward();
            opt.step();
            loss_sum += loss.item() * static_cast<double>(idx.size());
            sample_count += static_cast<double>(idx.size());
        }
        EpochStat stat;
        stat.epoch = epoch;
        stat.train_loss = loss_sum / sample_count;
        stat.test_mse = test_data.size() > 0 ? inference_mse(model, objective, test_data, cfg.seed)
                                             : 0.0;
        result.trace.push_back(stat);
    }
    result.final_test_mse =
        test_data.size() > 0 ? inference_mse(model, objective, test_data, cfg.seed) : 0.0;
    return result;
}

}  // namespace fe2e

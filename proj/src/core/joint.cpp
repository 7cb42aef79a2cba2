#include "joint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fe2e {

SplitOutput split_output(const Tensor& output) {
    if (output.ndim() != 3) throw_numeric("split_output expects [batch, seq, dim]");
    int seq = output.dim(1);
    if (seq % 2 != 0) throw_numeric("split_output requires an even sequence length");
    int half = seq / 2;
    return {slice_seq(output, 0, half), slice_seq(output, half, half)};
}

Tensor joint_loss(const Tensor& p_l, const Tensor& p_r, const Tensor& v_d, const Tensor& v_n) {
    if (p_l.shape() != v_d.shape() || p_r.shape() != v_n.shape() || p_l.shape() != p_r.shape()) {
        throw_numeric("joint_loss: all four tensors must share shape");
    }
    return add(mean_squared_norm(p_l, v_d), mean_squared_norm(p_r, v_n));
}

TokenDataset build_token_dataset(const std::vector<SceneSample>& scenes,
                                 const JointTokenConfig& cfg) {
    if (scenes.empty()) throw_numeric("build_token_dataset: no scenes");
    int res = cfg.resolution();
    int half = cfg.tokens_per_half();
    int dim = cfg.token_dim();
    int n = static_cast<int>(scenes.size());

    TokenDataset ds;
    ds.cfg = cfg;
    std::vector<double> cond(static_cast<std::size_t>(n) * half * dim, 0.0);
    std::vector<double> depth_v(cond.size(), 0.0);
    std::vector<double> normal_v(cond.size(), 0.0);

    for (int s = 0; s < n; ++s) {
        const SceneSample& scene = scenes[static_cast<std::size_t>(s)];
        if (scene.depth.width != res || scene.depth.height != res) {
            throw_numeric("scene resolution does not match the token configuration");
        }
        NormalizedLabel label = encode(cfg.depth_scheme, scene.depth, scene.valid);
        ds.depth_labels.push_back(label);
        ds.pool.push_back(scene.pool == PoolKind::IndoorLike ? 0 : 1);

        for (int ty = 0; ty < cfg.grid; ++ty) {
            for (int tx = 0; tx < cfg.grid; ++tx) {
                int token = ty * cfg.grid + tx;
                std::size_t base = (static_cast<std::size_t>(s) * half + token) * dim;
                Vec3 normal_sum{0.0, 0.0, 0.0};
                for (int py = 0; py < cfg.patch; ++py) {
                    for (int px = 0; px < cfg.patch; ++px) {
                        int x = tx * cfg.patch + px;
                        int y = ty * cfg.patch + py;
                        int offset = py * cfg.patch + px;
                        cond[base + offset] = scene.image_proxy.at(x, y);
                        depth_v[base + offset] = label.values.at(x, y);
                        normal_sum = normal_sum + scene.normals.at(x, y);
                    }
                }
                Vec3 avg = normal_sum.normalized();
                normal_v[base + 0] = round_to_bf16(std::clamp(avg.x, -1.0, 1.0)).to_double();
                normal_v[base + 1] = round_to_bf16(std::clamp(avg.y, -1.0, 1.0)).to_double();
                normal_v[base + 2] = round_to_bf16(std::clamp(avg.z, -1.0, 1.0)).to_double();
            }
        }
    }

    ds.cond = Tensor::from_data({n, half, dim}, std::move(cond));
    Tensor d = Tensor::from_data({n, half, dim}, std::move(depth_v));
    Tensor m = Tensor::from_data({n, half, dim}, std::move(normal_v));
    if (cfg.swap_halves) std::swap(d, m);
    ds.depth_v = d;
    ds.normal_v = m;
    return ds;
}

GridD tokens_to_grid(const std::vector<double>& tokens, const JointTokenConfig& cfg) {
    int res = cfg.resolution();
    if (tokens.size() != static_cast<std::size_t>(cfg.tokens_per_half()) * cfg.token_dim()) {
        throw_numeric("tokens_to_grid: token block size mismatch");
    }
    GridD grid(res, res, 0.0);
    for (int ty = 0; ty < cfg.grid; ++ty) {
        for (int tx = 0; tx < cfg.grid; ++tx) {
            std::size_t base = static_cast<std::size_t>(ty * cfg.grid + tx) * cfg.token_dim();
            for (int py = 0; py < cfg.patch; ++py) {
                for (int px = 0; px < cfg.patch; ++px) {
                    grid.at(tx * cfg.patch + px, ty * cfg.patch + py) =
                        tokens[base + static_cast<std::size_t>(py * cfg.patch + px)];
                }
            }
        }
    }
    return grid;
}

VelocityModel make_token_model(const JointTokenConfig& tok, const JointTrainConfig& cfg) {
    VelocityModelConfig mc;
    mc.cond_dim = tok.token_dim();
    mc.state_dim = tok.token_dim();
    mc.accepts_state = false;
    mc.accepts_time = cfg.objective == FlowObjectiveKind::DirectAdapt;
    mc.hidden_width = cfg.hidden_width;
    mc.token_width = cfg.token_width;
    mc.with_attention = true;
    mc.seq_len = 2 * tok.tokens_per_half();
    mc.half_split = tok.tokens_per_half();
    mc.mask_kind = cfg.mask_kind;
    mc.init_seed = cfg.init_seed;
    return VelocityModel(mc);
}

namespace {

// Builds the model input tokens [batch, 2*half, channels]: condition tokens on
// the left, start tokens (zeros, noise, or interpolated state) on the right,
// plus a broadcast time channel for time-conditioned models.
Tensor build_input(const TokenDataset& data, const std::vector<int>& idx,
                   const std::vector<double>& start, const std::vector<double>* t_per_sample,
                   bool with_time) {
    int b = static_cast<int>(idx.size());
    int half = data.cond.dim(1);
    int dim = data.cond.dim(2);
    int channels = dim + (with_time ? 1 : 0);
    std::vector<double> tokens(static_cast<std::size_t>(b) * 2 * half * channels, 0.0);
    for (int i = 0; i < b; ++i) {
        double tv = t_per_sample ? (*t_per_sample)[static_cast<std::size_t>(i)] : 0.0;
        for (int s = 0; s < 2 * half; ++s) {
            std::size_t dst = (static_cast<std::size_t>(i) * 2 * half + s) * channels;
            if (s < half) {
                std::size_t src = (static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * half + s) * dim;
                for (int c = 0; c < dim; ++c) tokens[dst + c] = data.cond.values()[src + c];
            } else {
                std::size_t src = (static_cast<std::size_t>(i) * half + (s - half)) * dim;
                for (int c = 0; c < dim; ++c) tokens[dst + c] = start[src + c];
            }
            if (with_time) tokens[dst + dim] = tv;
        }
    }
    return Tensor::from_data({b, 2 * half, channels}, std::move(tokens));
}

std::vector<double> gather_targets(const Tensor& src, const std::vector<int>& idx) {
    int half = src.dim(1);
    int dim = src.dim(2);
    std::vector<double> out(idx.size() * static_cast<std::size_t>(half) * dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(src.values().data() + static_cast<std::size_t>(idx[i]) * half * dim,
                    static_cast<std::size_t>(half) * dim,
                    out.data() + i * static_cast<std::size_t>(half) * dim);
    }
    return out;
}

std::vector<int> shuffled(int n, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(idx[static_cast<std::size_t>(i)], idx[rng.index(static_cast<std::uint64_t>(i) + 1)]);
    }
    return idx;
}

std::vector<int> mixed_indices(const TokenDataset& data, int batch, double mix, Rng& rng) {
    std::vector<int> a, b;
    for (int i = 0; i < data.size(); ++i) (data.pool[static_cast<std::size_t>(i)] == 0 ? a : b).push_back(i);
    if (a.empty() || b.empty()) throw_numeric("mixed token sampling requires both pools");
    std::vector<int> idx(static_cast<std::size_t>(batch));
    for (auto& v : idx) {
        const auto& pool = rng.bernoulli(mix) ? a : b;
        v = pool[rng.index(pool.size())];
    }
    return idx;
}

bool dataset_is_mixed(const TokenDataset& data) {
    bool has0 = false, has1 = false;
    for (int p : data.pool) {
        has0 = has0 || p == 0;
        has1 = has1 || p == 1;
    }
    return has0 && has1;
}

}  // namespace

JointTrainResult train_joint(VelocityModel& model, const TokenDataset& train_data,
                             const TokenDataset& test_data, const JointTrainConfig& cfg) {
    if (train_data.size() == 0) throw_numeric("train_joint requires a nonempty dataset");
    if (!train_data.depth_v.defined() || !train_data.normal_v.defined()) {
        throw_numeric("train_joint requires both depth and normal labels");
    }
    bool with_time = cfg.objective == FlowObjectiveKind::DirectAdapt;
    bool gaussian_start = cfg.objective != FlowObjectiveKind::ConsistentVelocityFixedStart;
    int half = train_data.cond.dim(1);
    int dim = train_data.cond.dim(2);

    AdamW opt(model.parameters(), cfg.adamw);
    Rng rng(Rng::derive(cfg.seed, 0x104AF));
    JointTrainResult result;
    model.reset_forward_count();
    std::uint64_t steps = 0;

    bool mixed = dataset_is_mixed(train_data);
    int steps_per_epoch = (train_data.size() + cfg.batch_size - 1) / cfg.batch_size;
    double base_lr = cfg.adamw.learning_rate;
    std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;
    std::int64_t warmup_steps = static_cast<std::int64_t>(cfg.warmup_fraction * total_steps);
    std::int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double depth_sum = 0.0, normal_sum = 0.0, samples = 0.0;
        std::vector<int> order;
        if (!mixed) order = shuffled(train_data.size(), rng);
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<int> idx;
            if (mixed) {
                idx = mixed_indices(train_data, cfg.batch_size, cfg.pool_mix_prob, rng);
            } else {
                int lo = step * cfg.batch_size;
                int hi = std::min<int>(lo + cfg.batch_size, train_data.size());
                idx.assign(order.begin() + lo, order.begin() + hi);
            }
            int b = static_cast<int>(idx.size());

            // start tokens for the flow half and per-sample times
            std::vector<double> z0(static_cast<std::size_t>(b) * half * dim, 0.0);
            if (gaussian_start) {
                for (double& v : z0) v = rng.normal();
            }
            std::vector<double> ts(static_cast<std::size_t>(b), 0.0);
            if (with_time) {
                for (double& v : ts) v = rng.uniform();
            }

            std::vector<double> v_d = gather_targets(train_data.depth_v, idx);
            std::vector<double> v_n = gather_targets(train_data.normal_v, idx);

            // the flow (noise) half carries the single-task target, or the
            // normal task under joint supervision
            const std::vector<double>& flow_target =
                cfg.task == JointTask::Depth ? v_d : v_n;
            std::vector<double> state = z0;
            if (with_time) {
                for (std::size_t k = 0; k < state.size(); ++k) {
                    double t = ts[k / (static_cast<std::size_t>(half) * dim)];
                    state[k] = t * flow_target[k] + (1.0 - t) * z0[k];
                }
            }
            // velocity target on the flow half: v = z1 - z0
            std::vector<double> vel_r(flow_target.size());
            for (std::size_t k = 0; k < vel_r.size(); ++k) vel_r[k] = flow_target[k] - z0[k];

            Tensor input = build_input(train_data, idx, state, with_time ? &ts : nullptr, with_time);
            auto fwd = model.forward_tokens(input);
            SplitOutput halves = split_output(fwd.out);

            Tensor target_r = Tensor::from_data({b, half, dim}, std::move(vel_r));

            Tensor loss;
            Tensor depth_term, normal_term;
            switch (cfg.task) {
                case JointTask::Depth:
                    // original protocol: depth supervised on the noise half only
                    depth_term = mean_squared_norm(halves.p_r, target_r);
                    loss = depth_term;
                    break;
                case JointTask::Normal:
                    normal_term = mean_squared_norm(halves.p_r, target_r);
                    loss = normal_term;
                    break;
                case JointTask::Joint: {
                    // Eq.-8 style: depth repurposes the condition-aligned half,
                    // the flow half keeps the normal task
                    Tensor target_d = Tensor::from_data({b, half, dim}, std::move(v_d));
                    depth_term = mean_squared_norm(halves.p_l, target_d);
                    normal_term = mean_squared_norm(halves.p_r, target_r);
                    loss = add(depth_term, normal_term);
                    break;
                }
            }
            if (cfg.lambda_disp != 0.0) {
                loss = add(loss, scale(dispersion_loss(fwd.features, cfg.disp_tau,
                                                       cfg.disp_include_self),
                                       cfg.lambda_disp));
            }
            double lr_scale = 1.0;
            std::int64_t decay_from = warmup_steps +
                static_cast<std::int64_t>(cfg.decay_start_fraction *
                                          static_cast<double>(total_steps - warmup_steps));
            if (warmup_steps > 0 && global_step < warmup_steps) {
                lr_scale = static_cast<double>(global_step + 1) / static_cast<double>(warmup_steps);
            } else if (cfg.final_lr_fraction != 1.0 && global_step >= decay_from &&
                       total_steps > decay_from + 1) {
                double u = static_cast<double>(global_step - decay_from) /
                           static_cast<double>(total_steps - decay_from - 1);
                double w = 0.5 * (1.0 + std::cos(3.14159265358979323846 * u));
                lr_scale = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * w;
            }
            opt.set_learning_rate(base_lr * lr_scale);
            ++global_step;

            model.zero_grad();
            loss.backward();
            if (cfg.clip_grad_norm > 0.0) {
                double norm_sq = 0.0;
                for (auto& p : model.parameters()) {
                    for (double g : p.tensor.grad()) norm_sq += g * g;
                }
                double norm = std::sqrt(norm_sq);
                if (norm > cfg.clip_grad_norm) {
                    double f = cfg.clip_grad_norm / norm;
                    for (auto& p : model.parameters()) {
                        auto& grad = const_cast<std::vector<double>&>(p.tensor.grad());
                        for (double& g : grad) g *= f;
                    }
                }
            }
            opt.step();
            ++steps;

            double bsz = static_cast<double>(b);
            if (depth_term.defined()) depth_sum += depth_term.item() * bsz;
            if (normal_term.defined()) normal_sum += normal_term.item() * bsz;
            samples += bsz;
        }
        result.trace.push_back({epoch, depth_sum / samples, normal_sum / samples});
    }

    result.forward_passes = model.forward_count();
    result.optimizer_steps = steps;
    if (test_data.size() > 0) {
        token_mse(model, test_data, cfg.task, &result.final_depth_mse, &result.final_normal_mse);
    }
    return result;
}

TokenPrediction infer_tokens_flow(VelocityModel& model, const TokenDataset& data,
                                  FlowObjectiveKind objective, JointTask task, int euler_steps,
                                  std::uint64_t seed) {
    NoGradGuard no_grad;
    int n = data.size();
    int half = data.cond.dim(1);
    int dim = data.cond.dim(2);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    bool with_time = model.config().accepts_time;

    std::vector<double> state(static_cast<std::size_t>(n) * half * dim, 0.0);
    if (objective != FlowObjectiveKind::ConsistentVelocityFixedStart) {
        Rng rng(Rng::derive(seed, 0x1F0E));
        for (double& v : state) v = rng.normal();
    }

    auto forward_at = [&](const std::vector<double>& s, double t) {
        std::vector<double> ts(static_cast<std::size_t>(n), t);
        Tensor input = build_input(data, idx, s, with_time ? &ts : nullptr, with_time);
        return model.forward_tokens(input);
    };

    TokenPrediction pred;
    Tensor p_l;
    Tensor z1_hat;
    if (objective == FlowObjectiveKind::DirectAdapt) {
        if (euler_steps < 1) throw_numeric("token Euler inference requires steps >= 1");
        double h = 1.0 / static_cast<double>(euler_steps);
        VelocityModel::Forward last;
        for (int k = 0; k < euler_steps; ++k) {
            last = forward_at(state, static_cast<double>(k) * h);
            SplitOutput halves = split_output(last.out);
            for (std::size_t i = 0; i < state.size(); ++i) {
                state[i] += h * halves.p_r.values()[i];
            }
        }
        p_l = split_output(last.out).p_l;
        z1_hat = Tensor::from_data({n, half, dim}, std::move(state));
    } else {
        // cv / cvfs: the velocity is fixed by the start; integrate in one step
        auto fwd = forward_at(state, 0.0);
        SplitOutput halves = split_output(fwd.out);
        p_l = halves.p_l;
        std::vector<double> z1(state.size());
        for (std::size_t i = 0; i < z1.size(); ++i) z1[i] = state[i] + halves.p_r.values()[i];
        z1_hat = Tensor::from_data({n, half, dim}, std::move(z1));
    }
    // joint models read depth from the condition-aligned half; single-task
    // models read their target from the integrated flow half
    pred.depth_tokens = task == JointTask::Joint ? p_l : z1_hat;
    pred.normal_tokens = z1_hat;
    return pred;
}

void token_mse(VelocityModel& model, const TokenDataset& data, JointTask task, double* depth_mse,
               double* normal_mse) {
    TokenPrediction pred = infer_tokens_flow(
        model, data, FlowObjectiveKind::ConsistentVelocityFixedStart, task, 1, 0);
    int n = data.size();
    auto mse = [&](const Tensor& p, const Tensor& target) {
        double total = 0.0;
        for (std::size_t i = 0; i < p.values().size(); ++i) {
            double diff = p.values()[i] - target.values()[i];
            total += diff * diff;
        }
        return total / static_cast<double>(n);
    };
    if (depth_mse) *depth_mse = mse(pred.depth_tokens, data.depth_v);
    if (normal_mse) *normal_mse = mse(pred.normal_tokens, data.normal_v);
}

double predicted_depth_normal_consistency(VelocityModel& model, const TokenDataset& data,
                                           const std::vector<SceneSample>& scenes,
                                           JointTask task) {
    if (static_cast<int>(scenes.size()) != data.size()) {
        throw_numeric("consistency diagnostic: scenes/token dataset size mismatch");
    }
    TokenPrediction pred = infer_tokens_flow(
        model, data, FlowObjectiveKind::ConsistentVelocityFixedStart, task, 1, 0);
    const JointTokenConfig& cfg = data.cfg;
    int half = cfg.tokens_per_half();
    int dim = cfg.token_dim();

    double err_sum = 0.0;
    int scored = 0;
    for (int s = 0; s < data.size(); ++s) {
        // decoded depth prediction at full resolution
        std::vector<double> block(
            pred.depth_tokens.values().begin() + static_cast<std::ptrdiff_t>(s) * half * dim,
            pred.depth_tokens.values().begin() + static_cast<std::ptrdiff_t>(s + 1) * half * dim);
        GridD label_grid = tokens_to_grid(block, cfg);
        NormalizedLabel label;
        label.values = label_grid;
        for (auto& v : label.values.data) v = std::clamp(v, -1.0, 1.0);
        label.valid = GridMask(label_grid.width, label_grid.height, 1);
        GridD depth = decode(cfg.depth_scheme, label);

        GridMask all(depth.width, depth.height, 1);
        FdNormals fd = finite_difference_normals(depth, all,
                                                 scenes[static_cast<std::size_t>(s)].meters_per_pixel);

        // patch-average the FD normals down to token centers
        for (int ty = 0; ty < cfg.grid; ++ty) {
            for (int tx = 0; tx < cfg.grid; ++tx) {
                Vec3 acc{0, 0, 0};
                int n_ok = 0;
                for (int py = 0; py < cfg.patch; ++py) {
                    for (int px = 0; px < cfg.patch; ++px) {
                        int x = tx * cfg.patch + px, y = ty * cfg.patch + py;
                        if (!fd.valid.at(x, y)) continue;
                        acc = acc + fd.normals.at(x, y);
                        ++n_ok;
                    }
                }
                if (n_ok == 0) continue;
                Vec3 from_depth = acc.normalized();
                const double* tok = pred.normal_tokens.values().data() +
                                    (static_cast<std::size_t>(s) * half + ty * cfg.grid + tx) * dim;
                Vec3 from_tokens = Vec3{tok[0], tok[1], tok[2]}.normalized();
                if (from_tokens.norm() == 0.0 || from_depth.norm() == 0.0) continue;
                double dot = std::clamp(from_depth.dot(from_tokens), -1.0, 1.0);
                err_sum += std::acos(dot) * 57.29577951308232;
                ++scored;
            }
        }
    }
    if (scored == 0) throw_numeric("consistency diagnostic: nothing scored");
    return err_sum / scored;
}

CrossHalfProbe cross_half_gradient_probe(VelocityModel& model, const TokenDataset& data,
                                         int batch_size) {
    if (data.size() == 0) throw_numeric("cross_half_gradient_probe: empty dataset");
    int b = std::min(batch_size, data.size());
    int half = data.cond.dim(1);
    int dim = data.cond.dim(2);
    bool with_time = model.config().accepts_time;
    std::vector<int> idx(static_cast<std::size_t>(b));
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> zeros(static_cast<std::size_t>(b) * half * dim, 0.0);
    std::vector<double> ts(static_cast<std::size_t>(b), 0.0);

    auto run = [&](bool right_loss) {
        Tensor base = build_input(data, idx, zeros, with_time ? &ts : nullptr, with_time);
        Tensor input = Tensor::from_data(base.shape(), base.values(), true);
        auto fwd = model.forward_tokens(input);
        SplitOutput halves = split_output(fwd.out);
        Tensor target_d = Tensor::from_data({b, half, dim}, gather_targets(data.depth_v, idx));
        Tensor target_n = Tensor::from_data({b, half, dim}, gather_targets(data.normal_v, idx));
        Tensor loss = right_loss ? mean_squared_norm(halves.p_r, target_n)
                                 : mean_squared_norm(halves.p_l, target_d);
        model.zero_grad();
        loss.backward();

        // gradient magnitude over the opposite half of the input tokens
        int channels = dim + (with_time ? 1 : 0);
        const auto& grad = input.grad();
        double acc = 0.0;
        for (int i = 0; i < b; ++i) {
            for (int s = 0; s < half; ++s) {
                int seq = right_loss ? s : half + s;  // right loss -> left input half
                std::size_t off = (static_cast<std::size_t>(i) * 2 * half + seq) * channels;
                for (int c = 0; c < dim; ++c) acc += grad[off + c] * grad[off + c];
            }
        }
        return std::sqrt(acc);
    };

    CrossHalfProbe probe;
    probe.grad_into_left_from_right_loss = run(true);
    probe.grad_into_right_from_left_loss = run(false);
    return probe;
}

}  // namespace fe2e

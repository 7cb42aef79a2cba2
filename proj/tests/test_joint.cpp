#include <doctest.h>

#include <cmath>

#include "joint.hpp"

using namespace fe2e;

namespace {

JointTokenConfig small_cfg() {
    JointTokenConfig cfg;
    cfg.grid = 4;
    cfg.patch = 4;
    return cfg;  // 16 tokens per half, dim 16, resolution 16
}

TokenDataset small_dataset(int count, std::uint64_t seed) {
    auto scenes = generate_pool(PoolKind::IndoorLike, count, 16, seed);
    return build_token_dataset(scenes, small_cfg());
}

JointTrainConfig fast_train(JointTask task, std::uint64_t seed) {
    JointTrainConfig cfg;
    cfg.task = task;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.hidden_width = 16;
    cfg.adamw.learning_rate = 1e-3;
    cfg.seed = seed;
    cfg.init_seed = seed + 100;
    return cfg;
}

}  // namespace

TEST_CASE("split_output splits halves and round-trips with concat") {
    Tensor a = Tensor::from_data({1, 1, 2}, {1.0, 2.0});
    Tensor b = Tensor::from_data({1, 1, 2}, {3.0, 4.0});
    Tensor cat = concat_seq(a, b);
    SplitOutput halves = split_output(cat);
    CHECK(halves.p_l.values() == a.values());
    CHECK(halves.p_r.values() == b.values());

    CHECK_THROWS_AS(split_output(Tensor::zeros({1, 3, 2})), LabError);

    // index arithmetic on a random tensor
    Rng rng(501);
    std::vector<double> data(2 * 6 * 3);
    for (auto& v : data) v = rng.normal();
    Tensor t = Tensor::from_data({2, 6, 3}, data);
    SplitOutput s = split_output(t);
    for (int bi = 0; bi < 2; ++bi) {
        for (int si = 0; si < 3; ++si) {
            for (int d = 0; d < 3; ++d) {
                CHECK(s.p_l.values()[(bi * 3 + si) * 3 + d] == data[(bi * 6 + si) * 3 + d]);
                CHECK(s.p_r.values()[(bi * 3 + si) * 3 + d] == data[(bi * 6 + si + 3) * 3 + d]);
            }
        }
    }
}

TEST_CASE("joint_loss additivity and scalar oracle") {
    Rng rng(502);
    std::vector<double> pl(2 * 4 * 3), pr(2 * 4 * 3), vd(2 * 4 * 3), vn(2 * 4 * 3);
    for (auto* vec : {&pl, &pr, &vd, &vn}) {
        for (auto& v : *vec) v = rng.normal();
    }
    Tensor t_pl = Tensor::from_data({2, 4, 3}, pl);
    Tensor t_pr = Tensor::from_data({2, 4, 3}, pr);
    Tensor t_vd = Tensor::from_data({2, 4, 3}, vd);
    Tensor t_vn = Tensor::from_data({2, 4, 3}, vn);

    double expect = 0.0;
    for (std::size_t i = 0; i < pl.size(); ++i) {
        expect += (pl[i] - vd[i]) * (pl[i] - vd[i]) + (pr[i] - vn[i]) * (pr[i] - vn[i]);
    }
    expect /= 2.0;
    CHECK(joint_loss(t_pl, t_pr, t_vd, t_vn).item() == doctest::Approx(expect).epsilon(1e-12));

    // exact additivity against the two single-task terms
    double depth_term = mean_squared_norm(t_pl, t_vd).item();
    double normal_term = mean_squared_norm(t_pr, t_vn).item();
    CHECK(std::fabs(joint_loss(t_pl, t_pr, t_vd, t_vn).item() - (depth_term + normal_term)) < 1e-12);

    // perfect predictions give zero
    CHECK(joint_loss(t_vd, t_vn, t_vd, t_vn).item() == 0.0);

    CHECK_THROWS_AS(joint_loss(t_pl, Tensor::zeros({2, 4, 2}), t_vd, t_vn), LabError);
}

TEST_CASE("token dataset carries proxies, labels and unit-normal targets") {
    auto scenes = generate_pool(PoolKind::IndoorLike, 2, 16, 9);
    JointTokenConfig cfg = small_cfg();
    TokenDataset ds = build_token_dataset(scenes, cfg);
    REQUIRE(ds.size() == 2);
    CHECK(ds.cond.shape() == Shape{2, 16, 16});

    // depth tokens reassemble to the encoded label grid exactly
    for (int s = 0; s < 2; ++s) {
        std::vector<double> block(
            ds.depth_v.values().begin() + s * 16 * 16,
            ds.depth_v.values().begin() + (s + 1) * 16 * 16);
        GridD grid = tokens_to_grid(block, cfg);
        NormalizedLabel expect = encode(cfg.depth_scheme, scenes[s].depth, scenes[s].valid);
        CHECK(grid.data == expect.values.data);
    }

    // condition tokens are proxy patches
    CHECK(ds.cond.values()[0] == scenes[0].image_proxy.at(0, 0));

    // normal targets: 3 bf16 channels, padding zeros
    for (int tok = 0; tok < 16; ++tok) {
        const double* v = ds.normal_v.values().data() + tok * 16;
        double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        CHECK(norm == doctest::Approx(1.0).epsilon(0.01));  // bf16 rounding wiggle
        for (int c = 3; c < 16; ++c) CHECK(v[c] == 0.0);
    }
}

TEST_CASE("swap_halves exchanges the task targets") {
    auto scenes = generate_pool(PoolKind::IndoorLike, 2, 16, 13);
    JointTokenConfig plain = small_cfg();
    JointTokenConfig swapped = small_cfg();
    swapped.swap_halves = true;
    TokenDataset a = build_token_dataset(scenes, plain);
    TokenDataset b = build_token_dataset(scenes, swapped);
    CHECK(a.depth_v.values() == b.normal_v.values());
    CHECK(a.normal_v.values() == b.depth_v.values());
    CHECK(a.cond.values() == b.cond.values());
}

TEST_CASE("cross-half gradients flow with global attention and vanish when blocked") {
    TokenDataset ds = small_dataset(4, 11);

    JointTrainConfig cfg = fast_train(JointTask::Joint, 1);
    VelocityModel full = make_token_model(small_cfg(), cfg);
    CrossHalfProbe probe = cross_half_gradient_probe(full, ds);
    CHECK(probe.grad_into_left_from_right_loss > 0.0);
    CHECK(probe.grad_into_right_from_left_loss > 0.0);

    JointTrainConfig blocked_cfg = cfg;
    blocked_cfg.mask_kind = AttnMaskKind::BlockDiagonal;
    VelocityModel blocked = make_token_model(small_cfg(), blocked_cfg);
    CrossHalfProbe blocked_probe = cross_half_gradient_probe(blocked, ds);
    CHECK(blocked_probe.grad_into_left_from_right_loss == 0.0);
    CHECK(blocked_probe.grad_into_right_from_left_loss == 0.0);

    // zero value projections also remove every cross-token path
    VelocityModel zeroed = make_token_model(small_cfg(), cfg);
    for (auto& p : zeroed.parameters()) {
        if (p.name.size() >= 7 && p.name.substr(p.name.size() - 7) == "attn.wv") {
            for (double& v : p.tensor.values()) v = 0.0;
        }
    }
    CrossHalfProbe zero_probe = cross_half_gradient_probe(zeroed, ds);
    CHECK(zero_probe.grad_into_left_from_right_loss == 0.0);
    CHECK(zero_probe.grad_into_right_from_left_loss == 0.0);
}

TEST_CASE("train_joint: zero epochs, one forward per step, determinism") {
    TokenDataset train = small_dataset(8, 21);
    TokenDataset test = small_dataset(4, 22);

    JointTrainConfig cfg = fast_train(JointTask::Joint, 3);
    cfg.epochs = 0;
    VelocityModel model = make_token_model(small_cfg(), cfg);
    std::vector<std::vector<double>> before;
    for (auto& p : model.parameters()) before.push_back(p.tensor.values());
    auto result = train_joint(model, train, test, cfg);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(model.parameters()[i].tensor.values() == before[i]);
    }
    CHECK(result.optimizer_steps == 0);

    // cost-free claim, operational form: one forward per optimizer step in
    // both joint and single-task modes
    for (JointTask task : {JointTask::Joint, JointTask::Depth}) {
        JointTrainConfig tc = fast_train(task, 5);
        VelocityModel m = make_token_model(small_cfg(), tc);
        auto r = train_joint(m, train, test, tc);
        CHECK(r.optimizer_steps > 0);
        CHECK(r.forward_passes == r.optimizer_steps);
    }

    // determinism: identical seeds give identical weights and traces
    JointTrainConfig d1 = fast_train(JointTask::Joint, 7);
    JointTrainConfig d2 = fast_train(JointTask::Joint, 7);
    VelocityModel m1 = make_token_model(small_cfg(), d1);
    VelocityModel m2 = make_token_model(small_cfg(), d2);
    auto r1 = train_joint(m1, train, test, d1);
    auto r2 = train_joint(m2, train, test, d2);
    CHECK(r1.final_depth_mse == r2.final_depth_mse);
    for (std::size_t i = 0; i < m1.parameters().size(); ++i) {
        CHECK(m1.parameters()[i].tensor.values() == m2.parameters()[i].tensor.values());
    }

    // both label families are required
    TokenDataset missing = train;
    missing.normal_v = Tensor();
    VelocityModel m3 = make_token_model(small_cfg(), d1);
    CHECK_THROWS_AS(train_joint(m3, missing, test, d1), LabError);
}

TEST_CASE("predicted depth-normal consistency improves with training") {
    auto scenes = generate_pool(PoolKind::IndoorLike, 12, 16, 91);
    JointTokenConfig cfg = small_cfg();
    TokenDataset ds = build_token_dataset(scenes, cfg);

    JointTrainConfig jc = fast_train(JointTask::Joint, 19);
    jc.epochs = 0;
    VelocityModel model = make_token_model(cfg, jc);
    double before = predicted_depth_normal_consistency(model, ds, scenes, JointTask::Joint);

    jc.epochs = 20;
    jc.adamw.learning_rate = 3e-3;
    train_joint(model, ds, ds, jc);
    double after = predicted_depth_normal_consistency(model, ds, scenes, JointTask::Joint);
    CHECK(after < before);
}

TEST_CASE("joint training reduces the depth loss") {
    TokenDataset train = small_dataset(16, 31);
    TokenDataset test = small_dataset(6, 32);
    JointTrainConfig cfg = fast_train(JointTask::Joint, 13);
    cfg.epochs = 12;
    cfg.adamw.learning_rate = 3e-3;
    VelocityModel model = make_token_model(small_cfg(), cfg);
    auto result = train_joint(model, train, test, cfg);
    CHECK(result.trace.back().depth_loss < result.trace.front().depth_loss * 0.8);
    CHECK(result.final_depth_mse < 20.0);
}

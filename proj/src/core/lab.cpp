#include "lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <json.hpp>

#include "depth_codec.hpp"
#include "flow.hpp"
#include "io/csv.hpp"
#include "io/depth_png.hpp"
#include "io/svg.hpp"
#include "joint.hpp"
#include "metrics.hpp"
#include "scenes.hpp"

namespace fe2e {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

std::string resolve_out_dir(const std::string& command, const KeyValueConfig& cfg) {
    if (cfg.has("out")) return cfg.get_string("out", "");
    const char* env = std::getenv("FE2E_LAB_OUT");
    std::string root = env ? env : "fe2e_out";
    return root + "/" + command;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create output directory: " + dir);
}

void write_manifest_named(const std::string& path, const std::string& command,
                          const KeyValueConfig& cfg, const nlohmann::json& extra) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    nlohmann::json resolved;
    for (const auto& [k, v] : cfg.entries()) resolved[k] = v;
    j["config"] = resolved;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw_io("cannot write run manifest at " + path);
    f << j.dump(2) << "\n";
}

void write_manifest(const std::string& dir, const std::string& command,
                    const KeyValueConfig& cfg, const nlohmann::json& extra) {
    write_manifest_named(dir + "/manifest.json", command, cfg, extra);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(sep, start);
        if (end == std::string::npos) {
            out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

QuantScheme scheme_by_name(const std::string& name, const KeyValueConfig& cfg) {
    QuantKind kind = quant_kind_from_name(name);
    double d_max = cfg.get_double("d-max", 80.0);
    double d_min = kind == QuantKind::Uniform ? cfg.get_double("uniform-d-min", 0.0)
                                              : cfg.get_double("d-min", 0.1);
    return QuantScheme(kind, d_min, d_max);
}

// ---------------------------------------------------------------- quant-table

void cmd_quant_table(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("quant-table", cfg);
    ensure_dir(out);
    StepModel step(parse_fraction(cfg.get_string("delta-v", "1/256")));

    std::vector<QuantScheme> schemes;
    for (const auto& name : split_list(cfg.get_string("schemes", "uniform,inverse,log"), ',')) {
        if (!name.empty()) schemes.push_back(scheme_by_name(name, cfg));
    }
    if (schemes.empty()) throw_usage("quant-table: no schemes selected");

    std::vector<double> depths;
    for (const auto& d : split_list(cfg.get_string("depths", "80,0.1"), ',')) {
        if (!d.empty()) depths.push_back(parse_fraction(d));
    }

    auto rows = error_table(schemes, depths, step);
    CsvWriter table(out + "/quant_table.csv");
    table.header({"scheme", "depth_m", "abs_error_m", "absrel"});
    for (const auto& r : rows) {
        table.field(r.scheme).field(r.depth_m).field(r.abs_error_m).field(r.absrel).end_row();
    }

    // dense log-spaced sweep for error-curve plots
    int sweep_points = cfg.get_int("sweep-points", 64);
    CsvWriter sweep(out + "/quant_sweep.csv");
    sweep.header({"scheme", "depth_m", "abs_error_m", "absrel"});
    for (const auto& scheme : schemes) {
        double lo = scheme.kind == QuantKind::Uniform
                        ? std::max(0.1, scheme.d_min)
                        : scheme.d_min;
        for (int i = 0; i < sweep_points; ++i) {
            double f = sweep_points == 1 ? 0.0 : static_cast<double>(i) / (sweep_points - 1);
            double d = lo * std::pow(scheme.d_max / lo, f);
            auto err = worst_case_error(scheme, d, step);
            sweep.field(quant_kind_name(scheme.kind)).field(d).field(err.abs_error_m)
                 .field(err.absrel).end_row();
        }
    }

    write_manifest(out, "quant-table", cfg,
                   {{"outputs", {"quant_table.csv", "quant_sweep.csv"}}});
}

// ------------------------------------------------------------------- gen-data

void cmd_gen_data(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("gen-data", cfg);
    ensure_dir(out);
    int count = cfg.get_int("count", 64);
    int resolution = cfg.get_int("resolution", 32);
    std::uint64_t seed = cfg.get_u64("seed", 1);
    auto mix_parts = split_list(cfg.get_string("mix", "0.9,0.1"), ',');
    if (mix_parts.size() != 2) throw_usage("gen-data: mix must be 'p_indoor,p_outdoor'");
    double mix_indoor = parse_fraction(mix_parts[0]);
    double mix_outdoor = parse_fraction(mix_parts[1]);
    if (std::fabs(mix_indoor + mix_outdoor - 1.0) > 1e-9) {
        throw_usage("gen-data: mix probabilities must sum to 1");
    }

    auto samples = count > 0 ? generate_mixed_dataset(count, resolution, mix_indoor, seed)
                             : std::vector<SceneSample>{};
    save_dataset(samples, out, seed, mix_indoor);

    if (cfg.get_bool("png16", false)) {
        double scale = cfg.get_double("png16-scale", 512.0);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "sample_%05d_depth16.png", static_cast<int>(i));
            write_depth_png16(out + "/" + name, samples[i].depth, scale);
        }
    }

    // the dataset's own manifest.json owns that name; the run echo sits alongside
    write_manifest_named(out + "/run_manifest.json", "gen-data", cfg,
                         {{"samples", static_cast<int>(samples.size())}});
}

// ---------------------------------------------------------------------- train

struct TrainSetup {
    bool vector_arch = false;
    FlowObjective objective;
    JointTokenConfig token_cfg;
    JointTrainConfig joint_cfg;
    FlowTrainConfig flow_cfg;
    int cond_dim = 2;
    int state_dim = 2;
};

TrainSetup parse_train_setup(const KeyValueConfig& cfg) {
    TrainSetup s;
    s.objective.kind = flow_objective_from_name(cfg.get_string("objective", "cvfs"));
    s.objective.euler_steps = cfg.get_int("euler-steps", 50);

    std::string data = cfg.get_string("data", "");
    s.vector_arch = data.rfind("toy:", 0) == 0;

    bool joint = cfg.get_bool("joint", false);
    if (joint && s.objective.kind == FlowObjectiveKind::DirectAdapt) {
        std::cerr << "warning: joint=on with the direct objective trains the flow over the "
                     "normal canvas only; the paper's joint configuration uses cvfs\n";
    }

    s.token_cfg.grid = cfg.get_int("grid", 8);
    s.token_cfg.patch = cfg.get_int("patch", 4);
    s.token_cfg.depth_scheme = scheme_by_name(cfg.get_string("quant", "log"), cfg);
    s.token_cfg.swap_halves = cfg.get_bool("swap-halves", false);

    s.joint_cfg.task = joint ? JointTask::Joint
                             : (cfg.get_string("task", "depth") == "normal" ? JointTask::Normal
                                                                            : JointTask::Depth);
    s.joint_cfg.objective = s.objective.kind;
    s.joint_cfg.mask_kind = cfg.get_string("mask", "full") == "block" ? AttnMaskKind::BlockDiagonal
                                                                      : AttnMaskKind::Full;
    s.joint_cfg.epochs = cfg.get_int("epochs", 15);
    s.joint_cfg.batch_size = cfg.get_int("batch", 8);
    s.joint_cfg.hidden_width = cfg.get_int("hidden", 32);
    s.joint_cfg.token_width = cfg.get_int("token-width", 32);
    s.joint_cfg.adamw.learning_rate = cfg.get_double("lr", 1e-4);
    s.joint_cfg.adamw.weight_decay = cfg.get_double("wd", 0.0);
    s.joint_cfg.final_lr_fraction = cfg.get_double("lr-final-frac", 1.0);
    s.joint_cfg.lambda_disp = cfg.get_double("lambda", 0.5);
    s.joint_cfg.disp_tau = cfg.get_double("tau", 1.0);
    s.joint_cfg.disp_include_self = cfg.get_bool("disp-include-self", true);
    s.joint_cfg.pool_mix_prob = cfg.get_double("mix-prob", 0.9);
    s.joint_cfg.seed = cfg.get_u64("seed", 1);
    s.joint_cfg.init_seed = cfg.get_u64("init-seed", s.joint_cfg.seed + 1000);

    s.flow_cfg.objective = s.objective;
    s.flow_cfg.epochs = s.joint_cfg.epochs;
    s.flow_cfg.batch_size = cfg.get_int("batch", 32);
    s.flow_cfg.adamw = s.joint_cfg.adamw;
    s.flow_cfg.lambda_disp = s.joint_cfg.lambda_disp;
    s.flow_cfg.disp_tau = s.joint_cfg.disp_tau;
    s.flow_cfg.disp_include_self = s.joint_cfg.disp_include_self;
    s.flow_cfg.seed = s.joint_cfg.seed;
    s.cond_dim = cfg.get_int("cond-dim", 2);
    s.state_dim = cfg.get_int("state-dim", 2);
    return s;
}

nlohmann::json model_config_json(const TrainSetup& s) {
    nlohmann::json j;
    j["arch"] = s.vector_arch ? "vector" : "token";
    j["objective"] = flow_objective_name(s.objective.kind);
    j["euler_steps"] = s.objective.euler_steps;
    if (s.vector_arch) {
        j["cond_dim"] = s.cond_dim;
        j["state_dim"] = s.state_dim;
    } else {
        j["grid"] = s.token_cfg.grid;
        j["patch"] = s.token_cfg.patch;
        j["quant"] = quant_kind_name(s.token_cfg.depth_scheme.kind);
        j["d_min"] = s.token_cfg.depth_scheme.d_min;
        j["d_max"] = s.token_cfg.depth_scheme.d_max;
        j["swap_halves"] = s.token_cfg.swap_halves;
        j["token_width"] = s.joint_cfg.token_width;
        j["mask"] = s.joint_cfg.mask_kind == AttnMaskKind::BlockDiagonal ? "block" : "full";
        j["task"] = s.joint_cfg.task == JointTask::Joint
                        ? "joint"
                        : (s.joint_cfg.task == JointTask::Normal ? "normal" : "depth");
    }
    return j;
}

void cmd_train(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("train", cfg);
    ensure_dir(out);
    TrainSetup s = parse_train_setup(cfg);
    std::string data = cfg.get_string("data", "");

    nlohmann::json extra;
    nlohmann::json model_json = model_config_json(s);

    if (s.vector_arch) {
        // toy vector tasks exercise the flow objectives directly
        std::string task = data.substr(4);
        int n_train = cfg.get_int("train-samples", 2048);
        int n_test = cfg.get_int("test-samples", 512);
        std::uint64_t dseed = cfg.get_u64("data-seed", 42);
        FlowDataset full;
        if (task == "linear") {
            full = make_linear_task(n_train + n_test, s.cond_dim, s.state_dim, dseed);
        } else if (task == "nonlinear") {
            full = make_nonlinear_task(n_train + n_test, s.cond_dim, s.state_dim, dseed);
        } else {
            throw_usage("unknown toy task '" + task + "' (expected toy:linear|toy:nonlinear)");
        }
        auto [train_set, test_set] = split_dataset(full, n_train);

        VelocityModelConfig mc;
        mc.cond_dim = s.cond_dim;
        mc.state_dim = s.state_dim;
        mc.accepts_state = s.objective.accepts_state();
        mc.accepts_time = s.objective.accepts_time();
        mc.hidden_width = cfg.get_int("hidden", 32);
        mc.hidden_layers = cfg.get_int("layers", 2);
        mc.init_seed = s.joint_cfg.init_seed;
        VelocityModel model(mc);

        auto result = train_flow(model, s.objective, train_set, test_set, s.flow_cfg);
        save_checkpoint(out + "/checkpoint.bin", model.parameters());

        CsvWriter trace(out + "/trace.csv");
        trace.header({"epoch", "train_loss", "test_mse"});
        for (const auto& e : result.trace) {
            trace.field(e.epoch).field(e.train_loss).field(e.test_mse).end_row();
        }
        model_json["hidden"] = mc.hidden_width;
        model_json["layers"] = mc.hidden_layers;
        extra["final_test_mse"] = result.final_test_mse;
    } else {
        std::vector<SceneSample> train_scenes, test_scenes;
        if (!data.empty()) {
            auto all = load_dataset(data);
            int n_test = std::max(1, static_cast<int>(all.size()) / 5);
            test_scenes.assign(all.end() - n_test, all.end());
            train_scenes.assign(all.begin(), all.end() - n_test);
        } else {
            int resolution = s.token_cfg.resolution();
            double mix = cfg.get_double("mix-indoor", 0.9);
            train_scenes = generate_mixed_dataset(cfg.get_int("train-scenes", 96), resolution, mix,
                                                  cfg.get_u64("data-seed", 42));
            test_scenes = generate_mixed_dataset(cfg.get_int("test-scenes", 32), resolution, mix,
                                                 cfg.get_u64("data-seed", 42) + 1);
        }
        if (train_scenes.empty()) throw_usage("train: empty training set");

        TokenDataset train_tokens = build_token_dataset(train_scenes, s.token_cfg);
        TokenDataset test_tokens = build_token_dataset(test_scenes, s.token_cfg);
        VelocityModel model = make_token_model(s.token_cfg, s.joint_cfg);
        auto result = train_joint(model, train_tokens, test_tokens, s.joint_cfg);
        save_checkpoint(out + "/checkpoint.bin", model.parameters());

        CsvWriter trace(out + "/trace.csv");
        trace.header({"epoch", "depth_loss", "normal_loss"});
        for (const auto& e : result.trace) {
            trace.field(e.epoch).field(e.depth_loss).field(e.normal_loss).end_row();
        }

        // cross-half coupling diagnostics on the trained model
        CrossHalfProbe probe = cross_half_gradient_probe(model, test_tokens);
        CsvWriter probes(out + "/probes.csv");
        probes.header({"grad_into_left_from_right_loss", "grad_into_right_from_left_loss"});
        probes.field(probe.grad_into_left_from_right_loss)
            .field(probe.grad_into_right_from_left_loss)
            .end_row();

        model_json["hidden"] = s.joint_cfg.hidden_width;
        extra["final_depth_mse"] = result.final_depth_mse;
        extra["final_normal_mse"] = result.final_normal_mse;
        extra["forward_passes"] = result.forward_passes;
        extra["optimizer_steps"] = result.optimizer_steps;
    }

    extra["model"] = model_json;
    extra["outputs"] = {"checkpoint.bin", "trace.csv"};
    if (!s.vector_arch) extra["outputs"].push_back("probes.csv");
    write_manifest(out, "train", cfg, extra);
}

// ----------------------------------------------------------------------- eval

struct LoadedModel {
    std::unique_ptr<VelocityModel> model;
    nlohmann::json config;
    JointTokenConfig token_cfg;
    JointTrainConfig joint_cfg;
    FlowObjective objective;
};

LoadedModel load_model(const std::string& checkpoint) {
    fs::path ckpt(checkpoint);
    fs::path manifest_path = ckpt.parent_path() / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw_io("missing manifest next to checkpoint: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw_io("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    LoadedModel lm;
    lm.config = manifest.at("model");
    if (lm.config.at("arch") != "token") {
        throw_usage("eval supports token-model checkpoints; got arch=" +
                    lm.config.at("arch").get<std::string>());
    }
    lm.objective.kind = flow_objective_from_name(lm.config.at("objective").get<std::string>());
    lm.objective.euler_steps = lm.config.at("euler_steps").get<int>();
    lm.token_cfg.grid = lm.config.at("grid").get<int>();
    lm.token_cfg.patch = lm.config.at("patch").get<int>();
    lm.token_cfg.depth_scheme =
        QuantScheme(quant_kind_from_name(lm.config.at("quant").get<std::string>()),
                    lm.config.at("d_min").get<double>(), lm.config.at("d_max").get<double>());
    lm.token_cfg.swap_halves = lm.config.at("swap_halves").get<bool>();
    lm.joint_cfg.objective = lm.objective.kind;
    std::string task = lm.config.at("task").get<std::string>();
    lm.joint_cfg.task = task == "joint" ? JointTask::Joint
                                        : (task == "normal" ? JointTask::Normal : JointTask::Depth);
    lm.joint_cfg.hidden_width = lm.config.at("hidden").get<int>();
    lm.joint_cfg.token_width = lm.config.value("token_width", 0);
    lm.joint_cfg.mask_kind = lm.config.at("mask") == "block" ? AttnMaskKind::BlockDiagonal
                                                             : AttnMaskKind::Full;
    lm.model = std::make_unique<VelocityModel>(
        make_token_model(lm.token_cfg, lm.joint_cfg).config());
    load_checkpoint(checkpoint, lm.model->parameters());
    return lm;
}

struct EvalRow {
    double absrel = 0.0;
    double delta1 = 0.0;
    double mean_err_deg = 0.0;
    double within = 0.0;
    int n_valid = 0;
    int floored_pixels = 0;
};

// Token-level normal grids: one normal per token, compared at token resolution.
GridV3 token_normals(const Tensor& tokens, int index, const JointTokenConfig& cfg) {
    GridV3 grid(cfg.grid, cfg.grid);
    int half = cfg.tokens_per_half();
    int dim = cfg.token_dim();
    for (int t = 0; t < half; ++t) {
        const double* v = tokens.values().data() + (static_cast<std::size_t>(index) * half + t) * dim;
        grid.data[static_cast<std::size_t>(t)] = Vec3{v[0], v[1], v[2]};
    }
    return grid;
}

EvalRow eval_scene_metrics(const TokenDataset& data, const std::vector<SceneSample>& scenes,
                           const TokenPrediction& pred, AlignSpace align_space) {
    EvalRow row;
    double absrel_sum = 0.0, delta1_sum = 0.0, meanerr_sum = 0.0, within_sum = 0.0;
    int scored = 0;
    for (int i = 0; i < data.size(); ++i) {
        const SceneSample& scene = scenes[static_cast<std::size_t>(i)];
        // depth half: token block -> label grid -> decoded depth
        int half = data.cfg.tokens_per_half();
        int dim = data.cfg.token_dim();
        std::vector<double> block(
            pred.depth_tokens.values().begin() + static_cast<std::ptrdiff_t>(i) * half * dim,
            pred.depth_tokens.values().begin() + static_cast<std::ptrdiff_t>(i + 1) * half * dim);
        GridD label_grid = tokens_to_grid(block, data.cfg);
        NormalizedLabel label;
        label.values = label_grid;
        for (auto& v : label.values.data) v = std::clamp(v, -1.0, 1.0);
        label.valid = data.depth_labels[static_cast<std::size_t>(i)].valid;
        GridD decoded = decode(data.cfg.depth_scheme, label);

        DepthMetrics dm = depth_metrics(decoded, scene.depth, label.valid, align_space);
        absrel_sum += dm.absrel;
        delta1_sum += dm.delta1;
        row.n_valid += dm.n_valid;
        row.floored_pixels += dm.floored_pixels;

        // normal half at token resolution vs patch-averaged ground truth
        GridV3 pred_normals = token_normals(pred.normal_tokens, i, data.cfg);
        GridV3 gt_normals = token_normals(data.normal_v, i, data.cfg);
        GridMask token_mask(data.cfg.grid, data.cfg.grid, 1);
        NormalMetrics nm = normal_metrics(pred_normals, gt_normals, token_mask);
        meanerr_sum += nm.mean_err_deg;
        within_sum += nm.within_11_25;
        ++scored;
    }
    if (scored == 0) throw_numeric("eval: no scenes scored");
    row.absrel = absrel_sum / scored;
    row.delta1 = delta1_sum / scored;
    row.mean_err_deg = meanerr_sum / scored;
    row.within = within_sum / scored;
    return row;
}

void cmd_eval(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("eval", cfg);
    ensure_dir(out);
    std::string data_dir = cfg.get_string("data", "");
    if (data_dir.empty()) throw_usage("eval: data=<dataset dir> is required");
    auto scenes = load_dataset(data_dir);
    if (scenes.empty()) throw_usage("eval: dataset is empty");

    AlignSpace align_space = cfg.get_string("align", "depth") == "disparity"
                                 ? AlignSpace::Disparity
                                 : AlignSpace::Depth;
    std::string pred_source = cfg.get_string("pred-source", "checkpoint");

    CsvWriter csv(out + "/metrics.csv");
    csv.header({"dataset", "seed", "n_valid", "floored_pixels", "absrel", "delta1", "mean_err_deg",
                "within_11_25"});

    nlohmann::json extra;
    if (pred_source == "gt") {
        // ground truth against itself: the zero point of the metric suite
        double absrel_sum = 0.0, delta1_sum = 0.0, meanerr_sum = 0.0, within_sum = 0.0;
        int n_valid = 0;
        for (const auto& scene : scenes) {
            DepthMetrics dm = depth_metrics(scene.depth, scene.depth, scene.valid, align_space);
            NormalMetrics nm = normal_metrics(scene.normals, scene.normals, scene.valid);
            absrel_sum += dm.absrel;
            delta1_sum += dm.delta1;
            meanerr_sum += nm.mean_err_deg;
            within_sum += nm.within_11_25;
            n_valid += dm.n_valid;
        }
        double n = static_cast<double>(scenes.size());
        csv.field(data_dir).field(0).field(n_valid).field(0).field(absrel_sum / n * 100.0)
            .field(delta1_sum / n * 100.0).field(meanerr_sum / n).field(within_sum / n * 100.0)
            .end_row();
        extra["mode"] = "gt-self";
    } else if (pred_source.rfind("constant:", 0) == 0) {
        double value = parse_fraction(pred_source.substr(9));
        const auto& scene = scenes.front();
        GridD constant(scene.depth.width, scene.depth.height, value);
        // a constant prediction cannot be affine-aligned; surfaces as Numeric
        depth_metrics(constant, scene.depth, scene.valid, align_space);
        throw_numeric("eval: constant prediction unexpectedly aligned");
    } else if (pred_source == "checkpoint") {
        std::string checkpoint = cfg.get_string("checkpoint", "");
        if (checkpoint.empty()) throw_usage("eval: checkpoint=<path> is required");
        if (!fs::exists(checkpoint)) throw_io("eval: checkpoint not found: " + checkpoint);
        LoadedModel lm = load_model(checkpoint);

        // dataset scenes must match the model's token geometry
        TokenDataset tokens = build_token_dataset(scenes, lm.token_cfg);
        int n_seeds = cfg.get_int("seeds", 1);
        std::vector<double> absrels;
        for (int s = 0; s < n_seeds; ++s) {
            TokenPrediction pred = infer_tokens_flow(*lm.model, tokens, lm.objective.kind,
                                                     lm.joint_cfg.task, lm.objective.euler_steps,
                                                     cfg.get_u64("seed", 1) + static_cast<std::uint64_t>(s));
            EvalRow row = eval_scene_metrics(tokens, scenes, pred, align_space);
            absrels.push_back(row.absrel);
            csv.field(data_dir).field(s).field(row.n_valid).field(row.floored_pixels)
                .field(row.absrel * 100.0).field(row.delta1 * 100.0).field(row.mean_err_deg)
                .field(row.within * 100.0).end_row();
        }
        double mean = 0.0;
        for (double a : absrels) mean += a;
        mean /= static_cast<double>(absrels.size());
        double var = 0.0;
        for (double a : absrels) var += (a - mean) * (a - mean);
        var /= static_cast<double>(absrels.size());
        extra["absrel_variance_across_seeds"] = var;
        extra["deterministic"] = var == 0.0;
    } else {
        throw_usage("eval: pred-source must be checkpoint|gt|constant:<v>");
    }

    extra["outputs"] = {"metrics.csv"};
    write_manifest(out, "eval", cfg, extra);
}

// ----------------------------------------------------------------- field-plot

void cmd_field_plot(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("field-plot", cfg);
    ensure_dir(out);
    std::string mode = cfg.get_string("mode", "analytic");

    int grid_n = cfg.get_int("grid-n", 12);
    std::vector<double> t_values;
    for (const auto& t : split_list(cfg.get_string("t-values", "0,0.25,0.5,0.75"), ',')) {
        if (!t.empty()) t_values.push_back(parse_fraction(t));
    }

    CsvWriter csv(out + "/field.csv");
    csv.header({"z1", "z2", "t", "v1", "v2", "panel"});

    SvgWriter svg(640, 320);
    svg.set_viewport(-2.2, 2.2, -2.2, 2.2);
    if (cfg.get_bool("timestamp", false)) {
        svg.comment("generated " + std::to_string(std::time(nullptr)));
    }

    if (mode == "analytic") {
        auto targets = split_list(cfg.get_string("targets", "1,1;1,-1"), ';');
        if (targets.size() != 2) throw_usage("field-plot: targets must be 'ax,ay;bx,by'");
        auto pa = split_list(targets[0], ',');
        auto pb = split_list(targets[1], ',');
        if (pa.size() != 2 || pb.size() != 2) throw_usage("field-plot: malformed target point");
        double a[2] = {parse_fraction(pa[0]), parse_fraction(pa[1])};
        double b[2] = {parse_fraction(pb[0]), parse_fraction(pb[1])};

        // panel 0: Gaussian start (curved marginal field)
        // panel 1: near-zero start (straight rays)
        double sigmas[2] = {cfg.get_double("sigma-gaussian", 1.0),
                            cfg.get_double("sigma-fixed", 0.05)};
        for (int panel = 0; panel < 2; ++panel) {
            for (double t : t_values) {
                if (!(t >= 0.0 && t < 1.0)) throw_usage("field-plot: t values must lie in [0,1)");
                for (int i = 0; i < grid_n; ++i) {
                    for (int j = 0; j < grid_n; ++j) {
                        FieldPoint p;
                        p.z1 = -2.0 + 4.0 * i / (grid_n - 1);
                        p.z2 = -2.0 + 4.0 * j / (grid_n - 1);
                        p.t = t;
                        FieldArrow arrow = two_point_posterior_velocity(a, b, sigmas[panel], p);
                        csv.field(arrow.z1).field(arrow.z2).field(arrow.t).field(arrow.v1)
                            .field(arrow.v2).field(panel).end_row();
                        double shift = panel == 0 ? -1.1 : 1.1;  // side-by-side panels
                        double norm = std::hypot(arrow.v1, arrow.v2);
                        double s = norm > 0 ? 0.12 / std::max(1.0, norm) : 0.0;
                        svg.arrow(arrow.z1 * 0.45 + shift, arrow.z2 * 0.45, arrow.v1 * s,
                                  arrow.v2 * s, panel == 0 ? "#3366cc" : "#cc6633", 0.02);
                    }
                }
            }
            double shift = panel == 0 ? -1.1 : 1.1;
            svg.circle(a[0] * 0.45 + shift, a[1] * 0.45, 3.0, "#cc0000");
            svg.circle(b[0] * 0.45 + shift, b[1] * 0.45, 3.0, "#cc0000");
        }
        svg.text(-2.0, 2.0, "gaussian start");
        svg.text(0.2, 2.0, "fixed start");
    } else if (mode == "checkpoint") {
        std::string checkpoint = cfg.get_string("checkpoint", "");
        if (checkpoint.empty()) throw_usage("field-plot: checkpoint=<path> is required");
        fs::path manifest_path = fs::path(checkpoint).parent_path() / "manifest.json";
        std::ifstream f(manifest_path);
        if (!f) throw_io("missing manifest next to checkpoint: " + manifest_path.string());
        nlohmann::json manifest;
        f >> manifest;
        auto mj = manifest.at("model");
        if (mj.at("arch") != "vector") throw_numeric("field-plot needs a 2D vector checkpoint");
        if (mj.at("state_dim").get<int>() != 2) throw_numeric("field-plot requires state_dim == 2");

        FlowObjective objective;
        objective.kind = flow_objective_from_name(mj.at("objective").get<std::string>());
        VelocityModelConfig mc;
        mc.cond_dim = mj.at("cond_dim").get<int>();
        mc.state_dim = 2;
        mc.accepts_state = objective.accepts_state();
        mc.accepts_time = objective.accepts_time();
        mc.hidden_width = mj.at("hidden").get<int>();
        mc.hidden_layers = mj.at("layers").get<int>();
        VelocityModel model(mc);
        load_checkpoint(checkpoint, model.parameters());

        std::vector<double> zx_vals;
        for (const auto& v : split_list(cfg.get_string("condition", "0,0"), ',')) {
            zx_vals.push_back(parse_fraction(v));
        }
        if (static_cast<int>(zx_vals.size()) != mc.cond_dim) {
            throw_usage("field-plot: condition width must match the checkpoint");
        }
        Tensor z_x = Tensor::from_data({1, mc.cond_dim}, zx_vals);

        std::vector<FieldPoint> lattice;
        for (double t : t_values) {
            for (int i = 0; i < grid_n; ++i) {
                for (int j = 0; j < grid_n; ++j) {
                    lattice.push_back({-2.0 + 4.0 * i / (grid_n - 1),
                                       -2.0 + 4.0 * j / (grid_n - 1), t});
                }
            }
        }
        for (const auto& arrow : velocity_field_grid(model, z_x, lattice)) {
            csv.field(arrow.z1).field(arrow.z2).field(arrow.t).field(arrow.v1).field(arrow.v2)
                .field(0).end_row();
            double norm = std::hypot(arrow.v1, arrow.v2);
            double s = norm > 0 ? 0.12 / std::max(1.0, norm) : 0.0;
            svg.arrow(arrow.z1 * 0.9, arrow.z2 * 0.9, arrow.v1 * s, arrow.v2 * s, "#3366cc", 0.02);
        }
    } else {
        throw_usage("field-plot: mode must be analytic|checkpoint");
    }

    svg.save(out + "/field.svg");
    write_manifest(out, "field-plot", cfg, {{"outputs", {"field.csv", "field.svg"}}});
}

// --------------------------------------------------------------------- ablate

struct AblateConfigRow {
    std::string note;
    std::string objective;
    std::string quant;
    bool joint = false;
};

void cmd_ablate(const KeyValueConfig& cfg) {
    std::string out = resolve_out_dir("ablate", cfg);
    ensure_dir(out);
    int seeds = cfg.get_int("seeds", 3);
    int epochs = cfg.get_int("epochs", 12);
    int train_count = cfg.get_int("train-scenes", 96);
    int test_count = cfg.get_int("test-scenes", 32);
    double lr = cfg.get_double("lr", 2e-3);

    // toy analogs of the ablation axes: objective (CV/FS), quantization, joint
    std::vector<AblateConfigRow> rows = {
        {"direct-adapt", "direct", "uniform", false},
        {"direct-adapt+log", "direct", "log", false},
        {"+cv", "cv", "uniform", false},
        {"+cv+log", "cv", "log", false},
        {"+cv+fs", "cvfs", "uniform", false},
        {"+cv+fs+inverse", "cvfs", "inverse", false},
        {"+cv+fs+log", "cvfs", "log", false},
        {"full(+joint)", "cvfs", "log", true},
    };

    JointTokenConfig tok;
    tok.grid = cfg.get_int("grid", 8);
    tok.patch = cfg.get_int("patch", 4);
    int resolution = tok.resolution();

    CsvWriter csv(out + "/ablate.csv");
    csv.header({"id", "note", "objective", "quant", "joint", "seeds", "depth_absrel", "delta1",
                "latent_depth_mse"});

    struct Result {
        int id;
        double absrel;
        double delta1;
        double latent;
    };
    std::vector<Result> results;

    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        double absrel_sum = 0.0, delta1_sum = 0.0, latent_sum = 0.0;
        for (int s = 0; s < seeds; ++s) {
            std::uint64_t seed = cfg.get_u64("seed", 1) + static_cast<std::uint64_t>(s);
            auto train_scenes = generate_mixed_dataset(train_count, resolution, 0.9, seed * 97 + 11);
            auto test_scenes = generate_mixed_dataset(test_count, resolution, 0.9, seed * 97 + 57);

            JointTokenConfig tok_cfg = tok;
            tok_cfg.depth_scheme = scheme_by_name(row.quant, cfg);
            TokenDataset train_tokens = build_token_dataset(train_scenes, tok_cfg);
            TokenDataset test_tokens = build_token_dataset(test_scenes, tok_cfg);

            JointTrainConfig jc;
            jc.task = row.joint ? JointTask::Joint : JointTask::Depth;
            jc.objective = flow_objective_from_name(row.objective);
            jc.epochs = epochs;
            jc.batch_size = cfg.get_int("batch", 8);
            jc.hidden_width = cfg.get_int("hidden", 32);
            jc.token_width = cfg.get_int("token-width", 32);
            jc.adamw.learning_rate = lr;
            jc.lambda_disp = cfg.get_double("lambda", 0.5);
            jc.seed = seed;
            jc.init_seed = seed + 5000;
            VelocityModel model = make_token_model(tok_cfg, jc);
            auto result = train_joint(model, train_tokens, test_tokens, jc);

            FlowObjective objective;
            objective.kind = jc.objective;
            objective.euler_steps = cfg.get_int("euler-steps", 8);
            TokenPrediction pred = infer_tokens_flow(model, test_tokens, objective.kind, jc.task,
                                                     objective.euler_steps, seed + 999);
            EvalRow er = eval_scene_metrics(test_tokens, test_scenes, pred, AlignSpace::Depth);
            absrel_sum += er.absrel;
            delta1_sum += er.delta1;
            latent_sum += result.final_depth_mse;
        }
        Result res{static_cast<int>(r) + 1, absrel_sum / seeds, delta1_sum / seeds,
                   latent_sum / seeds};
        results.push_back(res);
        csv.field(res.id).field(row.note).field(row.objective).field(row.quant)
            .field(row.joint ? "on" : "off").field(seeds).field(res.absrel * 100.0)
            .field(res.delta1 * 100.0).field(res.latent).end_row();
    }

    // ranking summary, best depth AbsRel first
    std::vector<Result> ranked = results;
    std::sort(ranked.begin(), ranked.end(),
              [](const Result& a, const Result& b) { return a.absrel < b.absrel; });
    CsvWriter rank_csv(out + "/ablate_ranked.csv");
    rank_csv.header({"rank", "id", "note", "depth_absrel"});
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        rank_csv.field(static_cast<int>(i) + 1).field(ranked[i].id)
            .field(rows[static_cast<std::size_t>(ranked[i].id - 1)].note)
            .field(ranked[i].absrel * 100.0).end_row();
    }

    write_manifest(out, "ablate", cfg, {{"outputs", {"ablate.csv", "ablate_ranked.csv"}}});
}

}  // namespace

const char* lab_version() { return kVersion; }

void run_command(const std::string& command, const KeyValueConfig& config) {
    if (command == "quant-table") {
        cmd_quant_table(config);
    } else if (command == "gen-data") {
        cmd_gen_data(config);
    } else if (command == "train") {
        cmd_train(config);
    } else if (command == "eval") {
        cmd_eval(config);
    } else if (command == "field-plot") {
        cmd_field_plot(config);
    } else if (command == "ablate") {
        cmd_ablate(config);
    } else {
        throw_usage("unknown command '" + command +
                    "' (expected quant-table|gen-data|train|eval|field-plot|ablate)");
    }
}

}  // namespace fe2e

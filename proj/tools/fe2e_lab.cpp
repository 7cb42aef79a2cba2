// fe2e-lab: command-line front end over the fe2e shared library.
// Parses flags, forwards them as key=value settings through the C API, and
// maps status codes onto process exit codes (0 ok, 1 usage, 2 io, 3 numeric).

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fe2e/fe2e.h"

namespace {

struct Flag {
    const char* key;
    const char* desc;
};

const std::vector<Flag> kQuantTableFlags = {
    {"delta-v", "quantization step in [-1,1] space, fraction or decimal (default 1/256)"},
    {"schemes", "comma list from uniform,inverse,log (default all)"},
    {"depths", "comma list of depths in meters for the headline table (default 80,0.1)"},
    {"d-min", "near range for inverse/log schemes (default 0.1)"},
    {"d-max", "far range in meters (default 80)"},
    {"uniform-d-min", "near range for the uniform scheme (default 0)"},
    {"sweep-points", "samples in the dense depth sweep (default 64)"},
};

const std::vector<Flag> kGenDataFlags = {
    {"count", "number of scenes (default 64)"},
    {"resolution", "grid resolution per scene (default 32)"},
    {"mix", "pool probabilities 'indoor,outdoor' (default 0.9,0.1)"},
    {"seed", "dataset seed (default 1)"},
    {"png16", "also write 16-bit depth PNGs with sidecars (on/off)"},
    {"png16-scale", "scale factor for 16-bit depth PNGs (default 512)"},
};

const std::vector<Flag> kTrainFlags = {
    {"objective", "direct | cv | cvfs (default cvfs)"},
    {"joint", "joint depth+normal supervision (on/off, default off)"},
    {"quant", "uniform | inverse | log ground-truth quantization (default log)"},
    {"task", "single-task half when joint=off: depth | normal (default depth)"},
    {"data", "dataset directory, or toy:linear / toy:nonlinear for vector tasks"},
    {"epochs", "training epochs (default 15)"},
    {"batch", "batch size (default 8 tokens / 32 vector)"},
    {"lr", "AdamW learning rate (default 1e-4)"},
    {"lr-final-frac", "cosine-decay floor as a fraction of lr (default 1 = constant)"},
    {"wd", "AdamW weight decay (default 0)"},
    {"lambda", "dispersion loss weight (default 0.5)"},
    {"tau", "dispersion temperature (default 1)"},
    {"disp-include-self", "include i==j pairs in the dispersion mean (default on)"},
    {"seed", "training seed (default 1)"},
    {"init-seed", "weight init seed (default seed+1000)"},
    {"data-seed", "on-the-fly dataset seed (default 42)"},
    {"grid", "tokens per side of one half (default 8)"},
    {"patch", "pixels per token side (default 4)"},
    {"hidden", "hidden width (default 32)"},
    {"token-width", "internal residual width of token models (default 32)"},
    {"layers", "hidden layers for vector models (default 2)"},
    {"mask", "attention mask: full | block (default full)"},
    {"swap-halves", "swap depth/normal halves (on/off)"},
    {"euler-steps", "inference steps for the direct objective (default 50)"},
    {"train-scenes", "generated training scenes when data is unset (default 96)"},
    {"test-scenes", "generated test scenes when data is unset (default 32)"},
    {"train-samples", "toy task training samples (default 2048)"},
    {"test-samples", "toy task test samples (default 512)"},
    {"mix-indoor", "indoor probability for generated scenes (default 0.9)"},
    {"mix-prob", "per-batch indoor probability during training (default 0.9)"},
    {"cond-dim", "condition width for toy tasks (default 2)"},
    {"state-dim", "latent width for toy tasks (default 2)"},
    {"d-min", "codec near range (default 0.1)"},
    {"d-max", "codec far range (default 80)"},
    {"uniform-d-min", "uniform codec near range (default 0)"},
};

const std::vector<Flag> kEvalFlags = {
    {"checkpoint", "checkpoint path (manifest.json must sit next to it)"},
    {"data", "dataset directory to evaluate on"},
    {"seeds", "number of inference seeds; reports variance across them (default 1)"},
    {"seed", "base inference seed (default 1)"},
    {"align", "alignment space: depth | disparity (default depth)"},
    {"pred-source", "checkpoint | gt | constant:<v> (default checkpoint)"},
};

const std::vector<Flag> kFieldPlotFlags = {
    {"mode", "analytic | checkpoint (default analytic)"},
    {"targets", "two 2D targets 'ax,ay;bx,by' (default 1,1;1,-1)"},
    {"sigma-gaussian", "start sigma for the Gaussian panel (default 1.0)"},
    {"sigma-fixed", "start sigma for the fixed-start panel (default 0.05)"},
    {"grid-n", "lattice points per axis (default 12)"},
    {"t-values", "comma list of times in [0,1) (default 0,0.25,0.5,0.75)"},
    {"checkpoint", "2D vector checkpoint for mode=checkpoint"},
    {"condition", "condition vector for mode=checkpoint (default 0,0)"},
    {"timestamp", "embed a timestamp comment in the SVG (on/off, default off)"},
};

const std::vector<Flag> kAblateFlags = {
    {"seeds", "seeds per configuration (default 3)"},
    {"epochs", "epochs per run (default 12)"},
    {"batch", "batch size (default 8)"},
    {"lr", "learning rate (default 2e-3)"},
    {"lambda", "dispersion weight (default 0.5)"},
    {"hidden", "hidden width (default 32)"},
    {"token-width", "internal residual width (default 32)"},
    {"grid", "tokens per side (default 8)"},
    {"patch", "pixels per token side (default 4)"},
    {"train-scenes", "training scenes per run (default 96)"},
    {"test-scenes", "test scenes per run (default 32)"},
    {"seed", "base seed (default 1)"},
    {"euler-steps", "direct-objective inference steps (default 8)"},
    {"d-min", "codec near range (default 0.1)"},
    {"d-max", "codec far range (default 80)"},
    {"uniform-d-min", "uniform codec near range (default 0)"},
};

struct RunDeleter {
    void operator()(fe2e_run* run) const { fe2e_run_destroy(run); }
};

int status_to_exit(fe2e_status status) {
    switch (status) {
        case FE2E_OK: return 0;
        case FE2E_ERR_USAGE: return 1;
        case FE2E_ERR_IO: return 2;
        default: return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("fe2e-lab ") + fe2e_version() +
                 " - flow matching, depth quantization and joint-estimation laboratory"};
    app.require_subcommand(1);

    struct SubSpec {
        const char* name;
        const char* desc;
        const std::vector<Flag>* flags;
    };
    const std::vector<SubSpec> specs = {
        {"quant-table", "emit the BF16 quantization error table and depth sweep", &kQuantTableFlags},
        {"gen-data", "generate and persist a synthetic scene dataset", &kGenDataFlags},
        {"train", "train a flow model on scenes or toy tasks", &kTrainFlags},
        {"eval", "evaluate a checkpoint with the depth/normal metric suite", &kEvalFlags},
        {"field-plot", "emit velocity-field diagnostics as CSV and SVG", &kFieldPlotFlags},
        {"ablate", "run the objective/quantization/joint ablation matrix", &kAblateFlags},
    };

    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::string> config_paths;
    std::map<std::string, CLI::App*> subs;

    for (const auto& spec : specs) {
        CLI::App* sub = app.add_subcommand(spec.name, spec.desc);
        subs[spec.name] = sub;
        sub->add_option("--config", config_paths[spec.name],
                        "key=value config file; explicit flags override file values");
        sub->add_option("--out", values[spec.name]["out"],
                        "output directory (default $FE2E_LAB_OUT or ./fe2e_out)");
        for (const auto& flag : *spec.flags) {
            sub->add_option("--" + std::string(flag.key), values[spec.name][flag.key], flag.desc);
        }
    }

    CLI11_PARSE(app, argc, argv);

    const CLI::App* active = app.get_subcommands().front();
    std::string name = active->get_name();

    std::unique_ptr<fe2e_run, RunDeleter> run;
    {
        fe2e_run* raw = nullptr;
        if (fe2e_run_create(&raw) != FE2E_OK) {
            std::fprintf(stderr, "error: %s\n", fe2e_last_error());
            return 3;
        }
        run.reset(raw);
    }

    if (!config_paths[name].empty()) {
        fe2e_status status = fe2e_run_load_file(run.get(), config_paths[name].c_str());
        if (status != FE2E_OK) {
            std::fprintf(stderr, "error: %s\n", fe2e_last_error());
            return status_to_exit(status);
        }
    }

    for (const auto& [key, value] : values[name]) {
        const CLI::Option* opt = subs[name]->get_option("--" + key);
        if (opt->count() == 0) continue;  // only explicit flags override the file
        fe2e_status status = fe2e_run_set(run.get(), key.c_str(), value.c_str());
        if (status != FE2E_OK) {
            std::fprintf(stderr, "error: %s\n", fe2e_last_error());
            return status_to_exit(status);
        }
    }

    fe2e_status status = fe2e_run_execute(run.get(), name.c_str());
    if (status != FE2E_OK) {
        std::fprintf(stderr, "error: %s\n", fe2e_last_error());
        return status_to_exit(status);
    }
    return 0;
}

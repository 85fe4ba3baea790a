// msihist: MSI-to-histology synthesis pipeline.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/imagereg.hpp"
#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/infer.hpp"
#include "msihist/pipeline/log.hpp"
#include "msihist/pipeline/run.hpp"
#include "msihist/reduce.hpp"
#include "msihist/spectra.hpp"

#include <CLI11.hpp>

#include <malloc.h>

#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace msihist;
using namespace msihist::pipeline;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> pad;
    std::optional<int> k_peaks;
    std::optional<std::string> out;
};

void add_common(CLI::App *cmd, Common &c) {
    cmd->add_option("--config", c.config, "configuration file (INI); presets apply when omitted");
    cmd->add_option("--seed", c.seed, "override [run] seed");
    cmd->add_option("--pad", c.pad, "override [preprocess] pad (black|white)")->check(CLI::IsMember({"black", "white"}));
    cmd->add_option("--k-peaks", c.k_peaks, "override [preprocess] k_peaks");
    cmd->add_option("--out", c.out, "output location");
}

RunConfig resolve(const Common &c) {
    RunConfig cfg = c.config.empty() ? preset("desk") : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.pad) cfg.pad = imagereg::parse_pad_mode(*c.pad);
    if (c.k_peaks) cfg.k_peaks = *c.k_peaks;
    if (c.out) cfg.out_dir = *c.out;
    cfg.finalize();
    return cfg;
}

fs::path out_or(const Common &c, const fs::path &fallback) { return c.out ? fs::path(*c.out) : fallback; }

std::vector<spectra::MSIDataset> load_rebinned(const std::vector<std::string> &inputs, spectra::MzAxis *axis_out) {
    std::vector<spectra::MzAxis> axes;
    for (const auto &in : inputs) axes.push_back(spectra::load_axis(in));
    const auto shared = spectra::make_shared_axis(axes);
    std::vector<spectra::MSIDataset> out;
    for (const auto &in : inputs) out.push_back(spectra::rebin(spectra::load_msi(in), shared));
    if (axis_out) *axis_out = shared;
    return out;
}

} // namespace

int main(int argc, char **argv) {
    // Training allocates and frees the same large buffers every step; keep
    // them in the heap instead of round-tripping through mmap.
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);

    CLI::App app{"MSI to histology synthesis: preprocessing, U-Net / pix2pix training, evaluation"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    Common common;
    std::function<void()> action;

    auto *gen = app.add_subcommand("generate", "write a seeded synthetic paired dataset");
    add_common(gen, common);
    std::optional<int> n_samples, image_size;
    gen->add_option("--n-samples", n_samples, "override [data] n_samples");
    gen->add_option("--image-size", image_size, "override [data] image_size");
    gen->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            if (n_samples) cfg.n_samples = *n_samples;
            if (image_size) cfg.image_size = *image_size;
            if (common.out) cfg.data_dir = *common.out;
            cfg.finalize();
            stage_generate(cfg);
        };
    });

    std::vector<std::string> inputs;
    auto *rebin = app.add_subcommand("rebin", "resample MSI datasets onto their shared m/z axis");
    add_common(rebin, common);
    rebin->add_option("inputs", inputs, "MSI containers or CSV files")->required();
    rebin->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            const fs::path out = out_or(common, cfg.out_dir / "rebinned");
            spectra::MzAxis axis;
            const auto sets = load_rebinned(inputs, &axis);
            for (std::size_t i = 0; i < sets.size(); ++i) {
                const fs::path dst = out / fs::path(inputs[i]).filename().replace_extension();
                spectra::save_msi(sets[i], dst);
                log_info("rebin: " + inputs[i] + " -> " + dst.string());
            }
            log_info("rebin: shared axis has " + std::to_string(axis.size()) + " bins");
        };
    });

    auto *peaks = app.add_subcommand("peaks", "pick the top-k peaks of the summed, rebinned spectra");
    add_common(peaks, common);
    peaks->add_option("inputs", inputs, "MSI containers or CSV files")->required();
    peaks->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            const fs::path out = out_or(common, cfg.out_dir / "peaks.csv");
            spectra::Spectrum total;
            for (const auto &ds : load_rebinned(inputs, nullptr)) {
                const auto s = spectra::sum_spectra(ds);
                total = total.intensities.empty() ? s : spectra::add_spectra(total, s);
            }
            const auto list = spectra::pick_peaks(total, static_cast<std::size_t>(cfg.k_peaks), cfg.min_separation);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            spectra::write_peaks_csv(list, out);
            log_info("peaks: " + std::to_string(list.size()) + " peaks -> " + out.string());
        };
    });

    std::string peaks_csv;
    auto *red = app.add_subcommand("reduce", "PCA pseudo-color rendering of one MSI dataset's peak images");
    add_common(red, common);
    red->add_option("input", inputs, "MSI container or CSV file")->required()->expected(1);
    red->add_option("--peaks", peaks_csv, "peak list from 'peaks'")->required();
    red->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            const fs::path out = out_or(common, cfg.out_dir / (fs::path(inputs[0]).filename().replace_extension().string() + "_rgb.png"));
            const auto ds = spectra::load_msi(inputs[0]);
            // Without an explicit window, take the bins within half a bin of each peak.
            const double hw = cfg.half_window > 0.0 ? cfg.half_window : 0.5 * ds.axis.median_bin_width();
            const auto stack = spectra::build_peak_stack(ds, spectra::read_peaks_csv(peaks_csv), hw);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            write_png(out, reduce::pca_rgb(stack));
            log_info("reduce: " + out.string());
        };
    });

    std::string cp_csv;
    int reg_w = 0, reg_h = 0;
    auto *reg = app.add_subcommand("register", "warp a histology image onto an MSI frame from control points");
    add_common(reg, common);
    reg->add_option("histology", inputs, "histology PNG")->required()->expected(1);
    reg->add_option("--points", cp_csv, "control points CSV (src = histology pixel, dst = MSI pixel)")->required();
    reg->add_option("--width", reg_w, "MSI frame width")->required()->check(CLI::PositiveNumber);
    reg->add_option("--height", reg_h, "MSI frame height")->required()->check(CLI::PositiveNumber);
    reg->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            const fs::path out = out_or(common, cfg.out_dir / "registered.png");
            const auto t = imagereg::fit_affine(imagereg::read_control_points(cp_csv));
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            write_png(out, imagereg::warp(read_png(inputs[0]), t, reg_w, reg_h, cfg.pad));
            log_info("register: " + out.string());
        };
    });

    auto *prep = app.add_subcommand("prepare", "rebin, pick peaks, reduce, resize and register every sample");
    add_common(prep, common);
    prep->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            OutputLock lock(cfg.out_dir);
            stage_prepare(cfg);
        };
    });

    bool resume = false;
    std::optional<long> max_steps;
    auto add_train = [&](const char *name, const char *help, ModelKind kind) {
        auto *cmd = app.add_subcommand(name, help);
        add_common(cmd, common);
        cmd->add_flag("--resume", resume, "continue from last.msih when present");
        cmd->add_option("--max-steps", max_steps, "override the model's max_steps");
        cmd->callback([&, kind] {
            action = [&, kind] {
                RunConfig cfg = resolve(common);
                if (max_steps) (kind == ModelKind::unet ? cfg.unet.max_steps : cfg.pix2pix.max_steps) = *max_steps;
                cfg.finalize();
                OutputLock lock(cfg.out_dir);
                stage_train(cfg, {kind, cfg.pad}, resume);
            };
        });
    };
    add_train("train-unet", "train the U-Net baseline on patches", ModelKind::unet);
    add_train("train-pix2pix", "train pix2pix on whole images", ModelKind::pix2pix);

    std::string model = "pix2pix", checkpoint, input_png;
    auto *syn = app.add_subcommand("synth", "synthesize histology for the val/test samples, or one input");
    add_common(syn, common);
    syn->add_option("--model", model, "unet | pix2pix")->check(CLI::IsMember({"unet", "pix2pix"}));
    syn->add_option("--checkpoint", checkpoint, "single-image mode: checkpoint to use");
    syn->add_option("--input", input_png, "single-image mode: MSI RGB PNG");
    syn->callback([&] {
        action = [&] {
            if (!checkpoint.empty() || !input_png.empty()) {
                require(!checkpoint.empty() && !input_png.empty() && common.out,
                        "synth: single-image mode needs --checkpoint, --input and --out");
                const Synthesizer s(checkpoint);
                const fs::path out = *common.out;
                if (out.has_parent_path()) fs::create_directories(out.parent_path());
                write_png(out, s.run(read_png(input_png)));
                log_info("synth: " + out.string());
                return;
            }
            const RunConfig cfg = resolve(common);
            OutputLock lock(cfg.out_dir);
            stage_synth(cfg, {model == "unet" ? ModelKind::unet : ModelKind::pix2pix, cfg.pad});
        };
    });

    auto *ev = app.add_subcommand("eval", "MI and SSIM of synthesized vs real histology (val and test)");
    add_common(ev, common);
    ev->add_option("--model", model, "unet | pix2pix")->check(CLI::IsMember({"unet", "pix2pix"}));
    ev->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            OutputLock lock(cfg.out_dir);
            stage_eval(cfg, {model == "unet" ? ModelKind::unet : ModelKind::pix2pix, cfg.pad});
        };
    });

    auto *rep = app.add_subcommand("report", "comparison table over the evaluated variants");
    add_common(rep, common);
    rep->callback([&] {
        action = [&] {
            const RunConfig cfg = resolve(common);
            OutputLock lock(cfg.out_dir);
            const Report r = stage_report(cfg);
            std::cout << to_markdown(r);
        };
    });

    auto *run = app.add_subcommand("run", "generate, prepare, train, synth, eval and report in one go");
    add_common(run, common);
    run->callback([&] {
        action = [&] {
            const Report r = run_all(resolve(common));
            std::cout << to_markdown(r);
        };
    });

    auto *sch = app.add_subcommand("schema", "list every configuration key");
    bool show_preset = false;
    std::string preset_name = "desk";
    sch->add_option("--preset", preset_name, "with --defaults: preset to print")->check(CLI::IsMember({"desk", "full"}));
    sch->add_flag("--defaults", show_preset, "print a complete config file for the preset instead");
    sch->callback([&] {
        action = [&] { std::cout << (show_preset ? to_text(preset(preset_name)) : schema_text()); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }
    set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::debug : LogLevel::info);

    try {
        action();
        return 0;
    } catch (const InvalidInput &e) {
        std::cerr << "msihist: error: " << e.what() << '\n';
        return 1;
    } catch (const RuntimeFailure &e) {
        std::cerr << "msihist: failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "msihist: failure: " << e.what() << '\n';
        return 2;
    }
}

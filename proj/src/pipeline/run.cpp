#include "msihist/pipeline/run.hpp"

#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/metrics.hpp"
#include "msihist/pipeline/infer.hpp"
#include "msihist/pipeline/log.hpp"
#include "msihist/pipeline/synthetic.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <set>
#include <unistd.h>

namespace msihist::pipeline {

namespace fs = std::filesystem;

OutputLock::OutputLock(const fs::path &dir) : file_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw RuntimeFailure("output directory " + dir.string() + " is locked by another run (remove " +
                                 file_.string() + " if stale)");
        throw RuntimeFailure("cannot create " + file_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(file_, ec);
}

fs::path prepared_dir(const RunConfig &cfg, imagereg::PadMode pad) {
    return cfg.out_dir / ("prepared_" + imagereg::to_string(pad));
}

fs::path variant_dir(const RunConfig &cfg, const Variant &v) { return cfg.out_dir / v.key(); }

namespace {

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw RuntimeFailure("cannot write " + path.string());
}

RunConfig with_pad(RunConfig cfg, imagereg::PadMode pad) {
    cfg.pad = pad;
    return cfg;
}

PreparedSet load_for(const RunConfig &cfg, const Variant &v) { return load_prepared(prepared_dir(cfg, v.pad)); }

std::map<std::string, Image> load_synth(const PreparedSet &set, const fs::path &dir) {
    std::map<std::string, Image> out;
    for (const auto &p : set.pairs) {
        if (p.split == Split::train) continue;
        const fs::path f = dir / (p.id + ".png");
        if (!fs::exists(f)) throw InvalidInput("eval: missing " + f.string() + " (run synth first)");
        out.emplace(p.id, read_png(f));
    }
    return out;
}

} // namespace

void stage_generate(const RunConfig &cfg) {
    const fs::path dir = cfg.data_root();
    log_info("generate: " + std::to_string(cfg.n_samples) + " samples (" + std::to_string(cfg.image_size) + "x" +
             std::to_string(cfg.image_size) + ") into " + dir.string());
    generate_synthetic_dataset(dir, {cfg.n_samples, cfg.image_size, cfg.seed});
}

PreparedSet stage_prepare(const RunConfig &cfg) {
    const auto manifest = read_manifest(cfg.data_root() / "manifest.csv");
    log_info("prepare: " + std::to_string(manifest.samples.size()) + " samples, " + imagereg::to_string(cfg.pad) +
             " padding");
    PreparedSet set = prepare_pairs(manifest, cfg);
    save_prepared(set, prepared_dir(cfg, cfg.pad));
    return set;
}

TrainResult stage_train(const RunConfig &cfg, const Variant &v, bool resume) {
    const PreparedSet set = load_for(cfg, v);
    const fs::path dir = variant_dir(cfg, v);
    return v.kind == ModelKind::unet ? train_unet(set, cfg, dir, resume) : train_pix2pix(set, cfg, dir, resume);
}

void stage_synth(const RunConfig &cfg, const Variant &v) {
    const PreparedSet set = load_for(cfg, v);
    const fs::path dir = variant_dir(cfg, v);
    const Synthesizer s(dir / "best.msih");
    require(s.kind() == v.kind, "synth: " + (dir / "best.msih").string() + " does not hold a " + v.key() + " model");
    synthesize_set(s, set, dir / "synth");
    log_info("synth: " + v.label() + " -> " + (dir / "synth").string());
}

void stage_eval(const RunConfig &cfg, const Variant &v) {
    const PreparedSet set = load_for(cfg, v);
    const fs::path dir = variant_dir(cfg, v);
    const auto synth = load_synth(set, dir / "synth");
    for (Split split : {Split::val, Split::test}) {
        if (set.select(split).empty()) continue;
        const auto r = evaluate_split(set, synth, split, cfg.bins_mi);
        metrics::write_report_csv(r, dir / ("eval_" + to_string(split) + ".csv"), v.label() + ", " + to_string(split));
        log_info("eval: " + v.label() + " " + to_string(split) + " MI " + std::to_string(r.mi) + " SSIM " +
                 std::to_string(r.ssim));
    }
}

Report stage_report(const RunConfig &cfg) {
    Report test;
    for (Split split : {Split::test, Split::val}) {
        std::vector<VariantScore> rows;
        for (const auto &v : cfg.variants) {
            const fs::path f = variant_dir(cfg, v) / ("eval_" + to_string(split) + ".csv");
            if (!fs::exists(f)) continue;
            const auto r = metrics::read_report_csv(f);
            rows.push_back({v.label(), r.mi, r.ssim, r.n_images});
        }
        if (rows.empty()) {
            if (split == Split::test) throw InvalidInput("report: no evaluated variants under " + cfg.out_dir.string());
            continue;
        }
        const Report rep = make_report(rows, to_string(split));
        const std::string stem = split == Split::test ? "report" : "report_val";
        write_text(cfg.out_dir / (stem + ".md"), to_markdown(rep));
        write_text(cfg.out_dir / (stem + ".csv"), to_csv(rep));
        if (split == Split::test) test = rep;
    }
    log_info("report: " + (cfg.out_dir / "report.md").string());
    return test;
}

Report run_all(const RunConfig &cfg) {
    OutputLock lock(cfg.out_dir);
    write_text(cfg.out_dir / "config.ini", to_text(cfg));
    if (cfg.data_dir.empty()) stage_generate(cfg);

    std::set<imagereg::PadMode> pads;
    for (const auto &v : cfg.variants) pads.insert(v.pad);
    for (auto pad : pads) stage_prepare(with_pad(cfg, pad));

    for (const auto &v : cfg.variants) {
        stage_train(cfg, v);
        stage_synth(cfg, v);
        stage_eval(cfg, v);
    }
    return stage_report(cfg);
}

} // namespace msihist::pipeline

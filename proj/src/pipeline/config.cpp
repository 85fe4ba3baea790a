#include "msihist/pipeline/config.hpp"

#include "msihist/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace msihist::pipeline {

namespace {

using imagereg::PadMode;

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::string section, key, type, help;
    std::function<void(RunConfig &, const std::string &)> set;
    std::function<std::string(const RunConfig &)> get;
    std::string name() const { return section + "." + key; }
};

template <class T>
T parse_number(const std::string &s) {
    T v{};
    const char *end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) throw InvalidInput("not a valid number: '" + s + "'");
    return v;
}

bool parse_bool(const std::string &s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw InvalidInput("not a boolean: '" + s + "'");
}

template <class T, class Get>
Field integer(std::string section, std::string key, std::string help, Get ref) {
    return {section, key, "integer", std::move(help),
            [ref](RunConfig &c, const std::string &s) { ref(c) = parse_number<T>(s); },
            [ref](const RunConfig &c) { return std::to_string(ref(const_cast<RunConfig &>(c))); }};
}

template <class Get>
Field real(std::string section, std::string key, std::string help, Get ref) {
    return {section, key, "real", std::move(help),
            [ref](RunConfig &c, const std::string &s) {
                const double v = parse_number<double>(s);
                if (!std::isfinite(v)) throw InvalidInput("not finite: '" + s + "'");
                ref(c) = v;
            },
            [ref](const RunConfig &c) { return fmt_real(ref(const_cast<RunConfig &>(c))); }};
}

template <class Get>
Field boolean(std::string section, std::string key, std::string help, Get ref) {
    return {section, key, "bool", std::move(help),
            [ref](RunConfig &c, const std::string &s) { ref(c) = parse_bool(s); },
            [ref](const RunConfig &c) { return std::string(ref(const_cast<RunConfig &>(c)) ? "true" : "false"); }};
}

std::string join_variants(const std::vector<Variant> &vs) {
    std::string out;
    for (const auto &v : vs) {
        if (!out.empty()) out += ", ";
        out += (v.kind == ModelKind::unet ? "unet:" : "pix2pix:") + imagereg::to_string(v.pad);
    }
    return out;
}

std::vector<Variant> split_variants(const std::string &s) {
    std::vector<Variant> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(parse_variant(item.substr(b, e - b + 1)));
    }
    return out;
}

const std::vector<Field> &schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        f.push_back({"run", "preset", "string", "base preset applied before this file: desk | full",
                     [](RunConfig &c, const std::string &s) {
                         if (s != "desk" && s != "full") throw InvalidInput("unknown preset '" + s + "'");
                         c.preset = s;
                     },
                     [](const RunConfig &c) { return c.preset; }});
        f.push_back(integer<std::uint64_t>("run", "seed", "seed for every stochastic step",
                                           [](RunConfig &c) -> std::uint64_t & { return c.seed; }));
        f.push_back({"run", "out", "path", "output directory",
                     [](RunConfig &c, const std::string &s) { c.out_dir = s; },
                     [](const RunConfig &c) { return c.out_dir.string(); }});
        f.push_back({"run", "variants", "list",
                     "models trained by the full run, e.g. unet:black, pix2pix:black, pix2pix:white",
                     [](RunConfig &c, const std::string &s) { c.variants = split_variants(s); },
                     [](const RunConfig &c) { return join_variants(c.variants); }});
        f.push_back({"data", "root", "path", "dataset directory holding manifest.csv (empty: <out>/data)",
                     [](RunConfig &c, const std::string &s) { c.data_dir = s; },
                     [](const RunConfig &c) { return c.data_dir.string(); }});
        f.push_back(integer<int>("data", "n_samples", "samples written by generate",
                                 [](RunConfig &c) -> int & { return c.n_samples; }));
        f.push_back(integer<int>("data", "image_size", "side of the prepared square image pairs",
                                 [](RunConfig &c) -> int & { return c.image_size; }));
        f.push_back(real("split", "train", "training fraction", [](RunConfig &c) -> double & { return c.train_fraction; }));
        f.push_back(real("split", "val", "validation fraction", [](RunConfig &c) -> double & { return c.val_fraction; }));
        f.push_back(real("split", "test", "test fraction", [](RunConfig &c) -> double & { return c.test_fraction; }));
        f.push_back({"preprocess", "pad", "enum", "histology padding: black | white",
                     [](RunConfig &c, const std::string &s) { c.pad = imagereg::parse_pad_mode(s); },
                     [](const RunConfig &c) { return imagereg::to_string(c.pad); }});
        f.push_back(integer<int>("preprocess", "k_peaks", "peaks picked from the dataset-wide summed spectrum",
                                 [](RunConfig &c) -> int & { return c.k_peaks; }));
        f.push_back(real("preprocess", "min_separation", "minimum m/z distance between picked peaks",
                         [](RunConfig &c) -> double & { return c.min_separation; }));
        f.push_back(real("preprocess", "half_window", "ion image half window in m/z (0: the peak bin only)",
                         [](RunConfig &c) -> double & { return c.half_window; }));
        f.push_back({"preprocess", "input", "enum", "model input: rgb (3-channel PCA) | peaks (k-channel stack)",
                     [](RunConfig &c, const std::string &s) {
                         if (s == "rgb") c.input = ModelInput::rgb;
                         else if (s == "peaks") c.input = ModelInput::peaks;
                         else throw InvalidInput("expected rgb or peaks, got '" + s + "'");
                     },
                     [](const RunConfig &c) { return std::string(c.input == ModelInput::rgb ? "rgb" : "peaks"); }});
        f.push_back(integer<int>("metrics", "bins_mi", "histogram bins for mutual information",
                                 [](RunConfig &c) -> int & { return c.bins_mi; }));
        f.push_back(integer<int>("stopping", "patience", "evaluations without improvement before stopping",
                                 [](RunConfig &c) -> int & { return c.stopping.patience; }));
        f.push_back(real("stopping", "min_improvement", "validation loss decrease that counts as improvement",
                         [](RunConfig &c) -> double & { return c.stopping.min_improvement; }));

        f.push_back(integer<int>("unet", "base_width", "channels at the first level",
                                 [](RunConfig &c) -> int & { return c.unet.net.base_width; }));
        f.push_back(integer<int>("unet", "depth", "pooling levels", [](RunConfig &c) -> int & { return c.unet.net.depth; }));
        f.push_back(boolean("unet", "instance_norm", "instance norm after each conv",
                            [](RunConfig &c) -> bool & { return c.unet.net.instance_norm; }));
        f.push_back(integer<int>("unet", "patch", "patch side", [](RunConfig &c) -> int & { return c.unet.net.patch; }));
        f.push_back(integer<int>("unet", "stride", "training patch stride", [](RunConfig &c) -> int & { return c.unet.stride; }));
        f.push_back(integer<int>("unet", "batch", "patches per step", [](RunConfig &c) -> int & { return c.unet.batch; }));
        f.push_back(real("unet", "lr", "Adam learning rate", [](RunConfig &c) -> double & { return c.unet.train.lr; }));
        f.push_back(real("unet", "beta1", "Adam beta1", [](RunConfig &c) -> double & { return c.unet.train.beta1; }));
        f.push_back(real("unet", "beta2", "Adam beta2", [](RunConfig &c) -> double & { return c.unet.train.beta2; }));
        f.push_back(integer<long>("unet", "max_steps", "step limit", [](RunConfig &c) -> long & { return c.unet.max_steps; }));
        f.push_back(integer<int>("unet", "eval_every", "steps between validation evaluations",
                                 [](RunConfig &c) -> int & { return c.unet.eval_every; }));

        f.push_back(integer<int>("pix2pix", "base_width", "generator channels at the first level",
                                 [](RunConfig &c) -> int & { return c.pix2pix.net.gen.base_width; }));
        f.push_back(integer<int>("pix2pix", "depth", "generator pooling levels",
                                 [](RunConfig &c) -> int & { return c.pix2pix.net.gen.depth; }));
        f.push_back(boolean("pix2pix", "instance_norm", "instance norm in generator and discriminator",
                            [](RunConfig &c) -> bool & { return c.pix2pix.net.gen.instance_norm; }));
        f.push_back(integer<int>("pix2pix", "disc_base_width", "discriminator channels at the first layer",
                                 [](RunConfig &c) -> int & { return c.pix2pix.net.disc.base_width; }));
        f.push_back(integer<int>("pix2pix", "disc_layers", "stride-2 discriminator layers",
                                 [](RunConfig &c) -> int & { return c.pix2pix.net.disc.layers; }));
        f.push_back(real("pix2pix", "lambda_l1", "weight of the L1 term",
                         [](RunConfig &c) -> double & { return c.pix2pix.net.lambda_l1; }));
        f.push_back(real("pix2pix", "lr", "Adam learning rate (both networks)",
                         [](RunConfig &c) -> double & { return c.pix2pix.net.lr; }));
        f.push_back(real("pix2pix", "beta1", "Adam beta1", [](RunConfig &c) -> double & { return c.pix2pix.net.beta1; }));
        f.push_back(real("pix2pix", "beta2", "Adam beta2", [](RunConfig &c) -> double & { return c.pix2pix.net.beta2; }));
        f.push_back(integer<long>("pix2pix", "max_steps", "step limit",
                                  [](RunConfig &c) -> long & { return c.pix2pix.max_steps; }));
        f.push_back(integer<int>("pix2pix", "eval_every", "steps between validation evaluations",
                                 [](RunConfig &c) -> int & { return c.pix2pix.eval_every; }));
        return f;
    }();
    return fields;
}

const Field *find_field(const std::string &section, const std::string &key) {
    for (const auto &f : schema())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

} // namespace

std::string Variant::key() const {
    return std::string(kind == ModelKind::unet ? "unet_" : "pix2pix_") + imagereg::to_string(pad);
}

std::string Variant::label() const {
    return std::string(kind == ModelKind::unet ? "U-Net" : "pix2pix") + (pad == PadMode::white ? " (W)" : " (B)");
}

Variant parse_variant(const std::string &s) {
    const auto colon = s.find(':');
    require(colon != std::string::npos, "variant '" + s + "' must look like unet:black");
    const std::string model = s.substr(0, colon);
    Variant v;
    if (model == "unet") v.kind = ModelKind::unet;
    else if (model == "pix2pix") v.kind = ModelKind::pix2pix;
    else throw InvalidInput("unknown model '" + model + "' in variant '" + s + "'");
    v.pad = imagereg::parse_pad_mode(s.substr(colon + 1));
    return v;
}

std::filesystem::path RunConfig::data_root() const { return data_dir.empty() ? out_dir / "data" : data_dir; }

void RunConfig::finalize() {
    auto check = [](bool ok, const std::string &key, const std::string &msg) {
        if (!ok) throw InvalidInput(key + ": " + msg);
    };
    check(n_samples >= 1, "data.n_samples", "must be >= 1");
    check(image_size >= 8, "data.image_size", "must be >= 8");
    for (auto [v, k] : {std::pair{train_fraction, "split.train"}, {val_fraction, "split.val"}, {test_fraction, "split.test"}})
        check(v >= 0.0 && v <= 1.0, k, "must be in [0, 1]");
    check(std::abs(train_fraction + val_fraction + test_fraction - 1.0) <= 1e-9, "split",
          "fractions must sum to 1");
    check(k_peaks >= 1, "preprocess.k_peaks", "must be >= 1");
    check(min_separation >= 0.0, "preprocess.min_separation", "must be >= 0");
    check(half_window >= 0.0, "preprocess.half_window", "must be >= 0");
    check(bins_mi >= 2, "metrics.bins_mi", "must be >= 2");
    check(stopping.patience >= 1, "stopping.patience", "must be >= 1");
    check(stopping.min_improvement >= 0.0, "stopping.min_improvement", "must be >= 0");
    check(unet.stride >= 1, "unet.stride", "must be >= 1");
    check(unet.batch >= 1, "unet.batch", "must be >= 1");
    check(unet.max_steps >= 0, "unet.max_steps", "must be >= 0");
    check(unet.eval_every >= 1, "unet.eval_every", "must be >= 1");
    check(unet.train.lr > 0.0, "unet.lr", "must be > 0");
    check(pix2pix.max_steps >= 0, "pix2pix.max_steps", "must be >= 0");
    check(pix2pix.eval_every >= 1, "pix2pix.eval_every", "must be >= 1");
    check(!variants.empty(), "run.variants", "must list at least one variant");

    const int ch = input_channels();
    unet.net.in_channels = ch;
    unet.net.out_channels = 3;
    auto &p = pix2pix.net;
    p.image_size = image_size;
    p.gen.in_channels = ch;
    p.gen.out_channels = 3;
    p.gen.patch = image_size;
    p.disc.in_channels = ch + 3;
    p.disc.instance_norm = p.gen.instance_norm;

    auto wrap = [](const std::string &section, auto &&fn) {
        try {
            fn();
        } catch (const InvalidInput &e) {
            throw InvalidInput(section + ": " + e.what());
        }
    };
    wrap("unet", [&] { unet.net.validate(); });
    check(unet.net.patch <= image_size, "unet.patch", "must not exceed data.image_size");
    wrap("pix2pix", [&] { p.validate(); });
}

RunConfig preset(const std::string &name) {
    RunConfig c;
    c.variants = {{ModelKind::unet, PadMode::black}, {ModelKind::pix2pix, PadMode::black},
                  {ModelKind::pix2pix, PadMode::white}};
    if (name == "desk") {
        c.preset = "desk";
        // 2e-5 barely moves a 64x64 generator within the desk step budget.
        c.pix2pix.net.lr = 0.0002;
    } else if (name == "full") {
        c.preset = "full";
        c.n_samples = 111;
        c.image_size = 256;
        c.unet.net = {3, 3, 64, 4, false, 32};
        c.unet.stride = 32;
        c.unet.max_steps = 100000;
        c.unet.eval_every = 500;
        c.pix2pix.net.gen = {3, 3, 64, 4, true, 256};
        c.pix2pix.net.disc = {6, 64, 3, true};
        c.pix2pix.max_steps = 200000;
        c.pix2pix.eval_every = 1000;
    } else {
        throw InvalidInput("run.preset: unknown preset '" + name + "' (expected desk or full)");
    }
    c.finalize();
    return c;
}

RunConfig parse_config(const std::string &text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error &e) {
        throw InvalidInput("config: line " + std::to_string(e.line()) + ": " + e.message());
    }

    std::string base = "desk";
    for (const auto &[section, body] : tree)
        if (body.empty() && !body.data().empty())
            throw InvalidInput("config: key '" + section + "' must be inside a [section]");
    if (auto run = tree.get_child_optional("run"))
        if (auto p = run->get_optional<std::string>("preset")) base = *p;

    RunConfig c;
    try {
        c = preset(base);
    } catch (const InvalidInput &) {
        throw InvalidInput("run.preset: unknown preset '" + base + "' (expected desk or full)");
    }

    std::set<std::string> known_sections;
    for (const auto &f : schema()) known_sections.insert(f.section);
    for (const auto &[section, body] : tree) {
        if (!known_sections.count(section)) throw InvalidInput("config: unknown section [" + section + "]");
        for (const auto &[key, node] : body) {
            const Field *f = find_field(section, key);
            if (!f) throw InvalidInput("config: unknown key " + section + "." + key);
            try {
                f->set(c, node.data());
            } catch (const InvalidInput &e) {
                throw InvalidInput(f->name() + ": " + e.what());
            }
        }
    }
    c.finalize();
    return c;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const InvalidInput &e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

std::string to_text(const RunConfig &c) {
    std::string out, section;
    for (const auto &f : schema()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(c) + "\n";
    }
    return out;
}

std::string schema_text() {
    std::string out;
    for (const auto &f : schema()) {
        std::string name = f.name();
        name.resize(std::max<std::size_t>(name.size() + 2, 28), ' ');
        std::string type = f.type;
        type.resize(9, ' ');
        out += name + type + f.help + "\n";
    }
    return out;
}

} // namespace msihist::pipeline

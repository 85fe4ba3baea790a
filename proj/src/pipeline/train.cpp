#include "msihist/pipeline/train.hpp"

#include "msihist/error.hpp"
#include "msihist/nn/ops.hpp"
#include "msihist/pipeline/infer.hpp"
#include "msihist/pipeline/log.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace msihist::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using nn::Tensor;

bool StoppingRule::observe(double loss, long step) {
    if (loss < reference - cfg.min_improvement) {
        reference = loss;
        stale = 0;
    } else {
        ++stale;
    }
    if (loss < best) {
        best = loss;
        best_step = step;
        return true;
    }
    return false;
}

// --- config echo -----------------------------------------------------------

namespace {

ordered_json net_json(const nn::UNetConfig &n) {
    return {{"in_channels", n.in_channels}, {"out_channels", n.out_channels}, {"base_width", n.base_width},
            {"depth", n.depth},             {"instance_norm", n.instance_norm}, {"patch", n.patch}};
}

nn::UNetConfig net_from(const ordered_json &j) {
    nn::UNetConfig n;
    n.in_channels = j.at("in_channels");
    n.out_channels = j.at("out_channels");
    n.base_width = j.at("base_width");
    n.depth = j.at("depth");
    n.instance_norm = j.at("instance_norm");
    n.patch = j.at("patch");
    n.validate();
    return n;
}

ordered_json parse_echo(const std::string &echo) {
    try {
        return ordered_json::parse(echo);
    } catch (const std::exception &e) {
        throw InvalidInput(std::string("checkpoint config echo is not valid JSON: ") + e.what());
    }
}

std::string seed_text(std::uint64_t s) { return std::to_string(s); }

} // namespace

std::string unet_echo(const nn::UNetConfig &net, const RunConfig &cfg) {
    ordered_json j;
    j["model"] = "unet";
    j["net"] = net_json(net);
    j["train"] = {{"lr", cfg.unet.train.lr},       {"beta1", cfg.unet.train.beta1}, {"beta2", cfg.unet.train.beta2},
                  {"batch", cfg.unet.batch},       {"stride", cfg.unet.stride},     {"eval_every", cfg.unet.eval_every},
                  {"patience", cfg.stopping.patience}, {"min_improvement", cfg.stopping.min_improvement},
                  {"seed", seed_text(cfg.seed)}};
    return j.dump();
}

std::string pix2pix_echo(const nn::Pix2PixConfig &net, const RunConfig &cfg) {
    ordered_json j;
    j["model"] = "pix2pix";
    j["net"] = net_json(net.gen);
    j["disc"] = {{"in_channels", net.disc.in_channels},
                 {"base_width", net.disc.base_width},
                 {"layers", net.disc.layers},
                 {"instance_norm", net.disc.instance_norm}};
    j["train"] = {{"image_size", net.image_size},     {"lambda_l1", net.lambda_l1},
                  {"lr", net.lr},                     {"beta1", net.beta1},
                  {"beta2", net.beta2},               {"eval_every", cfg.pix2pix.eval_every},
                  {"patience", cfg.stopping.patience}, {"min_improvement", cfg.stopping.min_improvement},
                  {"seed", seed_text(cfg.seed)}};
    return j.dump();
}

ModelKind echo_kind(const std::string &echo) {
    const auto j = parse_echo(echo);
    const std::string m = j.value("model", "");
    if (m == "unet") return ModelKind::unet;
    if (m == "pix2pix") return ModelKind::pix2pix;
    throw InvalidInput("checkpoint config echo names unknown model '" + m + "'");
}

nn::UNetConfig echo_unet(const std::string &echo) {
    try {
        return net_from(parse_echo(echo).at("net"));
    } catch (const ordered_json::exception &e) {
        throw InvalidInput(std::string("checkpoint config echo: ") + e.what());
    }
}

nn::Pix2PixConfig echo_pix2pix(const std::string &echo) {
    try {
        const auto j = parse_echo(echo);
        nn::Pix2PixConfig c;
        c.gen = net_from(j.at("net"));
        const auto &d = j.at("disc");
        c.disc = {d.at("in_channels"), d.at("base_width"), d.at("layers"), d.at("instance_norm")};
        const auto &t = j.at("train");
        c.image_size = t.at("image_size");
        c.lambda_l1 = t.at("lambda_l1");
        c.lr = t.at("lr");
        c.beta1 = t.at("beta1");
        c.beta2 = t.at("beta2");
        c.validate();
        return c;
    } catch (const ordered_json::exception &e) {
        throw InvalidInput(std::string("checkpoint config echo: ") + e.what());
    }
}

// --- data ------------------------------------------------------------------

PatchSet make_patches(const std::vector<const ImagePair *> &pairs, int patch, int stride) {
    require(!pairs.empty(), "no image pairs to cut patches from");
    std::vector<double> in, out;
    std::size_t n = 0;
    const int C = pairs.front()->input.channels;
    for (const auto *p : pairs) {
        require(p->input.channels == C, "pairs disagree on input channels");
        const auto xs = imagereg::extract_patches(p->input, patch, stride);
        const auto ys = imagereg::extract_patches(p->histology, patch, stride);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            in.insert(in.end(), xs[i].image.data.begin(), xs[i].image.data.end());
            out.insert(out.end(), ys[i].image.data.begin(), ys[i].image.data.end());
        }
        n += xs.size();
    }
    const auto P = static_cast<std::size_t>(patch);
    return {Tensor::from({n, static_cast<std::size_t>(C), P, P}, std::move(in)),
            Tensor::from({n, 3, P, P}, std::move(out))};
}

PatchSet gather(const PatchSet &all, const std::vector<std::size_t> &order, std::size_t first, std::size_t count) {
    auto pick = [&](const Tensor &t) {
        nn::Shape s = t.shape();
        const std::size_t per = t.size() / s[0];
        std::vector<double> buf(count * per);
        for (std::size_t i = 0; i < count; ++i) {
            const auto src = t.values().begin() + static_cast<std::ptrdiff_t>(order[first + i] * per);
            std::copy(src, src + static_cast<std::ptrdiff_t>(per), buf.begin() + static_cast<std::ptrdiff_t>(i * per));
        }
        s[0] = count;
        return Tensor::from(s, std::move(buf));
    };
    return {pick(all.input), pick(all.target)};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(static_cast<std::uint64_t>(epoch) >> 32),
                      0xe90cu};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    return order;
}

// --- shared loop plumbing --------------------------------------------------

namespace {

std::string real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Keeps the header and rows whose leading step is <= `step`.
void truncate_log(const fs::path &path, long step) {
    std::ifstream is(path);
    if (!is) return;
    std::string line, kept;
    bool header = true;
    while (std::getline(is, line)) {
        if (header) {
            kept += line + "\n";
            header = false;
            continue;
        }
        if (std::stol(line.substr(0, line.find(','))) <= step) kept += line + "\n";
    }
    is.close();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << kept;
}

class CsvLog {
public:
    CsvLog(const fs::path &path, const std::string &header, bool append) {
        if (append && fs::exists(path)) {
            os_.open(path, std::ios::binary | std::ios::app);
        } else {
            os_.open(path, std::ios::binary | std::ios::trunc);
            os_ << header << '\n';
        }
        if (!os_) throw RuntimeFailure("cannot write " + path.string());
    }
    void row(long step, std::initializer_list<double> values) {
        os_ << step;
        for (double v : values) os_ << ',' << real(v);
        os_ << '\n';
    }
    void flush() { os_.flush(); }

private:
    std::ofstream os_;
};

void save_state(nn::Checkpoint ck, const fs::path &path, long step, const StoppingRule &rule, double initial) {
    ck.step = static_cast<std::uint64_t>(step);
    ck.meta["stop.reference"] = rule.reference;
    ck.meta["stop.stale"] = rule.stale;
    ck.meta["stop.best"] = rule.best;
    ck.meta["stop.best_step"] = static_cast<double>(rule.best_step);
    ck.meta["initial_val"] = initial;
    nn::save_checkpoint(ck, path);
}

void load_rule(const nn::Checkpoint &ck, StoppingRule &rule, double &initial) {
    auto get = [&](const char *k) {
        const auto it = ck.meta.find(k);
        if (it == ck.meta.end()) throw InvalidInput(std::string("checkpoint lacks training state '") + k + "'");
        return it->second;
    };
    rule.reference = get("stop.reference");
    rule.stale = static_cast<int>(get("stop.stale"));
    rule.best = get("stop.best");
    rule.best_step = static_cast<long>(get("stop.best_step"));
    initial = get("initial_val");
}

std::vector<const ImagePair *> validation_pairs(const PreparedSet &set) {
    auto val = set.select(Split::val);
    if (val.empty()) {
        log_warn("validation split is empty; the stopping rule uses the training pairs");
        val = set.select(Split::train);
    }
    return val;
}

// Generic loop: `update(step)` performs optimizer step `step` (1-based) and
// logs it; `evaluate()` returns the validation loss; `snapshot()` captures
// the full state.
template <class Update, class Evaluate, class Snapshot>
TrainResult run_loop(const fs::path &dir, const Stopping &stopping, long max_steps, int eval_every, bool resumed,
                     long start, StoppingRule rule, double initial, CsvLog &val_log, Update update,
                     Evaluate evaluate, Snapshot snapshot, const std::string &name) {
    TrainResult r;
    rule.cfg = stopping;
    long step = start;
    auto checkpoint_eval = [&] {
        const double v = evaluate();
        if (step == 0) initial = v;
        val_log.row(step, {v});
        val_log.flush();
        const bool best = rule.observe(v, step);
        const nn::Checkpoint ck = snapshot();
        if (best) save_state(ck, dir / "best.msih", step, rule, initial);
        save_state(ck, dir / "last.msih", step, rule, initial);
        log_info(name + ": step " + std::to_string(step) + " val " + real(v) + (best ? " (best)" : ""));
    };
    if (!resumed) checkpoint_eval();
    while (step < max_steps && !rule.done()) {
        update(step + 1);
        ++step;
        if (step % eval_every == 0 || step == max_steps) checkpoint_eval();
    }
    r.steps = step;
    r.initial_val = initial;
    r.best_val = rule.best;
    r.best_step = rule.best_step;
    r.converged = rule.done();
    log_info(name + ": finished after " + std::to_string(step) + " steps" +
             (r.converged ? " (converged)" : " (max_steps)") + ", best val " + real(rule.best) + " at step " +
             std::to_string(rule.best_step));
    return r;
}

} // namespace

// --- U-Net ---------------------------------------------------------------------

TrainResult train_unet(const PreparedSet &set, const RunConfig &cfg, const fs::path &dir, bool resume) {
    fs::create_directories(dir);
    const auto &U = cfg.unet;
    nn::UNetConfig net = U.net;
    net.in_channels = set.pairs.at(0).input.channels;

    const PatchSet train = make_patches(set.select(Split::train), net.patch, U.stride);
    const PatchSet val = make_patches(validation_pairs(set), net.patch, net.patch);
    std::size_t batch = static_cast<std::size_t>(U.batch);
    if (train.size() < batch) {
        log_warn("only " + std::to_string(train.size()) + " training patches; batch reduced from " +
                 std::to_string(batch));
        batch = train.size();
    }
    const std::size_t per_epoch = train.size() / batch;
    log_info("unet: " + std::to_string(train.size()) + " training patches, " + std::to_string(per_epoch) +
             " batches of " + std::to_string(batch) + " per epoch, " + std::to_string(val.size()) +
             " validation patches");

    nn::UNetRegressor model(net, U.train, cfg.seed);
    const std::string echo = unet_echo(net, cfg);
    StoppingRule rule;
    double initial = 0.0;
    long start = 0;
    const bool resumed = resume && fs::exists(dir / "last.msih");
    if (resumed) {
        const auto ck = nn::load_checkpoint(dir / "last.msih");
        require(ck.config == echo, "resume: " + (dir / "last.msih").string() + " was written with a different config");
        nn::restore(ck, "", model.optimizer());
        model.optimizer().set_steps(static_cast<std::int64_t>(ck.step));
        load_rule(ck, rule, initial);
        start = static_cast<long>(ck.step);
        truncate_log(dir / "log.csv", start);
        truncate_log(dir / "val.csv", start);
        log_info("unet: resuming at step " + std::to_string(start));
    }
    CsvLog log(dir / "log.csv", "step,loss", resumed);
    CsvLog val_log(dir / "val.csv", "step,val_loss", resumed);

    long cached_epoch = -1;
    std::vector<std::size_t> order;
    auto update = [&](long step) {
        const long epoch = (step - 1) / static_cast<long>(per_epoch);
        const std::size_t pos = static_cast<std::size_t>((step - 1) % static_cast<long>(per_epoch));
        if (epoch != cached_epoch) {
            order = epoch_order(train.size(), cfg.seed, epoch);
            cached_epoch = epoch;
        }
        const PatchSet b = gather(train, order, pos * batch, batch);
        log.row(step, {model.train_step(b.input, b.target)});
    };
    auto evaluate = [&] {
        nn::NoGradGuard guard;
        double total = 0.0;
        for (std::size_t first = 0; first < val.size(); first += 64) {
            const std::size_t count = std::min<std::size_t>(64, val.size() - first);
            std::vector<std::size_t> idx(val.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            const PatchSet b = gather(val, idx, first, count);
            total += nn::mse(model.model().forward(b.input), b.target).item() * static_cast<double>(count);
        }
        log.flush();
        return total / static_cast<double>(val.size());
    };
    auto snapshot = [&] {
        nn::Checkpoint ck;
        ck.config = echo;
        nn::capture(model.optimizer(), "", ck);
        return ck;
    };
    return run_loop(dir, cfg.stopping, U.max_steps, U.eval_every, resumed, start, rule, initial, val_log, update,
                    evaluate, snapshot, "unet");
}

// --- pix2pix -------------------------------------------------------------------

TrainResult train_pix2pix(const PreparedSet &set, const RunConfig &cfg, const fs::path &dir, bool resume) {
    fs::create_directories(dir);
    nn::Pix2PixConfig net = cfg.pix2pix.net;
    const auto train = set.select(Split::train);
    const auto val = validation_pairs(set);
    require(!train.empty(), "pix2pix: the training split is empty");
    const Image &probe = train.front()->input;
    require(probe.width == net.image_size && probe.height == net.image_size,
            "pix2pix: prepared images are " + std::to_string(probe.width) + "x" + std::to_string(probe.height) +
                ", config expects " + std::to_string(net.image_size));
    net.gen.in_channels = probe.channels;
    net.disc.in_channels = probe.channels + 3;

    nn::Pix2Pix model(net, cfg.seed);
    const std::string echo = pix2pix_echo(net, cfg);
    StoppingRule rule;
    double initial = 0.0;
    long start = 0;
    const bool resumed = resume && fs::exists(dir / "last.msih");
    if (resumed) {
        const auto ck = nn::load_checkpoint(dir / "last.msih");
        require(ck.config == echo, "resume: " + (dir / "last.msih").string() + " was written with a different config");
        nn::restore(ck, "g.", model.gen_optimizer());
        nn::restore(ck, "d.", model.disc_optimizer());
        model.gen_optimizer().set_steps(static_cast<std::int64_t>(ck.step));
        model.disc_optimizer().set_steps(static_cast<std::int64_t>(ck.step));
        load_rule(ck, rule, initial);
        start = static_cast<long>(ck.step);
        truncate_log(dir / "log.csv", start);
        truncate_log(dir / "val.csv", start);
        log_info("pix2pix: resuming at step " + std::to_string(start));
    }
    CsvLog log(dir / "log.csv", "step,loss_g,loss_d", resumed);
    CsvLog val_log(dir / "val.csv", "step,val_loss", resumed);

    std::vector<Tensor> xs, ys;
    for (const auto *p : train) {
        xs.push_back(to_tensor(p->input));
        ys.push_back(to_tensor(p->histology));
    }
    long cached_epoch = -1;
    std::vector<std::size_t> order;
    auto update = [&](long step) {
        const long n = static_cast<long>(train.size());
        const long epoch = (step - 1) / n;
        if (epoch != cached_epoch) {
            order = epoch_order(train.size(), cfg.seed, epoch);
            cached_epoch = epoch;
        }
        const std::size_t i = order[static_cast<std::size_t>((step - 1) % n)];
        const auto l = model.step(xs[i], ys[i]);
        log.row(step, {l.g, l.d});
    };
    auto evaluate = [&] {
        double total = 0.0;
        for (const auto *p : val) {
            const Image fake = synthesize_full(model.generator(), p->input);
            double s = 0.0;
            for (std::size_t k = 0; k < fake.data.size(); ++k) s += std::abs(fake.data[k] - p->histology.data[k]);
            total += s / static_cast<double>(fake.data.size());
        }
        log.flush();
        return total / static_cast<double>(val.size());
    };
    auto snapshot = [&] {
        nn::Checkpoint ck;
        ck.config = echo;
        nn::capture(model.gen_optimizer(), "g.", ck);
        nn::capture(model.disc_optimizer(), "d.", ck);
        return ck;
    };
    return run_loop(dir, cfg.stopping, cfg.pix2pix.max_steps, cfg.pix2pix.eval_every, resumed, start, rule, initial,
                    val_log, update, evaluate, snapshot, "pix2pix");
}

} // namespace msihist::pipeline

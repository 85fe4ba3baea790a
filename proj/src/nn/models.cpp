#include "msihist/nn/models.hpp"
#include "msihist/error.hpp"

#include <cmath>
#include <random>

namespace msihist::nn {

namespace {

Tensor param(std::vector<NamedTensor> &store, const std::string &name, Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    store.push_back({name, t});
    return t;
}

bool ends_with(const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

} // namespace

void init_parameters(const std::vector<NamedTensor> &params, std::uint64_t seed, double sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    for (const auto &p : params) {
        Tensor t = p.tensor;
        auto d = t.data();
        if (ends_with(p.name, ".weight")) {
            for (double &v : d) v = normal(rng);
        } else if (ends_with(p.name, ".gamma")) {
            std::fill(d.begin(), d.end(), 1.0);
        } else {
            std::fill(d.begin(), d.end(), 0.0);
        }
    }
}

void init_he(const std::vector<NamedTensor> &params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto &p : params) {
        Tensor t = p.tensor;
        auto d = t.data();
        if (ends_with(p.name, ".weight")) {
            const Shape &s = t.shape();
            const double taps = static_cast<double>(s[2] * s[3]);
            const double fan_in = ends_with(p.name, ".up.weight") ? s[0] * taps / 4.0 : s[1] * taps;
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
            for (double &v : d) v = normal(rng);
        } else if (ends_with(p.name, ".gamma")) {
            std::fill(d.begin(), d.end(), 1.0);
        } else {
            std::fill(d.begin(), d.end(), 0.0);
        }
    }
}

void zero_parameters(const std::vector<NamedTensor> &params) {
    for (const auto &p : params) {
        Tensor t = p.tensor;
        auto d = t.data();
        std::fill(d.begin(), d.end(), ends_with(p.name, ".gamma") ? 1.0 : 0.0);
    }
}

std::size_t parameter_count(const std::vector<NamedTensor> &params) {
    std::size_t n = 0;
    for (const auto &p : params) n += p.tensor.size();
    return n;
}

// --- U-Net -----------------------------------------------------------------

void UNetConfig::validate() const {
    require(in_channels >= 1 && out_channels >= 1, "unet: channel counts must be >= 1");
    require(base_width >= 1, "unet: base_width must be >= 1");
    require(depth >= 1 && depth <= 8, "unet: depth must be in [1, 8]");
    require(patch >= 1 && patch % (1 << depth) == 0,
            "unet: patch size " + std::to_string(patch) + " must be divisible by 2^depth = " +
                std::to_string(1 << depth));
}

UNet::Block UNet::make_block(const std::string &name, int in, int out, int k) {
    Block b;
    b.w = param(params_, name + ".weight", {sz(out), sz(in), sz(k), sz(k)});
    b.b = param(params_, name + ".bias", {sz(out)});
    if (cfg_.instance_norm && k == 3) {
        b.gamma = param(params_, name + ".gamma", {sz(out)});
        b.beta = param(params_, name + ".beta", {sz(out)});
    }
    return b;
}

Tensor UNet::apply_block(const Block &blk, const Tensor &x, int pad) const {
    Tensor y = conv2d(x, blk.w, blk.b, {1, pad});
    if (blk.gamma.defined()) y = instance_norm(y, blk.gamma, blk.beta);
    return relu(y);
}

UNet::UNet(const UNetConfig &cfg) : cfg_(cfg) {
    cfg_.validate();
    auto width = [&](int level) { return cfg_.base_width << level; };
    int in = cfg_.in_channels;
    for (int l = 0; l < cfg_.depth; ++l) {
        const std::string n = "enc" + std::to_string(l);
        Block a = make_block(n + ".conv1", in, width(l), 3);
        Block b = make_block(n + ".conv2", width(l), width(l), 3);
        down_.emplace_back(std::move(a), std::move(b));
        in = width(l);
    }
    {
        Block a = make_block("bottom.conv1", in, width(cfg_.depth), 3);
        Block b = make_block("bottom.conv2", width(cfg_.depth), width(cfg_.depth), 3);
        bottom_ = {std::move(a), std::move(b)};
    }
    up_.resize(cfg_.depth);
    dec_.resize(cfg_.depth);
    for (int l = cfg_.depth - 1; l >= 0; --l) {
        const std::string n = "dec" + std::to_string(l);
        Block up;
        up.w = param(params_, n + ".up.weight", {sz(width(l + 1)), sz(width(l)), 2, 2});
        up.b = param(params_, n + ".up.bias", {sz(width(l))});
        up_[l] = std::move(up);
        Block a = make_block(n + ".conv1", 2 * width(l), width(l), 3);
        Block b = make_block(n + ".conv2", width(l), width(l), 3);
        dec_[l] = {std::move(a), std::move(b)};
    }
    head_.w = param(params_, "head.weight", {sz(cfg_.out_channels), sz(width(0)), 1, 1});
    head_.b = param(params_, "head.bias", {sz(cfg_.out_channels)});
}

Tensor UNet::forward(const Tensor &x) const {
    require(x.defined() && x.shape().size() == 4, "unet: input must be N x C x H x W");
    require(static_cast<int>(x.dim(1)) == cfg_.in_channels,
            "unet: expected " + std::to_string(cfg_.in_channels) + " input channels, got " + std::to_string(x.dim(1)));
    const std::size_t m = std::size_t{1} << cfg_.depth;
    require(x.dim(2) % m == 0 && x.dim(3) % m == 0,
            "unet: input size " + std::to_string(x.dim(3)) + "x" + std::to_string(x.dim(2)) +
                " is not divisible by 2^depth = " + std::to_string(m));

    std::vector<Tensor> skips;
    Tensor h = x;
    for (const auto &[a, b] : down_) {
        h = apply_block(b, apply_block(a, h, 1), 1);
        skips.push_back(h);
        h = max_pool2x2(h);
    }
    h = apply_block(bottom_.second, apply_block(bottom_.first, h, 1), 1);
    for (int l = cfg_.depth - 1; l >= 0; --l) {
        h = conv_transpose2d(h, up_[l].w, up_[l].b, {2, 0});
        h = concat_channels(h, skips[l]);
        h = apply_block(dec_[l].second, apply_block(dec_[l].first, h, 1), 1);
    }
    return sigmoid(conv2d(h, head_.w, head_.b, {1, 0}));
}

// --- PatchGAN --------------------------------------------------------------

void PatchGanConfig::validate() const {
    require(in_channels >= 1, "patchgan: in_channels must be >= 1");
    require(base_width >= 1, "patchgan: base_width must be >= 1");
    require(layers >= 1 && layers <= 6, "patchgan: layers must be in [1, 6]");
}

PatchGan::PatchGan(const PatchGanConfig &cfg) : cfg_(cfg) {
    cfg_.validate();
    int in = cfg_.in_channels;
    for (int l = 0; l < cfg_.layers; ++l) {
        const int out = cfg_.base_width << std::min(l, 3);
        const std::string n = "disc" + std::to_string(l);
        Layer layer;
        layer.w = param(params_, n + ".weight", {sz(out), sz(in), 4, 4});
        layer.b = param(params_, n + ".bias", {sz(out)});
        layer.norm = cfg_.instance_norm && l > 0;
        if (layer.norm) {
            layer.gamma = param(params_, n + ".gamma", {sz(out)});
            layer.beta = param(params_, n + ".beta", {sz(out)});
        }
        layer.stride = 2;
        layer.pad = 1;
        layer.act = true;
        layers_.push_back(std::move(layer));
        in = out;
    }
    Layer last;
    last.w = param(params_, "logits.weight", {1, sz(in), 4, 4});
    last.b = param(params_, "logits.bias", {1});
    last.stride = 1;
    last.pad = 1;
    last.norm = false;
    last.act = false;
    layers_.push_back(std::move(last));
}

Tensor PatchGan::forward(const Tensor &condition, const Tensor &image) const {
    require(condition.defined() && image.defined() && condition.shape().size() == 4 && image.shape().size() == 4,
            "patchgan: inputs must be N x C x H x W");
    require(condition.dim(0) == image.dim(0) && condition.dim(2) == image.dim(2) && condition.dim(3) == image.dim(3),
            "patchgan: condition " + shape_str(condition.shape()) + " and image " + shape_str(image.shape()) +
                " disagree");
    require(static_cast<int>(condition.dim(1) + image.dim(1)) == cfg_.in_channels,
            "patchgan: expected " + std::to_string(cfg_.in_channels) + " stacked channels");
    require(output_size(static_cast<int>(image.dim(2))) >= 1 && output_size(static_cast<int>(image.dim(3))) >= 1,
            "patchgan: input too small for the configured layers");
    Tensor h = concat_channels(condition, image);
    for (const auto &l : layers_) {
        h = conv2d(h, l.w, l.b, {l.stride, l.pad});
        if (l.norm) h = instance_norm(h, l.gamma, l.beta);
        if (l.act) h = leaky_relu(h, 0.2);
    }
    return h;
}

int PatchGan::output_size(int n) const {
    for (int l = 0; l < cfg_.layers; ++l) n = (n + 2 - 4) / 2 + 1;
    return n + 2 - 4 + 1;
}

std::pair<int, int> PatchGan::receptive_range(int i) const {
    int lo = i, hi = i;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        lo = lo * it->stride - it->pad;
        hi = hi * it->stride - it->pad + 3;
    }
    return {lo, hi};
}

// --- training steps --------------------------------------------------------------

void Pix2PixConfig::validate() const {
    require(lambda_l1 >= 0.0, "pix2pix: lambda_l1 must be >= 0");
    require(lr > 0.0, "pix2pix: lr must be > 0");
    gen.validate();
    disc.validate();
    require(image_size % (1 << gen.depth) == 0,
            "pix2pix: image_size must be divisible by 2^gen.depth = " + std::to_string(1 << gen.depth));
    require(disc.in_channels == gen.in_channels + gen.out_channels,
            "pix2pix: discriminator input channels must equal condition + image channels");
}

Pix2Pix::Pix2Pix(const Pix2PixConfig &cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    gen_ = UNet(cfg_.gen);
    disc_ = PatchGan(cfg_.disc);
    init_parameters(gen_.parameters(), seed);
    init_parameters(disc_.parameters(), seed ^ 0x9e3779b97f4a7c15ULL);
    const AdamConfig ac{cfg_.lr, cfg_.beta1, cfg_.beta2, 1e-8};
    opt_g_ = Adam(gen_.parameters(), ac);
    opt_d_ = Adam(disc_.parameters(), ac);
}

namespace {

void check_finite(double v, const char *what, std::int64_t step) {
    if (!std::isfinite(v))
        throw RuntimeFailure(std::string("non-finite ") + what + " at step " + std::to_string(step));
}

} // namespace

Pix2PixLosses Pix2Pix::generator_objective(const Tensor &condition, const Tensor &target) {
    opt_g_.zero_grad();
    opt_d_.zero_grad();
    Tensor fake = gen_.forward(condition);
    Tensor adv = bce_with_logits(disc_.forward(condition, fake), 1.0);
    Tensor rec = l1(fake, target);
    Tensor total = add(adv, scale(rec, cfg_.lambda_l1));
    total.backward();
    return {0.0, total.item(), adv.item(), rec.item()};
}

Pix2PixLosses Pix2Pix::step(const Tensor &condition, const Tensor &target) {
    const std::int64_t step_no = opt_g_.steps() + 1;
    Pix2PixLosses out;

    // Discriminator: real pair vs detached generated pair.
    Tensor fake = gen_.forward(condition);
    {
        opt_d_.zero_grad();
        Tensor real_loss = bce_with_logits(disc_.forward(condition, target), 1.0);
        Tensor fake_loss = bce_with_logits(disc_.forward(condition, fake.detach()), 0.0);
        Tensor loss_d = scale(add(real_loss, fake_loss), 0.5);
        out.d = loss_d.item();
        check_finite(out.d, "discriminator loss", step_no);
        loss_d.backward();
        opt_d_.step();
    }

    // Generator: fool the updated discriminator and stay close in L1.
    opt_g_.zero_grad();
    opt_d_.zero_grad();
    Tensor adv = bce_with_logits(disc_.forward(condition, fake), 1.0);
    Tensor rec = l1(fake, target);
    Tensor total = add(adv, scale(rec, cfg_.lambda_l1));
    out.g = total.item();
    out.g_adv = adv.item();
    out.g_l1 = rec.item();
    check_finite(out.g, "generator loss", step_no);
    total.backward();
    opt_g_.step();
    opt_d_.zero_grad();
    return out;
}

UNetRegressor::UNetRegressor(const UNetConfig &cfg, const UNetTrainConfig &tc, std::uint64_t seed)
    : net_(cfg) {
    init_he(net_.parameters(), seed);
    opt_ = Adam(net_.parameters(), {tc.lr, tc.beta1, tc.beta2, 1e-8});
}

double UNetRegressor::train_step(const Tensor &input, const Tensor &target) {
    opt_.zero_grad();
    Tensor loss = mse(net_.forward(input), target);
    const double v = loss.item();
    check_finite(v, "loss", opt_.steps() + 1);
    loss.backward();
    opt_.step();
    return v;
}

} // namespace msihist::nn

#include "msihist/pipeline/infer.hpp"

#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/nn/checkpoint.hpp"
#include "msihist/pipeline/train.hpp"

#include <algorithm>

namespace msihist::pipeline {

namespace fs = std::filesystem;

nn::Tensor to_tensor(const Image &img) {
    return nn::Tensor::from({1, static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
                             static_cast<std::size_t>(img.width)},
                            img.data);
}

Image to_image(const nn::Tensor &t, std::size_t index) {
    require(t.shape().size() == 4 && index < t.dim(0), "to_image: expected an N x C x H x W tensor");
    const auto &s = t.shape();
    Image img(static_cast<int>(s[3]), static_cast<int>(s[2]), static_cast<int>(s[1]));
    const std::size_t n = img.data.size();
    std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>(index * n), n, img.data.begin());
    return img;
}

Image synthesize_patched(const nn::UNet &net, const Image &input, int stride) {
    const int P = net.config().patch;
    require(input.channels == net.config().in_channels,
            "synth: input has " + std::to_string(input.channels) + " channels, model expects " +
                std::to_string(net.config().in_channels));
    require(input.width >= P && input.height >= P, "synth: input smaller than the model patch size");
    nn::NoGradGuard guard;
    auto patches = imagereg::extract_patches(input, P, stride);
    constexpr std::size_t kBatch = 64;
    const std::size_t per = static_cast<std::size_t>(input.channels) * P * P;
    for (std::size_t first = 0; first < patches.size(); first += kBatch) {
        const std::size_t count = std::min(kBatch, patches.size() - first);
        std::vector<double> buf(count * per);
        for (std::size_t i = 0; i < count; ++i)
            std::copy(patches[first + i].image.data.begin(), patches[first + i].image.data.end(),
                      buf.begin() + static_cast<std::ptrdiff_t>(i * per));
        const nn::Tensor out = net.forward(nn::Tensor::from(
            {count, static_cast<std::size_t>(input.channels), static_cast<std::size_t>(P), static_cast<std::size_t>(P)},
            std::move(buf)));
        for (std::size_t i = 0; i < count; ++i) patches[first + i].image = to_image(out, i);
    }
    return imagereg::reassemble(patches, input.width, input.height);
}

Image synthesize_full(const nn::UNet &net, const Image &input) {
    const int f = 1 << net.config().depth;
    require(input.channels == net.config().in_channels,
            "synth: input has " + std::to_string(input.channels) + " channels, model expects " +
                std::to_string(net.config().in_channels));
    require(input.width % f == 0 && input.height % f == 0,
            "synth: input " + std::to_string(input.width) + "x" + std::to_string(input.height) +
                " is not divisible by 2^depth = " + std::to_string(f));
    nn::NoGradGuard guard;
    return to_image(net.forward(to_tensor(input)));
}

Synthesizer::Synthesizer(const fs::path &checkpoint) {
    const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
    kind_ = echo_kind(ck.config);
    net_ = nn::UNet(echo_unet(ck.config));
    nn::restore_values(ck, kind_ == ModelKind::unet ? "" : "g.", net_.parameters());
}

Image Synthesizer::run(const Image &input) const {
    return clamp01(kind_ == ModelKind::unet ? synthesize_patched(net_, input, net_.config().patch)
                                            : synthesize_full(net_, input));
}

std::map<std::string, Image> synthesize_set(const Synthesizer &s, const PreparedSet &set, const fs::path &dir) {
    fs::create_directories(dir);
    std::map<std::string, Image> out;
    for (const auto &p : set.pairs) {
        if (p.split == Split::train) continue;
        Image img = s.run(p.input);
        write_png(dir / (p.id + ".png"), img);
        out.emplace(p.id, std::move(img));
    }
    return out;
}

metrics::MetricReport evaluate_split(const PreparedSet &set, const std::map<std::string, Image> &synth, Split split,
                                     int bins) {
    std::vector<metrics::EvalPair> pairs;
    for (const auto *p : set.select(split)) {
        const auto it = synth.find(p->id);
        require(it != synth.end(), "eval: no synthesized image for sample " + p->id);
        pairs.push_back({p->id, p->histology, it->second});
    }
    require(!pairs.empty(), "eval: the " + to_string(split) + " split is empty");
    return metrics::evaluate_set(pairs, bins);
}

} // namespace msihist::pipeline

#include "msihist/pipeline/report.hpp"

#include "msihist/error.hpp"

#include <algorithm>
#include <cstdio>

namespace msihist::pipeline {

namespace {

bool is_unet(const std::string &label) { return label.rfind("U-Net", 0) == 0; }
bool is_pix2pix(const std::string &label) { return label.rfind("pix2pix", 0) == 0; }

int rank(const std::string &label) {
    const int family = is_unet(label) ? 0 : 1;
    const int pad = label.find("(W)") != std::string::npos ? 1 : 0;
    return family * 2 + pad;
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string signed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.3f", v);
    // Avoid "-0.000" for tiny negative rounding noise.
    if (std::string(buf) == "-0.000") return "+0.000";
    return buf;
}

Report make_report(std::vector<VariantScore> rows, const std::string &split) {
    require(!rows.empty(), "report: no evaluated variants");
    for (const auto &r : rows)
        require(is_unet(r.label) || is_pix2pix(r.label), "report: unknown variant label '" + r.label + "'");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const VariantScore &a, const VariantScore &b) { return rank(a.label) < rank(b.label); });
    Report rep;
    rep.split = split;
    rep.rows = std::move(rows);

    std::optional<double> u_mi, u_ssim, p_mi, p_ssim;
    auto best = [](std::optional<double> &slot, double v) { slot = slot ? std::max(*slot, v) : v; };
    for (const auto &r : rep.rows) {
        if (is_unet(r.label)) {
            best(u_mi, r.mi);
            best(u_ssim, r.ssim);
        } else {
            best(p_mi, r.mi);
            best(p_ssim, r.ssim);
        }
    }
    if (u_mi && p_mi) rep.deltas = Deltas{*p_mi - *u_mi, *p_ssim - *u_ssim};
    return rep;
}

std::string to_markdown(const Report &r) {
    std::string out = "| Model | MI | SSIM |\n|---|---|---|\n";
    for (const auto &row : r.rows) out += "| " + row.label + " | " + fixed3(row.mi) + " | " + fixed3(row.ssim) + " |\n";
    if (r.deltas)
        out += "\npix2pix vs U-Net (best of each): MI " + signed3(r.deltas->mi) + ", SSIM " + signed3(r.deltas->ssim) + "\n";
    if (!r.split.empty()) out += "\nMeans over whole " + r.split + "-split images; MI in nats.\n";
    return out;
}

std::string to_csv(const Report &r) {
    std::string out = "variant,mi,ssim,n_images\n";
    for (const auto &row : r.rows)
        out += row.label + "," + full(row.mi) + "," + full(row.ssim) + "," + std::to_string(row.n_images) + "\n";
    if (r.deltas) out += "delta," + full(r.deltas->mi) + "," + full(r.deltas->ssim) + ",\n";
    return out;
}

} // namespace msihist::pipeline

#include "echoseg/plot.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "echoseg/errors.h"

namespace echoseg {

namespace {

constexpr double kWidth = 900, kHeight = 480;
constexpr double kLeft = 80, kRight = 80, kTop = 40, kBottom = 60;

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* colour, double width,
                     double opacity) {
    if (pts.empty()) return {};
    std::string s = fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}" points=")",
                                colour, width, opacity);
    for (const auto& [x, y] : pts) s += fmt::format("{:.2f},{:.2f} ", x, y);
    s += "\"/>\n";
    return s;
}

}  // namespace

std::string render_curves_svg(std::span<const EpochRecord> records) {
    if (records.empty()) throw ValidationError("no epochs to plot");
    const double e_max = std::max(1, records.back().epoch);
    double l_max = 0;
    for (const auto& r : records) l_max = std::max(l_max, r.train_loss);
    l_max = l_max > 0 ? l_max * 1.05 : 1.0;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double e) { return kLeft + pw * e / e_max; };
    auto py_loss = [&](double l) { return kTop + ph * (1.0 - l / l_max); };
    auto py_dice = [&](double d) { return kTop + ph * (1.0 - d); };

    std::string s = fmt::format(
        R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)"
        "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kWidth, kHeight);
    s += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)"
                     "\n",
                     kLeft, kTop, pw, ph);
    for (int i = 0; i <= 5; ++i) {
        const double f = i / 5.0;
        const double y = kTop + ph * (1 - f);
        s += fmt::format(R"(<line x1="{}" x2="{}" y1="{:.2f}" y2="{:.2f}" stroke="#ddd"/>)"
                         "\n",
                         kLeft, kLeft + pw, y, y);
        s += fmt::format(R"(<text x="{}" y="{:.2f}" text-anchor="end" fill="#1f77b4">{:.3g}</text>)"
                         "\n",
                         kLeft - 6, y + 4, f * l_max);
        s += fmt::format(R"(<text x="{}" y="{:.2f}" fill="#d62728">{:.1f}</text>)"
                         "\n",
                         kLeft + pw + 6, y + 4, f);
        const double e = f * e_max;
        s += fmt::format(R"(<text x="{:.2f}" y="{}" text-anchor="middle">{:.0f}</text>)"
                         "\n",
                         px(e), kTop + ph + 18, e);
    }
    s += fmt::format(R"(<text x="{:.2f}" y="{}" text-anchor="middle">epoch</text>)"
                     "\n",
                     kLeft + pw / 2, kHeight - 15);
    s += fmt::format(R"~(<text transform="translate(20,{:.2f}) rotate(-90)" text-anchor="middle" fill="#1f77b4">training loss</text>)~"
                     "\n",
                     kTop + ph / 2);
    s += fmt::format(R"~(<text transform="translate({:.2f},{:.2f}) rotate(90)" text-anchor="middle" fill="#d62728">validation Dice</text>)~"
                     "\n",
                     kWidth - 25, kTop + ph / 2);

    for (int l = 0; l < kNumForegroundLabels; ++l) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : records)
            if (r.val_dice[l]) pts.emplace_back(px(r.epoch), py_dice(*r.val_dice[l]));
        s += polyline(pts, "#d62728", 0.8, 0.25);
    }
    std::vector<std::pair<double, double>> loss, dice;
    for (const auto& r : records) {
        loss.emplace_back(px(r.epoch), py_loss(r.train_loss));
        dice.emplace_back(px(r.epoch), py_dice(r.val_mean_dice));
    }
    s += polyline(loss, "#1f77b4", 2, 1);
    s += polyline(dice, "#d62728", 2, 1);
    s += fmt::format(R"(<text x="{}" y="{}" fill="#1f77b4">training loss</text>)"
                     "\n"
                     R"~(<text x="{}" y="{}" fill="#d62728">validation Dice (mean, thin: per label)</text>)~"
                     "\n",
                     kLeft + 10, kTop - 12, kLeft + 130, kTop - 12);
    s += "</svg>\n";
    return s;
}

}  // namespace echoseg

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catch_amalgamated.hpp"
#include "support.h"

#include "echoseg/errors.h"
#include "echoseg/losses.h"

using namespace echoseg;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<std::uint8_t> random_labels(std::size_t n, int classes, std::uint64_t seed, int skip = -1) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> out(n);
    for (auto& v : out) {
        int c;
        do c = static_cast<int>(rng() % classes);
        while (c == skip);
        v = static_cast<std::uint8_t>(c);
    }
    return out;
}

// Entries below 1e-6 are compared on an absolute scale; central differences resolve
// only about eps * L / h ~ 1e-11 there.
double max_relative_error(const TensorD& a, const TensorD& n) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i], y = n.data()[i];
        const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

// Central differences of the total loss w.r.t. every logit of output `which`.
TensorD numeric_gradient(BasicNetworkOutput<double> out, const TensorD& target, const LossConfig& cfg,
                         const std::vector<double>& ds, std::size_t which, double h) {
    TensorD& z = which == 0 ? out.main : out.aux[which - 1];
    TensorD g(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double saved = z.data()[i];
        z.data()[i] = saved + h;
        const double plus = total_loss<double>(out, target, cfg, ds).total;
        z.data()[i] = saved - h;
        const double minus = total_loss<double>(out, target, cfg, ds).total;
        z.data()[i] = saved;
        g.data()[i] = (plus - minus) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("softmax of uniform logits is 1/C") {
    const TensorD p = softmax_clamped(TensorD(2, 15, 3, 3, 0.7), 1e-7);
    for (double v : p.storage()) CHECK_THAT(v, WithinAbs(1.0 / 15, 1e-15));
}

TEST_CASE("a dominant logit gives probability 1 and floors the rest exactly") {
    TensorD z(1, 15, 1, 2, 0.0);
    z(0, 3, 0, 0) = 1e4;
    z(0, 7, 0, 1) = 1e4;
    const TensorD p = softmax_clamped(z, 1e-7);
    for (int c = 0; c < 15; ++c) {
        CHECK(p(0, c, 0, 0) == (c == 3 ? 1.0 : 1e-7));
        CHECK(p(0, c, 0, 1) == (c == 7 ? 1.0 : 1e-7));
    }
    const Tensor pf = softmax_clamped(z.cast<float>(), 1e-7);
    CHECK(pf(0, 0, 0, 0) == 1e-7f);
}

TEST_CASE("clamped softmax never drops below the floor") {
    const TensorD p = softmax_clamped(testing::random_tensor<double>({2, 15, 4, 4}, 1, -60, 60), 1e-7);
    CHECK(*std::min_element(p.storage().begin(), p.storage().end()) >= 1e-7);
}

TEST_CASE("non-finite logits raise a numeric error") {
    TensorD z(1, 3, 2, 2, 0.0);
    z(0, 1, 1, 1) = std::nan("");
    CHECK_THROWS_AS(softmax_clamped(z, 1e-7), NumericError);
    z(0, 1, 1, 1) = INFINITY;
    CHECK_THROWS_AS(softmax(z), NumericError);
}

TEST_CASE("soft Dice of a crisp correct prediction is 1") {
    const auto labels = random_labels(2 * 16, 4, 2);
    const TensorD t = one_hot<double>(labels, {2, 4, 4, 4});
    const auto robust = soft_dice_per_label(t, t, DiceMode::robust_dice, 1e-7, 1e-7);
    const auto eps = soft_dice_per_label(t, t, DiceMode::epsilon_dice, 1e-7, 1e-7);
    for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 3; ++l) {
            // Flooring the zeros adds N * 1e-7 to the predicted mass.
            CHECK_THAT(robust[b][l], WithinAbs(1.0, 16 * 1e-7));
            CHECK_THAT(eps[b][l], WithinAbs(1.0, 1e-7));
        }
}

TEST_CASE("epsilon Dice of an absent label: floored and zero predictions") {
    const std::vector<std::uint8_t> labels(16, 0);
    const TensorD t = one_hot<double>(labels, {1, 3, 4, 4});
    TensorD p(1, 3, 4, 4, 1e-7);
    for (double& v : p.plane(0, 0)) v = 1.0 - 2e-7;
    const double eps = 1e-7;
    const auto d = soft_dice_per_label(p, t, DiceMode::epsilon_dice, eps, 1e-7);
    CHECK_THAT(d[0][0], WithinRel(eps / (16 * 1e-7 + eps), 1e-12));
    TensorD zero(1, 3, 4, 4, 0.0);
    for (double& v : zero.plane(0, 0)) v = 1.0;
    CHECK(soft_dice_per_label(zero, t, DiceMode::epsilon_dice, eps, 1e-7)[0][0] == 1.0);
}

TEST_CASE("robust Dice of an absent label is exactly 0") {
    std::vector<std::uint8_t> labels = random_labels(2 * 25, 4, 3, 2);
    const TensorD t = one_hot<double>(labels, {2, 4, 5, 5});
    const TensorD p = softmax(testing::random_tensor<double>({2, 4, 5, 5}, 4, -3, 3));
    const auto d = soft_dice_per_label(p, t, DiceMode::robust_dice, 1e-7, 1e-7);
    CHECK(d[0][1] == 0.0);
    CHECK(d[1][1] == 0.0);
}

TEST_CASE("soft Dice hand example: uniform 0.5 over 16 pixels, 8 target pixels") {
    std::vector<std::uint8_t> labels(16, 0);
    std::fill(labels.begin(), labels.begin() + 8, 1);
    const TensorD t = one_hot<double>(labels, {1, 2, 4, 4});
    const TensorD p(1, 2, 4, 4, 0.5);
    const auto d = soft_dice_per_label(p, t, DiceMode::robust_dice, 1e-7, 1e-7);
    CHECK(d[0][0] == 2 * 0.5 * 8 / (0.5 * 16 + 8));
    CHECK(d[0][0] == 0.5);
}

TEST_CASE("targets that are not one-hot are rejected") {
    TensorD t(1, 3, 2, 2, 0.0);
    for (double& v : t.plane(0, 0)) v = 1.0;
    const TensorD p(1, 3, 2, 2, 1.0 / 3);
    t(0, 1, 0, 0) = 1.0;  // two hot classes
    CHECK_THROWS_AS(soft_dice_per_label(p, t, DiceMode::robust_dice, 1e-7, 1e-7), ValidationError);
    t(0, 1, 0, 0) = 0.5;
    CHECK_THROWS_AS(soft_dice_per_label(p, t, DiceMode::robust_dice, 1e-7, 1e-7), ValidationError);
    CHECK_THROWS_AS(one_hot<double>(std::vector<std::uint8_t>{0, 1, 2, 5}, {1, 3, 2, 2}), ValidationError);
}

TEST_CASE("exp-log Dice unit cases") {
    const double delta = 1e-7;
    const std::array<bool, 3> present{true, true, true};
    const std::array<double, 3> ones{1, 1, 1};
    const double all_one = exp_log_dice<double>(ones, present, 0.3, delta, PresencePolicy::include_missing);
    CHECK(all_one == std::pow(-std::log(1 - delta), 0.3));
    CHECK(all_one < 0.01);

    const std::array<double, 1> inv_e{std::exp(-1.0)};
    const std::array<bool, 1> one_present{true};
    CHECK_THAT(exp_log_dice<double>(inv_e, one_present, 0.3, delta, PresencePolicy::include_missing),
               WithinAbs(1.0, 1e-12));
}

TEST_CASE("an absent label under include_missing contributes (7 ln 10)^0.3") {
    const std::array<double, 1> zero{0.0};
    const std::array<bool, 1> absent{false};
    const double c = exp_log_dice<double>(zero, absent, 0.3, 1e-7, PresencePolicy::include_missing);
    CHECK_THAT(c, WithinAbs(std::pow(7 * std::log(10.0), 0.3), 1e-12));
    CHECK_THAT(c, WithinAbs(2.30, 0.005));
    CHECK(exp_log_dice<double>(zero, absent, 0.3, 1e-7, PresencePolicy::exclude_missing) == 0.0);

    const std::array<double, 2> mix{0.0, std::exp(-1.0)};
    const std::array<bool, 2> flags{false, true};
    CHECK_THAT(exp_log_dice<double>(mix, flags, 0.3, 1e-7, PresencePolicy::exclude_missing), WithinAbs(1.0, 1e-12));
    CHECK_THAT(exp_log_dice<double>(mix, flags, 0.3, 1e-7, PresencePolicy::include_missing),
               WithinAbs((c + 1.0) / 2, 1e-12));
}

TEST_CASE("exp-log Dice is strictly decreasing in a present label's Dice") {
    const std::array<bool, 2> present{true, true};
    double prev = INFINITY;
    for (int i = 1; i < 1000; ++i) {
        const std::array<double, 2> d{0.4, i / 1000.0};
        const double v = exp_log_dice<double>(d, present, 0.3, 1e-7, PresencePolicy::include_missing);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("exp-log cross-entropy closed forms") {
    const std::vector<std::uint8_t> labels = random_labels(2 * 9, 15, 5);
    const TensorD t = one_hot<double>(labels, {2, 15, 3, 3});
    CHECK_THAT(exp_log_cross_entropy<double>(t, t, 0.3, {}), WithinAbs(0.0, 1e-15));

    const TensorD uniform(2, 15, 3, 3, 1.0 / 15);
    CHECK_THAT(exp_log_cross_entropy<double>(uniform, t, 1.0, {}), WithinAbs(std::log(15.0), 1e-12));
    CHECK_THAT(std::log(15.0), WithinAbs(2.708, 5e-4));

    const std::vector<std::uint8_t> one{1};
    const TensorD t1 = one_hot<double>(one, {1, 2, 1, 1});
    TensorD p1(1, 2, 1, 1);
    p1(0, 1, 0, 0) = std::exp(-1.0);
    p1(0, 0, 0, 0) = 1 - std::exp(-1.0);
    CHECK_THAT(exp_log_cross_entropy<double>(p1, t1, 0.3, {}), WithinAbs(1.0, 1e-12));
    const std::vector<double> w{1.0, 3.0};
    CHECK_THAT(exp_log_cross_entropy<double>(p1, t1, 0.3, w), WithinAbs(3.0, 1e-12));
}

TEST_CASE("single output with ds_weights [1] equals the plain combined loss") {
    const Shape4 s{2, 5, 6, 6};
    BasicNetworkOutput<double> out;
    out.main = testing::random_tensor<double>(s, 6, -2, 2);
    const TensorD t = one_hot<double>(random_labels(2 * 36, 5, 7, 3), s);
    LossConfig cfg;
    const std::vector<double> ds{1.0};
    const LossBreakdown bd = total_loss<double>(out, t, cfg, ds);

    const TensorD p = softmax_clamped(out.main, cfg.pred_floor);
    const auto table = soft_dice_per_label(p, t, DiceMode::robust_dice, cfg.legacy_epsilon, cfg.pred_floor);
    double dice = 0;
    for (const auto& row : table) {
        const std::array<bool, 4> flags{true, true, false, true};
        dice += exp_log_dice<double>(row, flags, cfg.dice_exponent, cfg.dice_floor, cfg.presence) / table.size();
    }
    const double ce = exp_log_cross_entropy<double>(p, t, cfg.ce_exponent, {});
    CHECK_THAT(bd.dice_term, WithinAbs(dice, 1e-12));
    CHECK_THAT(bd.ce_term, WithinAbs(ce, 1e-12));
    CHECK_THAT(bd.total, WithinAbs(0.8 * dice + 0.2 * ce, 1e-12));
    CHECK(bd.total == cfg.w_dice * bd.dice_term + cfg.w_ce * bd.ce_term);
    for (int b = 0; b < 2; ++b) CHECK(bd.per_image_dice[b][2] == 0.0);
}

TEST_CASE("zero auxiliary weights reduce to the main-only loss") {
    const Shape4 s{2, 4, 4, 4};
    BasicNetworkOutput<double> out;
    out.main = testing::random_tensor<double>(s, 8);
    out.aux = {testing::random_tensor<double>(s, 9), testing::random_tensor<double>(s, 10)};
    const TensorD t = one_hot<double>(random_labels(32, 4, 11), s);
    LossConfig cfg;
    const std::vector<double> w100{1, 0, 0}, w1{1};
    BasicNetworkOutput<double> main_only{out.main, {}};
    CHECK(total_loss<double>(out, t, cfg, w100).total == total_loss<double>(main_only, t, cfg, w1).total);
    const std::vector<double> bad{1, 0.5};
    CHECK_THROWS_AS(total_loss<double>(out, t, cfg, bad), ValidationError);
}

TEST_CASE("deep supervision weights average the per-output losses") {
    const Shape4 s{1, 4, 4, 4};
    BasicNetworkOutput<double> out;
    out.main = testing::random_tensor<double>(s, 12);
    out.aux = {testing::random_tensor<double>(s, 13)};
    const TensorD t = one_hot<double>(random_labels(16, 4, 14), s);
    LossConfig cfg;
    const std::vector<double> one{1};
    const double a = total_loss<double>({out.main, {}}, t, cfg, one).total;
    const double b = total_loss<double>({out.aux[0], {}}, t, cfg, one).total;
    const std::vector<double> w{1, 0.5};
    CHECK_THAT(total_loss<double>(out, t, cfg, w).total, WithinAbs((a + 0.5 * b) / 1.5, 1e-12));
}

TEST_CASE("logit gradients match central differences") {
    for (DiceMode mode : {DiceMode::robust_dice, DiceMode::epsilon_dice})
        for (std::uint64_t inst = 0; inst < 5; ++inst) {
            const Shape4 s{2, 4, 8, 8};
            BasicNetworkOutput<double> out;
            out.main = testing::random_tensor<double>(s, 100 + inst, -2, 2);
            out.aux = {testing::random_tensor<double>(s, 200 + inst, -2, 2)};
            // Odd instances leave class 2 out of the target entirely.
            const TensorD t = one_hot<double>(random_labels(128, 4, 300 + inst, inst % 2 ? 2 : -1), s);
            LossConfig cfg;
            cfg.mode = mode;
            const std::vector<double> ds{1.0, 0.5};
            BasicNetworkOutput<double> grad;
            total_loss<double>(out, t, cfg, ds, &grad);
            INFO("mode " << to_string(mode) << " instance " << inst);
            CHECK(max_relative_error(grad.main, numeric_gradient(out, t, cfg, ds, 0, 1e-5)) < 1e-4);
            CHECK(max_relative_error(grad.aux[0], numeric_gradient(out, t, cfg, ds, 1, 1e-5)) < 1e-4);
        }
}

TEST_CASE("class weights and exclude_missing keep gradients exact") {
    const Shape4 s{2, 4, 8, 8};
    BasicNetworkOutput<double> out{testing::random_tensor<double>(s, 400, -2, 2), {}};
    const TensorD t = one_hot<double>(random_labels(128, 4, 401, 1), s);
    LossConfig cfg;
    cfg.presence = PresencePolicy::exclude_missing;
    cfg.class_weights = {0.5, 2.0, 1.0, 3.0};
    cfg.ce_exponent = 1.0;
    const std::vector<double> ds{1.0};
    BasicNetworkOutput<double> grad;
    total_loss<double>(out, t, cfg, ds, &grad);
    CHECK(max_relative_error(grad.main, numeric_gradient(out, t, cfg, ds, 0, 1e-5)) < 1e-4);
}

TEST_CASE("robust Dice term of an absent label has zero logit gradient; epsilon term does not") {
    const Shape4 s{2, 5, 6, 6};
    for (int absent = 1; absent < 5; ++absent) {
        BasicNetworkOutput<double> out{testing::random_tensor<double>(s, 500 + absent, -3, 3), {}};
        const TensorD t = one_hot<double>(random_labels(72, 5, 600 + absent, absent), s);
        LossConfig cfg;
        cfg.w_dice = 1;
        cfg.w_ce = 0;
        cfg.active_labels = {absent};
        const std::vector<double> ds{1.0};
        BasicNetworkOutput<double> g;
        total_loss<double>(out, t, cfg, ds, &g);
        double worst = 0;
        for (int b = 0; b < 2; ++b)
            for (double v : g.main.plane(b, absent)) worst = std::max(worst, std::abs(v));
        CHECK(worst < 1e-12);

        cfg.mode = DiceMode::epsilon_dice;
        total_loss<double>(out, t, cfg, ds, &g);
        double largest = 0;
        for (int b = 0; b < 2; ++b)
            for (double v : g.main.plane(b, absent)) largest = std::max(largest, std::abs(v));
        CHECK(largest > 0);
    }
}

TEST_CASE("epsilon Dice term of an absent label falls as its predicted mass goes to 0") {
    const std::vector<std::uint8_t> labels(64, 0);
    const TensorD t = one_hot<double>(labels, {1, 2, 8, 8});
    const std::array<bool, 1> absent{false};
    double prev = INFINITY;
    for (double mass : {1.0, 0.1, 0.0}) {
        TensorD p(1, 2, 8, 8);
        for (double& v : p.plane(0, 1)) v = mass / 64;
        for (double& v : p.plane(0, 0)) v = 1 - mass / 64;
        const auto d = soft_dice_per_label(p, t, DiceMode::epsilon_dice, 1e-7, 1e-7);
        const std::array<double, 1> dl{d[0][0]};
        const double term = exp_log_dice<double>(dl, absent, 0.3, 1e-7, PresencePolicy::include_missing);
        CHECK(term < prev);
        prev = term;
    }
}

TEST_CASE("loss is invariant to a joint pixel permutation") {
    const Shape4 s{1, 4, 6, 6};
    BasicNetworkOutput<double> out{testing::random_tensor<double>(s, 700, -2, 2), {}};
    const auto labels = random_labels(36, 4, 701);
    std::vector<int> perm(36);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(702));
    BasicNetworkOutput<double> shuffled{TensorD(s), {}};
    std::vector<std::uint8_t> sl(36);
    for (int i = 0; i < 36; ++i) {
        sl[i] = labels[perm[i]];
        for (int c = 0; c < 4; ++c) shuffled.main.plane(0, c)[i] = out.main.plane(0, c)[perm[i]];
    }
    LossConfig cfg;
    const std::vector<double> ds{1.0};
    const double a = total_loss<double>(out, one_hot<double>(labels, s), cfg, ds).total;
    const double b = total_loss<double>(shuffled, one_hot<double>(sl, s), cfg, ds).total;
    CHECK_THAT(a, WithinAbs(b, 1e-12));
}

TEST_CASE("three-vessel images under the 14-label loss carry nine constant absent terms") {
    // Three-vessel labels are 6..10; the other nine foreground labels never occur.
    const Shape4 s{3, 15, 8, 8};
    std::mt19937_64 rng(800);
    std::vector<std::uint8_t> labels(3 * 64);
    for (auto& v : labels) {
        const int r = static_cast<int>(rng() % 6);
        v = static_cast<std::uint8_t>(r == 0 ? 0 : 5 + r);
    }
    for (int b = 0; b < 3; ++b)
        for (int l = 6; l <= 10; ++l) labels[b * 64 + l] = static_cast<std::uint8_t>(l);
    const TensorD t = one_hot<double>(labels, s);
    BasicNetworkOutput<double> out{testing::random_tensor<double>(s, 801, -2, 2), {}};
    const std::vector<double> ds{1.0};

    LossConfig combined;
    LossConfig three_vessel;
    three_vessel.active_labels = {6, 7, 8, 9, 10};
    const double d14 = total_loss<double>(out, t, combined, ds).dice_term;
    const double d5 = total_loss<double>(out, t, three_vessel, ds).dice_term;
    const double c = std::pow(7 * std::log(10.0), 0.3);
    // mean over 14 = (5 * d5 + 9 * c) / 14, so the gap is (9/14)(c - d5).
    CHECK_THAT(d14 - d5, WithinAbs(9.0 / 14.0 * (c - d5), 1e-6));
    CHECK(d14 > d5);
}

TEST_CASE("loss config validation") {
    LossConfig c;
    CHECK_NOTHROW(c.validate(15));
    c.dice_exponent = 0;
    CHECK_THROWS_AS(c.validate(15), ValidationError);
    c = {};
    c.w_dice = c.w_ce = 0;
    CHECK_THROWS_AS(c.validate(15), ValidationError);
    c = {};
    c.pred_floor = 1;
    CHECK_THROWS_AS(c.validate(15), ValidationError);
    c = {};
    c.active_labels = {0};
    CHECK_THROWS_AS(c.validate(15), ValidationError);
    c = {};
    c.class_weights = {1, 2};
    CHECK_THROWS_AS(c.validate(15), ValidationError);
    CHECK(parse_dice_mode("epsilon_dice") == DiceMode::epsilon_dice);
    CHECK_THROWS_AS(parse_dice_mode("eps"), ValidationError);
}

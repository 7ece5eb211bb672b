#include "echoseg/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "echoseg/errors.h"

namespace echoseg {

std::string to_string(DiceMode m) { return m == DiceMode::epsilon_dice ? "epsilon_dice" : "robust_dice"; }

std::string to_string(PresencePolicy p) {
    return p == PresencePolicy::include_missing ? "include_missing" : "exclude_missing";
}

DiceMode parse_dice_mode(const std::string& s) {
    if (s == "epsilon_dice") return DiceMode::epsilon_dice;
    if (s == "robust_dice") return DiceMode::robust_dice;
    throw ValidationError("loss.mode must be epsilon_dice or robust_dice (got '" + s + "')");
}

PresencePolicy parse_presence_policy(const std::string& s) {
    if (s == "include_missing") return PresencePolicy::include_missing;
    if (s == "exclude_missing") return PresencePolicy::exclude_missing;
    throw ValidationError("loss.presence_policy must be include_missing or exclude_missing (got '" + s + "')");
}

void LossConfig::validate(int n_classes) const {
    auto fail = [](const std::string& msg) { throw ValidationError("loss config: " + msg); };
    if (!(dice_exponent > 0)) fail("dice_exponent must be > 0");
    if (!(ce_exponent > 0)) fail("ce_exponent must be > 0");
    if (!(w_dice >= 0) || !(w_ce >= 0)) fail("w_dice and w_ce must be >= 0");
    if (w_dice == 0 && w_ce == 0) fail("w_dice and w_ce cannot both be 0");
    if (!(pred_floor > 0 && pred_floor < 1)) fail("pred_floor must be in (0, 1)");
    if (!(dice_floor > 0 && dice_floor < 0.5)) fail("dice_floor must be in (0, 0.5)");
    if (!(legacy_epsilon > 0)) fail("legacy_epsilon must be > 0");
    std::set<int> seen;
    for (int l : active_labels) {
        if (l < 1 || l >= n_classes) fail("active label " + std::to_string(l) + " outside 1.." + std::to_string(n_classes - 1));
        if (!seen.insert(l).second) fail("active label " + std::to_string(l) + " listed twice");
    }
    if (!class_weights.empty()) {
        if (static_cast<int>(class_weights.size()) != n_classes)
            fail("class_weights needs " + std::to_string(n_classes) + " entries");
        for (double w : class_weights)
            if (!(w >= 0) || !std::isfinite(w)) fail("class_weights must be finite and >= 0");
    }
}

std::vector<int> LossConfig::labels_for(int n_classes) const {
    if (!active_labels.empty()) return active_labels;
    std::vector<int> all(n_classes - 1);
    std::iota(all.begin(), all.end(), 1);
    return all;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    const Shape4 s = logits.shape();
    BasicTensor<T> out(s);
    const std::size_t plane = s.plane();
    std::vector<double> z(s.c);
    for (int b = 0; b < s.n; ++b) {
        const T* in = logits.sample(b).data();
        T* o = out.sample(b).data();
        for (std::size_t i = 0; i < plane; ++i) {
            double zmax = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < s.c; ++c) {
                z[c] = static_cast<double>(in[c * plane + i]);
                if (!std::isfinite(z[c])) throw NumericError("softmax: non-finite logit");
                zmax = std::max(zmax, z[c]);
            }
            double sum = 0;
            for (int c = 0; c < s.c; ++c) sum += (z[c] = std::exp(z[c] - zmax));
            for (int c = 0; c < s.c; ++c) o[c * plane + i] = static_cast<T>(z[c] / sum);
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> softmax_clamped(const BasicTensor<T>& logits, double floor) {
    BasicTensor<T> p = softmax(logits);
    const T f = static_cast<T>(floor);
    for (T& v : p.storage()) v = std::max(v, f);
    return p;
}

template <typename T>
BasicTensor<T> one_hot(std::span<const std::uint8_t> labels, Shape4 shape) {
    if (labels.size() != static_cast<std::size_t>(shape.n) * shape.plane())
        throw ValidationError("one_hot: label count does not match shape " + to_string(shape));
    BasicTensor<T> out(shape);
    const std::size_t plane = shape.plane();
    for (int b = 0; b < shape.n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const int y = labels[b * plane + i];
            if (y >= shape.c) throw ValidationError("one_hot: label " + std::to_string(y) + " >= class count");
            out.sample(b)[y * plane + i] = T(1);
        }
    return out;
}

template <typename T>
void validate_one_hot(const BasicTensor<T>& target) {
    const Shape4 s = target.shape();
    const std::size_t plane = s.plane();
    for (int b = 0; b < s.n; ++b) {
        auto t = target.sample(b);
        for (std::size_t i = 0; i < plane; ++i) {
            int ones = 0;
            for (int c = 0; c < s.c; ++c) {
                const T v = t[c * plane + i];
                if (v == T(1))
                    ++ones;
                else if (v != T(0))
                    throw ValidationError("target is not one-hot: value " + std::to_string(static_cast<double>(v)));
            }
            if (ones != 1) throw ValidationError("target is not one-hot: pixel with " + std::to_string(ones) + " hot classes");
        }
    }
}

namespace {

// Overlap statistics of one (image, label) pair.
struct DiceStats {
    double inter = 0;  // sum p*y
    double sum_p = 0;
    double sum_y = 0;
    double dice = 0;
    double denom = 0;  // denominator of the Dice ratio
};

template <typename T>
DiceStats dice_stats(std::span<const T> p, std::span<const T> y, DiceMode mode, double epsilon, double floor) {
    DiceStats st;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = static_cast<double>(p[i]);
        if (mode == DiceMode::robust_dice) pi = std::max(pi, floor);
        const double yi = static_cast<double>(y[i]);
        st.inter += pi * yi;
        st.sum_p += pi;
        st.sum_y += yi;
    }
    if (mode == DiceMode::robust_dice) {
        st.denom = st.sum_p + st.sum_y;
        st.dice = st.sum_y > 0 ? 2 * st.inter / st.denom : 0.0;
    } else {
        st.denom = st.sum_p + st.sum_y + epsilon;
        st.dice = (2 * st.inter + epsilon) / st.denom;
    }
    return st;
}

double exp_log_term(double d, double gamma, double lo, double hi) {
    return std::pow(-std::log(std::clamp(d, lo, hi)), gamma);
}

// d/dD of exp_log_term; zero where the clamp is active.
double exp_log_slope(double d, double gamma, double lo, double hi) {
    if (!(d > lo && d < hi)) return 0.0;
    const double u = -std::log(d);
    return -gamma * std::pow(u, gamma - 1) / d;
}

struct OutputLoss {
    double dice = 0;
    double ce = 0;
    std::vector<std::vector<double>> table;
};

template <typename T>
OutputLoss output_loss(const BasicTensor<T>& logits, const BasicTensor<T>& target, const LossConfig& cfg,
                       const std::vector<int>& labels, BasicTensor<T>* grad, double scale) {
    const Shape4 sh = logits.shape();
    const std::size_t plane = sh.plane();
    const int C = sh.c;
    const BasicTensor<T> s = softmax(logits);
    const double floor = cfg.pred_floor;
    // Epsilon mode keeps only the upper clamp so that absent labels still drive gradients.
    const double lo = cfg.mode == DiceMode::robust_dice ? cfg.dice_floor : std::numeric_limits<double>::min();
    const double hi = 1.0 - cfg.dice_floor;

    OutputLoss out;
    out.table.assign(sh.n, std::vector<double>(C - 1, 0.0));
    std::vector<std::vector<DiceStats>> stats(sh.n, std::vector<DiceStats>(C));
    for (int b = 0; b < sh.n; ++b)
        for (int l = 1; l < C; ++l) {
            stats[b][l] = dice_stats<T>(s.plane(b, l), target.plane(b, l), cfg.mode, cfg.legacy_epsilon, floor);
            out.table[b][l - 1] = stats[b][l].dice;
        }

    std::size_t pairs = 0;
    for (int b = 0; b < sh.n; ++b)
        for (int l : labels)
            if (cfg.presence == PresencePolicy::include_missing || stats[b][l].sum_y > 0) ++pairs;

    std::vector<double> coef(static_cast<std::size_t>(sh.n) * C, 0.0);  // d(dice term)/dD per (b, l)
    double dice_sum = 0;
    for (int b = 0; b < sh.n; ++b)
        for (int l : labels) {
            const DiceStats& st = stats[b][l];
            if (cfg.presence == PresencePolicy::exclude_missing && st.sum_y == 0) continue;
            dice_sum += exp_log_term(st.dice, cfg.dice_exponent, lo, hi);
            const bool absent_robust = cfg.mode == DiceMode::robust_dice && st.sum_y == 0;
            if (!absent_robust) coef[b * C + l] = exp_log_slope(st.dice, cfg.dice_exponent, lo, hi) / pairs;
        }
    out.dice = pairs ? dice_sum / pairs : 0.0;

    const double npix = static_cast<double>(sh.n) * plane;
    const double log_floor = -std::log(floor);
    const double gce = cfg.ce_exponent;
    double ce_sum = 0;
    std::vector<double> gs(C), zc(C);
    for (int b = 0; b < sh.n; ++b) {
        const T* z = logits.sample(b).data();
        const T* sp = s.sample(b).data();
        const T* tg = target.sample(b).data();
        T* g = grad ? grad->sample(b).data() : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
            int y = 0;
            double zmax = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) {
                if (tg[c * plane + i] != T(0)) y = c;
                zc[c] = static_cast<double>(z[c * plane + i]);
                zmax = std::max(zmax, zc[c]);
            }
            double acc = 0;
            for (int c = 0; c < C; ++c) acc += std::exp(zc[c] - zmax);
            const double lse = zmax + std::log(acc);
            double u = lse - zc[y];
            const bool floored = static_cast<double>(sp[y * plane + i]) < floor;
            if (floored) u = log_floor;
            if (u < 0) u = 0;
            const double wy = cfg.class_weight(y);
            ce_sum += wy * std::pow(u, gce);
            if (!g) continue;

            // Dice part: gradient w.r.t. probabilities, then through the softmax.
            double dot = 0;
            for (int c = 0; c < C; ++c) {
                gs[c] = 0;
                if (c == 0) continue;
                const double k = coef[b * C + c];
                if (k == 0) continue;
                const double pc = static_cast<double>(sp[c * plane + i]);
                if (cfg.mode == DiceMode::robust_dice && !(pc > floor)) continue;
                const DiceStats& st = stats[b][c];
                const double yc = static_cast<double>(tg[c * plane + i]);
                gs[c] = k * (2 * yc - st.dice) / st.denom;
            }
            for (int c = 0; c < C; ++c) dot += static_cast<double>(sp[c * plane + i]) * gs[c];
            const double ce_k = (!floored && u > 0) ? wy * gce * std::pow(u, gce - 1) / npix : 0.0;
            for (int c = 0; c < C; ++c) {
                const double sc = static_cast<double>(sp[c * plane + i]);
                const double d_dice = sc * (gs[c] - dot);
                const double d_ce = ce_k * (sc - (c == y ? 1.0 : 0.0));
                g[c * plane + i] += static_cast<T>(scale * (cfg.w_dice * d_dice + cfg.w_ce * d_ce));
            }
        }
    }
    out.ce = ce_sum / npix;
    return out;
}

}  // namespace

template <typename T>
std::vector<std::vector<T>> soft_dice_per_label(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                                DiceMode mode, double epsilon, double pred_floor) {
    require_same_shape(pred.shape(), target.shape(), "soft_dice_per_label");
    validate_one_hot(target);
    std::vector<std::vector<T>> out(pred.n(), std::vector<T>(pred.c() - 1));
    for (int b = 0; b < pred.n(); ++b)
        for (int l = 1; l < pred.c(); ++l)
            out[b][l - 1] = static_cast<T>(dice_stats<T>(pred.plane(b, l), target.plane(b, l), mode, epsilon, pred_floor).dice);
    return out;
}

template <typename T>
T exp_log_dice(std::span<const T> dice, std::span<const bool> present, double gamma, double floor,
               PresencePolicy policy) {
    if (present.size() != dice.size()) throw ValidationError("exp_log_dice: presence flags do not match Dice values");
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < dice.size(); ++i) {
        if (policy == PresencePolicy::exclude_missing && !present[i]) continue;
        sum += exp_log_term(static_cast<double>(dice[i]), gamma, floor, 1.0 - floor);
        ++n;
    }
    return static_cast<T>(n ? sum / n : 0.0);
}

template <typename T>
T exp_log_cross_entropy(const BasicTensor<T>& pred, const BasicTensor<T>& target, double gamma,
                        std::span<const double> class_weights) {
    require_same_shape(pred.shape(), target.shape(), "exp_log_cross_entropy");
    const int C = pred.c();
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != C)
        throw ValidationError("exp_log_cross_entropy: class_weights needs one entry per class");
    const std::size_t plane = pred.shape().plane();
    double sum = 0;
    for (int b = 0; b < pred.n(); ++b) {
        auto p = pred.sample(b);
        auto t = target.sample(b);
        for (std::size_t i = 0; i < plane; ++i) {
            int y = 0;
            for (int c = 0; c < C; ++c)
                if (t[c * plane + i] != T(0)) y = c;
            const double w = class_weights.empty() ? 1.0 : class_weights[y];
            const double u = -std::log(static_cast<double>(p[y * plane + i]));
            sum += w * std::pow(std::max(u, 0.0), gamma);
        }
    }
    return static_cast<T>(sum / (static_cast<double>(pred.n()) * plane));
}

template <typename T>
LossBreakdown total_loss(const BasicNetworkOutput<T>& outputs, const BasicTensor<T>& target_onehot,
                         const LossConfig& cfg, std::span<const double> ds_weights, BasicNetworkOutput<T>* grad) {
    const std::size_t n_out = 1 + outputs.aux.size();
    if (ds_weights.size() != n_out)
        throw ValidationError("ds_weights has " + std::to_string(ds_weights.size()) + " entries but there are " +
                              std::to_string(n_out) + " supervised outputs");
    double wsum = 0;
    for (double w : ds_weights) {
        if (!(w >= 0) || !std::isfinite(w)) throw ValidationError("ds_weights must be finite and >= 0");
        wsum += w;
    }
    if (!(wsum > 0)) throw ValidationError("ds_weights must not all be 0");
    const int C = outputs.main.c();
    cfg.validate(C);
    require_same_shape(outputs.main.shape(), target_onehot.shape(), "total_loss");
    for (const auto& a : outputs.aux) require_same_shape(a.shape(), target_onehot.shape(), "total_loss (aux)");
    validate_one_hot(target_onehot);
    const std::vector<int> labels = cfg.labels_for(C);

    if (grad) {
        grad->main = BasicTensor<T>(outputs.main.shape());
        grad->aux.assign(outputs.aux.size(), BasicTensor<T>(outputs.main.shape()));
    }

    LossBreakdown out;
    for (std::size_t o = 0; o < n_out; ++o) {
        const double w = ds_weights[o];
        if (w == 0 && o != 0) continue;
        const BasicTensor<T>& logits = o == 0 ? outputs.main : outputs.aux[o - 1];
        BasicTensor<T>* g = nullptr;
        if (grad && w > 0) g = o == 0 ? &grad->main : &grad->aux[o - 1];
        OutputLoss r = output_loss(logits, target_onehot, cfg, labels, g, w / wsum);
        out.dice_term += w * r.dice / wsum;
        out.ce_term += w * r.ce / wsum;
        if (o == 0) {
            out.per_label_dice.assign(C - 1, 0.0);
            for (const auto& row : r.table)
                for (int l = 0; l < C - 1; ++l) out.per_label_dice[l] += row[l] / r.table.size();
            out.per_image_dice = std::move(r.table);
        }
    }
    out.total = cfg.w_dice * out.dice_term + cfg.w_ce * out.ce_term;
    if (!std::isfinite(out.total)) throw NumericError("loss is not finite");
    return out;
}

#define ECHOSEG_LOSS_INSTANTIATE(T)                                                                             \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> softmax_clamped(const BasicTensor<T>&, double);                                     \
    template BasicTensor<T> one_hot(std::span<const std::uint8_t>, Shape4);                                     \
    template void validate_one_hot(const BasicTensor<T>&);                                                      \
    template std::vector<std::vector<T>> soft_dice_per_label(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                                             DiceMode, double, double);                         \
    template T exp_log_dice(std::span<const T>, std::span<const bool>, double, double, PresencePolicy);         \
    template T exp_log_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&, double,                      \
                                     std::span<const double>);                                                  \
    template LossBreakdown total_loss(const BasicNetworkOutput<T>&, const BasicTensor<T>&, const LossConfig&,   \
                                      std::span<const double>, BasicNetworkOutput<T>*);

ECHOSEG_LOSS_INSTANTIATE(float)
ECHOSEG_LOSS_INSTANTIATE(double)

}  // namespace echoseg

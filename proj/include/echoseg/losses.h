#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "echoseg/network.h"
#include "echoseg/tensor.h"

namespace echoseg {

enum class DiceMode { epsilon_dice, robust_dice };
enum class PresencePolicy { include_missing, exclude_missing };

std::string to_string(DiceMode m);
std::string to_string(PresencePolicy p);
DiceMode parse_dice_mode(const std::string& s);
PresencePolicy parse_presence_policy(const std::string& s);

struct LossConfig {
    double dice_exponent = 0.3;
    double ce_exponent = 0.3;
    double w_dice = 0.8;
    double w_ce = 0.2;
    double pred_floor = 1e-7;      // lower bound on predicted probabilities (robust mode)
    double dice_floor = 1e-7;      // Dice clamped to [dice_floor, 1 - dice_floor]
    double legacy_epsilon = 1e-7;  // smoothing term of the epsilon mode
    DiceMode mode = DiceMode::robust_dice;
    PresencePolicy presence = PresencePolicy::include_missing;
    // Foreground classes entering the Dice mean. Empty means 1..C-1.
    std::vector<int> active_labels;
    // Per-class cross-entropy weights. Empty means all ones.
    std::vector<double> class_weights;

    void validate(int n_classes) const;  // throws ValidationError
    std::vector<int> labels_for(int n_classes) const;
    double class_weight(int c) const { return class_weights.empty() ? 1.0 : class_weights[c]; }

    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossBreakdown {
    double total = 0;
    double dice_term = 0;  // ds-weighted exp-log Dice
    double ce_term = 0;    // ds-weighted exp-log cross-entropy
    // Soft Dice of the main output for labels 1..C-1, averaged over the batch.
    std::vector<double> per_label_dice;
    // Soft Dice of the main output per image, [B][C-1].
    std::vector<std::vector<double>> per_image_dice;
};

// Per-pixel softmax over channels. Throws NumericError on non-finite logits.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Softmax followed by max(p, floor).
template <typename T>
BasicTensor<T> softmax_clamped(const BasicTensor<T>& logits, double floor);

// One-hot encoding of label maps, one B*H*W array of class indices.
template <typename T>
BasicTensor<T> one_hot(std::span<const std::uint8_t> labels, Shape4 shape);

// Throws ValidationError unless every pixel has exactly one channel equal to 1 and the rest 0.
template <typename T>
void validate_one_hot(const BasicTensor<T>& target);

// Soft Dice for foreground labels 1..C-1 of every image, [B][C-1].
// Robust mode floors predictions at pred_floor and returns exactly 0 for absent labels.
// Epsilon mode uses the predictions as given with (2I + eps) / (S + eps).
template <typename T>
std::vector<std::vector<T>> soft_dice_per_label(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                                DiceMode mode, double epsilon, double pred_floor);

// Mean of (-ln clamp(D, floor, 1 - floor))^gamma over labels. With exclude_missing
// only labels flagged present enter the mean. Returns 0 when no label is counted.
template <typename T>
T exp_log_dice(std::span<const T> dice, std::span<const bool> present, double gamma, double floor,
               PresencePolicy policy);

// Mean over pixels of w[y] * (-ln p_y)^gamma.
template <typename T>
T exp_log_cross_entropy(const BasicTensor<T>& pred, const BasicTensor<T>& target, double gamma,
                        std::span<const double> class_weights);

// Combined loss over the main and auxiliary outputs. When `grad` is given it receives
// d(total)/d(logits) for every output.
template <typename T>
LossBreakdown total_loss(const BasicNetworkOutput<T>& outputs, const BasicTensor<T>& target_onehot,
                         const LossConfig& cfg, std::span<const double> ds_weights,
                         BasicNetworkOutput<T>* grad = nullptr);

}  // namespace echoseg

#pragma once

#include <vector>

#include "echoseg/layers.h"

namespace echoseg {

struct ScheduleConfig {
    double lr_min = 1e-4;
    double lr_max = 5e-3;
    int first_cycle_epochs = 50;
    double cycle_mult = 1.31;
    int total_epochs = 200;

    void validate() const;  // throws ValidationError
    friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct ScheduleState {
    int cycle_index = 0;
    double cycle_start = 0;
    double cycle_length = 0;
    double epoch_in_cycle = 0;
};

// Cycle bookkeeping for a real-valued epoch. Throws std::out_of_range when epoch is
// negative or >= total_epochs.
ScheduleState schedule_state(double epoch, const ScheduleConfig& cfg);

// Cosine-annealed learning rate with warm restarts; no decay of lr_max at restarts.
double lr_at(double epoch, const ScheduleConfig& cfg);

// Start epochs of every cycle that begins before total_epochs.
std::vector<double> cycle_starts(const ScheduleConfig& cfg);

// velocity = momentum * velocity + grad; param -= lr * velocity.
// Throws NumericError naming the tensor when a gradient is not finite; nothing is
// modified in that case.
void sgd_step(Parameter& param, Tensor& velocity, double lr, double momentum);

// Classic momentum SGD over a fixed parameter list.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Parameter*> params, double momentum);

    void step(double lr);
    std::vector<Tensor>& velocities() { return velocity_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> velocity_;
    double momentum_;
};

}  // namespace echoseg

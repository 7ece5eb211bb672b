#include "echoseg/optimsched.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "echoseg/errors.h"

namespace echoseg {

void ScheduleConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("schedule config: " + msg); };
    if (!(lr_min >= 0 && lr_min <= lr_max) || !std::isfinite(lr_max)) fail("need 0 <= lr_min <= lr_max");
    if (first_cycle_epochs < 1) fail("first_cycle_epochs must be >= 1");
    if (!(cycle_mult >= 1)) fail("cycle_mult must be >= 1");
    if (total_epochs < 0) fail("total_epochs must be >= 0");
}

ScheduleState schedule_state(double epoch, const ScheduleConfig& cfg) {
    if (!(epoch >= 0) || epoch >= cfg.total_epochs)
        throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(cfg.total_epochs) + ")");
    ScheduleState st;
    st.cycle_length = cfg.first_cycle_epochs;
    while (epoch >= st.cycle_start + st.cycle_length) {
        st.cycle_start += st.cycle_length;
        st.cycle_length *= cfg.cycle_mult;
        ++st.cycle_index;
    }
    st.epoch_in_cycle = epoch - st.cycle_start;
    return st;
}

double lr_at(double epoch, const ScheduleConfig& cfg) {
    const ScheduleState st = schedule_state(epoch, cfg);
    // Written as a convex blend so the endpoints come out exact.
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * st.epoch_in_cycle / st.cycle_length));
    return w * cfg.lr_max + (1.0 - w) * cfg.lr_min;
}

std::vector<double> cycle_starts(const ScheduleConfig& cfg) {
    std::vector<double> out;
    double start = 0, len = cfg.first_cycle_epochs;
    while (start < cfg.total_epochs) {
        out.push_back(start);
        start += len;
        len *= cfg.cycle_mult;
    }
    return out;
}

void sgd_step(Parameter& param, Tensor& velocity, double lr, double momentum) {
    require_same_shape(param.value.shape(), param.grad.shape(), "sgd_step");
    if (velocity.empty()) velocity = Tensor(param.value.shape());
    require_same_shape(param.value.shape(), velocity.shape(), "sgd_step");
    for (float g : param.grad.storage())
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in tensor '" + param.name + "'");
    float* v = velocity.data();
    float* p = param.value.data();
    const float* g = param.grad.data();
    const float m = static_cast<float>(momentum);
    const float a = static_cast<float>(lr);
    for (std::size_t i = 0; i < velocity.size(); ++i) {
        v[i] = m * v[i] + g[i];
        p[i] -= a * v[i];
    }
}

SgdMomentum::SgdMomentum(std::vector<Parameter*> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
    for (Parameter* p : params_) velocity_.emplace_back(p->value.shape());
}

void SgdMomentum::step(double lr) {
    // Check everything first so a bad gradient leaves all parameters untouched.
    for (Parameter* p : params_)
        for (float g : p->grad.storage())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in tensor '" + p->name + "'");
    for (std::size_t i = 0; i < params_.size(); ++i) sgd_step(*params_[i], velocity_[i], lr, momentum_);
}

}  // namespace echoseg

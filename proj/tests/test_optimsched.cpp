#include <cmath>
#include <stdexcept>

#include "catch_amalgamated.hpp"
#include "support.h"

#include "echoseg/errors.h"
#include "echoseg/optimsched.h"

using namespace echoseg;
using Catch::Matchers::WithinAbs;

TEST_CASE("learning rate at the reference epochs") {
    const ScheduleConfig cfg;
    CHECK(lr_at(0, cfg) == 5e-3);
    CHECK(lr_at(25, cfg) == 2.55e-3);
    CHECK(lr_at(50, cfg) == 5e-3);
    CHECK_THAT(lr_at(49.999, cfg), WithinAbs(1e-4, 1e-6));
    CHECK(lr_at(115.5, cfg) == 5e-3);
}

TEST_CASE("three cycles start before epoch 200") {
    const ScheduleConfig cfg;
    const auto starts = cycle_starts(cfg);
    REQUIRE(starts.size() == 3);
    CHECK(starts[0] == 0);
    CHECK_THAT(starts[1], WithinAbs(50, 1e-9));
    CHECK_THAT(starts[2], WithinAbs(115.5, 1e-9));
    // The fourth boundary is past the end of training.
    const ScheduleState last = schedule_state(199.9, cfg);
    CHECK(last.cycle_index == 2);
    CHECK_THAT(last.cycle_start + last.cycle_length, WithinAbs(201.305, 1e-9));
    CHECK_THAT(last.cycle_length, WithinAbs(85.805, 1e-9));
}

TEST_CASE("epochs outside the run raise a range error") {
    const ScheduleConfig cfg;
    CHECK_THROWS_AS(lr_at(200, cfg), std::out_of_range);
    CHECK_THROWS_AS(lr_at(-0.5, cfg), std::out_of_range);
    CHECK_THROWS_AS(lr_at(NAN, cfg), std::out_of_range);
    CHECK_NOTHROW(lr_at(199.999, cfg));
}

TEST_CASE("schedule properties over a fine grid") {
    const ScheduleConfig cfg;
    double prev = INFINITY;
    int prev_cycle = 0;
    for (int i = 0; i < 20000; ++i) {
        const double e = i * 0.01;
        const double lr = lr_at(e, cfg);
        const ScheduleState st = schedule_state(e, cfg);
        CHECK(st.epoch_in_cycle < st.cycle_length);
        CHECK(lr >= cfg.lr_min);
        CHECK(lr <= cfg.lr_max);
        if (st.cycle_index != prev_cycle) {
            // Restart: back to lr_max with no decay.
            CHECK_THAT(lr, WithinAbs(cfg.lr_max, 1e-8));
            prev_cycle = st.cycle_index;
        } else if (i > 0) {
            CHECK(lr < prev);
            CHECK(prev - lr < 1e-5);  // continuous within a cycle
        }
        prev = lr;
    }
}

TEST_CASE("fractional epochs refine the per-epoch values") {
    ScheduleConfig cfg;
    cfg.first_cycle_epochs = 4;
    cfg.cycle_mult = 2;
    cfg.total_epochs = 12;
    CHECK(lr_at(4, cfg) == cfg.lr_max);
    CHECK(lr_at(8, cfg) == 0.5 * cfg.lr_max + 0.5 * cfg.lr_min);
    CHECK(lr_at(2.5, cfg) < lr_at(2.25, cfg));
}

TEST_CASE("schedule config validation") {
    ScheduleConfig c;
    CHECK_NOTHROW(c.validate());
    c.lr_min = 1e-2;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.first_cycle_epochs = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.cycle_mult = 0.9;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.lr_min = c.lr_max = 0;
    CHECK_NOTHROW(c.validate());
    CHECK(lr_at(3.7, c) == 0.0);
}

namespace {
Parameter make_param(std::initializer_list<float> values) {
    Parameter p("w", {1, 1, 1, static_cast<int>(values.size())});
    std::copy(values.begin(), values.end(), p.value.data());
    return p;
}
}  // namespace

TEST_CASE("momentum 0 is plain gradient descent") {
    Parameter p = make_param({1.0f, -2.0f, 0.5f});
    const Tensor before = p.value;
    p.grad = testing::random_tensor<float>(p.value.shape(), 1);
    Tensor v;
    sgd_step(p, v, 0.1, 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.value.data()[i] == before.data()[i] - 0.1f * p.grad.data()[i]);
}

TEST_CASE("momentum recurrence over two steps") {
    Parameter p = make_param({0.0f});
    Tensor v;
    p.grad.data()[0] = 1.0f;
    sgd_step(p, v, 0.1, 0.9);
    sgd_step(p, v, 0.1, 0.9);
    // v1 = g, v2 = 0.9 g + g; total update lr (g + 1.9 g).
    CHECK_THAT(p.value.data()[0], WithinAbs(-0.1 * 2.9, 1e-7));

    p.grad.fill(0.0f);
    const float before = p.value.data()[0];
    const float vel = v.data()[0];
    sgd_step(p, v, 0.1, 0.9);
    CHECK_THAT(p.value.data()[0], WithinAbs(before - 0.1 * 0.9 * vel, 1e-7));
}

TEST_CASE("non-finite gradients abort the step and name the tensor") {
    Parameter a = make_param({1.0f, 2.0f});
    Parameter b = make_param({3.0f});
    b.name = "dec0.conv1.weight";
    a.grad.fill(0.5f);
    b.grad.data()[0] = NAN;
    SgdMomentum opt({&a, &b}, 0.9);
    const Tensor a_before = a.value;
    try {
        opt.step(0.1);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("dec0.conv1.weight") != std::string::npos);
    }
    CHECK(a.value.storage() == a_before.storage());
}

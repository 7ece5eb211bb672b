#pragma once

#include <span>
#include <string>

#include "echoseg/trainer.h"

namespace echoseg {

// Training loss (left axis) and validation Dice (right axis) against epoch, as SVG.
std::string render_curves_svg(std::span<const EpochRecord> records);

}  // namespace echoseg

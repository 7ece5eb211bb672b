#include "echoseg/tensor.h"

namespace echoseg {

std::string to_string(const Shape4& s) {
    return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + "]";
}

}  // namespace echoseg

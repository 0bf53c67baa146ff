#include "cdnn/tensor.hpp"

namespace cdnn {

std::string Shape4::str() const {
  return "(" + std::to_string(b) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

}  // namespace cdnn

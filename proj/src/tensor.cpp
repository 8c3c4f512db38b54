#include "inflect/tensor.hpp"

#include <cstring>

namespace inflect {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::uint64_t checksum(const Tensor& t, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.values().data());
  const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace inflect

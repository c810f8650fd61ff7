#pragma once

#include <string>

#include "xcat/serialize.hpp"
#include "xcat/tensor.hpp"

namespace xcat {

// 8-bit RGB PNG in/out. Grayscale files are promoted to 3 identical
// channels; 16-bit depth and other colour types are format errors.
Tensor<std::uint8_t> load_png(const std::string& path);
void save_png(const Tensor<std::uint8_t>& t, const std::string& path);

// [0,1] float view of an image file and back (round to nearest code).
Tensor<float> load_png_f32(const std::string& path);
void save_png_f32(const Tensor<float>& t, const std::string& path);

}  // namespace xcat

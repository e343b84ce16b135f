#ifndef NETLENS_NPY_HPP
#define NETLENS_NPY_HPP

#include <filesystem>

#include "netlens/tensor.hpp"

namespace netlens {

// NPY v1.0 container, restricted to little-endian float32 in C order:
//
//   \x93NUMPY \x01 \x00 <u16 header-len LE>
//   {'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }<spaces>\n
//   <payload>
//
// The header (magic through newline) is space-padded to a multiple of
// 64 bytes so the payload starts aligned. Anything else - other dtypes,
// Fortran order, format versions past 1.0 - is rejected.

Tensor read_npy(const std::filesystem::path& path);
void write_npy(const Tensor& t, const std::filesystem::path& path);

// Header bytes (magic through padded newline) for a given shape; exposed
// for format tests.
std::string npy_header_bytes(const std::vector<std::size_t>& shape);

} // namespace netlens

#endif

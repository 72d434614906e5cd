#pragma once

// On-disk tensor format: magic "CSGT", u32 rank, u64 dims..., f64 payload,
// all little-endian, row-major. 2-D tensors can additionally be exported as
// CSV for external plotting.

#include <string>

#include "csg/tensor.hpp"

namespace csg {

void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path, bool requires_grad = false);

void write_csv_2d(const Tensor& t, const std::string& path);

// shared helper for deterministic float formatting in CSV/JSON artifacts
std::string format_double(double v);

}  // namespace csg

#pragma once

// Dense-layer kernels for batched MLP passes.
//
// Layout: activations are row-major [batch x features]; weights are row-major
// [out x in]. `omp` variants parallelize over independent output elements, each of
// which is reduced by a single thread in a fixed order, so results do not depend on
// the thread count. `serial` variants are the straightforward reference loops kept
// for testing and benchmarking.

#include <cstddef>
#include <span>

namespace evdispatch::kernels {

struct Shape {
  std::size_t batch;
  std::size_t in;
  std::size_t out;
};

namespace serial {
/// y = x * W^T + b
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   Shape s, std::span<double> y);
/// dx = dy * W
void dense_backward_input(std::span<const double> dy, std::span<const double> w, Shape s,
                          std::span<double> dx);
/// dW += dy^T * x, db += column sums of dy
void dense_backward_params(std::span<const double> dy, std::span<const double> x, Shape s,
                           std::span<double> dw, std::span<double> db);
}  // namespace serial

namespace omp {
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   Shape s, std::span<double> y);
void dense_backward_input(std::span<const double> dy, std::span<const double> w, Shape s,
                          std::span<double> dx);
void dense_backward_params(std::span<const double> dy, std::span<const double> x, Shape s,
                           std::span<double> dw, std::span<double> db);
}  // namespace omp

void relu_inplace(std::span<double> v);
/// Zeroes gradient entries whose forward activation was clipped.
void relu_mask(std::span<const double> activated, std::span<double> grad);

}  // namespace evdispatch::kernels

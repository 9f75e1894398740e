#include "evdispatch/kernels.hpp"

#include <algorithm>

#include "evdispatch/error.hpp"

namespace evdispatch::kernels {

namespace {

void check(std::span<const double> x, std::span<const double> w, Shape s) {
  EVD_REQUIRE(x.size() == s.batch * s.in, "input size does not match batch x in");
  EVD_REQUIRE(w.size() == s.out * s.in, "weight size does not match out x in");
}

// Work below this many multiply-adds stays on the calling thread.
constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace

namespace serial {

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   Shape s, std::span<double> y) {
  check(x, w, s);
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.in; ++i) acc += w[o * s.in + i] * x[n * s.in + i];
      y[n * s.out + o] = acc + b[o];
    }
  }
}

void dense_backward_input(std::span<const double> dy, std::span<const double> w, Shape s,
                          std::span<double> dx) {
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t i = 0; i < s.in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < s.out; ++o) acc += dy[n * s.out + o] * w[o * s.in + i];
      dx[n * s.in + i] = acc;
    }
  }
}

void dense_backward_params(std::span<const double> dy, std::span<const double> x, Shape s,
                           std::span<double> dw, std::span<double> db) {
  for (std::size_t o = 0; o < s.out; ++o) {
    for (std::size_t i = 0; i < s.in; ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < s.batch; ++n) acc += dy[n * s.out + o] * x[n * s.in + i];
      dw[o * s.in + i] += acc;
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) acc += dy[n * s.out + o];
    db[o] += acc;
  }
}

}  // namespace serial

namespace omp {

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   Shape s, std::span<double> y) {
  check(x, w, s);
  const double* xp = x.data();
  const double* wp = w.data();
  const auto total = static_cast<long>(s.batch * s.out);
#pragma omp parallel for schedule(static) if (s.batch * s.out * s.in >= kParallelThreshold)
  for (long k = 0; k < total; ++k) {
    const std::size_t n = static_cast<std::size_t>(k) / s.out;
    const std::size_t o = static_cast<std::size_t>(k) % s.out;
    const double* wr = wp + o * s.in;
    const double* xr = xp + n * s.in;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t i = 0; i < s.in; ++i) acc += wr[i] * xr[i];
    y[static_cast<std::size_t>(k)] = acc + b[o];
  }
}

void dense_backward_input(std::span<const double> dy, std::span<const double> w, Shape s,
                          std::span<double> dx) {
  const auto batch = static_cast<long>(s.batch);
#pragma omp parallel for schedule(static) if (s.batch * s.out * s.in >= kParallelThreshold)
  for (long nn = 0; nn < batch; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    double* row = dx.data() + n * s.in;
    std::fill(row, row + s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = dy[n * s.out + o];
      if (g == 0.0) continue;
      const double* wr = w.data() + o * s.in;
#pragma omp simd
      for (std::size_t i = 0; i < s.in; ++i) row[i] += g * wr[i];
    }
  }
}

void dense_backward_params(std::span<const double> dy, std::span<const double> x, Shape s,
                           std::span<double> dw, std::span<double> db) {
  const auto out = static_cast<long>(s.out);
#pragma omp parallel for schedule(static) if (s.batch * s.out * s.in >= kParallelThreshold)
  for (long oo = 0; oo < out; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    double* row = dw.data() + o * s.in;
    double bias = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const double g = dy[n * s.out + o];
      bias += g;
      if (g == 0.0) continue;
      const double* xr = x.data() + n * s.in;
#pragma omp simd
      for (std::size_t i = 0; i < s.in; ++i) row[i] += g * xr[i];
    }
    db[o] += bias;
  }
}

}  // namespace omp

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_mask(std::span<const double> activated, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activated[i] > 0.0)) grad[i] = 0.0;
}

}  // namespace evdispatch::kernels

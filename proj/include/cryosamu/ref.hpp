#ifndef CRYOSAMU_REF_HPP
#define CRYOSAMU_REF_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "cryosamu/density_map.hpp"
#include "cryosamu/sim.hpp"
#include "cryosamu/structure.hpp"

// Serial reference implementations. These are deliberately plain loops,
// independent of the OpenMP kernels; tests compare against them and the
// benchmark target measures the speedup.
namespace cryosamu::ref {

/// Direct 7-loop cross-correlation, zero padding.
void conv3d_naive(const float* x, int64_t B, int64_t Cin, int64_t D, int64_t H, int64_t W,
                  const float* w, int64_t Cout, int64_t kd, int64_t kh, int64_t kw,
                  const float* bias, int64_t stride, int64_t pad, float* y);

/// Row-major (M,K)x(K,N) per batch with optional transposes.
void bmm_naive(const float* A, bool trans_a, const float* B, bool trans_b, float* C,
               int64_t batch, int64_t M, int64_t N, int64_t K);

/// Per-atom accumulation order (outer loop over atoms), no cell list.
DensityMap simulate_naive(const ProteinStructure& s, const SimParams& p, const GridGeometry& grid);

/// O(N^2) discrete Fourier transform per axis triple; only usable for tiny
/// grids. dims X fastest, matching DensityMap storage.
std::vector<std::complex<double>> dft3_naive(const std::vector<float>& data, const Dims3& dims);

/// Two-pass Pearson correlation.
double pearson_naive(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace cryosamu::ref

#endif

#include "cryosamu/ref.hpp"

#include <cmath>
#include <numbers>

namespace cryosamu::ref {

void conv3d_naive(const float* x, int64_t B, int64_t Cin, int64_t D, int64_t H, int64_t W,
                  const float* w, int64_t Cout, int64_t kd, int64_t kh, int64_t kw,
                  const float* bias, int64_t stride, int64_t pad, float* y) {
    const int64_t od = (D + 2 * pad - kd) / stride + 1;
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Cout; ++oc)
            for (int64_t oz = 0; oz < od; ++oz)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double acc = bias ? bias[oc] : 0.0;
                        for (int64_t ic = 0; ic < Cin; ++ic)
                            for (int64_t kz = 0; kz < kd; ++kz)
                                for (int64_t ky = 0; ky < kh; ++ky)
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        const int64_t iz = oz * stride + kz - pad;
                                        const int64_t iy = oy * stride + ky - pad;
                                        const int64_t ix = ox * stride + kx - pad;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 ||
                                            ix >= W)
                                            continue;
                                        acc += double(w[(((oc * Cin + ic) * kd + kz) * kh + ky) *
                                                            kw +
                                                        kx]) *
                                               double(x[(((b * Cin + ic) * D + iz) * H + iy) * W +
                                                        ix]);
                                    }
                        y[(((b * Cout + oc) * od + oz) * oh + oy) * ow + ox] = float(acc);
                    }
}

void bmm_naive(const float* A, bool trans_a, const float* B, bool trans_b, float* C, int64_t batch,
               int64_t M, int64_t N, int64_t K) {
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t m = 0; m < M; ++m)
            for (int64_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (int64_t k = 0; k < K; ++k) {
                    const float av = trans_a ? A[b * M * K + k * M + m] : A[b * M * K + m * K + k];
                    const float bv = trans_b ? B[b * K * N + n * K + k] : B[b * K * N + k * N + n];
                    acc += double(av) * double(bv);
                }
                C[b * M * N + m * N + n] = float(acc);
            }
}

DensityMap simulate_naive(const ProteinStructure& s, const SimParams& p,
                          const GridGeometry& grid) {
    DensityMap out(grid.dims);
    out.voxel_size = grid.voxel_size;
    out.origin = grid.origin;

    std::vector<double> acc(out.data.size(), 0.0);
    const double cutoff2 = p.cutoff_radius * p.cutoff_radius;
    for (const Chain& chain : s.chains)
        for (const Residue& res : chain.residues)
            for (const Atom& a : res.atoms) {
                // Per-atom bounding box of affected voxels.
                int64_t lo[3], hi[3];
                for (int i = 0; i < 3; ++i) {
                    const double c = (a.position[i] - grid.origin[i]) / grid.voxel_size[i];
                    const double r = p.cutoff_radius / grid.voxel_size[i];
                    lo[i] = std::max<int64_t>(0, int64_t(std::ceil(c - r)));
                    hi[i] = std::min<int64_t>(grid.dims[i] - 1, int64_t(std::floor(c + r)));
                }
                for (int64_t z = lo[2]; z <= hi[2]; ++z)
                    for (int64_t y = lo[1]; y <= hi[1]; ++y)
                        for (int64_t x = lo[0]; x <= hi[0]; ++x) {
                            const Vec3 d = out.position(x, y, z) - a.position;
                            const double r2 = d.norm2();
                            if (r2 > cutoff2) continue;
                            acc[size_t(out.index(x, y, z))] +=
                                p.theta * double(a.element_number) * std::exp(-p.k * r2);
                        }
            }
    for (size_t i = 0; i < acc.size(); ++i) out.data[i] = float(acc[i]);
    return out;
}

std::vector<std::complex<double>> dft3_naive(const std::vector<float>& data, const Dims3& dims) {
    const int64_t nx = dims[0], ny = dims[1], nz = dims[2];
    std::vector<std::complex<double>> out(data.size());
    for (int64_t kz = 0; kz < nz; ++kz)
        for (int64_t ky = 0; ky < ny; ++ky)
            for (int64_t kx = 0; kx < nx; ++kx) {
                std::complex<double> acc(0.0, 0.0);
                for (int64_t z = 0; z < nz; ++z)
                    for (int64_t y = 0; y < ny; ++y)
                        for (int64_t x = 0; x < nx; ++x) {
                            const double phase =
                                -2.0 * std::numbers::pi *
                                (double(kx * x) / double(nx) + double(ky * y) / double(ny) +
                                 double(kz * z) / double(nz));
                            acc += double(data[size_t((z * ny + y) * nx + x)]) *
                                   std::complex<double>(std::cos(phase), std::sin(phase));
                        }
                out[size_t((kz * ny + ky) * nx + kx)] = acc;
            }
    return out;
}

double pearson_naive(const std::vector<float>& a, const std::vector<float>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace cryosamu::ref

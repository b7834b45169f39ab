#include "cryosamu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <fftw3.h>

namespace cryosamu {

namespace {

void check_same_grid(const DensityMap& a, const DensityMap& b, const char* op) {
    if (a.dims != b.dims)
        throw config_error(std::string(op) + ": mismatched grids (dims differ)");
    for (int i = 0; i < 3; ++i)
        if (std::abs(a.voxel_size[i] - b.voxel_size[i]) > 1e-6)
            throw config_error(std::string(op) + ": mismatched grids (voxel size differs)");
}

/// Pearson over a subset of linear indices (all when idx is null), two-pass
/// in double, accumulated in index order.
double pearson_over(const std::vector<float>& a, const std::vector<float>& b,
                    const std::vector<int64_t>* idx, const char* op) {
    const int64_t n = idx ? int64_t(idx->size()) : int64_t(a.size());
    if (n < 2) throw numeric_error(std::string(op) + ": fewer than 2 points");
    auto va = [&](int64_t i) { return double(a[size_t(idx ? (*idx)[size_t(i)] : i)]); };
    auto vb = [&](int64_t i) { return double(b[size_t(idx ? (*idx)[size_t(i)] : i)]); };

    double ma = 0, mb = 0;
    for (int64_t i = 0; i < n; ++i) {
        ma += va(i);
        mb += vb(i);
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0, sa = 0, sb = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double da = va(i) - ma, db = vb(i) - mb;
        cov += da * db;
        sa += da * da;
        sb += db * db;
    }
    if (sa <= 0.0 || sb <= 0.0)
        throw numeric_error(std::string(op) + ": zero variance input");
    return cov / std::sqrt(sa * sb);
}

/// Indices of the k largest values; ties broken toward the lower index.
std::vector<int64_t> top_k_indices(const std::vector<float>& v, int64_t k) {
    std::vector<int64_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t x, int64_t y) {
        if (v[size_t(x)] != v[size_t(y)]) return v[size_t(x)] > v[size_t(y)];
        return x < y;
    });
    idx.resize(size_t(std::min<int64_t>(k, int64_t(idx.size()))));
    return idx;
}

}  // namespace

double cc_box(const DensityMap& a, const DensityMap& b) {
    check_same_grid(a, b, "cc_box");
    return pearson_over(a.data, b.data, nullptr, "cc_box");
}

double cc_volume(const DensityMap& exp_map, const DensityMap& model_map,
                 const ProteinStructure& s, double voxel_volume, const CcOptions& opts) {
    check_same_grid(exp_map, model_map, "cc_volume");
    if (!(voxel_volume > 0)) throw config_error("cc_volume: voxel volume must be positive");

    // Candidate points: voxels within atom_radius of any atom center.
    std::vector<char> candidate(exp_map.data.size(), 0);
    int64_t n_atoms = 0;
    const double r = opts.atom_radius;
    const double r2 = r * r;
    for (const Chain& chain : s.chains)
        for (const Residue& res : chain.residues)
            for (const Atom& atom : res.atoms) {
                ++n_atoms;
                int64_t lo[3], hi[3];
                bool in_grid = true;
                for (int i = 0; i < 3; ++i) {
                    const double c =
                        (atom.position[i] - exp_map.origin[i]) / exp_map.voxel_size[i];
                    lo[i] = std::max<int64_t>(0, int64_t(std::ceil(c - r / exp_map.voxel_size[i])));
                    hi[i] = std::min<int64_t>(exp_map.dims[i] - 1,
                                              int64_t(std::floor(c + r / exp_map.voxel_size[i])));
                    if (c < -r / exp_map.voxel_size[i] ||
                        c > double(exp_map.dims[i] - 1) + r / exp_map.voxel_size[i])
                        in_grid = false;
                }
                if (!in_grid) continue;
                for (int64_t z = lo[2]; z <= hi[2]; ++z)
                    for (int64_t y = lo[1]; y <= hi[1]; ++y)
                        for (int64_t x = lo[0]; x <= hi[0]; ++x) {
                            const Vec3 dvec = exp_map.position(x, y, z) - atom.position;
                            if (dvec.norm2() <= r2) candidate[size_t(exp_map.index(x, y, z))] = 1;
                        }
            }
    if (n_atoms == 0) throw numeric_error("cc_volume: structure has no atoms");

    std::vector<int64_t> cand_idx;
    for (size_t i = 0; i < candidate.size(); ++i)
        if (candidate[i]) cand_idx.push_back(int64_t(i));
    if (cand_idx.empty()) throw numeric_error("cc_volume: no atoms inside the grid");

    int64_t N = int64_t(std::llround(double(n_atoms) * opts.v_atom / voxel_volume));
    N = std::min<int64_t>(N, int64_t(cand_idx.size()));
    if (N < 2) throw numeric_error("cc_volume: selection smaller than 2 points");

    std::stable_sort(cand_idx.begin(), cand_idx.end(), [&](int64_t x, int64_t y) {
        const float mx = model_map.data[size_t(x)], my = model_map.data[size_t(y)];
        if (mx != my) return mx > my;
        return x < y;
    });
    cand_idx.resize(size_t(N));
    std::sort(cand_idx.begin(), cand_idx.end());
    return pearson_over(exp_map.data, model_map.data, &cand_idx, "cc_volume");
}

double cc_peaks(const DensityMap& a, const DensityMap& b, double fraction) {
    check_same_grid(a, b, "cc_peaks");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw config_error("cc_peaks: fraction must be in (0,1]");
    const int64_t k = int64_t(std::ceil(fraction * double(a.size())));

    std::vector<char> in_union(a.data.size(), 0);
    for (int64_t i : top_k_indices(a.data, k)) in_union[size_t(i)] = 1;
    for (int64_t i : top_k_indices(b.data, k)) in_union[size_t(i)] = 1;
    std::vector<int64_t> idx;
    for (size_t i = 0; i < in_union.size(); ++i)
        if (in_union[i]) idx.push_back(int64_t(i));
    return pearson_over(a.data, b.data, &idx, "cc_peaks");
}

FscCurve fsc(const DensityMap& a, const DensityMap& b) {
    check_same_grid(a, b, "fsc");
    const double voxel = a.voxel_size.x;
    if (std::abs(a.voxel_size.y - voxel) > 1e-6 || std::abs(a.voxel_size.z - voxel) > 1e-6)
        throw config_error("fsc: voxels must be isotropic (resample first)");

    // Zero-pad to the smallest enclosing cube; shell geometry assumes a
    // cubic grid.
    const int64_t N = std::max({a.dims[0], a.dims[1], a.dims[2]});
    const int64_t total = N * N * N;

    auto run_fft = [&](const DensityMap& m) {
        std::vector<std::complex<double>> in(static_cast<size_t>(total));
        for (int64_t z = 0; z < m.dims[2]; ++z)
            for (int64_t y = 0; y < m.dims[1]; ++y)
                for (int64_t x = 0; x < m.dims[0]; ++x)
                    in[size_t((z * N + y) * N + x)] = double(m.data[m.index(x, y, z)]);
        std::vector<std::complex<double>> out(static_cast<size_t>(total));
        fftw_plan plan = fftw_plan_dft_3d(int(N), int(N), int(N),
                                          reinterpret_cast<fftw_complex*>(in.data()),
                                          reinterpret_cast<fftw_complex*>(out.data()),
                                          FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
        return out;
    };
    const auto fa = run_fft(a);
    const auto fb = run_fft(b);

    const int64_t n_shells = N / 2 + 1;  // shell index 0..N/2
    std::vector<double> cross(size_t(n_shells), 0.0), pa(size_t(n_shells), 0.0),
        pb(size_t(n_shells), 0.0);
    for (int64_t kz = 0; kz < N; ++kz) {
        const int64_t fz = kz <= N / 2 ? kz : kz - N;
        for (int64_t ky = 0; ky < N; ++ky) {
            const int64_t fy = ky <= N / 2 ? ky : ky - N;
            for (int64_t kx = 0; kx < N; ++kx) {
                const int64_t fx = kx <= N / 2 ? kx : kx - N;
                const double radius = std::sqrt(double(fx * fx + fy * fy + fz * fz));
                const int64_t shell = int64_t(std::llround(radius));
                if (shell >= n_shells) continue;
                const auto va = fa[size_t((kz * N + ky) * N + kx)];
                const auto vb = fb[size_t((kz * N + ky) * N + kx)];
                cross[size_t(shell)] += (va * std::conj(vb)).real();
                pa[size_t(shell)] += std::norm(va);
                pb[size_t(shell)] += std::norm(vb);
            }
        }
    }

    FscCurve curve;
    std::vector<double> all_fsc(size_t(n_shells), 0.0);
    for (int64_t s = 0; s < n_shells; ++s) {
        const double denom = std::sqrt(pa[size_t(s)] * pb[size_t(s)]);
        all_fsc[size_t(s)] = denom > 0.0 ? cross[size_t(s)] / denom : 0.0;
    }
    for (int64_t s = 1; s < n_shells; ++s) {
        curve.shell_centers.push_back(double(s) / (double(N) * voxel));
        curve.fsc.push_back(all_fsc[size_t(s)]);
    }

    // First downward 0.5 crossing, DC excluded, linearly interpolated.
    curve.at_nyquist = true;
    curve.fsc05 = 2.0 * voxel;
    for (size_t i = 0; i < curve.fsc.size(); ++i) {
        if (curve.fsc[i] < 0.5) {
            const double f_hi = curve.shell_centers[i];
            const double v_hi = curve.fsc[i];
            double f_lo, v_lo;
            if (i == 0) {
                f_lo = 0.0;
                v_lo = all_fsc[0];
            } else {
                f_lo = curve.shell_centers[i - 1];
                v_lo = curve.fsc[i - 1];
            }
            const double t =
                std::clamp((v_lo - 0.5) / std::max(1e-12, v_lo - v_hi), 0.0, 1.0);
            const double f_cross = f_lo + t * (f_hi - f_lo);
            // Crossing below the first shell center degenerates to the
            // shell itself rather than an unbounded resolution.
            curve.fsc05 = 1.0 / std::max(f_cross, 0.5 * curve.shell_centers[0]);
            curve.at_nyquist = false;
            break;
        }
    }
    return curve;
}

double RsccReport::improved_fraction(const RsccReport& baseline) const {
    int64_t matched = 0, improved = 0;
    for (const RsccEntry& e : residues) {
        if (!e.present) continue;
        for (const RsccEntry& be : baseline.residues) {
            if (be.present && be.chain == e.chain && be.seq == e.seq) {
                ++matched;
                if (e.rscc > be.rscc) ++improved;
                break;
            }
        }
    }
    return matched == 0 ? 0.0 : double(improved) / double(matched);
}

RsccReport rscc(const DensityMap& exp_map, const ProteinStructure& s, const SimParams& p,
                double support_threshold, int64_t min_support) {
    exp_map.validate();
    RsccReport report;
    const GridGeometry grid = GridGeometry::of(exp_map);

    // Model density of the whole structure; each residue's own density only
    // defines the support region it is scored on.
    DensityMap model(grid.dims);
    model.voxel_size = grid.voxel_size;
    model.origin = grid.origin;
    {
        std::vector<Vec3> positions;
        std::vector<int> zs;
        for (const Chain& chain : s.chains)
            for (const Residue& res : chain.residues)
                for (const Atom& a : res.atoms) {
                    positions.push_back(a.position);
                    zs.push_back(a.element_number);
                }
        if (positions.empty()) throw numeric_error("rscc: structure has no atoms");
        splat_gaussians(positions, zs, p, model);
    }

    for (const Chain& chain : s.chains) {
        double sum = 0.0;
        int64_t count = 0;
        for (const Residue& res : chain.residues) {
            RsccEntry entry;
            entry.chain = chain.id;
            entry.seq = res.seq_id;

            bool out_of_grid = false;
            DensityMap own = residue_density(s, chain.id, res.seq_id, p, grid, &out_of_grid);
            float peak = 0.0f;
            for (float v : own.data) peak = std::max(peak, v);
            std::vector<int64_t> support;
            if (peak > 0.0f) {
                const float thr = float(support_threshold) * peak;
                for (size_t i = 0; i < own.data.size(); ++i)
                    if (own.data[i] > thr) support.push_back(int64_t(i));
            }
            if (out_of_grid || int64_t(support.size()) < min_support) {
                entry.present = false;
                report.residues.push_back(entry);
                continue;
            }
            try {
                entry.rscc = pearson_over(exp_map.data, model.data, &support, "rscc");
            } catch (const Error&) {
                entry.present = false;
                report.residues.push_back(entry);
                continue;
            }
            report.residues.push_back(entry);
            sum += entry.rscc;
            ++count;
        }
        if (count > 0) report.chain_means[chain.id] = sum / double(count);
    }
    return report;
}

}  // namespace cryosamu

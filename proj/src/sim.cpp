#include "cryosamu/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cryosamu {

namespace {

struct AtomList {
    std::vector<Vec3> positions;
    std::vector<int> zs;
};

AtomList collect_atoms(const ProteinStructure& s) {
    AtomList out;
    for (const Chain& c : s.chains)
        for (const Residue& r : c.residues)
            for (const Atom& a : r.atoms) {
                out.positions.push_back(a.position);
                out.zs.push_back(a.element_number);
            }
    return out;
}

}  // namespace

void SimParams::validate() const {
    if (!(resolution > 0)) throw config_error("resolution must be positive");
    if (!(grid_interval > 0)) throw config_error("grid interval must be positive");
    if (!(k > 0) || !(theta > 0) || !(cutoff_radius > 0))
        throw config_error("simulation parameters not derived (k/theta/cutoff unset)");
}

SimParams derive_params(double resolution, double grid_interval) {
    if (!(resolution > 0)) throw config_error("resolution must be positive");
    if (resolution > 100.0)
        throw config_error("resolution " + std::to_string(resolution) +
                           " A is too coarse; the truncated kernel would lose mass at grid scale");
    if (!(grid_interval > 0)) throw config_error("grid interval must be positive");
    SimParams p;
    p.resolution = resolution;
    p.grid_interval = grid_interval;
    p.k = 4.0 * std::numbers::ln2 / (resolution * resolution);
    p.theta = std::pow(p.k / std::numbers::pi, 1.5);
    p.cutoff_radius = 4.0 / std::sqrt(p.k);
    return p;
}

void splat_gaussians(const std::vector<Vec3>& positions, const std::vector<int>& zs,
                     const SimParams& p, DensityMap& grid) {
    p.validate();
    const size_t n_atoms = positions.size();
    if (n_atoms == 0) return;

    // Per-atom voxel boxes, precomputed once. Threads own disjoint z-slabs
    // and each walks the atoms in index order, so every voxel accumulates
    // its contributions in the same order regardless of the schedule.
    struct AtomBox {
        int64_t lo[3], hi[3];
        Vec3 pos;
        double weight;
    };
    std::vector<AtomBox> boxes;
    boxes.reserve(n_atoms);
    int64_t zmin = grid.dims[2], zmax = -1;
    for (size_t i = 0; i < n_atoms; ++i) {
        AtomBox b;
        b.pos = positions[i];
        b.weight = p.theta * double(zs[i]);
        bool empty = false;
        for (int axis = 0; axis < 3; ++axis) {
            const double c = (positions[i][axis] - grid.origin[axis]) / grid.voxel_size[axis];
            const double r = p.cutoff_radius / grid.voxel_size[axis];
            b.lo[axis] = std::max<int64_t>(0, int64_t(std::ceil(c - r)));
            b.hi[axis] = std::min<int64_t>(grid.dims[axis] - 1, int64_t(std::floor(c + r)));
            if (b.lo[axis] > b.hi[axis]) empty = true;
        }
        if (empty) continue;
        zmin = std::min(zmin, b.lo[2]);
        zmax = std::max(zmax, b.hi[2]);
        boxes.push_back(b);
    }
    if (boxes.empty()) return;

    const double cutoff2 = p.cutoff_radius * p.cutoff_radius;
    const int64_t nx = grid.dims[0], ny = grid.dims[1];

#pragma omp parallel
    {
        std::vector<double> slab(static_cast<size_t>(nx * ny));
#pragma omp for schedule(dynamic, 1)
        for (int64_t z = zmin; z <= zmax; ++z) {
            std::fill(slab.begin(), slab.end(), 0.0);
            const double pz = grid.origin.z + z * grid.voxel_size.z;
            for (const AtomBox& b : boxes) {
                if (z < b.lo[2] || z > b.hi[2]) continue;
                const double dz = pz - b.pos.z;
                const double dz2 = dz * dz;
                for (int64_t y = b.lo[1]; y <= b.hi[1]; ++y) {
                    const double dy = grid.origin.y + y * grid.voxel_size.y - b.pos.y;
                    const double dyz2 = dz2 + dy * dy;
                    if (dyz2 > cutoff2) continue;
                    double* row = slab.data() + y * nx;
                    for (int64_t x = b.lo[0]; x <= b.hi[0]; ++x) {
                        const double dx = grid.origin.x + x * grid.voxel_size.x - b.pos.x;
                        const double r2 = dyz2 + dx * dx;
                        if (r2 > cutoff2) continue;
                        row[x] += b.weight * std::exp(-p.k * r2);
                    }
                }
            }
            float* out = grid.data.data() + z * nx * ny;
            for (int64_t i = 0; i < nx * ny; ++i) out[i] = float(double(out[i]) + slab[size_t(i)]);
        }
    }
}

SimulatedMap simulate_map(const ProteinStructure& s, const SimParams& p,
                          const std::optional<GridGeometry>& grid) {
    p.validate();
    AtomList atoms = collect_atoms(s);
    if (atoms.positions.empty()) throw numeric_error("structure has no heavy atoms");

    Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
    Vec3 hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
            std::numeric_limits<double>::lowest()};
    for (const Vec3& r : atoms.positions) {
        lo = {std::min(lo.x, r.x), std::min(lo.y, r.y), std::min(lo.z, r.z)};
        hi = {std::max(hi.x, r.x), std::max(hi.y, r.y), std::max(hi.z, r.z)};
    }

    const double margin = p.cutoff_radius;  // >= 3/sqrt(k)
    SimulatedMap out;
    out.params = p;
    out.bbox_min = lo - Vec3{margin, margin, margin};
    out.bbox_max = hi + Vec3{margin, margin, margin};

    if (grid) {
        // An explicit grid must cover every atom.
        for (const Vec3& r : atoms.positions) {
            for (int i = 0; i < 3; ++i) {
                double g0 = grid->origin[i];
                double g1 = grid->origin[i] + (grid->dims[i] - 1) * grid->voxel_size[i];
                if (r[i] < g0 - 1e-9 || r[i] > g1 + 1e-9)
                    throw numeric_error("explicit grid does not cover the structure on axis " +
                                        std::to_string(i));
            }
        }
        out.map = DensityMap(grid->dims);
        out.map.voxel_size = grid->voxel_size;
        out.map.origin = grid->origin;
    } else {
        const double h = p.grid_interval;
        Dims3 dims;
        Vec3 origin;
        double o[3], e[3];
        for (int i = 0; i < 3; ++i) {
            o[i] = std::floor(out.bbox_min[i] / h) * h;
            e[i] = std::ceil(out.bbox_max[i] / h) * h;
            dims[i] = int64_t(std::llround((e[i] - o[i]) / h)) + 1;
        }
        origin = {o[0], o[1], o[2]};
        out.map = DensityMap(dims);
        out.map.voxel_size = {h, h, h};
        out.map.origin = origin;
    }

    splat_gaussians(atoms.positions, atoms.zs, p, out.map);
    return out;
}

DensityMap residue_density(const ProteinStructure& s, const std::string& chain_id, int seq_id,
                           const SimParams& p, const GridGeometry& grid, bool* out_of_grid) {
    p.validate();
    const Chain* chain = s.find_chain(chain_id);
    if (!chain) throw numeric_error("unknown chain '" + chain_id + "'");
    const Residue* res = nullptr;
    for (const Residue& r : chain->residues)
        if (r.seq_id == seq_id) {
            res = &r;
            break;
        }
    if (!res)
        throw numeric_error("unknown residue " + chain_id + "/" + std::to_string(seq_id));

    DensityMap out(grid.dims);
    out.voxel_size = grid.voxel_size;
    out.origin = grid.origin;

    std::vector<Vec3> positions;
    std::vector<int> zs;
    bool any_inside = false;
    for (const Atom& a : res->atoms) {
        positions.push_back(a.position);
        zs.push_back(a.element_number);
        bool inside = true;
        for (int i = 0; i < 3; ++i) {
            double g0 = grid.origin[i] - p.cutoff_radius;
            double g1 = grid.origin[i] + (grid.dims[i] - 1) * grid.voxel_size[i] + p.cutoff_radius;
            if (a.position[i] < g0 || a.position[i] > g1) inside = false;
        }
        any_inside = any_inside || inside;
    }
    if (out_of_grid) *out_of_grid = !any_inside;
    if (!any_inside) return out;

    splat_gaussians(positions, zs, p, out);
    return out;
}

}  // namespace cryosamu

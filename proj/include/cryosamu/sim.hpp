#ifndef CRYOSAMU_SIM_HPP
#define CRYOSAMU_SIM_HPP

#include <optional>
#include <vector>

#include "cryosamu/density_map.hpp"
#include "cryosamu/structure.hpp"

namespace cryosamu {

/// Gaussian point-spread parameters. k is chosen so the per-atom Gaussian
/// has FWHM equal to the resolution; theta normalizes each atom's
/// continuous integral to its atomic number Z.
struct SimParams {
    double resolution = 2.0;     // Angstrom
    double grid_interval = 1.0;  // Angstrom per voxel
    double k = 0.0;              // decay constant, 1/A^2
    double theta = 0.0;          // amplitude scale
    double cutoff_radius = 0.0;  // Angstrom, contribution truncated beyond

    void validate() const;
};

/// Grid geometry without data, used to request simulation on an existing
/// grid (e.g. an experimental map's).
struct GridGeometry {
    Dims3 dims = {0, 0, 0};
    Vec3 voxel_size = {1.0, 1.0, 1.0};
    Vec3 origin = {0.0, 0.0, 0.0};

    static GridGeometry of(const DensityMap& m) { return {m.dims, m.voxel_size, m.origin}; }
};

struct SimulatedMap {
    DensityMap map;
    SimParams params;
    Vec3 bbox_min, bbox_max;  // structure bounding box + margin, Angstrom
};

/// k = 4 ln2 / resolution^2, theta = (k/pi)^(3/2), cutoff = 4/sqrt(k).
/// Rejects non-positive resolution and resolution > 100 A (cutoff-mass
/// guard at grid scale).
SimParams derive_params(double resolution, double grid_interval = 1.0);

/// Sum of truncated Gaussians theta * Z_i * exp(-k |x - r_i|^2) over all
/// heavy atoms, evaluated at grid nodes. Without an explicit grid, the grid
/// spans the structure bbox plus margin, with origin snapped to integer
/// multiples of grid_interval. Deterministic for any thread count.
SimulatedMap simulate_map(const ProteinStructure& s, const SimParams& p,
                          const std::optional<GridGeometry>& grid = std::nullopt);

/// Same kernel restricted to one residue's atoms, on a fixed grid. A
/// residue entirely outside the grid yields an all-zero map and sets
/// *out_of_grid when given.
DensityMap residue_density(const ProteinStructure& s, const std::string& chain_id, int seq_id,
                           const SimParams& p, const GridGeometry& grid,
                           bool* out_of_grid = nullptr);

/// Internal kernel shared by simulate_map/residue_density: splat a set of
/// (position, Z) sources onto a grid. Exposed for the benchmark target.
void splat_gaussians(const std::vector<Vec3>& positions, const std::vector<int>& zs,
                     const SimParams& p, DensityMap& grid);

}  // namespace cryosamu

#endif

#ifndef CRYOSAMU_METRICS_HPP
#define CRYOSAMU_METRICS_HPP

#include <map>
#include <string>
#include <vector>

#include "cryosamu/density_map.hpp"
#include "cryosamu/sim.hpp"
#include "cryosamu/structure.hpp"

namespace cryosamu {

struct CcOptions {
    double v_atom = 16.0;       // per-atom volume budget, A^3
    double atom_radius = 3.0;   // candidate-point cutoff around atom centers, A
    double peak_fraction = 0.1; // default top fraction for cc_peaks
};

/// Pearson correlation over all voxels of two same-grid maps.
double cc_box(const DensityMap& a, const DensityMap& b);

/// Pearson over the N = round(n_atoms * v_atom / voxel_volume) highest
/// model-density points within atom_radius of any atom center.
double cc_volume(const DensityMap& exp_map, const DensityMap& model_map,
                 const ProteinStructure& s, double voxel_volume, const CcOptions& opts = {});

/// Pearson over the union of each map's own top ceil(fraction * V) voxels.
double cc_peaks(const DensityMap& a, const DensityMap& b, double fraction);

struct FscCurve {
    std::vector<double> shell_centers;  // 1/A, strictly increasing, DC excluded
    std::vector<double> fsc;            // per shell, in [-1, 1]
    double fsc05 = 0.0;                 // A at the first downward 0.5 crossing
    bool at_nyquist = false;            // no crossing: fsc05 = 2 * voxel size
};

/// Unmasked Fourier shell correlation; non-cubic maps are zero-padded to
/// the smallest enclosing cube. Requires isotropic voxels.
FscCurve fsc(const DensityMap& a, const DensityMap& b);

struct RsccEntry {
    std::string chain;
    int seq = 0;
    double rscc = 0.0;
    bool present = true;  // false when support < min_support voxels
};

struct RsccReport {
    std::vector<RsccEntry> residues;
    std::map<std::string, double> chain_means;

    /// Fraction of matched present residues whose rscc strictly improved
    /// over the baseline (ties count as not improved).
    double improved_fraction(const RsccReport& baseline) const;
};

/// Per-residue real-space correlation between the experimental map and
/// each residue's simulated density, over the support where the simulated
/// density exceeds support_threshold of its peak.
RsccReport rscc(const DensityMap& exp_map, const ProteinStructure& s, const SimParams& p,
                double support_threshold = 0.01, int64_t min_support = 8);

}  // namespace cryosamu

#endif

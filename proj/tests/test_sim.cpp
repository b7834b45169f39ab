#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>

#include "cryosamu/ref.hpp"
#include "cryosamu/sim.hpp"
#include "testutil.hpp"

using namespace cryosamu;
using testutil::pdb_atom_line;

namespace {

ProteinStructure single_atom(const std::string& elem, int z_expected, double x, double y,
                             double z) {
    ProteinStructure s =
        parse_pdb_string(pdb_atom_line(1, elem, "ALA", 'A', 1, x, y, z, elem) + "\n");
    REQUIRE(s.chains[0].residues[0].atoms[0].element_number == z_expected);
    return s;
}

double map_integral(const DensityMap& m) {
    double acc = 0.0;
    for (float v : m.data) acc += v;
    return acc * m.voxel_volume();
}

}  // namespace

TEST_CASE("derive_params arithmetic oracle at 2 A") {
    SimParams p = derive_params(2.0);
    const double k_expected = 4.0 * std::log(2.0) / 4.0;
    const double theta_expected = std::pow(k_expected / M_PI, 1.5);
    CHECK(p.k == doctest::Approx(k_expected).epsilon(1e-12));
    CHECK(p.k == doctest::Approx(0.693147).epsilon(1e-5));
    CHECK(p.theta == doctest::Approx(theta_expected).epsilon(1e-12));
    CHECK(p.theta == doctest::Approx(0.10364).epsilon(1e-3));
    CHECK(p.cutoff_radius == doctest::Approx(4.0 / std::sqrt(k_expected)).epsilon(1e-12));

    // Truncated Gaussian mass outside the cutoff stays below 1e-4 of total:
    // for a 3-D Gaussian the tail fraction is erfc(u) + 2 u exp(-u^2)/sqrt(pi)
    // with u = sqrt(k) * cutoff = 4.
    const double u = std::sqrt(p.k) * p.cutoff_radius;
    const double tail = std::erfc(u) + 2.0 * u * std::exp(-u * u) / std::sqrt(M_PI);
    CHECK(tail < 1e-4);
}

TEST_CASE("derive_params guards") {
    CHECK_THROWS_AS(derive_params(0.0), Error);
    CHECK_THROWS_AS(derive_params(-1.0), Error);
    CHECK_THROWS_AS(derive_params(150.0), Error);
}

TEST_CASE("single carbon at a grid point: closed form of the kernel") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = single_atom("C", 6, 5.0, 5.0, 5.0);
    SimulatedMap sim = simulate_map(s, p);

    // Grid origin is snapped to integer multiples of the interval, so the
    // atom sits exactly on a node.
    const int64_t ax = int64_t(std::llround((5.0 - sim.map.origin.x) / 1.0));
    const int64_t ay = int64_t(std::llround((5.0 - sim.map.origin.y) / 1.0));
    const int64_t az = int64_t(std::llround((5.0 - sim.map.origin.z) / 1.0));
    const double center = sim.map.at(ax, ay, az);
    CHECK(center == doctest::Approx(p.theta * 6.0).epsilon(1e-6));

    // Radial decay exp(-k r^2) at a few offsets.
    for (int64_t d = 1; d <= 3; ++d) {
        const double expected = p.theta * 6.0 * std::exp(-p.k * double(d * d));
        CHECK(sim.map.at(ax + d, ay, az) == doctest::Approx(expected).epsilon(1e-6));
    }

    SUBCASE("grid integral approximates Z within 2%") {
        CHECK(map_integral(sim.map) == doctest::Approx(6.0).epsilon(0.02));
    }
    SUBCASE("monotone decay along an axis") {
        double prev = center;
        for (int64_t d = 1; ax + d < sim.map.dims[0]; ++d) {
            const double cur = sim.map.at(ax + d, ay, az);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("two identical atoms double the map (linearity)") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure one = single_atom("C", 6, 3.0, 4.0, 5.0);
    std::string two_txt = pdb_atom_line(1, "C", "ALA", 'A', 1, 3.0, 4.0, 5.0, "C") + "\n" +
                          pdb_atom_line(2, "C", "ALA", 'A', 1, 3.0, 4.0, 5.0, "C") + "\n";
    ProteinStructure two = parse_pdb_string(two_txt);

    SimulatedMap m1 = simulate_map(one, p);
    SimulatedMap m2 = simulate_map(two, p);
    REQUIRE(m1.map.dims == m2.map.dims);
    for (size_t i = 0; i < m1.map.data.size(); ++i)
        CHECK(m2.map.data[i] == doctest::Approx(2.0 * m1.map.data[i]).epsilon(1e-6));
}

TEST_CASE("union of structures equals voxelwise sum") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure a = single_atom("N", 7, 2.0, 2.0, 2.0);
    ProteinStructure b = single_atom("O", 8, 6.0, 5.0, 4.0);
    std::string union_txt = pdb_atom_line(1, "N", "ALA", 'A', 1, 2.0, 2.0, 2.0, "N") + "\n" +
                            pdb_atom_line(2, "O", "ALA", 'A', 1, 6.0, 5.0, 4.0, "O") + "\n";
    ProteinStructure u = parse_pdb_string(union_txt);

    GridGeometry grid{{14, 14, 14}, {1, 1, 1}, {-3, -3, -3}};
    SimulatedMap ma = simulate_map(a, p, grid);
    SimulatedMap mb = simulate_map(b, p, grid);
    SimulatedMap mu = simulate_map(u, p, grid);
    for (size_t i = 0; i < mu.map.data.size(); ++i)
        CHECK(double(mu.map.data[i]) ==
              doctest::Approx(double(ma.map.data[i]) + double(mb.map.data[i])).epsilon(1e-6));
}

TEST_CASE("translation by whole grid intervals shifts values exactly") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = testutil::toy_peptide();
    SimulatedMap base = simulate_map(s, p);

    // Shift every atom by (1, 2, 3) grid intervals.
    std::string shifted_txt;
    int serial = 1;
    for (const Chain& c : s.chains)
        for (const Residue& r : c.residues)
            for (const Atom& a : r.atoms)
                shifted_txt += pdb_atom_line(serial++, a.name, r.name, 'A', r.seq_id,
                                             a.position.x + 1.0, a.position.y + 2.0,
                                             a.position.z + 3.0,
                                             a.element_number == 7   ? "N"
                                             : a.element_number == 8 ? "O"
                                                                     : "C") +
                               "\n";
    SimulatedMap shifted = simulate_map(parse_pdb_string(shifted_txt), p);
    REQUIRE(shifted.map.dims == base.map.dims);
    CHECK(shifted.map.origin.x == doctest::Approx(base.map.origin.x + 1.0));
    CHECK(shifted.map.origin.y == doctest::Approx(base.map.origin.y + 2.0));
    CHECK(shifted.map.origin.z == doctest::Approx(base.map.origin.z + 3.0));
    for (size_t i = 0; i < base.map.data.size(); ++i)
        CHECK(shifted.map.data[i] == doctest::Approx(base.map.data[i]).epsilon(1e-6));
}

TEST_CASE("parallel kernel matches the serial reference") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = testutil::toy_peptide();
    SimulatedMap fast = simulate_map(s, p);
    DensityMap slow = ref::simulate_naive(s, p, GridGeometry::of(fast.map));
    REQUIRE(fast.map.data.size() == slow.data.size());
    for (size_t i = 0; i < slow.data.size(); ++i)
        CHECK(fast.map.data[i] == doctest::Approx(slow.data[i]).epsilon(1e-6));
}

TEST_CASE("result is identical for any thread count") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = testutil::toy_peptide();
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    SimulatedMap one = simulate_map(s, p);
    omp_set_num_threads(4);
    SimulatedMap four = simulate_map(s, p);
    omp_set_num_threads(saved);
    CHECK(one.map.data == four.map.data);  // bit-exact
}

TEST_CASE("explicit grid must cover the structure") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = single_atom("C", 6, 50.0, 50.0, 50.0);
    GridGeometry small{{4, 4, 4}, {1, 1, 1}, {0, 0, 0}};
    CHECK_THROWS_WITH_AS(simulate_map(s, p, small), doctest::Contains("cover"), Error);
}

TEST_CASE("empty structure is rejected") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s;  // no chains
    CHECK_THROWS_AS(simulate_map(s, p), Error);
}

TEST_CASE("residue density") {
    SimParams p = derive_params(2.0, 1.0);
    ProteinStructure s = testutil::toy_peptide();
    SimulatedMap whole = simulate_map(s, p);
    const GridGeometry grid = GridGeometry::of(whole.map);

    SUBCASE("glycine integral approximates its total Z within 2%") {
        // GLY heavy atoms: N, CA, C, O -> 7 + 6 + 6 + 8 = 27.
        DensityMap d = residue_density(s, "A", 1, p, grid);
        CHECK(map_integral(d) == doctest::Approx(27.0).epsilon(0.02));
    }

    SUBCASE("sum of residue densities equals the full simulation") {
        std::vector<double> acc(whole.map.data.size(), 0.0);
        for (const Residue& r : s.chains[0].residues) {
            DensityMap d = residue_density(s, "A", r.seq_id, p, grid);
            for (size_t i = 0; i < acc.size(); ++i) acc[i] += d.data[i];
        }
        for (size_t i = 0; i < acc.size(); ++i)
            CHECK(acc[i] == doctest::Approx(double(whole.map.data[i])).epsilon(1e-5));
    }

    SUBCASE("residue far outside the grid is all zero with a flag") {
        GridGeometry far{{6, 6, 6}, {1, 1, 1}, {500, 500, 500}};
        bool out_of_grid = false;
        DensityMap d = residue_density(s, "A", 2, p, far, &out_of_grid);
        CHECK(out_of_grid);
        for (float v : d.data) CHECK(v == 0.0f);
    }

    SUBCASE("unknown residue is an error") {
        CHECK_THROWS_AS(residue_density(s, "A", 99, p, grid), Error);
        CHECK_THROWS_AS(residue_density(s, "B", 1, p, grid), Error);
    }
}

#ifndef CRYOSAMU_TESTUTIL_HPP
#define CRYOSAMU_TESTUTIL_HPP

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cryosamu/density_map.hpp"
#include "cryosamu/structure.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("cryosamu_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

inline cryosamu::DensityMap random_map(cryosamu::Dims3 dims, uint64_t seed, double lo = -1.0,
                                       double hi = 1.0) {
    cryosamu::DensityMap m(dims);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    for (float& v : m.data) v = float(uni(rng));
    return m;
}

inline std::vector<float> random_vec(size_t n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<float> v(n);
    for (float& x : v) x = float(uni(rng));
    return v;
}

/// One PDB ATOM record with correct fixed columns.
inline std::string pdb_atom_line(int serial, const std::string& name, const std::string& res,
                                 char chain, int seq, double x, double y, double z,
                                 const std::string& element, char altloc = ' ',
                                 char icode = ' ') {
    char buf[96];
    // name column convention: single-letter elements start at column 14
    std::string name4 = name.size() >= 4 ? name.substr(0, 4)
                        : (element.size() == 1 ? " " + name : name);
    name4.resize(4, ' ');
    std::snprintf(buf, sizeof(buf),
                  "ATOM  %5d %s%c%3s %c%4d%c   %8.3f%8.3f%8.3f%6.2f%6.2f          %2s",
                  serial, name4.c_str(), altloc, res.c_str(), chain, seq, icode, x, y, z, 1.0,
                  0.0, element.c_str());
    return std::string(buf);
}

/// Three-residue GLY-ALA-GLY peptide with idealized-ish coordinates,
/// compact enough to fit a 16 A box.
inline std::string toy_peptide_pdb() {
    std::string s;
    int serial = 1;
    auto add = [&](const std::string& name, const std::string& res, int seq, double x, double y,
                   double z, const std::string& elem) {
        s += pdb_atom_line(serial++, name, res, 'A', seq, x, y, z, elem) + "\n";
    };
    add("N", "GLY", 1, 4.50, 6.00, 7.00, "N");
    add("CA", "GLY", 1, 5.60, 6.80, 7.40, "C");
    add("C", "GLY", 1, 6.90, 6.10, 7.10, "C");
    add("O", "GLY", 1, 7.00, 4.90, 7.30, "O");
    add("N", "ALA", 2, 7.90, 6.90, 6.70, "N");
    add("CA", "ALA", 2, 9.20, 6.40, 6.30, "C");
    add("CB", "ALA", 2, 9.60, 7.00, 4.95, "C");
    add("C", "ALA", 2, 10.20, 6.80, 7.40, "C");
    add("O", "ALA", 2, 10.10, 7.90, 7.95, "O");
    add("N", "GLY", 3, 11.10, 5.90, 7.70, "N");
    add("CA", "GLY", 3, 12.20, 6.10, 8.60, "C");
    add("C", "GLY", 3, 11.80, 5.80, 10.00, "C");
    add("O", "GLY", 3, 10.80, 5.10, 10.25, "O");
    s += "END\n";
    return s;
}

inline cryosamu::ProteinStructure toy_peptide() {
    return cryosamu::parse_pdb_string(toy_peptide_pdb(), "toy");
}

}  // namespace testutil

#endif

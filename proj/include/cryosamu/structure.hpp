#ifndef CRYOSAMU_STRUCTURE_HPP
#define CRYOSAMU_STRUCTURE_HPP

#include <string>
#include <vector>

#include "cryosamu/common.hpp"

namespace cryosamu {

struct Atom {
    int element_number = 0;  // atomic number Z
    Vec3 position;
    std::string name;        // trimmed atom name, e.g. "CA"
    bool is_backbone = false;  // N, CA or C
};

struct Residue {
    std::string name;  // 3-letter code
    int seq_id = 0;
    char icode = ' ';
    std::vector<Atom> atoms;

    bool is_standard_amino_acid() const;
    /// All of N, CA, C present.
    bool has_complete_backbone() const;
    const Atom* find_atom(const std::string& atom_name) const;
};

struct Chain {
    std::string id;
    std::vector<Residue> residues;
};

struct ProteinStructure {
    std::vector<Chain> chains;
    std::string source_id;

    size_t atom_count() const;
    const Chain* find_chain(const std::string& id) const;
};

/// Backbone coordinate triple for one residue.
struct BackboneTriple {
    Vec3 n, ca, c;
};

struct ChainBackbone {
    std::string chain_id;
    std::vector<BackboneTriple> residues;
};

/// Map an element symbol (e.g. "C", "FE") to its atomic number; 0 if unknown.
int element_number_of(const std::string& symbol);

/// Parse a fixed-column PDB file. Keeps ATOM records only (first model),
/// drops hydrogens, alternate locations other than 'A'/blank, and UNK
/// residues. Throws on malformed coordinates (with line number) and on
/// files with no protein atoms.
ProteinStructure read_pdb(const std::string& path);
ProteinStructure parse_pdb_string(const std::string& text, const std::string& source_id = "");

/// Per-chain (N, CA, C) triples for standard residues with a complete
/// backbone; incomplete or nonstandard residues are dropped. Chain order
/// matches the input.
std::vector<ChainBackbone> backbone_of(const ProteinStructure& s);

}  // namespace cryosamu

#endif

#include "cryosamu/structure.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace cryosamu {

namespace {

const std::unordered_set<std::string> kStandardResidues = {
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
    for (char& c : s) c = char(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// Fixed-column extraction; columns are 1-based and inclusive, short lines
// read as blanks.
std::string cols(const std::string& line, size_t from, size_t to) {
    if (line.size() < from) return "";
    return line.substr(from - 1, std::min(to, line.size()) - from + 1);
}

double parse_coord(const std::string& field, size_t line_no, const char* what) {
    std::string t = trim(field);
    if (t.empty())
        throw io_error(std::string("missing ") + what + " coordinate (line " +
                       std::to_string(line_no) + ")");
    size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != t.size() || !std::isfinite(v))
        throw io_error(std::string("malformed ") + what + " coordinate '" + t + "' (line " +
                       std::to_string(line_no) + ")");
    return v;
}

// Element from the atom-name columns when the element field is blank.
// Column 13 is blank or a digit for single-letter elements; a remark-style
// two-letter name ("FE", "MG") starts at column 13.
int element_from_name(const std::string& raw_name) {
    if (raw_name.empty()) return 0;
    char c13 = raw_name.size() >= 1 ? raw_name[0] : ' ';
    char c14 = raw_name.size() >= 2 ? raw_name[1] : ' ';
    if (std::isdigit(static_cast<unsigned char>(c13)) || c13 == ' ') {
        std::string one(1, c14);
        return element_number_of(upper(one));
    }
    std::string two{c13, c14};
    int z = element_number_of(upper(trim(two)));
    if (z > 0) return z;
    return element_number_of(upper(std::string(1, c13)));
}

}  // namespace

int element_number_of(const std::string& symbol) {
    static const std::unordered_map<std::string, int> table = {
        {"H", 1},   {"D", 1},   {"HE", 2},  {"LI", 3},  {"BE", 4},  {"B", 5},
        {"C", 6},   {"N", 7},   {"O", 8},   {"F", 9},   {"NE", 10}, {"NA", 11},
        {"MG", 12}, {"AL", 13}, {"SI", 14}, {"P", 15},  {"S", 16},  {"CL", 17},
        {"AR", 18}, {"K", 19},  {"CA", 20}, {"MN", 25}, {"FE", 26}, {"CO", 27},
        {"NI", 28}, {"CU", 29}, {"ZN", 30}, {"SE", 34}, {"BR", 35}, {"MO", 42},
        {"I", 53},  {"W", 74},  {"PT", 78}, {"AU", 79}, {"HG", 80}};
    auto it = table.find(symbol);
    return it == table.end() ? 0 : it->second;
}

bool Residue::is_standard_amino_acid() const {
    return kStandardResidues.count(name) > 0;
}

bool Residue::has_complete_backbone() const {
    return find_atom("N") && find_atom("CA") && find_atom("C");
}

const Atom* Residue::find_atom(const std::string& atom_name) const {
    for (const Atom& a : atoms)
        if (a.name == atom_name) return &a;
    return nullptr;
}

size_t ProteinStructure::atom_count() const {
    size_t n = 0;
    for (const Chain& c : chains)
        for (const Residue& r : c.residues) n += r.atoms.size();
    return n;
}

const Chain* ProteinStructure::find_chain(const std::string& id) const {
    for (const Chain& c : chains)
        if (c.id == id) return &c;
    return nullptr;
}

ProteinStructure parse_pdb_string(const std::string& text, const std::string& source_id) {
    ProteinStructure s;
    s.source_id = source_id;

    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    bool past_first_model = false;

    auto chain_of = [&](const std::string& id) -> Chain& {
        for (Chain& c : s.chains)
            if (c.id == id) return c;
        s.chains.push_back(Chain{id, {}});
        return s.chains.back();
    };

    while (std::getline(in, line)) {
        ++line_no;
        const std::string rec = cols(line, 1, 6);
        if (rec.rfind("ENDMDL", 0) == 0) {
            past_first_model = true;
            continue;
        }
        if (past_first_model) continue;
        if (trim(rec) != "ATOM") continue;  // HETATM and everything else ignored

        const char altloc = line.size() >= 17 ? line[16] : ' ';
        if (altloc != ' ' && altloc != 'A') continue;

        const std::string raw_name = cols(line, 13, 16);
        const std::string name = trim(raw_name);
        const std::string res_name = upper(trim(cols(line, 18, 20)));
        if (res_name == "UNK") continue;

        std::string chain_id = trim(cols(line, 22, 22));
        if (chain_id.empty()) chain_id = " ";
        const std::string seq_field = trim(cols(line, 23, 26));
        int seq_id = 0;
        try {
            seq_id = std::stoi(seq_field);
        } catch (const std::exception&) {
            throw io_error("malformed residue sequence number '" + seq_field + "' (line " +
                           std::to_string(line_no) + ")");
        }
        const char icode = line.size() >= 27 ? line[26] : ' ';

        Atom atom;
        atom.name = name;
        atom.position.x = parse_coord(cols(line, 31, 38), line_no, "x");
        atom.position.y = parse_coord(cols(line, 39, 46), line_no, "y");
        atom.position.z = parse_coord(cols(line, 47, 54), line_no, "z");

        const std::string elem_field = upper(trim(cols(line, 77, 78)));
        atom.element_number = elem_field.empty() ? element_from_name(raw_name)
                                                 : element_number_of(elem_field);
        if (atom.element_number == 0)
            throw io_error("unknown element for atom '" + name + "' (line " +
                           std::to_string(line_no) + ")");
        if (atom.element_number == 1) continue;  // heavy atoms only
        atom.is_backbone = (name == "N" || name == "CA" || name == "C");

        Chain& chain = chain_of(chain_id);
        if (chain.residues.empty() || chain.residues.back().seq_id != seq_id ||
            chain.residues.back().icode != icode) {
            chain.residues.push_back(Residue{res_name, seq_id, icode, {}});
        }
        chain.residues.back().atoms.push_back(std::move(atom));
    }

    if (s.atom_count() == 0) throw io_error("no protein atoms in " +
                                            (source_id.empty() ? std::string("input") : source_id));

    // Residues with insertion codes are kept, ordered by (seq_id, icode);
    // records split across the file merge into one residue.
    for (Chain& c : s.chains) {
        std::stable_sort(c.residues.begin(), c.residues.end(),
                         [](const Residue& a, const Residue& b) {
                             if (a.seq_id != b.seq_id) return a.seq_id < b.seq_id;
                             return a.icode < b.icode;
                         });
        std::vector<Residue> merged;
        for (Residue& r : c.residues) {
            if (!merged.empty() && merged.back().seq_id == r.seq_id &&
                merged.back().icode == r.icode) {
                for (Atom& a : r.atoms) merged.back().atoms.push_back(std::move(a));
            } else {
                merged.push_back(std::move(r));
            }
        }
        c.residues = std::move(merged);
    }
    return s;
}

ProteinStructure read_pdb(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string stem = path;
    size_t slash = stem.find_last_of('/');
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    size_t dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    return parse_pdb_string(buf.str(), stem);
}

std::vector<ChainBackbone> backbone_of(const ProteinStructure& s) {
    std::vector<ChainBackbone> out;
    for (const Chain& chain : s.chains) {
        ChainBackbone cb;
        cb.chain_id = chain.id;
        for (const Residue& r : chain.residues) {
            if (!r.is_standard_amino_acid() || !r.has_complete_backbone()) continue;
            cb.residues.push_back(BackboneTriple{r.find_atom("N")->position,
                                                 r.find_atom("CA")->position,
                                                 r.find_atom("C")->position});
        }
        out.push_back(std::move(cb));
    }
    return out;
}

}  // namespace cryosamu

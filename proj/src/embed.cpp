#include "cryosamu/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace cryosamu {

void EmbeddingSet::validate() const {
    if (C < 1 || R < 1 || d < 1)
        throw config_error("embedding set needs C,R,d >= 1");
    if (int64_t(data.size()) != C * R * d)
        throw config_error("embedding data length does not match C*R*d");
    if (int64_t(chain_lengths.size()) != C)
        throw config_error("chain_lengths must have C entries");
    for (int64_t c = 0; c < C; ++c) {
        if (chain_lengths[c] < 1 || chain_lengths[c] > R)
            throw config_error("chain length out of range for chain " + std::to_string(c));
        for (int64_t r = chain_lengths[c]; r < R; ++r)
            for (int64_t j = 0; j < d; ++j)
                if (at(c, r, j) != 0.0f)
                    throw config_error("padded position not zero at chain " + std::to_string(c));
    }
    for (float x : data)
        if (!std::isfinite(x)) throw numeric_error("non-finite embedding value");
}

MatrixD chain_mean(const EmbeddingSet& E, bool true_length_mean) {
    E.validate();
    MatrixD out(E.C, E.d);
    for (int64_t c = 0; c < E.C; ++c) {
        const double denom = true_length_mean ? double(E.chain_lengths[c]) : double(E.R);
        for (int64_t j = 0; j < E.d; ++j) {
            double acc = 0.0;
            for (int64_t r = 0; r < E.R; ++r) acc += E.at(c, r, j);
            out.at(c, j) = acc / denom;
        }
    }
    return out;
}

ChainWeights attention_weights(const MatrixD& m) {
    const int64_t n = m.rows, d = m.cols;
    for (double x : m.v)
        if (!std::isfinite(x)) throw numeric_error("non-finite embedding value");

    ChainWeights cw;
    cw.S = MatrixD(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < d; ++k) acc += m.at(i, k) * m.at(j, k);
            cw.S.at(i, j) = acc;
        }

    cw.W = MatrixD(n, n);
    cw.w.assign(n, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < n; ++j) mx = std::max(mx, cw.S.at(i, j));
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) denom += std::exp(cw.S.at(i, j) - mx);
        double rowsum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            cw.W.at(i, j) = std::exp(cw.S.at(i, j) - mx) / denom;
            rowsum += cw.W.at(i, j);
        }
        cw.w[i] = rowsum / double(n);
    }
    return cw;
}

MatrixD pool_chains(const EmbeddingSet& E, const std::vector<double>& w) {
    if (int64_t(w.size()) != E.C)
        throw config_error("weight vector length " + std::to_string(w.size()) +
                           " does not match chain count " + std::to_string(E.C));
    MatrixD out(E.R, E.d);
    for (int64_t c = 0; c < E.C; ++c)
        for (int64_t r = 0; r < E.R; ++r)
            for (int64_t j = 0; j < E.d; ++j) out.at(r, j) += w[c] * E.at(c, r, j);
    return out;
}

std::vector<double> residue_weights(const MatrixD& pooled) {
    return attention_weights(pooled).w;
}

PooledEmbedding finalize(const MatrixD& pooled, const std::vector<double>& alpha, int64_t L,
                         bool per_feature_norm) {
    const int64_t R = pooled.rows, d = pooled.cols;
    if (R < 1 || L < 1) throw config_error("finalize needs R >= 1 and L >= 1");
    if (int64_t(alpha.size()) != R)
        throw config_error("alpha length does not match residue count");

    PooledEmbedding out;
    out.R = R;
    out.d = d;
    out.L = L;
    out.pooled = pooled;
    out.residue_weights = alpha;

    // Normalize, then select/tile.
    MatrixD norm(R, d);
    if (per_feature_norm) {
        for (int64_t j = 0; j < d; ++j) {
            double lo = pooled.at(0, j), hi = pooled.at(0, j);
            for (int64_t r = 1; r < R; ++r) {
                lo = std::min(lo, pooled.at(r, j));
                hi = std::max(hi, pooled.at(r, j));
            }
            const double span = hi - lo;
            for (int64_t r = 0; r < R; ++r)
                norm.at(r, j) = span > 0 ? (pooled.at(r, j) - lo) / span : 0.0;
        }
    } else {
        double lo = pooled.v[0], hi = pooled.v[0];
        for (double x : pooled.v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        const double span = hi - lo;
        for (size_t i = 0; i < pooled.v.size(); ++i)
            norm.v[i] = span > 0 ? (pooled.v[i] - lo) / span : 0.0;
    }

    std::vector<int64_t> by_weight(R);
    std::iota(by_weight.begin(), by_weight.end(), 0);
    std::stable_sort(by_weight.begin(), by_weight.end(), [&](int64_t a, int64_t b) {
        if (alpha[a] != alpha[b]) return alpha[a] > alpha[b];
        return a < b;
    });

    out.selection_map.clear();
    if (R == L) {
        out.selection_map.resize(R);
        std::iota(out.selection_map.begin(), out.selection_map.end(), 0);
    } else if (R > L) {
        std::vector<int64_t> kept(by_weight.begin(), by_weight.begin() + L);
        std::sort(kept.begin(), kept.end());  // original sequence order among the kept set
        out.selection_map = std::move(kept);
    } else {
        const int64_t reps = (L + R - 1) / R;
        out.selection_map.reserve(size_t(L));
        for (int64_t rep = 0; rep < reps && int64_t(out.selection_map.size()) < L; ++rep)
            for (int64_t i = 0; i < R && int64_t(out.selection_map.size()) < L; ++i)
                out.selection_map.push_back(by_weight[i]);
    }

    out.final_rows.resize(size_t(L * d));
    for (int64_t i = 0; i < L; ++i) {
        const int64_t src = out.selection_map[i];
        for (int64_t j = 0; j < d; ++j)
            out.final_rows[i * d + j] = float(norm.at(src, j));
    }
    return out;
}

PooledEmbedding pool_embeddings(const EmbeddingSet& E, int64_t L) {
    ChainWeights cw = chain_weights(chain_mean(E));
    MatrixD pooled = pool_chains(E, cw.w);
    std::vector<double> alpha = residue_weights(pooled);
    return finalize(pooled, alpha, L);
}

namespace {

std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

EmbeddingSet load_embeddings_blob(const std::string& manifest_path, const std::string& blob_path) {
    nlohmann::json manifest;
    {
        std::ifstream in(manifest_path);
        if (!in) throw io_error("cannot open " + manifest_path);
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw io_error(manifest_path + ": invalid JSON: " + e.what());
        }
    }
    if (!manifest.contains("d") || !manifest.contains("chains"))
        throw io_error(manifest_path + ": manifest needs 'd' and 'chains'");

    const int64_t d = manifest["d"].get<int64_t>();
    std::vector<char> blob = read_file_bytes(blob_path);
    const int64_t n_floats = int64_t(blob.size() / sizeof(float));

    EmbeddingSet E;
    E.d = d;
    for (const auto& ch : manifest["chains"]) {
        const int64_t len = ch["length"].get<int64_t>();
        if (len < 1) throw io_error(manifest_path + ": chain length must be >= 1");
        E.chain_lengths.push_back(len);
        E.chain_ids.push_back(ch.value("id", std::string()));
        E.R = std::max(E.R, len);
    }
    E.C = int64_t(E.chain_lengths.size());
    if (E.C < 1) throw io_error(manifest_path + ": no chains");

    E.data.assign(size_t(E.C * E.R * E.d), 0.0f);
    const auto* src = reinterpret_cast<const float*>(blob.data());
    for (int64_t c = 0; c < E.C; ++c) {
        const int64_t offset = manifest["chains"][c]["offset"].get<int64_t>();
        const int64_t len = E.chain_lengths[c];
        if (offset < 0 || offset + len * d > n_floats)
            throw io_error(blob_path + ": chain " + std::to_string(c) +
                           " extends past end of blob");
        std::memcpy(&E.data[size_t((c * E.R) * E.d)], src + offset, size_t(len * d) * sizeof(float));
    }
    E.validate();
    return E;
}

EmbeddingSet load_embeddings_npy(const std::string& path) {
    std::vector<char> bytes = read_file_bytes(path);
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
        throw io_error(path + ": not an NPY file");
    const unsigned char ver_major = bytes[6];
    if (ver_major != 1) throw io_error(path + ": only NPY v1.0 is supported");
    uint16_t header_len;
    std::memcpy(&header_len, bytes.data() + 8, 2);
    if (bytes.size() < 10 + size_t(header_len)) throw io_error(path + ": truncated NPY header");
    const std::string header(bytes.data() + 10, bytes.data() + 10 + header_len);

    auto find_value = [&](const std::string& key) -> std::string {
        size_t k = header.find("'" + key + "'");
        if (k == std::string::npos) throw io_error(path + ": NPY header missing " + key);
        size_t colon = header.find(':', k);
        return header.substr(colon + 1);
    };

    const std::string descr = find_value("descr");
    bool f32;
    if (descr.find("<f4") != std::string::npos)
        f32 = true;
    else if (descr.find("<f8") != std::string::npos)
        f32 = false;
    else
        throw io_error(path + ": NPY dtype must be little-endian float32 or float64");
    if (find_value("fortran_order").find("True") != std::string::npos)
        throw io_error(path + ": Fortran-order NPY not supported (need C order)");

    const std::string shape_str = find_value("shape");
    size_t open = shape_str.find('('), close = shape_str.find(')');
    if (open == std::string::npos || close == std::string::npos)
        throw io_error(path + ": malformed NPY shape");
    std::vector<int64_t> shape;
    std::string inner = shape_str.substr(open + 1, close - open - 1);
    size_t pos = 0;
    while (pos < inner.size()) {
        size_t comma = inner.find(',', pos);
        std::string tok = inner.substr(pos, comma == std::string::npos ? std::string::npos
                                                                       : comma - pos);
        if (!tok.empty() && tok.find_first_not_of(" \t") != std::string::npos)
            shape.push_back(std::stoll(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (shape.size() != 3)
        throw io_error(path + ": expected a 3-D (chains, residues, dim) array, got " +
                       std::to_string(shape.size()) + " dims");

    EmbeddingSet E;
    E.C = shape[0];
    E.R = shape[1];
    E.d = shape[2];
    const int64_t count = E.C * E.R * E.d;
    const size_t data_off = 10 + header_len;
    const size_t elem = f32 ? 4 : 8;
    if (bytes.size() < data_off + size_t(count) * elem)
        throw io_error(path + ": truncated NPY data");

    E.data.resize(size_t(count));
    if (f32) {
        std::memcpy(E.data.data(), bytes.data() + data_off, size_t(count) * 4);
    } else {
        const auto* src = reinterpret_cast<const double*>(bytes.data() + data_off);
        for (int64_t i = 0; i < count; ++i) E.data[size_t(i)] = float(src[i]);
    }
    E.chain_lengths.assign(size_t(E.C), E.R);  // NPY input carries no padding info
    E.chain_ids.assign(size_t(E.C), "");
    E.validate();
    return E;
}

EmbeddingSet load_embeddings(const std::string& emb_path, const std::string& manifest_path) {
    if (emb_path.size() >= 4 && emb_path.substr(emb_path.size() - 4) == ".npy")
        return load_embeddings_npy(emb_path);
    if (manifest_path.empty())
        throw config_error("raw blob input requires --manifest");
    return load_embeddings_blob(manifest_path, emb_path);
}

void save_pooled(const PooledEmbedding& p, const std::string& blob_path) {
    {
        std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open " + blob_path + " for writing");
        out.write(reinterpret_cast<const char*>(p.final_rows.data()),
                  std::streamsize(p.final_rows.size() * sizeof(float)));
        if (!out) throw io_error("write failed for " + blob_path);
    }
    nlohmann::json side;
    side["schema_version"] = 1;
    side["L"] = p.L;
    side["d"] = p.d;
    side["source_residues"] = p.R;
    side["selection_map"] = p.selection_map;
    std::ofstream mout(blob_path + ".json", std::ios::trunc);
    if (!mout) throw io_error("cannot open " + blob_path + ".json for writing");
    mout << side.dump(2) << "\n";
}

std::vector<float> load_pooled(const std::string& blob_path, int64_t& L, int64_t& d) {
    nlohmann::json side;
    {
        std::ifstream in(blob_path + ".json");
        if (!in) throw io_error("cannot open " + blob_path + ".json (pooled sidecar manifest)");
        in >> side;
    }
    L = side["L"].get<int64_t>();
    d = side["d"].get<int64_t>();
    std::vector<char> bytes = read_file_bytes(blob_path);
    if (int64_t(bytes.size()) != L * d * int64_t(sizeof(float)))
        throw io_error(blob_path + ": blob size does not match manifest L*d");
    std::vector<float> out(static_cast<size_t>(L * d));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace cryosamu

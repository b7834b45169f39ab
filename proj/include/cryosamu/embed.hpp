#ifndef CRYOSAMU_EMBED_HPP
#define CRYOSAMU_EMBED_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cryosamu/common.hpp"

namespace cryosamu {

/// Per-chain residue embeddings, zero-padded to a common residue count R.
struct EmbeddingSet {
    int64_t C = 0, R = 0, d = 0;
    std::vector<float> data;             // C x R x d, row-major
    std::vector<int64_t> chain_lengths;  // true residue counts per chain
    std::vector<std::string> chain_ids;

    float at(int64_t c, int64_t r, int64_t j) const { return data[(c * R + r) * d + j]; }
    float& at(int64_t c, int64_t r, int64_t j) { return data[(c * R + r) * d + j]; }

    /// Checks shape, finiteness, and that padded positions are exactly zero.
    void validate() const;
};

/// Dense row-major double matrix for the pooling intermediates.
struct MatrixD {
    int64_t rows = 0, cols = 0;
    std::vector<double> v;

    MatrixD() = default;
    MatrixD(int64_t r, int64_t c) : rows(r), cols(c), v(size_t(r * c), 0.0) {}
    double at(int64_t r, int64_t c) const { return v[r * cols + c]; }
    double& at(int64_t r, int64_t c) { return v[r * cols + c]; }
};

struct ChainWeights {
    MatrixD S;              // similarity, C x C
    MatrixD W;              // row-softmax of S, each row sums to 1
    std::vector<double> w;  // row means of W, length C
};

struct PooledEmbedding {
    int64_t R = 0, d = 0, L = 0;
    MatrixD pooled;                      // E_pooled, R x d (pre-normalization)
    std::vector<double> residue_weights; // alpha, length R
    std::vector<float> final_rows;       // E_final, L x d, values in [0,1]
    std::vector<int64_t> selection_map;  // L indices into source residues
};

/// Mean over the padded residue axis (literal divide-by-R). When
/// true_length_mean is set, divides by each chain's true length instead.
MatrixD chain_mean(const EmbeddingSet& E, bool true_length_mean = false);

/// Similarity S = M M^T, stabilized row softmax W, and per-row mean weights.
/// Used for both chain-level and residue-level weighting.
ChainWeights attention_weights(const MatrixD& m);

inline ChainWeights chain_weights(const MatrixD& chain_emb) { return attention_weights(chain_emb); }

/// E_pooled = sum_i w_i E[i,:,:].
MatrixD pool_chains(const EmbeddingSet& E, const std::vector<double>& w);

/// Residue-level weighting: attention_weights on the R x d pooled matrix.
std::vector<double> residue_weights(const MatrixD& pooled);

/// Global min-max normalization, then top-L selection (R > L, original
/// order kept) or sorted repetition (R < L). Ties break toward the lower
/// residue index. per_feature_norm switches to per-column min-max.
PooledEmbedding finalize(const MatrixD& pooled, const std::vector<double>& alpha, int64_t L = 800,
                         bool per_feature_norm = false);

/// Full pipeline: chain mean -> chain weights -> pool -> residue weights
/// -> finalize.
PooledEmbedding pool_embeddings(const EmbeddingSet& E, int64_t L = 800);

// Container formats. The blob is little-endian float32; manifest offsets
// count float elements from the start of the blob.
EmbeddingSet load_embeddings_blob(const std::string& manifest_path, const std::string& blob_path);
EmbeddingSet load_embeddings_npy(const std::string& path);
/// Dispatch on extension: .npy -> NPY, otherwise manifest+blob.
EmbeddingSet load_embeddings(const std::string& emb_path, const std::string& manifest_path);

void save_pooled(const PooledEmbedding& p, const std::string& blob_path);
/// Load an L x d float32 blob with its sidecar manifest (written by
/// save_pooled).
std::vector<float> load_pooled(const std::string& blob_path, int64_t& L, int64_t& d);

}  // namespace cryosamu

#endif

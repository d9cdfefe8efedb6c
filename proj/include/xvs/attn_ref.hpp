// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace xvs::attn {

/// n x d token matrix, one token per row.
using TokenSeq = Eigen::MatrixXd;

/// Multi-head attention weights. Head h uses columns [h * d/H, (h + 1) * d/H)
/// of the projected queries, keys and values.
struct MhaParams {
    int heads = 1;
    Eigen::MatrixXd wq; ///< d x d
    Eigen::MatrixXd wk;
    Eigen::MatrixXd wv;
    Eigen::MatrixXd wo;

    int dim() const { return static_cast<int>(wq.rows()); }
    static MhaParams zeros(int dim, int heads);
    static MhaParams random(int dim, int heads, std::uint64_t seed, double stddev);
};

struct MhaResult {
    TokenSeq output;
    std::vector<Eigen::MatrixXd> weights; ///< per head, n_q x n_k, row-stochastic
};

MhaResult mha_with_weights(const TokenSeq& q, const TokenSeq& k, const TokenSeq& v, const MhaParams& p);
TokenSeq mha(const TokenSeq& q, const TokenSeq& k, const TokenSeq& v, const MhaParams& p);

struct MetaLayer {
    MhaParams ground_from_sat; ///< updates ground tokens from satellite keys/values
    MhaParams sat_from_ground; ///< updates satellite tokens from the updated ground tokens
};

inline constexpr int kDefaultMetaLayers = 12;

struct AttnMetaParams {
    std::vector<MetaLayer> layers;
    bool pre_norm = false; ///< layer-normalize attention inputs (no learned affine)

    static AttnMetaParams zeros(int dim, int heads, int layers = kDefaultMetaLayers);
    static AttnMetaParams random(int dim, int heads, std::uint64_t seed, double stddev = 0.1,
                                 int layers = kDefaultMetaLayers);
};

struct MetaOutput {
    TokenSeq sat;
    TokenSeq ground;
};

/// Per layer: g <- g + A1(g, s, s); s <- s + A2(s, g, g).
MetaOutput attn_meta(const TokenSeq& t_sat, const TokenSeq& t_ground, const AttnMetaParams& params);

/// Row-wise zero-mean unit-variance normalization.
TokenSeq layer_norm(const TokenSeq& x, double eps = 1e-5);

} // namespace xvs::attn

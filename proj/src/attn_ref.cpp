// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/attn_ref.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace xvs::attn {

namespace {

void check_params(const MhaParams& p) {
    const int d = p.dim();
    if (p.heads <= 0 || d % p.heads != 0) {
        throw std::invalid_argument("mha: embedding dim must be divisible by the head count");
    }
    for (const Eigen::MatrixXd* m : {&p.wq, &p.wk, &p.wv, &p.wo}) {
        if (m->rows() != d || m->cols() != d) {
            throw std::invalid_argument("mha: projection matrices must be d x d");
        }
    }
}

} // namespace

namespace {

void check_heads(int dim, int heads) {
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        throw std::invalid_argument("MhaParams: dim " + std::to_string(dim) + " is not divisible by " +
                                    std::to_string(heads) + " heads");
    }
}

} // namespace

MhaParams MhaParams::zeros(int dim, int heads) {
    check_heads(dim, heads);
    MhaParams p;
    p.heads = heads;
    p.wq = p.wk = p.wv = p.wo = Eigen::MatrixXd::Zero(dim, dim);
    return p;
}

MhaParams MhaParams::random(int dim, int heads, std::uint64_t seed, double stddev) {
    check_heads(dim, heads);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, stddev);
    const auto draw = [&] { return Eigen::MatrixXd(Eigen::MatrixXd::NullaryExpr(dim, dim, [&] { return n(rng); })); };
    MhaParams p;
    p.heads = heads;
    p.wq = draw();
    p.wk = draw();
    p.wv = draw();
    p.wo = draw();
    return p;
}

MhaResult mha_with_weights(const TokenSeq& q, const TokenSeq& k, const TokenSeq& v, const MhaParams& p) {
    check_params(p);
    const int d = p.dim();
    if (q.cols() != d || k.cols() != d || v.cols() != d) {
        throw std::invalid_argument("mha: token dim does not match the parameters");
    }
    if (k.rows() != v.rows()) {
        throw std::invalid_argument("mha: keys and values must have the same length");
    }
    if (k.rows() == 0) {
        throw std::invalid_argument("mha: empty key sequence");
    }
    const int dh = d / p.heads;
    const Eigen::MatrixXd qp = q * p.wq;
    const Eigen::MatrixXd kp = k * p.wk;
    const Eigen::MatrixXd vp = v * p.wv;
    Eigen::MatrixXd concat(q.rows(), d);
    MhaResult out;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < p.heads; ++h) {
        Eigen::MatrixXd s = qp.middleCols(h * dh, dh) * kp.middleCols(h * dh, dh).transpose() * inv_sqrt;
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
            const double mx = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - mx).exp();
            s.row(r) /= s.row(r).sum();
        }
        concat.middleCols(h * dh, dh) = s * vp.middleCols(h * dh, dh);
        out.weights.push_back(std::move(s));
    }
    out.output = concat * p.wo;
    return out;
}

TokenSeq mha(const TokenSeq& q, const TokenSeq& k, const TokenSeq& v, const MhaParams& p) {
    return mha_with_weights(q, k, v, p).output;
}

AttnMetaParams AttnMetaParams::zeros(int dim, int heads, int layers) {
    AttnMetaParams p;
    for (int l = 0; l < layers; ++l) {
        p.layers.push_back({MhaParams::zeros(dim, heads), MhaParams::zeros(dim, heads)});
    }
    return p;
}

AttnMetaParams AttnMetaParams::random(int dim, int heads, std::uint64_t seed, double stddev, int layers) {
    AttnMetaParams p;
    for (int l = 0; l < layers; ++l) {
        const std::uint64_t base = seed * 1000003ULL + static_cast<std::uint64_t>(l) * 2;
        p.layers.push_back({MhaParams::random(dim, heads, base, stddev), MhaParams::random(dim, heads, base + 1, stddev)});
    }
    return p;
}

TokenSeq layer_norm(const TokenSeq& x, double eps) {
    TokenSeq out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const Eigen::RowVectorXd c = x.row(r).array() - mean;
        const double var = c.squaredNorm() / static_cast<double>(x.cols());
        out.row(r) = c / std::sqrt(var + eps);
    }
    return out;
}

MetaOutput attn_meta(const TokenSeq& t_sat, const TokenSeq& t_ground, const AttnMetaParams& params) {
    if (t_sat.cols() != t_ground.cols()) {
        throw std::invalid_argument("attn_meta: satellite and ground tokens must share the embedding dim");
    }
    MetaOutput out{t_sat, t_ground};
    const auto norm = [&](const TokenSeq& x) { return params.pre_norm ? layer_norm(x) : x; };
    for (const MetaLayer& layer : params.layers) {
        const TokenSeq s = norm(out.sat);
        out.ground += mha(norm(out.ground), s, s, layer.ground_from_sat);
        const TokenSeq g = norm(out.ground);
        out.sat += mha(norm(out.sat), g, g, layer.sat_from_ground);
    }
    return out;
}

} // namespace xvs::attn

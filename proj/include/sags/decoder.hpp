#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sags/gaussian_cloud.hpp"
#include "sags/hexplane.hpp"
#include "sags/tape.hpp"

namespace sags {

// Self-adaptive weighted deformation decoder: pre/post affine layers, gated
// multi-head self-attention + MLP residual block, and per-attribute linear
// heads.  The `plain` variant swaps the gated block for a single residual MLP
// of comparable parameter count (ablation path).
struct SadDecoder {
    int feature_dim = 32;
    int heads = 4;
    int head_dim = 8;
    int chunk_size = 256;
    bool use_sh_head = true;
    bool plain = false;

    // 1 x h affine parameters
    Eigen::MatrixXd alpha_pre, beta_pre, alpha_post, beta_post;
    // per-head projections, h x head_dim; output projection (heads*head_dim) x h
    std::vector<Eigen::MatrixXd> wq, wk, wv;
    Eigen::MatrixXd wo;
    // MLP branch h -> 2h -> h
    Eigen::MatrixXd w1, b1, w2, b2;
    double gamma1 = 1e-4, gamma2 = 1e-4;
    // residual heads (zero-initialized: training starts at the identity)
    Eigen::MatrixXd head_mu, bias_mu;        // h x 3, 1 x 3
    Eigen::MatrixXd head_scale, bias_scale;  // h x 3, 1 x 3
    Eigen::MatrixXd head_rot, bias_rot;      // h x 4, 1 x 4
    Eigen::MatrixXd head_sh, bias_sh;        // h x 3, 1 x 3 (degree-0 channel)
    Eigen::MatrixXd head_sigma, bias_sigma;  // h x 1, 1 x 1
    // plain-MLP replacement block
    Eigen::MatrixXd p1, pb1, p2, pb2;

    static SadDecoder create(int feature_dim, int heads, uint64_t seed, bool plain = false);
    int parameter_count_sad_block() const;
};

// ---- tape graph builders ----

struct DecoderVars {
    ad::Var alpha_pre, beta_pre, alpha_post, beta_post;
    std::vector<ad::Var> wq, wk, wv;
    ad::Var wo, w1, b1, w2, b2, gamma1, gamma2;
    ad::Var head_mu, bias_mu, head_scale, bias_scale, head_rot, bias_rot, head_sh, bias_sh,
        head_sigma, bias_sigma;
    ad::Var p1, pb1, p2, pb2;
};

DecoderVars register_decoder(ad::Tape& tape, const SadDecoder& dec, bool trainable);

// softmax(Q K^T / sqrt(dk)) V
ad::Var attention_op(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v, int dk);

ad::Var msa_op(ad::Tape& tape, ad::Var x, const SadDecoder& dec, const DecoderVars& vars);

// The full gated residual block over one chunk of tokens.
ad::Var decode_op(ad::Tape& tape, ad::Var x, const SadDecoder& dec, const DecoderVars& vars);

struct CloudVars {
    ad::Var positions, log_scales, rotations, sh, logits;
};

CloudVars register_cloud(ad::Tape& tape, const GaussianCloud& cloud, bool trainable);

struct FieldVars {
    std::array<ad::Var, 6> planes;
};

FieldVars register_field(ad::Tape& tape, const HexPlaneField& field, bool trainable);

struct DeformResult {
    CloudVars deformed;
    ad::Var dmu, dscale, drot, dsh, dsigma;
};

// Encode every primitive at (mu_i, t), run the decoder over deterministic
// index-ordered chunks, and apply the residual heads in the optimization
// parameterization domains.  The canonical cloud vars are left untouched.
DeformResult deform_op(ad::Tape& tape, const CloudVars& cloud_vars, const GaussianCloud& cloud,
                       const HexPlaneField& field, const FieldVars& field_vars,
                       const SadDecoder& dec, const DecoderVars& dec_vars, double t);

// ---- convenience evaluation (no gradients) ----

Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v);
Eigen::MatrixXd msa(const SadDecoder& dec, const Eigen::MatrixXd& x);
Eigen::MatrixXd decode(const SadDecoder& dec, const Eigen::MatrixXd& x);

struct DeformationDeltas {
    Eigen::MatrixXd dmu, dscale, drot, dsh, dsigma;
};

struct DeformedCloud {
    GaussianCloud cloud;
    DeformationDeltas deltas;
};

DeformedCloud deform(const GaussianCloud& cloud, const HexPlaneField& field, const SadDecoder& dec,
                     double t);

}  // namespace sags

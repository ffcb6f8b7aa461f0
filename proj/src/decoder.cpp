#include "sags/decoder.hpp"

#include <cmath>
#include <random>

#include "sags/pipeline_ops.hpp"

namespace sags {

namespace {

Eigen::MatrixXd xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace

SadDecoder SadDecoder::create(int feature_dim, int heads, uint64_t seed, bool plain) {
    if (feature_dim <= 0 || heads <= 0 || feature_dim % heads != 0)
        throw ConfigError("decoder: heads must divide the feature width");
    SadDecoder d;
    d.feature_dim = feature_dim;
    d.heads = heads;
    d.head_dim = feature_dim / heads;
    d.plain = plain;
    std::mt19937_64 rng(seed);

    const int h = feature_dim;
    d.alpha_pre = Eigen::MatrixXd::Ones(1, h);
    d.beta_pre = Eigen::MatrixXd::Zero(1, h);
    d.alpha_post = Eigen::MatrixXd::Ones(1, h);
    d.beta_post = Eigen::MatrixXd::Zero(1, h);
    for (int k = 0; k < heads; ++k) {
        d.wq.push_back(xavier(h, d.head_dim, rng));
        d.wk.push_back(xavier(h, d.head_dim, rng));
        d.wv.push_back(xavier(h, d.head_dim, rng));
    }
    d.wo = xavier(h, h, rng);
    d.w1 = xavier(h, 2 * h, rng);
    d.b1 = Eigen::MatrixXd::Zero(1, 2 * h);
    d.w2 = xavier(2 * h, h, rng);
    d.b2 = Eigen::MatrixXd::Zero(1, h);

    d.head_mu = Eigen::MatrixXd::Zero(h, 3);
    d.bias_mu = Eigen::MatrixXd::Zero(1, 3);
    d.head_scale = Eigen::MatrixXd::Zero(h, 3);
    d.bias_scale = Eigen::MatrixXd::Zero(1, 3);
    d.head_rot = Eigen::MatrixXd::Zero(h, 4);
    d.bias_rot = Eigen::MatrixXd::Zero(1, 4);
    d.head_sh = Eigen::MatrixXd::Zero(h, 3);
    d.bias_sh = Eigen::MatrixXd::Zero(1, 3);
    d.head_sigma = Eigen::MatrixXd::Zero(h, 1);
    d.bias_sigma = Eigen::MatrixXd::Zero(1, 1);

    // plain replacement: single hidden layer sized to match the SAD block
    int hidden = std::max(1, (d.parameter_count_sad_block() - h) / (2 * h + 1));
    d.p1 = xavier(h, hidden, rng);
    d.pb1 = Eigen::MatrixXd::Zero(1, hidden);
    d.p2 = Eigen::MatrixXd::Zero(hidden, h);  // identity block at init
    d.pb2 = Eigen::MatrixXd::Zero(1, h);
    return d;
}

int SadDecoder::parameter_count_sad_block() const {
    int n = 0;
    n += 4 * feature_dim;  // affines
    n += 3 * heads * feature_dim * head_dim;
    n += static_cast<int>(wo.size());
    n += static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size());
    n += 2;  // gates
    return n;
}

DecoderVars register_decoder(ad::Tape& tape, const SadDecoder& dec, bool trainable) {
    auto reg = [&](const Eigen::MatrixXd& m) {
        return trainable ? tape.leaf(m) : tape.constant(m);
    };
    DecoderVars v;
    v.alpha_pre = reg(dec.alpha_pre);
    v.beta_pre = reg(dec.beta_pre);
    v.alpha_post = reg(dec.alpha_post);
    v.beta_post = reg(dec.beta_post);
    for (int k = 0; k < dec.heads; ++k) {
        v.wq.push_back(reg(dec.wq[static_cast<size_t>(k)]));
        v.wk.push_back(reg(dec.wk[static_cast<size_t>(k)]));
        v.wv.push_back(reg(dec.wv[static_cast<size_t>(k)]));
    }
    v.wo = reg(dec.wo);
    v.w1 = reg(dec.w1);
    v.b1 = reg(dec.b1);
    v.w2 = reg(dec.w2);
    v.b2 = reg(dec.b2);
    v.gamma1 = reg(Eigen::MatrixXd::Constant(1, 1, dec.gamma1));
    v.gamma2 = reg(Eigen::MatrixXd::Constant(1, 1, dec.gamma2));
    v.head_mu = reg(dec.head_mu);
    v.bias_mu = reg(dec.bias_mu);
    v.head_scale = reg(dec.head_scale);
    v.bias_scale = reg(dec.bias_scale);
    v.head_rot = reg(dec.head_rot);
    v.bias_rot = reg(dec.bias_rot);
    v.head_sh = reg(dec.head_sh);
    v.bias_sh = reg(dec.bias_sh);
    v.head_sigma = reg(dec.head_sigma);
    v.bias_sigma = reg(dec.bias_sigma);
    v.p1 = reg(dec.p1);
    v.pb1 = reg(dec.pb1);
    v.p2 = reg(dec.p2);
    v.pb2 = reg(dec.pb2);
    return v;
}

ad::Var attention_op(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v, int dk) {
    ad::Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
    return tape.matmul(tape.softmax_rows(scores), v);
}

ad::Var msa_op(ad::Tape& tape, ad::Var x, const SadDecoder& dec, const DecoderVars& vars) {
    // Concat(head_1..head_H) W^O == sum_k head_k * (rows of W^O for head k)
    ad::Var out;
    for (int k = 0; k < dec.heads; ++k) {
        ad::Var q = tape.matmul(x, vars.wq[static_cast<size_t>(k)]);
        ad::Var kk = tape.matmul(x, vars.wk[static_cast<size_t>(k)]);
        ad::Var vv = tape.matmul(x, vars.wv[static_cast<size_t>(k)]);
        ad::Var head = attention_op(tape, q, kk, vv, dec.head_dim);
        ad::Var wo_k = tape.rows(vars.wo, k * dec.head_dim, dec.head_dim);
        ad::Var proj = tape.matmul(head, wo_k);
        out = out.valid() ? tape.add(out, proj) : proj;
    }
    return out;
}

namespace {
ad::Var affine(ad::Tape& tape, ad::Var x, ad::Var alpha, ad::Var beta) {
    return tape.row_broadcast_add(tape.row_broadcast_mul(x, alpha), beta);
}

ad::Var mlp(ad::Tape& tape, ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
    ad::Var hidden = tape.tanh(tape.row_broadcast_add(tape.matmul(x, w1), b1));
    return tape.row_broadcast_add(tape.matmul(hidden, w2), b2);
}
}  // namespace

ad::Var decode_op(ad::Tape& tape, ad::Var x, const SadDecoder& dec, const DecoderVars& vars) {
    if (dec.plain) {
        return tape.add(x, mlp(tape, x, vars.p1, vars.pb1, vars.p2, vars.pb2));
    }
    ad::Var pre = affine(tape, x, vars.alpha_pre, vars.beta_pre);
    ad::Var y1 = tape.add(pre, tape.scale_by(msa_op(tape, pre, dec, vars), vars.gamma1));
    ad::Var post = affine(tape, y1, vars.alpha_post, vars.beta_post);
    ad::Var y = tape.add(
        tape.add(post, tape.scale_by(mlp(tape, post, vars.w1, vars.b1, vars.w2, vars.b2),
                                     vars.gamma2)),
        x);
    return y;
}

CloudVars register_cloud(ad::Tape& tape, const GaussianCloud& cloud, bool trainable) {
    CloudVars v;
    auto reg = [&](const Eigen::MatrixXd& m) {
        return trainable ? tape.leaf(m) : tape.constant(m);
    };
    v.positions = reg(cloud.positions);
    v.log_scales = reg(cloud.log_scales);
    v.rotations = reg(cloud.rotations);
    v.sh = reg(cloud.sh_coeffs);
    v.logits = reg(cloud.opacity_logits);
    return v;
}

FieldVars register_field(ad::Tape& tape, const HexPlaneField& field, bool trainable) {
    FieldVars v;
    for (int p = 0; p < 6; ++p)
        v.planes[static_cast<size_t>(p)] =
            trainable ? tape.leaf(field.planes[static_cast<size_t>(p)])
                      : tape.constant(field.planes[static_cast<size_t>(p)]);
    return v;
}

DeformResult deform_op(ad::Tape& tape, const CloudVars& cloud_vars, const GaussianCloud& cloud,
                       const HexPlaneField& field, const FieldVars& field_vars,
                       const SadDecoder& dec, const DecoderVars& dec_vars, double t) {
    const int n = cloud.size();
    ad::Var features = hexplane_encode_op(tape, field_vars.planes, cloud_vars.positions, field, t);

    // decode over deterministic index-ordered chunks
    std::vector<ad::Var> chunks;
    for (int c0 = 0; c0 < n; c0 += dec.chunk_size) {
        int len = std::min(dec.chunk_size, n - c0);
        chunks.push_back(decode_op(tape, tape.rows(features, c0, len), dec, dec_vars));
    }
    ad::Var y = (chunks.size() == 1) ? chunks[0] : tape.concat_rows(chunks);

    DeformResult r;
    auto head = [&](ad::Var w, ad::Var b) {
        return tape.row_broadcast_add(tape.matmul(y, w), b);
    };
    r.dmu = head(dec_vars.head_mu, dec_vars.bias_mu);
    r.dscale = head(dec_vars.head_scale, dec_vars.bias_scale);
    r.drot = head(dec_vars.head_rot, dec_vars.bias_rot);
    r.dsigma = head(dec_vars.head_sigma, dec_vars.bias_sigma);

    r.deformed.positions = tape.add(cloud_vars.positions, r.dmu);
    r.deformed.log_scales = tape.add(cloud_vars.log_scales, r.dscale);
    r.deformed.rotations = tape.add(cloud_vars.rotations, r.drot);
    r.deformed.logits = tape.add(cloud_vars.logits, r.dsigma);
    if (dec.use_sh_head) {
        r.dsh = head(dec_vars.head_sh, dec_vars.bias_sh);
        r.deformed.sh = tape.add(
            cloud_vars.sh, pad_cols_op(tape, r.dsh, static_cast<int>(cloud.sh_coeffs.cols()), 0));
    } else {
        r.dsh = tape.constant(Eigen::MatrixXd::Zero(n, 3));
        r.deformed.sh = cloud_vars.sh;
    }
    return r;
}

// ---- evaluation wrappers ----

Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& v) {
    ad::Tape tape;
    return tape.value(
        attention_op(tape, tape.constant(q), tape.constant(k), tape.constant(v),
                     static_cast<int>(q.cols())));
}

Eigen::MatrixXd msa(const SadDecoder& dec, const Eigen::MatrixXd& x) {
    ad::Tape tape;
    DecoderVars vars = register_decoder(tape, dec, false);
    return tape.value(msa_op(tape, tape.constant(x), dec, vars));
}

Eigen::MatrixXd decode(const SadDecoder& dec, const Eigen::MatrixXd& x) {
    ad::Tape tape;
    DecoderVars vars = register_decoder(tape, dec, false);
    return tape.value(decode_op(tape, tape.constant(x), dec, vars));
}

DeformedCloud deform(const GaussianCloud& cloud, const HexPlaneField& field, const SadDecoder& dec,
                     double t) {
    ad::Tape tape;
    CloudVars cv = register_cloud(tape, cloud, false);
    FieldVars fv = register_field(tape, field, false);
    DecoderVars dv = register_decoder(tape, dec, false);
    DeformResult r = deform_op(tape, cv, cloud, field, fv, dec, dv, t);

    DeformedCloud out;
    out.cloud = cloud;
    out.cloud.positions = tape.value(r.deformed.positions);
    out.cloud.log_scales = tape.value(r.deformed.log_scales);
    out.cloud.rotations = tape.value(r.deformed.rotations);
    out.cloud.sh_coeffs = tape.value(r.deformed.sh);
    out.cloud.opacity_logits = tape.value(r.deformed.logits);
    out.deltas.dmu = tape.value(r.dmu);
    out.deltas.dscale = tape.value(r.dscale);
    out.deltas.drot = tape.value(r.drot);
    out.deltas.dsh = tape.value(r.dsh);
    out.deltas.dsigma = tape.value(r.dsigma);
    return out;
}

}  // namespace sags

#pragma once

// Encoder-decoder transformer with manual backpropagation, templated on the
// scalar type: float for training, double for gradient checking.  Pre-norm
// residual blocks with gain-only RMS normalization, ReLU feed-forward, no
// biases, learned absolute positions.  The encoder input embedding is the
// sum of token, position, header-flag, and packet-index tables; the decoder
// embeds token and position.  Three heads: token logits over decoder states,
// a 3-way packet-order classifier on each PKT hidden state, and a 2-way
// homology classifier on the terminator hidden state.

#include "lens/model/batch.hpp"
#include "lens/model/config.hpp"
#include "lens/util/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace lens::model {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Mode { Train, Eval };

template <typename T>
struct Params {
    struct EncLayer {
        MatX<T> g1, wq, wk, wv, wo, g2, w1, w2;
    };
    struct DecLayer {
        MatX<T> g1, wq, wk, wv, wo;     // causal self-attention
        MatX<T> g2, cq, ck, cv, co;     // cross-attention
        MatX<T> g3, w1, w2;             // feed-forward
    };

    MatX<T> token_table, position_table, header_table, packet_table;
    std::vector<EncLayer> enc;
    std::vector<DecLayer> dec;
    MatX<T> enc_final_g, dec_final_g;
    MatX<T> lm_head; // unused (0x0) when tied to token_table
    MatX<T> pop_head, htp_head;
    bool tie_lm_head = false;

    template <typename F> void visit(F&& f) {
        f("token_table", token_table);
        f("position_table", position_table);
        f("header_table", header_table);
        f("packet_table", packet_table);
        for (size_t i = 0; i < enc.size(); ++i) {
            const std::string p = "enc" + std::to_string(i) + ".";
            f(p + "g1", enc[i].g1);
            f(p + "wq", enc[i].wq);
            f(p + "wk", enc[i].wk);
            f(p + "wv", enc[i].wv);
            f(p + "wo", enc[i].wo);
            f(p + "g2", enc[i].g2);
            f(p + "w1", enc[i].w1);
            f(p + "w2", enc[i].w2);
        }
        for (size_t i = 0; i < dec.size(); ++i) {
            const std::string p = "dec" + std::to_string(i) + ".";
            f(p + "g1", dec[i].g1);
            f(p + "wq", dec[i].wq);
            f(p + "wk", dec[i].wk);
            f(p + "wv", dec[i].wv);
            f(p + "wo", dec[i].wo);
            f(p + "g2", dec[i].g2);
            f(p + "cq", dec[i].cq);
            f(p + "ck", dec[i].ck);
            f(p + "cv", dec[i].cv);
            f(p + "co", dec[i].co);
            f(p + "g3", dec[i].g3);
            f(p + "w1", dec[i].w1);
            f(p + "w2", dec[i].w2);
        }
        f("enc_final_g", enc_final_g);
        f("dec_final_g", dec_final_g);
        if (!tie_lm_head) f("lm_head", lm_head);
        f("pop_head", pop_head);
        f("htp_head", htp_head);
    }

    template <typename F> void visit(F&& f) const {
        const_cast<Params<T>*>(this)->visit(
            [&](const std::string& name, MatX<T>& m) { f(name, static_cast<const MatX<T>&>(m)); });
    }
};

inline bool is_norm_gain(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with(".g1") || ends_with(".g2") || ends_with(".g3") || ends_with("_g");
}

// Correctly shaped parameter set: gains at one, everything else zero.
template <typename T>
Params<T> alloc_params(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.d_model;
    auto zeros = [](int rows, int cols) { return MatX<T>::Zero(rows, cols).eval(); };
    auto ones_row = [&](int cols) { return MatX<T>::Ones(1, cols).eval(); };

    Params<T> p;
    p.tie_lm_head = cfg.tie_lm_head;
    p.token_table = zeros(cfg.vocab_size, d);
    p.position_table = zeros(cfg.max_positions, d);
    p.header_table = zeros(2, d);
    p.packet_table = zeros(cfg.max_packets + 1, d);
    p.enc.resize(static_cast<size_t>(cfg.n_layers_enc));
    for (auto& l : p.enc) {
        l.g1 = ones_row(d);
        l.wq = zeros(d, d);
        l.wk = zeros(d, d);
        l.wv = zeros(d, d);
        l.wo = zeros(d, d);
        l.g2 = ones_row(d);
        l.w1 = zeros(d, cfg.d_ffn);
        l.w2 = zeros(cfg.d_ffn, d);
    }
    p.dec.resize(static_cast<size_t>(cfg.n_layers_dec));
    for (auto& l : p.dec) {
        l.g1 = ones_row(d);
        l.wq = zeros(d, d);
        l.wk = zeros(d, d);
        l.wv = zeros(d, d);
        l.wo = zeros(d, d);
        l.g2 = ones_row(d);
        l.cq = zeros(d, d);
        l.ck = zeros(d, d);
        l.cv = zeros(d, d);
        l.co = zeros(d, d);
        l.g3 = ones_row(d);
        l.w1 = zeros(d, cfg.d_ffn);
        l.w2 = zeros(cfg.d_ffn, d);
    }
    p.enc_final_g = ones_row(d);
    p.dec_final_g = ones_row(d);
    if (!cfg.tie_lm_head) p.lm_head = zeros(d, cfg.vocab_size);
    p.pop_head = zeros(d, 3);
    p.htp_head = zeros(d, 2);
    return p;
}

template <typename T>
Params<T> init_params(const ModelConfig& cfg, Rng& rng) {
    Params<T> p = alloc_params<T>(cfg);
    p.visit([&](const std::string& name, MatX<T>& m) {
        if (is_norm_gain(name)) return; // gains stay at one
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = static_cast<T>(rng.normal() * 0.02);
    });
    return p;
}

template <typename T>
Params<T> zeros_like(const Params<T>& p) {
    Params<T> z = p;
    z.visit([](const std::string&, MatX<T>& m) { m.setZero(); });
    return z;
}

template <typename To, typename From>
Params<To> params_cast(const Params<From>& p) {
    Params<To> out;
    out.tie_lm_head = p.tie_lm_head;
    out.token_table = p.token_table.template cast<To>();
    out.position_table = p.position_table.template cast<To>();
    out.header_table = p.header_table.template cast<To>();
    out.packet_table = p.packet_table.template cast<To>();
    out.enc.resize(p.enc.size());
    for (size_t i = 0; i < p.enc.size(); ++i) {
        out.enc[i].g1 = p.enc[i].g1.template cast<To>();
        out.enc[i].wq = p.enc[i].wq.template cast<To>();
        out.enc[i].wk = p.enc[i].wk.template cast<To>();
        out.enc[i].wv = p.enc[i].wv.template cast<To>();
        out.enc[i].wo = p.enc[i].wo.template cast<To>();
        out.enc[i].g2 = p.enc[i].g2.template cast<To>();
        out.enc[i].w1 = p.enc[i].w1.template cast<To>();
        out.enc[i].w2 = p.enc[i].w2.template cast<To>();
    }
    out.dec.resize(p.dec.size());
    for (size_t i = 0; i < p.dec.size(); ++i) {
        out.dec[i].g1 = p.dec[i].g1.template cast<To>();
        out.dec[i].wq = p.dec[i].wq.template cast<To>();
        out.dec[i].wk = p.dec[i].wk.template cast<To>();
        out.dec[i].wv = p.dec[i].wv.template cast<To>();
        out.dec[i].wo = p.dec[i].wo.template cast<To>();
        out.dec[i].g2 = p.dec[i].g2.template cast<To>();
        out.dec[i].cq = p.dec[i].cq.template cast<To>();
        out.dec[i].ck = p.dec[i].ck.template cast<To>();
        out.dec[i].cv = p.dec[i].cv.template cast<To>();
        out.dec[i].co = p.dec[i].co.template cast<To>();
        out.dec[i].g3 = p.dec[i].g3.template cast<To>();
        out.dec[i].w1 = p.dec[i].w1.template cast<To>();
        out.dec[i].w2 = p.dec[i].w2.template cast<To>();
    }
    out.enc_final_g = p.enc_final_g.template cast<To>();
    out.dec_final_g = p.dec_final_g.template cast<To>();
    out.lm_head = p.lm_head.template cast<To>();
    out.pop_head = p.pop_head.template cast<To>();
    out.htp_head = p.htp_head.template cast<To>();
    return out;
}

namespace detail {

constexpr double kNormEps = 1e-6;
constexpr double kMaskValue = -1e30;

template <typename T>
void softmax_rows_inplace(MatX<T>& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        T m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        T sum = s.row(r).sum();
        s.row(r) /= sum;
    }
}

template <typename T>
struct NormCache {
    MatX<T> x;  // input
    VecX<T> r;  // per-row rms
    MatX<T> y;  // normalized output
};

template <typename T>
void rmsnorm_forward(const MatX<T>& x, const MatX<T>& g, NormCache<T>& c) {
    const Eigen::Index d = x.cols();
    c.x = x;
    c.r.resize(x.rows());
    c.y.resizeLike(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        T ms = x.row(i).squaredNorm() / static_cast<T>(d);
        c.r(i) = std::sqrt(ms + static_cast<T>(kNormEps));
        c.y.row(i) = x.row(i).cwiseProduct(g.row(0)) / c.r(i);
    }
}

template <typename T>
void rmsnorm_backward(const NormCache<T>& c, const MatX<T>& g, const MatX<T>& dy,
                      MatX<T>& dx, MatX<T>& dg) {
    const Eigen::Index d = c.x.cols();
    for (Eigen::Index i = 0; i < c.x.rows(); ++i) {
        T r = c.r(i);
        dg.row(0) += dy.row(i).cwiseProduct(c.x.row(i)) / r;
        auto gd = dy.row(i).cwiseProduct(g.row(0));
        T s = gd.cwiseProduct(c.x.row(i)).sum();
        dx.row(i) += gd / r - c.x.row(i) * (s / (static_cast<T>(d) * r * r * r));
    }
}

template <typename T>
struct AttnCache {
    MatX<T> q, k, v;               // projections, heads in column blocks
    std::vector<MatX<T>> probs;    // per-head attention weights
    MatX<T> concat;                // pre-output-projection
};

template <typename T>
MatX<T> attention_forward(const MatX<T>& q_in, const MatX<T>& kv_in,
                          const MatX<T>& wq, const MatX<T>& wk, const MatX<T>& wv,
                          const MatX<T>& wo, int n_heads,
                          const std::vector<uint8_t>& key_valid, bool causal,
                          AttnCache<T>& c) {
    const Eigen::Index d = q_in.cols();
    const Eigen::Index dh = d / n_heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    c.q = q_in * wq;
    c.k = kv_in * wk;
    c.v = kv_in * wv;
    c.probs.assign(static_cast<size_t>(n_heads), MatX<T>());
    c.concat.resize(q_in.rows(), d);
    for (int h = 0; h < n_heads; ++h) {
        auto qh = c.q.middleCols(h * dh, dh);
        auto kh = c.k.middleCols(h * dh, dh);
        auto vh = c.v.middleCols(h * dh, dh);
        MatX<T> s = qh * kh.transpose() * scale;
        for (Eigen::Index kp = 0; kp < s.cols(); ++kp)
            if (!key_valid[static_cast<size_t>(kp)])
                s.col(kp).setConstant(static_cast<T>(kMaskValue));
        if (causal)
            for (Eigen::Index qp = 0; qp < s.rows(); ++qp)
                for (Eigen::Index kp = qp + 1; kp < s.cols(); ++kp)
                    s(qp, kp) = static_cast<T>(kMaskValue);
        softmax_rows_inplace(s);
        c.probs[static_cast<size_t>(h)] = s;
        c.concat.middleCols(h * dh, dh) = s * vh;
    }
    return c.concat * wo;
}

template <typename T>
void attention_backward(const MatX<T>& dout, const MatX<T>& q_in, const MatX<T>& kv_in,
                        const MatX<T>& wq, const MatX<T>& wk, const MatX<T>& wv,
                        const MatX<T>& wo, int n_heads, const AttnCache<T>& c,
                        MatX<T>& dwq, MatX<T>& dwk, MatX<T>& dwv, MatX<T>& dwo,
                        MatX<T>& dq_in, MatX<T>& dkv_in) {
    const Eigen::Index d = q_in.cols();
    const Eigen::Index dh = d / n_heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    dwo += c.concat.transpose() * dout;
    MatX<T> dconcat = dout * wo.transpose();
    MatX<T> dq = MatX<T>::Zero(c.q.rows(), d);
    MatX<T> dk = MatX<T>::Zero(c.k.rows(), d);
    MatX<T> dv = MatX<T>::Zero(c.v.rows(), d);
    for (int h = 0; h < n_heads; ++h) {
        const MatX<T>& p = c.probs[static_cast<size_t>(h)];
        auto qh = c.q.middleCols(h * dh, dh);
        auto kh = c.k.middleCols(h * dh, dh);
        auto vh = c.v.middleCols(h * dh, dh);
        auto doh = dconcat.middleCols(h * dh, dh);
        MatX<T> dp = doh * vh.transpose();
        dv.middleCols(h * dh, dh) += p.transpose() * doh;
        // softmax backward: dS = P .* (dP - rowsum(dP .* P))
        MatX<T> ds = p.cwiseProduct(dp);
        VecX<T> rowsum = ds.rowwise().sum();
        ds = p.cwiseProduct(dp.colwise() - rowsum);
        ds *= scale;
        dq.middleCols(h * dh, dh) += ds * kh;
        dk.middleCols(h * dh, dh) += ds.transpose() * qh;
    }
    dwq += q_in.transpose() * dq;
    dwk += kv_in.transpose() * dk;
    dwv += kv_in.transpose() * dv;
    dq_in += dq * wq.transpose();
    dkv_in += dk * wk.transpose() + dv * wv.transpose();
}

template <typename T>
struct FfnCache {
    MatX<T> z1; // pre-activation
};

template <typename T>
MatX<T> ffn_forward(const MatX<T>& x, const MatX<T>& w1, const MatX<T>& w2, FfnCache<T>& c) {
    c.z1 = x * w1;
    return c.z1.cwiseMax(static_cast<T>(0)) * w2;
}

template <typename T>
void ffn_backward(const MatX<T>& dout, const MatX<T>& x, const MatX<T>& w1,
                  const MatX<T>& w2, const FfnCache<T>& c,
                  MatX<T>& dw1, MatX<T>& dw2, MatX<T>& dx) {
    MatX<T> a1 = c.z1.cwiseMax(static_cast<T>(0));
    dw2 += a1.transpose() * dout;
    MatX<T> da1 = dout * w2.transpose();
    MatX<T> dz1 =
        da1.cwiseProduct((c.z1.array() > static_cast<T>(0)).template cast<T>().matrix());
    dw1 += x.transpose() * dz1;
    dx += dz1 * w1.transpose();
}

// Inverted dropout: mask entries are 0 or 1/(1-p).
template <typename T>
MatX<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    MatX<T> m(rows, cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = rng.unit() < p ? static_cast<T>(0) : keep_scale;
    return m;
}

} // namespace detail

// Sum of the four input tables; no dropout (callers apply it in train mode).
template <typename T>
MatX<T> embed_encoder(const Params<T>& p, const ModelConfig& cfg,
                      const std::vector<int32_t>& ids,
                      const std::vector<uint8_t>& header_mask,
                      const std::vector<int32_t>& packet_ids) {
    if (ids.size() != header_mask.size() || ids.size() != packet_ids.size())
        throw ShapeMismatch("encoder ids, header mask, and packet ids differ in length");
    if (ids.empty()) throw ShapeMismatch("empty encoder input");
    if (static_cast<int32_t>(ids.size()) > cfg.max_positions)
        throw PositionOverflow("sequence length " + std::to_string(ids.size()) +
                               " exceeds max_positions " + std::to_string(cfg.max_positions));
    MatX<T> x(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
    for (size_t i = 0; i < ids.size(); ++i) {
        int32_t id = ids[i];
        if (id < 0 || id >= cfg.vocab_size)
            throw IdOutOfRange("token id " + std::to_string(id) + " outside vocabulary");
        int32_t pid = packet_ids[i];
        if (pid < 0 || pid > cfg.max_packets)
            throw IdOutOfRange("packet id " + std::to_string(pid) + " outside [0, " +
                               std::to_string(cfg.max_packets) + "]");
        x.row(static_cast<Eigen::Index>(i)) =
            p.token_table.row(id) + p.position_table.row(static_cast<Eigen::Index>(i)) +
            p.header_table.row(header_mask[i] ? 1 : 0) + p.packet_table.row(pid);
    }
    return x;
}

template <typename T>
struct ExampleOutputs {
    MatX<T> lm_logits;   // one row per decoder position
    MatX<T> pop_logits;  // one row per PKT position used
    MatX<T> htp_logits;  // 1 x 2
    MatX<T> h_enc;       // final encoder hidden states
    std::vector<int32_t> pkt_positions;
    int32_t end_pos = -1;
};

struct LossBreakdown {
    double msp = 0.0, pop = 0.0, htp = 0.0, total = 0.0;
    int64_t msp_tokens = 0, msp_correct = 0;
    int64_t pop_packets = 0, pop_correct = 0, pop_same_correct = 0;
    int64_t htp_examples = 0, htp_correct = 0;
    double msp_sum = 0.0, pop_sum = 0.0, htp_sum = 0.0;
};

namespace detail {

template <typename T>
struct EncLayerCache {
    NormCache<T> n1;
    AttnCache<T> attn;
    MatX<T> drop1;
    MatX<T> x_mid; // after attention residual
    NormCache<T> n2;
    FfnCache<T> ffn;
    MatX<T> drop2;
};

template <typename T>
struct DecLayerCache {
    NormCache<T> n1;
    AttnCache<T> self_attn;
    MatX<T> drop1;
    MatX<T> x_mid;
    NormCache<T> n2;
    AttnCache<T> cross_attn;
    MatX<T> drop2;
    MatX<T> x_mid2;
    NormCache<T> n3;
    FfnCache<T> ffn;
    MatX<T> drop3;
};

template <typename T>
struct ExampleCache {
    std::vector<uint8_t> enc_key_valid;
    std::vector<uint8_t> dec_key_valid;
    std::vector<int32_t> dec_in;
    int64_t dec_valid = 0;

    MatX<T> enc_x0;
    MatX<T> enc_embed_drop;
    std::vector<EncLayerCache<T>> enc_layers;
    NormCache<T> enc_final;
    MatX<T> h_enc;

    MatX<T> dec_x0;
    MatX<T> dec_embed_drop;
    std::vector<DecLayerCache<T>> dec_layers;
    NormCache<T> dec_final;
    MatX<T> h_dec;

    std::vector<int32_t> pkt_positions;
    int32_t end_pos = -1;
    MatX<T> lm_logits;
    MatX<T> pop_logits;
    MatX<T> htp_logits;
};

template <typename T>
void apply_dropout(MatX<T>& x, MatX<T>& mask_store, double p, Mode mode, Rng* rng) {
    if (mode != Mode::Train || p <= 0.0) {
        mask_store.resize(0, 0);
        return;
    }
    if (!rng) throw ConfigError("train mode with dropout requires a generator");
    mask_store = dropout_mask<T>(x.rows(), x.cols(), p, *rng);
    x = x.cwiseProduct(mask_store);
}

template <typename T>
void backprop_dropout(MatX<T>& d, const MatX<T>& mask_store) {
    if (mask_store.size() != 0) d = d.cwiseProduct(mask_store);
}

template <typename T>
void forward_example(const Params<T>& p, const ModelConfig& cfg, const BatchExample& ex,
                     Mode mode, Rng* drop_rng, ExampleCache<T>& c) {
    const int nh = cfg.n_heads;

    // Encoder
    c.enc_x0 = embed_encoder(p, cfg, ex.enc_ids, ex.enc_header_mask, ex.enc_packet_ids);
    c.enc_key_valid.resize(ex.enc_ids.size());
    for (size_t i = 0; i < ex.enc_ids.size(); ++i)
        c.enc_key_valid[i] = ex.enc_ids[i] != cfg.pad_id;
    MatX<T> x = c.enc_x0;
    apply_dropout(x, c.enc_embed_drop, cfg.dropout, mode, drop_rng);
    c.enc_layers.resize(p.enc.size());
    for (size_t li = 0; li < p.enc.size(); ++li) {
        auto& lp = p.enc[li];
        auto& lc = c.enc_layers[li];
        rmsnorm_forward(x, lp.g1, lc.n1);
        MatX<T> a = attention_forward(lc.n1.y, lc.n1.y, lp.wq, lp.wk, lp.wv, lp.wo, nh,
                                      c.enc_key_valid, false, lc.attn);
        apply_dropout(a, lc.drop1, cfg.dropout, mode, drop_rng);
        x += a;
        lc.x_mid = x;
        rmsnorm_forward(x, lp.g2, lc.n2);
        MatX<T> f = ffn_forward(lc.n2.y, lp.w1, lp.w2, lc.ffn);
        apply_dropout(f, lc.drop2, cfg.dropout, mode, drop_rng);
        x += f;
    }
    rmsnorm_forward(x, p.enc_final_g, c.enc_final);
    c.h_enc = c.enc_final.y;

    // Head read positions
    c.pkt_positions.clear();
    c.end_pos = -1;
    for (size_t i = 0; i < ex.enc_ids.size(); ++i) {
        if (ex.enc_ids[i] == cfg.pkt_id)
            c.pkt_positions.push_back(static_cast<int32_t>(i));
        if (c.end_pos < 0 && ex.enc_ids[i] == cfg.end_id)
            c.end_pos = static_cast<int32_t>(i);
    }
    if (c.end_pos < 0) c.end_pos = static_cast<int32_t>(ex.enc_ids.size()) - 1;

    // Decoder: teacher forcing with PAD as the start token.
    const auto& targets = ex.dec_targets;
    c.dec_in.assign(1, cfg.pad_id);
    for (size_t t = 0; t + 1 < targets.size(); ++t) c.dec_in.push_back(targets[t]);
    if (targets.empty()) c.dec_in.assign(1, cfg.pad_id);
    c.dec_valid = 0;
    while (c.dec_valid < static_cast<int64_t>(targets.size()) &&
           targets[static_cast<size_t>(c.dec_valid)] != cfg.pad_id)
        ++c.dec_valid;
    if (static_cast<int32_t>(c.dec_in.size()) > cfg.max_positions)
        throw PositionOverflow("decoder length " + std::to_string(c.dec_in.size()) +
                               " exceeds max_positions " + std::to_string(cfg.max_positions));
    c.dec_key_valid.resize(c.dec_in.size());
    for (size_t t = 0; t < c.dec_in.size(); ++t)
        c.dec_key_valid[t] = static_cast<int64_t>(t) < std::max<int64_t>(c.dec_valid, 1);

    c.dec_x0.resize(static_cast<Eigen::Index>(c.dec_in.size()), cfg.d_model);
    for (size_t t = 0; t < c.dec_in.size(); ++t) {
        int32_t id = c.dec_in[t];
        if (id < 0 || id >= cfg.vocab_size)
            throw IdOutOfRange("decoder token id " + std::to_string(id) + " outside vocabulary");
        c.dec_x0.row(static_cast<Eigen::Index>(t)) =
            p.token_table.row(id) + p.position_table.row(static_cast<Eigen::Index>(t));
    }
    MatX<T> y = c.dec_x0;
    apply_dropout(y, c.dec_embed_drop, cfg.dropout, mode, drop_rng);
    c.dec_layers.resize(p.dec.size());
    for (size_t li = 0; li < p.dec.size(); ++li) {
        auto& lp = p.dec[li];
        auto& lc = c.dec_layers[li];
        rmsnorm_forward(y, lp.g1, lc.n1);
        MatX<T> a = attention_forward(lc.n1.y, lc.n1.y, lp.wq, lp.wk, lp.wv, lp.wo, nh,
                                      c.dec_key_valid, true, lc.self_attn);
        apply_dropout(a, lc.drop1, cfg.dropout, mode, drop_rng);
        y += a;
        lc.x_mid = y;
        rmsnorm_forward(y, lp.g2, lc.n2);
        MatX<T> ca = attention_forward(lc.n2.y, c.h_enc, lp.cq, lp.ck, lp.cv, lp.co, nh,
                                       c.enc_key_valid, false, lc.cross_attn);
        apply_dropout(ca, lc.drop2, cfg.dropout, mode, drop_rng);
        y += ca;
        lc.x_mid2 = y;
        rmsnorm_forward(y, lp.g3, lc.n3);
        MatX<T> f = ffn_forward(lc.n3.y, lp.w1, lp.w2, lc.ffn);
        apply_dropout(f, lc.drop3, cfg.dropout, mode, drop_rng);
        y += f;
    }
    rmsnorm_forward(y, p.dec_final_g, c.dec_final);
    c.h_dec = c.dec_final.y;

    // Heads
    if (p.tie_lm_head)
        c.lm_logits = c.h_dec * p.token_table.transpose();
    else
        c.lm_logits = c.h_dec * p.lm_head;
    c.pop_logits.resize(static_cast<Eigen::Index>(c.pkt_positions.size()), 3);
    for (size_t j = 0; j < c.pkt_positions.size(); ++j)
        c.pop_logits.row(static_cast<Eigen::Index>(j)) =
            c.h_enc.row(c.pkt_positions[j]) * p.pop_head;
    c.htp_logits = c.h_enc.row(c.end_pos) * p.htp_head;
}

// Numerically stable per-row log-softmax NLL plus argmax.
template <typename T>
double row_nll(const MatX<T>& logits, Eigen::Index row, int32_t target, int32_t* argmax) {
    T m = logits.row(row).maxCoeff();
    double lse = 0.0;
    Eigen::Index best = 0;
    T best_v = logits(row, 0);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        lse += std::exp(static_cast<double>(logits(row, c) - m));
        if (logits(row, c) > best_v) {
            best_v = logits(row, c);
            best = c;
        }
    }
    if (argmax) *argmax = static_cast<int32_t>(best);
    return -(static_cast<double>(logits(row, target) - m) - std::log(lse));
}

template <typename T>
void accumulate_example_losses(const ModelConfig& cfg, const BatchExample& ex,
                               const ExampleCache<T>& c, LossBreakdown& out) {
    for (int64_t t = 0; t < c.dec_valid; ++t) {
        int32_t target = ex.dec_targets[static_cast<size_t>(t)];
        int32_t am = 0;
        out.msp_sum += row_nll(c.lm_logits, static_cast<Eigen::Index>(t), target, &am);
        ++out.msp_tokens;
        if (am == target) ++out.msp_correct;
    }
    if (ex.z) {
        size_t n = std::min(ex.pop_labels.size(), c.pkt_positions.size());
        for (size_t j = 0; j < n; ++j) {
            int32_t label = ex.pop_labels[j];
            if (label < 1 || label > 3) continue;
            int32_t am = 0;
            out.pop_sum += row_nll(c.pop_logits, static_cast<Eigen::Index>(j), label - 1, &am);
            ++out.pop_packets;
            if (am == label - 1) ++out.pop_correct;
            bool pred_same = am == static_cast<int32_t>(j);
            bool true_same = label - 1 == static_cast<int32_t>(j);
            if (pred_same == true_same) ++out.pop_same_correct;
        }
    }
    if (ex.htp_label >= 0) {
        int32_t am = 0;
        out.htp_sum += row_nll(c.htp_logits, 0, ex.htp_label, &am);
        ++out.htp_examples;
        if (am == ex.htp_label) ++out.htp_correct;
    }
    (void)cfg;
}

template <typename T>
void backward_example(const Params<T>& p, const ModelConfig& cfg, const BatchExample& ex,
                      const ExampleCache<T>& c, double msp_w, double pop_w, double htp_w,
                      Params<T>& g) {
    const int nh = cfg.n_heads;
    MatX<T> dh_enc = MatX<T>::Zero(c.h_enc.rows(), c.h_enc.cols());
    MatX<T> dh_dec = MatX<T>::Zero(c.h_dec.rows(), c.h_dec.cols());

    // Token head
    if (msp_w > 0.0 && c.dec_valid > 0) {
        MatX<T> dlogits = MatX<T>::Zero(c.lm_logits.rows(), c.lm_logits.cols());
        for (int64_t t = 0; t < c.dec_valid; ++t) {
            Eigen::Index row = static_cast<Eigen::Index>(t);
            T m = c.lm_logits.row(row).maxCoeff();
            VecX<T> prob = (c.lm_logits.row(row).array() - m).exp().matrix().transpose();
            prob /= prob.sum();
            dlogits.row(row) = prob.transpose() * static_cast<T>(msp_w);
            dlogits(row, ex.dec_targets[static_cast<size_t>(t)]) -= static_cast<T>(msp_w);
        }
        if (p.tie_lm_head) {
            g.token_table += dlogits.transpose() * c.h_dec;
            dh_dec += dlogits * p.token_table;
        } else {
            g.lm_head += c.h_dec.transpose() * dlogits;
            dh_dec += dlogits * p.lm_head.transpose();
        }
    }

    // Packet-order head
    if (pop_w > 0.0 && ex.z) {
        size_t n = std::min(ex.pop_labels.size(), c.pkt_positions.size());
        for (size_t j = 0; j < n; ++j) {
            int32_t label = ex.pop_labels[j];
            if (label < 1 || label > 3) continue;
            Eigen::Index row = static_cast<Eigen::Index>(j);
            T m = c.pop_logits.row(row).maxCoeff();
            Eigen::Matrix<T, 1, Eigen::Dynamic> prob =
                (c.pop_logits.row(row).array() - m).exp();
            prob /= prob.sum();
            prob *= static_cast<T>(pop_w);
            prob(0, label - 1) -= static_cast<T>(pop_w);
            g.pop_head += c.h_enc.row(c.pkt_positions[j]).transpose() * prob;
            dh_enc.row(c.pkt_positions[j]) += prob * p.pop_head.transpose();
        }
    }

    // Homology head
    if (htp_w > 0.0 && ex.htp_label >= 0) {
        T m = c.htp_logits.row(0).maxCoeff();
        Eigen::Matrix<T, 1, Eigen::Dynamic> prob = (c.htp_logits.row(0).array() - m).exp();
        prob /= prob.sum();
        prob *= static_cast<T>(htp_w);
        prob(0, ex.htp_label) -= static_cast<T>(htp_w);
        g.htp_head += c.h_enc.row(c.end_pos).transpose() * prob;
        dh_enc.row(c.end_pos) += prob * p.htp_head.transpose();
    }

    // Decoder stack backward
    MatX<T> dy = MatX<T>::Zero(c.h_dec.rows(), c.h_dec.cols());
    rmsnorm_backward(c.dec_final, p.dec_final_g, dh_dec, dy, g.dec_final_g);
    for (size_t li = p.dec.size(); li-- > 0;) {
        const auto& lp = p.dec[li];
        const auto& lc = c.dec_layers[li];
        auto& lg = g.dec[li];

        MatX<T> df = dy;
        backprop_dropout(df, lc.drop3);
        MatX<T> dn3 = MatX<T>::Zero(dy.rows(), dy.cols());
        ffn_backward(df, lc.n3.y, lp.w1, lp.w2, lc.ffn, lg.w1, lg.w2, dn3);
        rmsnorm_backward(lc.n3, lp.g3, dn3, dy, lg.g3);

        MatX<T> dca = dy;
        backprop_dropout(dca, lc.drop2);
        MatX<T> dn2 = MatX<T>::Zero(dy.rows(), dy.cols());
        attention_backward(dca, lc.n2.y, c.h_enc, lp.cq, lp.ck, lp.cv, lp.co, nh,
                           lc.cross_attn, lg.cq, lg.ck, lg.cv, lg.co, dn2, dh_enc);
        rmsnorm_backward(lc.n2, lp.g2, dn2, dy, lg.g2);

        MatX<T> da = dy;
        backprop_dropout(da, lc.drop1);
        MatX<T> dn1 = MatX<T>::Zero(dy.rows(), dy.cols());
        attention_backward(da, lc.n1.y, lc.n1.y, lp.wq, lp.wk, lp.wv, lp.wo, nh,
                           lc.self_attn, lg.wq, lg.wk, lg.wv, lg.wo, dn1, dn1);
        rmsnorm_backward(lc.n1, lp.g1, dn1, dy, lg.g1);
    }
    backprop_dropout(dy, c.dec_embed_drop);
    for (size_t t = 0; t < c.dec_in.size(); ++t) {
        g.token_table.row(c.dec_in[t]) += dy.row(static_cast<Eigen::Index>(t));
        g.position_table.row(static_cast<Eigen::Index>(t)) +=
            dy.row(static_cast<Eigen::Index>(t));
    }

    // Encoder stack backward
    MatX<T> dx = MatX<T>::Zero(c.h_enc.rows(), c.h_enc.cols());
    rmsnorm_backward(c.enc_final, p.enc_final_g, dh_enc, dx, g.enc_final_g);
    for (size_t li = p.enc.size(); li-- > 0;) {
        const auto& lp = p.enc[li];
        const auto& lc = c.enc_layers[li];
        auto& lg = g.enc[li];

        MatX<T> df = dx;
        backprop_dropout(df, lc.drop2);
        MatX<T> dn2 = MatX<T>::Zero(dx.rows(), dx.cols());
        ffn_backward(df, lc.n2.y, lp.w1, lp.w2, lc.ffn, lg.w1, lg.w2, dn2);
        rmsnorm_backward(lc.n2, lp.g2, dn2, dx, lg.g2);

        MatX<T> da = dx;
        backprop_dropout(da, lc.drop1);
        MatX<T> dn1 = MatX<T>::Zero(dx.rows(), dx.cols());
        attention_backward(da, lc.n1.y, lc.n1.y, lp.wq, lp.wk, lp.wv, lp.wo, nh,
                           lc.attn, lg.wq, lg.wk, lg.wv, lg.wo, dn1, dn1);
        rmsnorm_backward(lc.n1, lp.g1, dn1, dx, lg.g1);
    }
    backprop_dropout(dx, c.enc_embed_drop);
    for (size_t i = 0; i < ex.enc_ids.size(); ++i) {
        Eigen::Index r = static_cast<Eigen::Index>(i);
        g.token_table.row(ex.enc_ids[i]) += dx.row(r);
        g.position_table.row(r) += dx.row(r);
        g.header_table.row(ex.enc_header_mask[i] ? 1 : 0) += dx.row(r);
        g.packet_table.row(ex.enc_packet_ids[i]) += dx.row(r);
    }
}

} // namespace detail

// Full-batch forward (and backward when `grads` is non-null).  Losses are
// means: per non-PAD target token, per gated packet label, per
// homology-annotated example; empty means are 0.  total = msp + alpha*pop +
// beta*htp.  Throws NonFiniteLoss when any component is not finite.
template <typename T>
LossBreakdown forward_backward(const Params<T>& params, const ModelConfig& cfg,
                               const Batch& batch, Mode mode, Rng* drop_rng,
                               Params<T>* grads,
                               std::vector<ExampleOutputs<T>>* capture = nullptr) {
    if (batch.examples.empty()) throw ShapeMismatch("empty batch");
    LossBreakdown out;
    std::vector<detail::ExampleCache<T>> caches(batch.examples.size());
    for (size_t i = 0; i < batch.examples.size(); ++i) {
        detail::forward_example(params, cfg, batch.examples[i], mode, drop_rng, caches[i]);
        detail::accumulate_example_losses(cfg, batch.examples[i], caches[i], out);
    }
    out.msp = out.msp_tokens > 0 ? out.msp_sum / static_cast<double>(out.msp_tokens) : 0.0;
    out.pop = out.pop_packets > 0 ? out.pop_sum / static_cast<double>(out.pop_packets) : 0.0;
    out.htp = out.htp_examples > 0 ? out.htp_sum / static_cast<double>(out.htp_examples) : 0.0;
    out.total = out.msp + cfg.alpha * out.pop + cfg.beta * out.htp;
    if (!std::isfinite(out.total))
        throw NonFiniteLoss("non-finite loss: msp=" + std::to_string(out.msp) +
                            " pop=" + std::to_string(out.pop) +
                            " htp=" + std::to_string(out.htp));

    if (grads) {
        double msp_w = out.msp_tokens > 0 ? 1.0 / static_cast<double>(out.msp_tokens) : 0.0;
        double pop_w =
            out.pop_packets > 0 ? cfg.alpha / static_cast<double>(out.pop_packets) : 0.0;
        double htp_w =
            out.htp_examples > 0 ? cfg.beta / static_cast<double>(out.htp_examples) : 0.0;
        for (size_t i = 0; i < batch.examples.size(); ++i)
            detail::backward_example(params, cfg, batch.examples[i], caches[i], msp_w,
                                     pop_w, htp_w, *grads);
    }
    if (capture) {
        capture->clear();
        capture->reserve(caches.size());
        for (auto& c : caches) {
            ExampleOutputs<T> o;
            o.lm_logits = std::move(c.lm_logits);
            o.pop_logits = std::move(c.pop_logits);
            o.htp_logits = std::move(c.htp_logits);
            o.h_enc = std::move(c.h_enc);
            o.pkt_positions = std::move(c.pkt_positions);
            o.end_pos = c.end_pos;
            capture->push_back(std::move(o));
        }
    }
    return out;
}

// Combined objective on already-computed component losses.
inline double total_loss(double msp, double pop, double htp, const ModelConfig& cfg) {
    double t = msp + cfg.alpha * pop + cfg.beta * htp;
    if (!std::isfinite(t))
        throw NonFiniteLoss("non-finite loss: msp=" + std::to_string(msp) +
                            " pop=" + std::to_string(pop) + " htp=" + std::to_string(htp));
    return t;
}

} // namespace lens::model

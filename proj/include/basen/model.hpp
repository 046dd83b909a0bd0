#pragma once

#include "basen/nn.hpp"

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace basen {

struct ModelConfig {
  int embed_dim = 64;  // C, feature channels of both embeddings
  int audio_kernel = 16;
  std::vector<int> audio_strides = {8, 1};
  int eeg_kernel = 16;
  int eeg_stride = 8;
  int eeg_tcn_layers = 8;
  int cmca_layers = 3;  // N
  int attention_heads = 4;
  int separator_blocks = 4;   // dilated blocks per repeat (dilation 2^j)
  int separator_repeats = 2;
  int tcn_hidden = 128;
  int tcn_kernel = 3;
  int n_sources = 2;  // T; mask 0 is the target by convention
  int groupnorm_groups = 1;
  uint64_t init_seed = 1;

  int stride_product() const {
    int p = 1;
    for (int s : audio_strides) p *= s;
    return p;
  }

  void validate(const char* where = "ModelConfig") const {
    auto fail = [&](const std::string& m) {
      throw std::invalid_argument(std::string(where) + ": " + m);
    };
    if (embed_dim < 1) fail("embed_dim must be >= 1");
    if (cmca_layers < 1) fail("cmca_layers must be >= 1");
    if (n_sources < 2) fail("n_sources must be >= 2");
    if (attention_heads < 1 || embed_dim % attention_heads != 0)
      fail("attention_heads must divide embed_dim");
    if (audio_strides.empty()) fail("audio_strides must not be empty");
    for (int s : audio_strides)
      if (s < 1) fail("strides must be >= 1");
    if (audio_kernel < audio_strides.front()) fail("audio_kernel must cover the first stride");
    if (eeg_kernel < eeg_stride) fail("eeg_kernel must cover its stride");
    if (eeg_tcn_layers < 1) fail("eeg_tcn_layers must be >= 1");
    if (separator_blocks < 1 || separator_repeats < 1) fail("separator needs >= 1 block");
    if (tcn_hidden < 1) fail("tcn_hidden must be >= 1");
    if (tcn_kernel < 1 || tcn_kernel % 2 == 0) fail("tcn_kernel must be odd");
    if (groupnorm_groups < 1 || embed_dim % groupnorm_groups != 0)
      fail("groupnorm_groups must divide embed_dim");
  }
};

// Conv-TasNet style residual block: 1x1 up, PReLU, norm, depthwise (dilated),
// PReLU, norm, 1x1 down, skip connection.
template <typename S>
struct TcnBlockP {
  DenseP<S> up;
  PReluP<S> pr1;
  NormP<S> n1;
  ConvP<S> dw;
  PReluP<S> pr2;
  NormP<S> n2;
  DenseP<S> down;
};

template <typename S>
struct MhaP {
  DenseP<S> wq, wk, wv, wo;
  int heads = 1;
};

template <typename S>
struct CmcaLayerP {
  MhaP<S> att_audio;  // CrossAtt_l: query = EEG branch, key/value = audio branch
  MhaP<S> att_eeg;    // CrossAtt_r: query = audio branch, key/value = EEG branch
  NormP<S> norm_audio, norm_eeg;
};

// The BASEN network: audio/EEG encoders, CMCA fusion stack, mask separator,
// linear transposed-conv decoder.
template <typename S>
class BasenModel {
 public:
  struct ForwardResult {
    Var<S> est_target;           // 1 x input length
    Var<S> est_other;            // second mask output, auxiliary
    std::vector<Var<S>> masks;   // T masks, C x F, entries in (0,1)
    Var<S> audio_embedding;      // w_x
    Var<S> eeg_embedding;        // e_x resampled to F
    Var<S> fused;
  };

  BasenModel(ModelConfig cfg, int q_channels) : cfg_(std::move(cfg)), q_(q_channels) {
    cfg_.validate();
    if (q_ < 1) throw std::invalid_argument("BasenModel: q_channels must be >= 1");
    Rng rng(splitmix64(cfg_.init_seed ^ 0x626173656eULL));
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int q_channels() const { return q_; }
  ParameterStore<S>& params() { return params_; }
  const ParameterStore<S>& params() const { return params_; }

  Eigen::Index frame_count(Eigen::Index audio_len) const {
    Eigen::Index f = audio_len;
    bool first = true;
    for (int s : cfg_.audio_strides) {
      const int k = first ? cfg_.audio_kernel : cfg_.tcn_kernel;
      Conv1dSpec spec = stride_spec(k, s);
      f = spec.out_length(f);
      first = false;
      if (f <= 0) return 0;
    }
    return f;
  }

  // w_x = AudioEncoder(x); x is 1 x T.
  Var<S> audio_encode(GraphContext<S>& ctx, Var<S> x) const {
    if (frame_count(x.cols()) <= 0)
      throw std::invalid_argument("audio_encode: input shorter than one stride window");
    Var<S> h = apply_conv(ctx, audio_enc_[0], x);
    for (size_t i = 1; i < audio_enc_.size(); ++i) {
      h = apply_prelu(ctx, audio_act_[i - 1], h);
      h = apply_conv(ctx, audio_enc_[i], h);
    }
    return h;
  }

  // e_x = EEGencoder(e): strided conv, residual depthwise stack, temporal
  // resample to target_frames, 1x1 projection.
  Var<S> eeg_encode(GraphContext<S>& ctx, Var<S> e, Eigen::Index target_frames) const {
    if (eeg_front_.spec.out_length(e.cols()) <= 0)
      throw std::invalid_argument("eeg_encode: input shorter than one stride window");
    Var<S> h = apply_conv(ctx, eeg_front_, e);
    h = apply_prelu(ctx, eeg_front_act_, h);
    for (const auto& blk : eeg_blocks_) h = tcn_block(ctx, blk, h);
    h = linear_resample_cols(h, target_frames);
    return apply_dense(ctx, eeg_proj_, h);
  }

  // One CMCA stack pass; inputs and output are C x F.
  Var<S> cmca_fuse(GraphContext<S>& ctx, Var<S> w_x, Var<S> e_x) const {
    if (w_x.rows() != e_x.rows() || w_x.cols() != e_x.cols())
      throw std::invalid_argument("cmca_fuse: embedding shapes differ");
    Var<S> w = w_x, e = e_x;
    Var<S> sum_w, sum_e;
    for (const auto& layer : cmca_) {
      const Var<S> w_prev = w, e_prev = e;
      Var<S> att_w = attention(ctx, layer.att_audio, e_prev, w_prev, w_prev);
      Var<S> att_e = attention(ctx, layer.att_eeg, w_prev, e_prev, e_prev);
      w = apply_norm(ctx, layer.norm_audio, add(w_prev, att_w));
      e = apply_norm(ctx, layer.norm_eeg, add(e_prev, att_e));
      sum_w = sum_w.valid() ? add(sum_w, w) : w;
      sum_e = sum_e.valid() ? add(sum_e, e) : e;
    }
    Var<S> cat = concat_rows<S>({sum_w, sum_e, w_x, e_x});
    return apply_dense(ctx, fusion_, cat);
  }

  // T masks over the fused embedding, sigmoid entries in (0,1).
  std::vector<Var<S>> separate(GraphContext<S>& ctx, Var<S> fused) const {
    Var<S> h = fused;
    for (const auto& blk : separator_blocks_) h = tcn_block(ctx, blk, h);
    h = apply_prelu(ctx, separator_act_, h);
    Var<S> all = sigmoid(apply_dense(ctx, mask_head_, h));
    std::vector<Var<S>> masks;
    masks.reserve(static_cast<size_t>(cfg_.n_sources));
    for (int t = 0; t < cfg_.n_sources; ++t)
      masks.push_back(slice_rows(all, static_cast<Eigen::Index>(t) * cfg_.embed_dim,
                                 cfg_.embed_dim));
    return masks;
  }

  // shat = Decoder(w_x (.) mask), fitted to the encode-time input length.
  Var<S> decode(GraphContext<S>& ctx, Var<S> w_x, Var<S> mask, Eigen::Index out_len) const {
    if (w_x.rows() != mask.rows() || w_x.cols() != mask.cols())
      throw std::invalid_argument("decode: mask shape does not match embedding");
    Var<S> h = cwise_mul(w_x, mask);
    for (const auto& layer : decoder_) h = apply_tconv(ctx, layer, h);
    if (h.cols() > out_len) h = slice_cols(h, 0, out_len);
    if (h.cols() < out_len) h = pad_cols(h, 0, out_len - h.cols());
    return h;
  }

  ForwardResult forward(GraphContext<S>& ctx, Var<S> audio, Var<S> eeg) const {
    if (eeg.rows() != q_)
      throw std::invalid_argument("forward: EEG channel count does not match model");
    ForwardResult r;
    const Eigen::Index in_len = audio.cols();
    r.audio_embedding = audio_encode(ctx, audio);
    r.eeg_embedding = eeg_encode(ctx, eeg, r.audio_embedding.cols());
    r.fused = cmca_fuse(ctx, r.audio_embedding, r.eeg_embedding);
    r.masks = separate(ctx, r.fused);
    r.est_target = decode(ctx, r.audio_embedding, r.masks[0], in_len);
    r.est_other = decode(ctx, r.audio_embedding, r.masks[1], in_len);
    return r;
  }

  ForwardResult forward(GraphContext<S>& ctx, const Mat<S>& audio_row, const Mat<S>& eeg) const {
    return forward(ctx, constant(ctx.g, audio_row), constant(ctx.g, eeg));
  }

  Var<S> attention(GraphContext<S>& ctx, const MhaP<S>& p, Var<S> query, Var<S> key,
                   Var<S> value) const {
    const Eigen::Index dh = cfg_.embed_dim / p.heads;
    Var<S> qm = apply_dense(ctx, p.wq, query);
    Var<S> km = apply_dense(ctx, p.wk, key);
    Var<S> vm = apply_dense(ctx, p.wv, value);
    std::vector<Var<S>> heads;
    heads.reserve(static_cast<size_t>(p.heads));
    const S inv_sqrt_dh = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
    for (int h = 0; h < p.heads; ++h) {
      Var<S> qh = slice_rows(qm, h * dh, dh);
      Var<S> kh = slice_rows(km, h * dh, dh);
      Var<S> vh = slice_rows(vm, h * dh, dh);
      Var<S> scores = scale(matmul(transpose(qh), kh), inv_sqrt_dh);  // Fq x Fk
      Var<S> att = softmax_rows(scores);
      heads.push_back(matmul(vh, transpose(att)));  // dh x Fq
    }
    Var<S> cat = concat_rows<S>(heads);
    return apply_dense(ctx, p.wo, cat);
  }

 private:
  static Conv1dSpec stride_spec(int kernel, int stride) {
    Conv1dSpec s;
    s.kernel = kernel;
    s.stride = stride;
    const int pad = kernel - stride;
    s.pad_left = pad / 2;
    s.pad_right = pad - pad / 2;
    return s;
  }

  Var<S> tcn_block(GraphContext<S>& ctx, const TcnBlockP<S>& blk, Var<S> x) const {
    Var<S> h = apply_dense(ctx, blk.up, x);
    h = apply_prelu(ctx, blk.pr1, h);
    h = apply_norm(ctx, blk.n1, h);
    h = apply_depthwise(ctx, blk.dw, h);
    h = apply_prelu(ctx, blk.pr2, h);
    h = apply_norm(ctx, blk.n2, h);
    h = apply_dense(ctx, blk.down, h);
    return add(x, h);
  }

  TcnBlockP<S> make_tcn_block(Rng& rng, const std::string& name, int channels, int hidden,
                              int dilation) {
    TcnBlockP<S> blk;
    blk.up = make_dense(params_, rng, name + ".up", channels, hidden);
    blk.pr1 = make_prelu(params_, name + ".pr1");
    blk.n1 = make_norm(params_, name + ".n1", hidden, 1);
    blk.dw = make_depthwise(params_, rng, name + ".dw",
                            hidden, Conv1dSpec::same(cfg_.tcn_kernel, dilation));
    blk.pr2 = make_prelu(params_, name + ".pr2");
    blk.n2 = make_norm(params_, name + ".n2", hidden, 1);
    blk.down = make_dense(params_, rng, name + ".down", hidden, channels);
    return blk;
  }

  MhaP<S> make_mha(Rng& rng, const std::string& name) {
    MhaP<S> p;
    p.heads = cfg_.attention_heads;
    p.wq = make_dense(params_, rng, name + ".wq", cfg_.embed_dim, cfg_.embed_dim);
    p.wk = make_dense(params_, rng, name + ".wk", cfg_.embed_dim, cfg_.embed_dim);
    p.wv = make_dense(params_, rng, name + ".wv", cfg_.embed_dim, cfg_.embed_dim);
    p.wo = make_dense(params_, rng, name + ".wo", cfg_.embed_dim, cfg_.embed_dim);
    return p;
  }

  void build(Rng& rng) {
    const int c = cfg_.embed_dim;
    // audio encoder
    for (size_t i = 0; i < cfg_.audio_strides.size(); ++i) {
      const int k = i == 0 ? cfg_.audio_kernel : cfg_.tcn_kernel;
      const int cin = i == 0 ? 1 : c;
      audio_enc_.push_back(make_conv(params_, rng, "audio_enc.conv" + std::to_string(i), cin, c,
                                     stride_spec(k, cfg_.audio_strides[i])));
      if (i + 1 < cfg_.audio_strides.size())
        audio_act_.push_back(make_prelu(params_, "audio_enc.act" + std::to_string(i)));
    }
    // EEG encoder
    eeg_front_ = make_conv(params_, rng, "eeg_enc.front", q_, c,
                           stride_spec(cfg_.eeg_kernel, cfg_.eeg_stride));
    eeg_front_act_ = make_prelu(params_, "eeg_enc.front_act");
    for (int i = 0; i < cfg_.eeg_tcn_layers; ++i)
      eeg_blocks_.push_back(make_tcn_block(rng, "eeg_enc.block" + std::to_string(i), c,
                                           cfg_.tcn_hidden, 1 << (i % 8)));
    eeg_proj_ = make_dense(params_, rng, "eeg_enc.proj", c, c);
    // CMCA
    for (int i = 0; i < cfg_.cmca_layers; ++i) {
      CmcaLayerP<S> layer;
      const std::string name = "cmca.layer" + std::to_string(i);
      layer.att_audio = make_mha(rng, name + ".att_audio");
      layer.att_eeg = make_mha(rng, name + ".att_eeg");
      layer.norm_audio = make_norm(params_, name + ".norm_audio", c, cfg_.groupnorm_groups);
      layer.norm_eeg = make_norm(params_, name + ".norm_eeg", c, cfg_.groupnorm_groups);
      cmca_.push_back(layer);
    }
    fusion_ = make_dense(params_, rng, "fusion", 4 * c, c);
    // separator
    for (int r = 0; r < cfg_.separator_repeats; ++r)
      for (int j = 0; j < cfg_.separator_blocks; ++j)
        separator_blocks_.push_back(
            make_tcn_block(rng, "separator.r" + std::to_string(r) + ".b" + std::to_string(j), c,
                           cfg_.tcn_hidden, 1 << j));
    separator_act_ = make_prelu(params_, "separator.act");
    mask_head_ = make_dense(params_, rng, "separator.mask_head", c, cfg_.n_sources * c);
    // decoder mirrors the encoder with reversed strides, purely linear
    std::vector<int> rev(cfg_.audio_strides.rbegin(), cfg_.audio_strides.rend());
    for (size_t i = 0; i < rev.size(); ++i) {
      const bool last = i + 1 == rev.size();
      const int k = last ? cfg_.audio_kernel : cfg_.tcn_kernel;
      const int cout = last ? 1 : c;
      decoder_.push_back(make_tconv(params_, rng, "decoder.tconv" + std::to_string(i), c, cout,
                                    stride_spec(k, rev[i])));
    }
  }

  ModelConfig cfg_;
  int q_;
  ParameterStore<S> params_;

  std::vector<ConvP<S>> audio_enc_;
  std::vector<PReluP<S>> audio_act_;
  ConvP<S> eeg_front_;
  PReluP<S> eeg_front_act_;
  std::vector<TcnBlockP<S>> eeg_blocks_;
  DenseP<S> eeg_proj_;
  std::vector<CmcaLayerP<S>> cmca_;
  DenseP<S> fusion_;
  std::vector<TcnBlockP<S>> separator_blocks_;
  PReluP<S> separator_act_;
  DenseP<S> mask_head_;
  std::vector<ConvP<S>> decoder_;
};

}  // namespace basen

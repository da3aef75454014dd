#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rllf/errors.hpp"
#include "rllf/optim.hpp"
#include "rllf/tape.hpp"
#include "rllf/tensor.hpp"
#include "rllf/tokenizer.hpp"

namespace rllf {

// Pre-LN transformer stack, usable causal (decoder) or bidirectional
// (encoder). Everything downstream - the language model, the reward model,
// the pair classifier - is this stack plus a head.
struct TransformerConfig {
  int vocab_size = 0;
  int context_length = 128;
  int embed_dim = 128;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_multiplier = 4;
  float dropout = 0.0f;
  bool causal = true;

  void validate() const {
    if (vocab_size <= 0 || context_length <= 0 || embed_dim <= 0 || n_layers <= 0 ||
        n_heads <= 0 || ffn_multiplier <= 0)
      throw ConfigError("transformer config: all dimensions must be positive");
    if (embed_dim % n_heads != 0)
      throw ConfigError("transformer config: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    if (dropout < 0.0f || dropout >= 1.0f)
      throw ConfigError("transformer config: dropout must be in [0,1)");
  }
};

struct LayerParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor wfc, bfc, wproj, bproj;
};

struct TransformerParams {
  TransformerConfig cfg;
  Tensor tok_emb;  // [V, C]; also the tied output projection for the LM
  Tensor pos_emb;  // [ctx, C]
  std::vector<LayerParams> layers;
  Tensor lnf_g, lnf_b;

  static TransformerParams init(const TransformerConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937 rng = make_init_rng(seed);
    TransformerParams p;
    p.cfg = cfg;
    const int C = cfg.embed_dim, F = cfg.ffn_multiplier * cfg.embed_dim;
    p.tok_emb = Tensor::randn({cfg.vocab_size, C}, rng, 0.02f, true);
    p.pos_emb = Tensor::randn({cfg.context_length, C}, rng, 0.01f, true);
    for (int l = 0; l < cfg.n_layers; ++l) {
      LayerParams lp;
      lp.ln1_g = Tensor::full({C}, 1.0f, true);
      lp.ln1_b = Tensor::zeros({C}, true);
      lp.wq = Tensor::randn({C, C}, rng, 0.02f, true);
      lp.bq = Tensor::zeros({C}, true);
      lp.wk = Tensor::randn({C, C}, rng, 0.02f, true);
      lp.bk = Tensor::zeros({C}, true);
      lp.wv = Tensor::randn({C, C}, rng, 0.02f, true);
      lp.bv = Tensor::zeros({C}, true);
      lp.wo = Tensor::randn({C, C}, rng, 0.02f, true);
      lp.bo = Tensor::zeros({C}, true);
      lp.ln2_g = Tensor::full({C}, 1.0f, true);
      lp.ln2_b = Tensor::zeros({C}, true);
      lp.wfc = Tensor::randn({C, F}, rng, 0.02f, true);
      lp.bfc = Tensor::zeros({F}, true);
      lp.wproj = Tensor::randn({F, C}, rng, 0.02f, true);
      lp.bproj = Tensor::zeros({C}, true);
      p.layers.push_back(std::move(lp));
    }
    p.lnf_g = Tensor::full({C}, 1.0f, true);
    p.lnf_b = Tensor::zeros({C}, true);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (size_t l = 0; l < layers.size(); ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      const LayerParams& lp = layers[l];
      out.emplace_back(pre + "ln1_g", lp.ln1_g);
      out.emplace_back(pre + "ln1_b", lp.ln1_b);
      out.emplace_back(pre + "wq", lp.wq);
      out.emplace_back(pre + "bq", lp.bq);
      out.emplace_back(pre + "wk", lp.wk);
      out.emplace_back(pre + "bk", lp.bk);
      out.emplace_back(pre + "wv", lp.wv);
      out.emplace_back(pre + "bv", lp.bv);
      out.emplace_back(pre + "wo", lp.wo);
      out.emplace_back(pre + "bo", lp.bo);
      out.emplace_back(pre + "ln2_g", lp.ln2_g);
      out.emplace_back(pre + "ln2_b", lp.ln2_b);
      out.emplace_back(pre + "wfc", lp.wfc);
      out.emplace_back(pre + "bfc", lp.bfc);
      out.emplace_back(pre + "wproj", lp.wproj);
      out.emplace_back(pre + "bproj", lp.bproj);
    }
    out.emplace_back("lnf_g", lnf_g);
    out.emplace_back("lnf_b", lnf_b);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) {
      (void)name;
      out.push_back(t);
    }
    return out;
  }

  TransformerParams clone() const {
    TransformerParams c;
    c.cfg = cfg;
    c.tok_emb = tok_emb.clone();
    c.pos_emb = pos_emb.clone();
    for (const auto& lp : layers)
      c.layers.push_back({lp.ln1_g.clone(), lp.ln1_b.clone(), lp.wq.clone(), lp.bq.clone(),
                          lp.wk.clone(), lp.bk.clone(), lp.wv.clone(), lp.bv.clone(),
                          lp.wo.clone(), lp.bo.clone(), lp.ln2_g.clone(), lp.ln2_b.clone(),
                          lp.wfc.clone(), lp.bfc.clone(), lp.wproj.clone(), lp.bproj.clone()});
    c.lnf_g = lnf_g.clone();
    c.lnf_b = lnf_b.clone();
    return c;
  }

  // Overwrite this instance's values with another's (shapes must agree).
  void copy_values_from(const TransformerParams& other) {
    auto dst = named_params();
    auto src = other.named_params();
    if (dst.size() != src.size()) throw ShapeError("copy_values_from: parameter count mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].second.shape() != src[i].second.shape())
        throw ShapeError("copy_values_from: shape mismatch at " + dst[i].first);
      std::copy(src[i].second.vec().begin(), src[i].second.vec().end(),
                dst[i].second.vec().begin());
    }
  }

 private:
  static std::mt19937 make_init_rng(uint64_t seed) {
    std::mt19937 rng(static_cast<uint32_t>(seed * 0x9E3779B9u + 0x7F4A7C15u));
    return rng;
  }
};

// Fixed-width batch of token sequences, PAD-filled to the longest row.
struct PackedBatch {
  std::vector<int> ids;      // [B*T]
  std::vector<int> lengths;  // true length per row
  int B = 0, T = 0;

  static PackedBatch pack(const std::vector<TokenSeq>& seqs, int pad_id = Vocabulary::kPad) {
    if (seqs.empty()) throw DataError("pack: empty batch");
    PackedBatch b;
    b.B = static_cast<int>(seqs.size());
    for (const auto& s : seqs) {
      if (s.empty()) throw DataError("pack: empty sequence");
      b.T = std::max(b.T, static_cast<int>(s.size()));
    }
    b.ids.assign(static_cast<size_t>(b.B) * b.T, pad_id);
    for (int i = 0; i < b.B; ++i) {
      b.lengths.push_back(static_cast<int>(seqs[static_cast<size_t>(i)].size()));
      std::copy(seqs[static_cast<size_t>(i)].begin(), seqs[static_cast<size_t>(i)].end(),
                b.ids.begin() + static_cast<int64_t>(i) * b.T);
    }
    return b;
  }
};

namespace detail {

// Additive attention mask [B*H, T, T]: causal upper triangle (optional) plus
// key padding. -1e9 keeps every stored value finite through softmax.
inline Tensor attention_mask(const PackedBatch& batch, int n_heads, bool causal) {
  const int B = batch.B, T = batch.T, H = n_heads;
  constexpr float kNeg = -1e9f;
  Tensor mask = Tensor::zeros({B * H, T, T});
  for (int b = 0; b < B; ++b) {
    const int len = batch.lengths[static_cast<size_t>(b)];
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j) {
        float v = 0.0f;
        if (j >= len) v = kNeg;            // padded key
        if (causal && j > i) v = kNeg;     // future key
        if (v != 0.0f)
          for (int h = 0; h < H; ++h)
            mask.data()[((static_cast<int64_t>(b) * H + h) * T + i) * T + j] = v;
      }
  }
  return mask;
}

}  // namespace detail

// Hidden states [B*T, C] after the final layer norm. Dropout is active only
// when a dropout_rng is supplied (training), and only if cfg.dropout > 0.
inline Tensor transformer_hidden(Tape& tape, const TransformerParams& p, const PackedBatch& batch,
                                 std::mt19937* dropout_rng = nullptr) {
  namespace o = ops;
  const TransformerConfig& cfg = p.cfg;
  const int B = batch.B, T = batch.T, C = cfg.embed_dim, H = cfg.n_heads;
  if (T > cfg.context_length)
    throw DataError("sequence length " + std::to_string(T) + " exceeds context length " +
                    std::to_string(cfg.context_length));
  for (int id : batch.ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(cfg.vocab_size));

  std::vector<int> pos_ids(static_cast<size_t>(B) * T);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) pos_ids[static_cast<size_t>(b) * T + t] = t;

  Tensor h = o::add(tape, o::gather_rows(tape, p.tok_emb, batch.ids),
                    o::gather_rows(tape, p.pos_emb, pos_ids));
  const Tensor mask = detail::attention_mask(batch, H, cfg.causal);
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(C / H));
  auto maybe_dropout = [&](Tensor x) {
    if (dropout_rng && cfg.dropout > 0.0f) return o::dropout(tape, x, cfg.dropout, *dropout_rng);
    return x;
  };

  for (const LayerParams& lp : p.layers) {
    Tensor a = o::layer_norm(tape, h, lp.ln1_g, lp.ln1_b);
    Tensor q = o::split_heads(tape, o::add_bias(tape, o::matmul(tape, a, lp.wq), lp.bq), B, T, H);
    Tensor k = o::split_heads(tape, o::add_bias(tape, o::matmul(tape, a, lp.wk), lp.bk), B, T, H);
    Tensor v = o::split_heads(tape, o::add_bias(tape, o::matmul(tape, a, lp.wv), lp.bv), B, T, H);
    Tensor scores = o::add(tape, o::scale(tape, o::bmm_nt(tape, q, k), inv_sqrt_hd), mask);
    Tensor att = maybe_dropout(o::softmax(tape, scores));
    Tensor ctx = o::merge_heads(tape, o::bmm(tape, att, v), B, T, H);
    Tensor attn_out = maybe_dropout(o::add_bias(tape, o::matmul(tape, ctx, lp.wo), lp.bo));
    h = o::add(tape, h, attn_out);

    Tensor n2 = o::layer_norm(tape, h, lp.ln2_g, lp.ln2_b);
    Tensor f = o::gelu(tape, o::add_bias(tape, o::matmul(tape, n2, lp.wfc), lp.bfc));
    Tensor ffn_out = maybe_dropout(o::add_bias(tape, o::matmul(tape, f, lp.wproj), lp.bproj));
    h = o::add(tape, h, ffn_out);
  }
  return o::layer_norm(tape, h, p.lnf_g, p.lnf_b);
}

}  // namespace rllf

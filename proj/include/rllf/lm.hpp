#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rllf/optim.hpp"
#include "rllf/rng.hpp"
#include "rllf/tape.hpp"
#include "rllf/tokenizer.hpp"
#include "rllf/transformer.hpp"

namespace rllf {

// Decoder-only causal LM with weight-tied output projection.
struct LmConfig {
  int vocab_size = 0;
  int context_length = 128;
  int embed_dim = 128;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_multiplier = 4;
  float dropout = 0.0f;

  TransformerConfig core() const {
    return {vocab_size, context_length, embed_dim, n_layers,
            n_heads,    ffn_multiplier, dropout,   true};
  }
};

struct LmParams {
  TransformerParams core;

  static LmParams init(const LmConfig& cfg, uint64_t seed) {
    return {TransformerParams::init(cfg.core(), seed)};
  }
  std::vector<std::pair<std::string, Tensor>> named_params() const { return core.named_params(); }
  std::vector<Tensor> params() const { return core.params(); }
  LmParams clone() const { return {core.clone()}; }
  int context_length() const { return core.cfg.context_length; }
  int vocab_size() const { return core.cfg.vocab_size; }
};

// Logits [B*T, V] via the tied embedding.
inline Tensor lm_logits(Tape& tape, const LmParams& p, const PackedBatch& batch,
                        std::mt19937* dropout_rng = nullptr) {
  Tensor h = transformer_hidden(tape, p.core, batch, dropout_rng);
  return ops::matmul_nt(tape, h, p.core.tok_emb);
}

// Single-sequence logits [T, V]; position t depends only on tokens <= t.
inline Tensor lm_forward(Tape& tape, const LmParams& p, const TokenSeq& seq) {
  return lm_logits(tape, p, PackedBatch::pack({seq}));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplingConfig {
  int min_length = -1;      // -1: EOS allowed at any step
  int top_k = 0;            // 0: disabled
  float top_p = 1.0f;       // 1.0: full distribution
  float temperature = 1.0f;
  int max_new_tokens = 16;
  uint64_t seed = 0;

  void validate() const {
    if (top_p <= 0.0f || top_p > 1.0f) throw ConfigError("sampling: top_p must be in (0,1]");
    if (temperature <= 0.0f) throw ConfigError("sampling: temperature must be positive");
    if (max_new_tokens <= 0) throw ConfigError("sampling: max_new_tokens must be positive");
    if (top_k < 0) throw ConfigError("sampling: top_k must be >= 0");
  }
};

// One draw from the next-token distribution at a decoding step. Returns the
// sampled id and its probability under the realized sampling distribution
// (after temperature, min-length masking and any top-k/top-p truncation).
inline std::pair<int, float> sample_from_logits(const float* logits, int vocab,
                                                const SamplingConfig& cfg, int step,
                                                std::mt19937& rng,
                                                int eos_id = Vocabulary::kEos) {
  std::vector<float> scaled(static_cast<size_t>(vocab));
  for (int i = 0; i < vocab; ++i) scaled[static_cast<size_t>(i)] = logits[i] / cfg.temperature;
  if (cfg.min_length >= 0 && step < cfg.min_length) scaled[static_cast<size_t>(eos_id)] = -1e9f;

  if (cfg.top_k > 0 && cfg.top_k < vocab) {
    std::vector<float> sorted = scaled;
    std::nth_element(sorted.begin(), sorted.begin() + (cfg.top_k - 1), sorted.end(),
                     std::greater<float>());
    const float cutoff = sorted[static_cast<size_t>(cfg.top_k - 1)];
    for (auto& v : scaled)
      if (v < cutoff) v = -1e9f;
  }

  std::vector<float> probs(static_cast<size_t>(vocab));
  ops::detail::softmax_rows(scaled.data(), probs.data(), 1, vocab);

  if (cfg.top_p < 1.0f) {
    std::vector<int> order(static_cast<size_t>(vocab));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
        return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
      return a < b;
    });
    float cum = 0.0f;
    std::vector<bool> keep(static_cast<size_t>(vocab), false);
    for (int idx : order) {
      keep[static_cast<size_t>(idx)] = true;
      cum += probs[static_cast<size_t>(idx)];
      if (cum >= cfg.top_p) break;
    }
    float z = 0.0f;
    for (int i = 0; i < vocab; ++i) {
      if (!keep[static_cast<size_t>(i)]) probs[static_cast<size_t>(i)] = 0.0f;
      z += probs[static_cast<size_t>(i)];
    }
    for (auto& v : probs) v /= z;
  }

  const float u = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  float cum = 0.0f;
  int picked = vocab - 1;
  for (int i = 0; i < vocab; ++i) {
    cum += probs[static_cast<size_t>(i)];
    if (u < cum) {
      picked = i;
      break;
    }
  }
  // guard against rounding at the tail: take the last nonzero-probability id
  while (picked > 0 && probs[static_cast<size_t>(picked)] == 0.0f) --picked;
  return {picked, probs[static_cast<size_t>(picked)]};
}

// ---------------------------------------------------------------------------
// Negation generation and scoring
// ---------------------------------------------------------------------------

// "negate : <sentence> <sep>" with a leading BOS; the continuation is read
// until EOS.
inline TokenSeq negation_prompt_ids(const Vocabulary& vocab, const std::string& sentence) {
  TokenSeq ids{Vocabulary::kBos};
  for (int id : vocab.encode("negate : " + sentence)) ids.push_back(id);
  ids.push_back(Vocabulary::kSep);
  return ids;
}

struct GenerationResult {
  std::string text;             // decoded continuation, EOS excluded
  TokenSeq ids;                 // sampled ids, including the final EOS if hit
  std::vector<float> logps;     // log prob of each sampled id
};

inline GenerationResult generate_from_ids(const LmParams& p, const TokenSeq& prompt,
                                          const SamplingConfig& cfg, std::mt19937& rng,
                                          const Vocabulary& vocab) {
  cfg.validate();
  if (static_cast<int>(prompt.size()) + 1 > p.context_length())
    throw DataError("generate: prompt of " + std::to_string(prompt.size()) +
                    " tokens leaves no room in context of " +
                    std::to_string(p.context_length()));
  GenerationResult out;
  TokenSeq seq = prompt;
  const int budget =
      std::min(cfg.max_new_tokens, p.context_length() - static_cast<int>(prompt.size()));
  for (int step = 0; step < budget; ++step) {
    Tape tape(Tape::Mode::NoGrad);
    Tensor logits = lm_forward(tape, p, seq);
    const int V = logits.dim(1);
    const float* last = logits.data() + static_cast<int64_t>(logits.dim(0) - 1) * V;
    auto [id, prob] = sample_from_logits(last, V, cfg, step, rng);
    out.ids.push_back(id);
    out.logps.push_back(std::log(prob));
    seq.push_back(id);
    if (id == Vocabulary::kEos) break;
  }
  TokenSeq text_ids = out.ids;
  if (!text_ids.empty() && text_ids.back() == Vocabulary::kEos) text_ids.pop_back();
  out.text = vocab.decode(text_ids);
  return out;
}

inline GenerationResult generate_negation(const LmParams& p, const Vocabulary& vocab,
                                          const std::string& sentence, const SamplingConfig& cfg,
                                          std::mt19937& rng) {
  return generate_from_ids(p, negation_prompt_ids(vocab, sentence), cfg, rng, vocab);
}

inline GenerationResult generate_negation(const LmParams& p, const Vocabulary& vocab,
                                          const std::string& sentence, const SamplingConfig& cfg) {
  std::mt19937 rng = make_rng(cfg.seed, 0x6E6567ULL);
  return generate_negation(p, vocab, sentence, cfg, rng);
}

// log P(continuation | prompt) as a tape scalar; the gradient entry point for
// the policy update.
inline Tensor score_log_prob(Tape& tape, const LmParams& p, const TokenSeq& prompt,
                             const TokenSeq& continuation) {
  if (prompt.empty()) throw DataError("score_log_prob: empty prompt");
  if (continuation.empty()) throw DataError("score_log_prob: empty continuation");
  TokenSeq full = prompt;
  full.insert(full.end(), continuation.begin(), continuation.end());
  if (static_cast<int>(full.size()) > p.context_length())
    throw DataError("score_log_prob: sequence of " + std::to_string(full.size()) +
                    " tokens exceeds context length " + std::to_string(p.context_length()));
  Tensor logits = lm_forward(tape, p, full);
  const int n = static_cast<int>(full.size());
  std::vector<int> labels(static_cast<size_t>(n), 0);
  std::vector<float> weights(static_cast<size_t>(n), 0.0f);
  const int start = static_cast<int>(prompt.size());
  for (int t = start - 1; t < n - 1; ++t) {
    labels[static_cast<size_t>(t)] = full[static_cast<size_t>(t) + 1];
    weights[static_cast<size_t>(t)] = 1.0f;
  }
  Tensor nll = ops::cross_entropy_weighted(tape, logits, labels, weights);
  return ops::scale(tape, nll, -static_cast<float>(continuation.size()));
}

inline Tensor score_log_prob(Tape& tape, const LmParams& p, const Vocabulary& vocab,
                             const std::string& prompt_sentence,
                             const std::string& continuation_text) {
  TokenSeq cont = vocab.encode(continuation_text);
  cont.push_back(Vocabulary::kEos);
  return score_log_prob(tape, p, negation_prompt_ids(vocab, prompt_sentence), cont);
}

// ---------------------------------------------------------------------------
// Causal-LM pretraining
// ---------------------------------------------------------------------------

struct PretrainConfig {
  float lr = 3e-4f;
  int batch = 16;
  int epochs = 2;
  float weight_decay = 0.0f;
  float heldout_fraction = 0.1f;
  uint64_t seed = 0;
};

struct PretrainLog {
  std::vector<float> step_losses;
  float heldout_perplexity = 0.0f;
  float initial_heldout_perplexity = 0.0f;
};

inline std::vector<TokenSeq> tokenize_lines(const Vocabulary& vocab,
                                            const std::vector<std::string>& lines,
                                            int context_length) {
  std::vector<TokenSeq> seqs;
  seqs.reserve(lines.size());
  for (const auto& line : lines) {
    TokenSeq ids{Vocabulary::kBos};
    for (const auto& tok : Vocabulary::split(line)) {
      // reserved surface forms map to their ids so primer lines can place SEP
      int id = -1;
      for (int r = 0; r < Vocabulary::kReserved; ++r)
        if (tok == Vocabulary::reserved_tokens()[static_cast<size_t>(r)]) id = r;
      ids.push_back(id >= 0 ? id : vocab.id_of(tok));
    }
    ids.push_back(Vocabulary::kEos);
    if (static_cast<int>(ids.size()) > context_length) ids.resize(static_cast<size_t>(context_length));
    if (ids.size() >= 2) seqs.push_back(std::move(ids));
  }
  return seqs;
}

// Mean next-token cross entropy over a packed batch (PAD and final positions
// carry zero weight).
inline Tensor lm_batch_loss(Tape& tape, const LmParams& p, const PackedBatch& batch,
                            std::mt19937* dropout_rng = nullptr) {
  Tensor logits = lm_logits(tape, p, batch, dropout_rng);
  const int n = batch.B * batch.T;
  std::vector<int> labels(static_cast<size_t>(n), 0);
  std::vector<float> weights(static_cast<size_t>(n), 0.0f);
  for (int b = 0; b < batch.B; ++b) {
    const int len = batch.lengths[static_cast<size_t>(b)];
    for (int t = 0; t + 1 < len; ++t) {
      labels[static_cast<size_t>(b) * batch.T + t] = batch.ids[static_cast<size_t>(b) * batch.T + t + 1];
      weights[static_cast<size_t>(b) * batch.T + t] = 1.0f;
    }
  }
  return ops::cross_entropy_weighted(tape, logits, labels, weights);
}

inline float lm_eval_nll(const LmParams& p, const std::vector<TokenSeq>& seqs, int batch_size) {
  double total = 0.0;
  int64_t tokens = 0;
  for (size_t at = 0; at < seqs.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<TokenSeq> chunk(seqs.begin() + static_cast<int64_t>(at),
                                seqs.begin() + static_cast<int64_t>(std::min(
                                                   seqs.size(), at + static_cast<size_t>(batch_size))));
    PackedBatch batch = PackedBatch::pack(chunk);
    Tape tape(Tape::Mode::NoGrad);
    int64_t chunk_tokens = 0;
    for (const auto& s : chunk) chunk_tokens += static_cast<int64_t>(s.size()) - 1;
    total += static_cast<double>(lm_batch_loss(tape, p, batch).item()) * static_cast<double>(chunk_tokens);
    tokens += chunk_tokens;
  }
  return tokens ? static_cast<float>(total / static_cast<double>(tokens)) : 0.0f;
}

inline PretrainLog train_lm(LmParams& p, const std::vector<std::string>& corpus,
                            const Vocabulary& vocab, const PretrainConfig& cfg) {
  if (corpus.empty()) throw DataError("train_lm: empty corpus");
  std::vector<TokenSeq> seqs = tokenize_lines(vocab, corpus, p.context_length());
  std::mt19937 rng = make_rng(cfg.seed, 0x707265ULL);
  std::shuffle(seqs.begin(), seqs.end(), rng);
  const size_t heldout_n =
      std::min(seqs.size() - 1, static_cast<size_t>(static_cast<double>(seqs.size()) * cfg.heldout_fraction));
  std::vector<TokenSeq> heldout(seqs.end() - static_cast<int64_t>(heldout_n), seqs.end());
  seqs.resize(seqs.size() - heldout_n);

  PretrainLog log;
  if (!heldout.empty())
    log.initial_heldout_perplexity = std::exp(lm_eval_nll(p, heldout, cfg.batch));

  Adam opt(p.params(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  std::vector<Tensor> params = p.params();
  std::mt19937 drop_rng = make_rng(cfg.seed, 0x64726FULL);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(seqs.begin(), seqs.end(), rng);
    for (size_t at = 0; at < seqs.size(); at += static_cast<size_t>(cfg.batch)) {
      std::vector<TokenSeq> chunk(
          seqs.begin() + static_cast<int64_t>(at),
          seqs.begin() + static_cast<int64_t>(std::min(seqs.size(), at + static_cast<size_t>(cfg.batch))));
      PackedBatch batch = PackedBatch::pack(chunk);
      zero_grad(params);
      Tape tape;
      Tensor loss = lm_batch_loss(tape, p, batch, p.core.cfg.dropout > 0 ? &drop_rng : nullptr);
      tape.backward(loss);
      opt.step();
      log.step_losses.push_back(loss.item());
    }
  }
  if (!heldout.empty()) log.heldout_perplexity = std::exp(lm_eval_nll(p, heldout, cfg.batch));
  return log;
}

}  // namespace rllf

#include <cmath>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "rllf/datagen.hpp"
#include "rllf/lm.hpp"
#include "support/gradcheck.hpp"

using rllf::LmConfig;
using rllf::LmParams;
using rllf::PackedBatch;
using rllf::Tape;
using rllf::Tensor;
using rllf::TokenSeq;
using rllf::Vocabulary;

namespace {

LmConfig tiny_cfg(int vocab, int ctx = 16, int embed = 16, int layers = 2, int heads = 2) {
  LmConfig cfg;
  cfg.vocab_size = vocab;
  cfg.context_length = ctx;
  cfg.embed_dim = embed;
  cfg.n_layers = layers;
  cfg.n_heads = heads;
  return cfg;
}

// Straight-line double-precision re-implementation of the forward equations:
// plain loops, no tape, no Eigen. The model under test must match it.
std::vector<std::vector<double>> ref_forward(const LmParams& p, const TokenSeq& ids) {
  const auto& cfg = p.core.cfg;
  const int T = static_cast<int>(ids.size()), C = cfg.embed_dim, H = cfg.n_heads;
  const int hd = C / H, F = cfg.ffn_multiplier * C, V = cfg.vocab_size;
  auto at = [](const Tensor& t, int r, int c, int cols) {
    return static_cast<double>(t.data()[static_cast<int64_t>(r) * cols + c]);
  };

  std::vector<std::vector<double>> h(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(C)));
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c)
      h[static_cast<size_t>(t)][static_cast<size_t>(c)] =
          at(p.core.tok_emb, ids[static_cast<size_t>(t)], c, C) + at(p.core.pos_emb, t, c, C);

  auto layer_norm = [&](const std::vector<double>& x, const Tensor& g, const Tensor& b) {
    double mu = 0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    const double istd = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
      out[i] = static_cast<double>(g.data()[i]) * (x[i] - mu) * istd + static_cast<double>(b.data()[i]);
    return out;
  };
  auto linear = [&](const std::vector<double>& x, const Tensor& w, const Tensor& bias, int out_dim) {
    std::vector<double> out(static_cast<size_t>(out_dim), 0.0);
    const int in_dim = static_cast<int>(x.size());
    for (int j = 0; j < out_dim; ++j) {
      double acc = static_cast<double>(bias.data()[j]);
      for (int i = 0; i < in_dim; ++i)
        acc += x[static_cast<size_t>(i)] * at(w, i, j, out_dim);
      out[static_cast<size_t>(j)] = acc;
    }
    return out;
  };

  for (const auto& lp : p.core.layers) {
    std::vector<std::vector<double>> q(static_cast<size_t>(T)), k(static_cast<size_t>(T)),
        v(static_cast<size_t>(T)), a(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      a[static_cast<size_t>(t)] = layer_norm(h[static_cast<size_t>(t)], lp.ln1_g, lp.ln1_b);
      q[static_cast<size_t>(t)] = linear(a[static_cast<size_t>(t)], lp.wq, lp.bq, C);
      k[static_cast<size_t>(t)] = linear(a[static_cast<size_t>(t)], lp.wk, lp.bk, C);
      v[static_cast<size_t>(t)] = linear(a[static_cast<size_t>(t)], lp.wv, lp.bv, C);
    }
    for (int t = 0; t < T; ++t) {
      std::vector<double> merged(static_cast<size_t>(C), 0.0);
      for (int head = 0; head < H; ++head) {
        std::vector<double> scores(static_cast<size_t>(t) + 1);
        double mx = -1e300;
        for (int s = 0; s <= t; ++s) {
          double acc = 0;
          for (int d = 0; d < hd; ++d)
            acc += q[static_cast<size_t>(t)][static_cast<size_t>(head * hd + d)] *
                   k[static_cast<size_t>(s)][static_cast<size_t>(head * hd + d)];
          scores[static_cast<size_t>(s)] = acc / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, scores[static_cast<size_t>(s)]);
        }
        double z = 0;
        for (auto& sct : scores) {
          sct = std::exp(sct - mx);
          z += sct;
        }
        for (int s = 0; s <= t; ++s)
          for (int d = 0; d < hd; ++d)
            merged[static_cast<size_t>(head * hd + d)] +=
                scores[static_cast<size_t>(s)] / z *
                v[static_cast<size_t>(s)][static_cast<size_t>(head * hd + d)];
      }
      std::vector<double> o = linear(merged, lp.wo, lp.bo, C);
      for (int c = 0; c < C; ++c) h[static_cast<size_t>(t)][static_cast<size_t>(c)] += o[static_cast<size_t>(c)];
    }
    for (int t = 0; t < T; ++t) {
      std::vector<double> n2 = layer_norm(h[static_cast<size_t>(t)], lp.ln2_g, lp.ln2_b);
      std::vector<double> f = linear(n2, lp.wfc, lp.bfc, F);
      for (auto& x : f) {
        const double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
      }
      std::vector<double> proj = linear(f, lp.wproj, lp.bproj, C);
      for (int c = 0; c < C; ++c)
        h[static_cast<size_t>(t)][static_cast<size_t>(c)] += proj[static_cast<size_t>(c)];
    }
  }

  std::vector<std::vector<double>> logits(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(V)));
  for (int t = 0; t < T; ++t) {
    std::vector<double> fin = layer_norm(h[static_cast<size_t>(t)], p.core.lnf_g, p.core.lnf_b);
    for (int j = 0; j < V; ++j) {
      double acc = 0;
      for (int c = 0; c < C; ++c) acc += fin[static_cast<size_t>(c)] * at(p.core.tok_emb, j, c, C);
      logits[static_cast<size_t>(t)][static_cast<size_t>(j)] = acc;
    }
  }
  return logits;
}

}  // namespace

TEST_CASE("forward matches the straight-line reference implementation") {
  LmParams p = LmParams::init(tiny_cfg(12), 3);
  TokenSeq ids = {2, 5, 7, 9, 11, 6, 5, 3};
  Tape tape(Tape::Mode::NoGrad);
  Tensor logits = rllf::lm_forward(tape, p, ids);
  auto ref = ref_forward(p, ids);
  for (int t = 0; t < static_cast<int>(ids.size()); ++t)
    for (int j = 0; j < 12; ++j) {
      const float got = logits.data()[t * 12 + j];
      REQUIRE(std::fabs(got - ref[static_cast<size_t>(t)][static_cast<size_t>(j)]) < 1e-5);
    }
}

TEST_CASE("causal mask: suffix edits leave earlier logits bit-identical") {
  LmParams p = LmParams::init(tiny_cfg(20), 7);
  TokenSeq a = {2, 6, 9, 12, 15, 18};
  TokenSeq b = a;
  b[4] = 5;  // perturb token at position 4
  Tape t1(Tape::Mode::NoGrad), t2(Tape::Mode::NoGrad);
  Tensor la = rllf::lm_forward(t1, p, a);
  Tensor lb = rllf::lm_forward(t2, p, b);
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 20; ++j)
      REQUIRE(la.data()[t * 20 + j] == lb.data()[t * 20 + j]);
  bool any_diff = false;
  for (int j = 0; j < 20; ++j) any_diff = any_diff || la.data()[4 * 20 + j] != lb.data()[4 * 20 + j];
  REQUIRE(any_diff);
}

TEST_CASE("zero embedding table gives uniform softmax at every position") {
  LmParams p = LmParams::init(tiny_cfg(10), 1);
  std::fill(p.core.tok_emb.vec().begin(), p.core.tok_emb.vec().end(), 0.0f);
  Tape tape(Tape::Mode::NoGrad);
  Tensor logits = rllf::lm_forward(tape, p, {0, 1, 2});
  for (int64_t i = 0; i < logits.size(); ++i) REQUIRE(logits.data()[i] == 0.0f);
}

TEST_CASE("overlong sequence raises a context-length error") {
  LmParams p = LmParams::init(tiny_cfg(10, 4), 1);
  Tape tape(Tape::Mode::NoGrad);
  REQUIRE_THROWS_AS(rllf::lm_forward(tape, p, {1, 2, 3, 1, 2}), rllf::DataError);
}

TEST_CASE("score_log_prob of a uniform model is n log(1/V)") {
  LmParams p = LmParams::init(tiny_cfg(10), 2);
  std::fill(p.core.tok_emb.vec().begin(), p.core.tok_emb.vec().end(), 0.0f);
  Tape tape(Tape::Mode::NoGrad);
  Tensor s = rllf::score_log_prob(tape, p, {2, 5, 6}, {7, 8, 9, 3});
  REQUIRE(s.item() == Catch::Approx(4.0 * std::log(1.0 / 10.0)).margin(1e-5));
}

TEST_CASE("scoring matches the autoregressive chain rule") {
  LmParams p = LmParams::init(tiny_cfg(14), 11);
  TokenSeq prompt = {2, 4, 6};
  TokenSeq c1 = {7, 8}, c2 = {9, 10, 3};
  TokenSeq c12 = c1;
  c12.insert(c12.end(), c2.begin(), c2.end());
  TokenSeq prompt_c1 = prompt;
  prompt_c1.insert(prompt_c1.end(), c1.begin(), c1.end());

  Tape t1(Tape::Mode::NoGrad), t2(Tape::Mode::NoGrad), t3(Tape::Mode::NoGrad);
  const float whole = rllf::score_log_prob(t1, p, prompt, c12).item();
  const float part1 = rllf::score_log_prob(t2, p, prompt, c1).item();
  const float part2 = rllf::score_log_prob(t3, p, prompt_c1, c2).item();
  REQUIRE(whole == Catch::Approx(part1 + part2).margin(1e-5));
}

TEST_CASE("score_log_prob gradient matches finite differences") {
  LmConfig cfg = tiny_cfg(10, 12, 8, 1, 2);
  LmParams p = LmParams::init(cfg, 5);
  TokenSeq prompt = {2, 4};
  TokenSeq cont = {6, 7, 3};
  auto build = [&](Tape& t) { return rllf::score_log_prob(t, p, prompt, cont); };
  auto res = gradcheck::check(build, p.params());
  INFO(res.detail);
  REQUIRE(res.ok);
}

TEST_CASE("pretraining beats the uniform baseline and can memorize") {
  // small synthetic corpus, tiny model
  auto ded = rllf::datagen::gen_deduction_corpus(0, 40);
  auto near = rllf::datagen::gen_negation_corpus(0, 40, rllf::datagen::NegationMode::TrainNear);
  auto lines = rllf::datagen::gen_pretrain_corpus(0, ded, near, 100);
  Vocabulary vocab = Vocabulary::build(lines);

  LmConfig cfg = tiny_cfg(vocab.size(), 48, 32, 2, 2);
  LmParams p = LmParams::init(cfg, 0);
  rllf::PretrainConfig pcfg;
  pcfg.lr = 2e-3f;
  pcfg.epochs = 60;
  pcfg.batch = 16;
  pcfg.heldout_fraction = 0.1f;
  pcfg.seed = 0;
  auto log = rllf::train_lm(p, lines, vocab, pcfg);

  REQUIRE(log.heldout_perplexity < static_cast<float>(vocab.size()));
  REQUIRE(log.heldout_perplexity < log.initial_heldout_perplexity);

  // memorization: training loss on the tail of the run falls below 0.1
  float tail = 0.0f;
  const int tail_n = 10;
  for (int i = 0; i < tail_n; ++i)
    tail += log.step_losses[log.step_losses.size() - 1 - static_cast<size_t>(i)];
  REQUIRE(tail / tail_n < 0.1f);
}

TEST_CASE("pretraining loss curve is non-increasing under 50-step smoothing") {
  auto ded = rllf::datagen::gen_deduction_corpus(3, 120);
  auto near = rllf::datagen::gen_negation_corpus(3, 120, rllf::datagen::NegationMode::TrainNear);
  auto lines = rllf::datagen::gen_pretrain_corpus(3, ded, near, 0);
  Vocabulary vocab = Vocabulary::build(lines);

  LmConfig cfg = tiny_cfg(vocab.size(), 48, 32, 2, 2);
  LmParams p = LmParams::init(cfg, 0);
  rllf::PretrainConfig pcfg;
  pcfg.lr = 1e-3f;
  pcfg.epochs = 12;
  pcfg.batch = 16;
  pcfg.seed = 0;
  auto log = rllf::train_lm(p, lines, vocab, pcfg);
  REQUIRE(log.step_losses.size() >= 150);

  std::vector<float> windows;
  for (size_t at = 0; at + 50 <= log.step_losses.size(); at += 50) {
    float m = 0.0f;
    for (size_t i = at; i < at + 50; ++i) m += log.step_losses[i];
    windows.push_back(m / 50.0f);
  }
  for (size_t i = 1; i < windows.size(); ++i) REQUIRE(windows[i] <= windows[i - 1]);
}

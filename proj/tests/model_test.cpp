#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "plt/grad_check.hpp"
#include "plt/model.hpp"
#include "reference_model.hpp"
#include "test_util.hpp"

namespace plt {
namespace {

using testing::random_params;
using testing::random_tokens;
using testing::small_config;

Tensor logits_of(const Parameters& p, const ModelConfig& cfg, const std::vector<int>& ids) {
  NoGradGuard no_grad;
  return teacher_forced_forward(p, cfg, ids).logits;
}

TEST(BlockStack, ZeroLayersIsIdentity) {
  ModelConfig cfg = small_config(Mode::plt, 2, 2, 8, 0);
  const Parameters p = random_params(cfg, 1);
  Rng rng(2);
  const Tensor x = testing::random_tensor({4, 8}, rng);
  const std::vector<int> pos = {0, 1, 2, 3};
  EXPECT_EQ(max_abs_diff(block_stack_forward(p, cfg, x, 1, pos, 1, nullptr, nullptr), x), 0.0);
}

TEST(BlockStack, LoopOneIdenticalAcrossModes) {
  const ModelConfig plt_cfg = small_config(Mode::plt, 3, 2);
  const Parameters p = random_params(plt_cfg, 3);
  Rng rng(4);
  const Tensor x = testing::random_tensor({5, 16}, rng);
  const std::vector<int> pos = {0, 1, 2, 3, 4};
  const Tensor a = block_stack_forward(p, plt_cfg, x, 1, pos, 1, nullptr, nullptr);
  const Tensor b = block_stack_forward(p, with_mode(plt_cfg, Mode::vanilla), x, 1, pos, 1, nullptr, nullptr);
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

TEST(BlockStack, ClosedGateEqualsGateDisabled) {
  ModelConfig gated = small_config(Mode::plt, 2, 2);
  Parameters p = random_params(gated, 5);
  for (auto& layer : p.layers)
    for (double& b : layer.gates[0].bias.mutable_data()) b = -std::numeric_limits<double>::infinity();
  ModelConfig plain = gated;
  plain.gswa = false;
  const std::vector<int> ids = {3, 1, 4, 1};
  EXPECT_LT(max_abs_diff(logits_of(p, gated, ids), logits_of(p, plain, ids)), 1e-12);
}

TEST(BlockStack, OpenGateWithWideWindowEqualsPrivateCaches) {
  // g = 1 selects the local branch; a window covering the whole sequence
  // makes it plain causal attention over the loop's own keys.
  ModelConfig gated = small_config(Mode::plt, 3, 8);
  Parameters p = random_params(gated, 6);
  for (auto& layer : p.layers)
    for (double& b : layer.gates[0].bias.mutable_data()) b = std::numeric_limits<double>::infinity();
  ModelConfig own = gated;
  own.kv_share = false;
  own.gswa = false;
  const std::vector<int> ids = {2, 7, 1, 8, 2, 8};
  EXPECT_LT(max_abs_diff(logits_of(p, gated, ids), logits_of(p, own, ids)), 1e-12);
}

TEST(BlockStack, PositionBeyondCapacityThrows) {
  ModelConfig cfg = small_config(Mode::vanilla, 1);
  cfg.max_seq = 4;
  const Parameters p = random_params(cfg, 7);
  const std::vector<int> pos = {4};
  EXPECT_THROW(block_stack_forward(p, cfg, Tensor::zeros({1, 16}), 1, pos, 1, nullptr, nullptr), CapacityError);
  EXPECT_THROW(logits_of(p, cfg, {1, 2, 3, 4, 5}), CapacityError);
}

TEST(BlockStack, LaterLoopWithoutSharedCacheThrows) {
  const ModelConfig cfg = small_config(Mode::plt, 2, 2);
  const Parameters p = random_params(cfg, 8);
  const std::vector<int> pos = {0};
  EXPECT_THROW(block_stack_forward(p, cfg, Tensor::zeros({1, 16}), 2, pos, 1, nullptr, nullptr), EmptyContextError);
  EXPECT_THROW(block_stack_forward(p, cfg, Tensor::zeros({1, 16}), 3, pos, 1, nullptr, nullptr), InvalidLoopError);
}

TEST(Forward, DegenerateLoopCountMatchesVanilla) {
  const ModelConfig vanilla = small_config(Mode::vanilla, 1);
  const Parameters p = random_params(vanilla, 9);
  const std::vector<int> ids = {0, 5, 12, 3, 3, 9};
  const Tensor base = vanilla_forward(TokenSequence{ids}, p, vanilla).logits;
  ModelConfig plt1 = small_config(Mode::plt, 1);
  ModelConfig loop1 = small_config(Mode::vanilla_loop, 1);
  EXPECT_EQ(max_abs_diff(plt_train_forward(TokenSequence{ids}, p, plt1).logits, base), 0.0);
  EXPECT_EQ(max_abs_diff(vanilla_loop_forward(TokenSequence{ids}, p, loop1).logits, base), 0.0);
}

TEST(Forward, MatchesReferenceInEveryMode) {
  struct Case {
    Mode mode;
    int loops, window;
    bool share;
  };
  const Case cases[] = {{Mode::vanilla, 1, 0, false},     {Mode::vanilla_loop, 3, 0, false},
                        {Mode::plt, 3, 0, false},         {Mode::plt, 3, 0, true},
                        {Mode::plt, 3, 2, true},          {Mode::plt, 4, 1, true}};
  for (const Case& c : cases) {
    ModelConfig cfg = small_config(c.mode, c.loops, c.window);
    cfg.kv_share = c.share;
    cfg.weight_tying = c.loops == 4;
    const Parameters p = random_params(cfg, 10 + static_cast<std::uint64_t>(c.loops));
    Rng rng(11);
    const auto ids = random_tokens(7, cfg.vocab, rng);
    const auto ref = testing::reference_forward(p, cfg, ids);
    EXPECT_LT(testing::max_abs_diff(logits_of(p, cfg, ids), ref.logits), 1e-12)
        << to_string(c.mode) << " L=" << c.loops << " w=" << c.window;
  }
}

TEST(Forward, VanillaLoopIsPureRecurrence) {
  // Loop l runs the vanilla stack on loop l-1's states.
  const ModelConfig cfg = small_config(Mode::vanilla_loop, 3);
  const ModelConfig single = with_mode(cfg, Mode::vanilla);
  const Parameters p = random_params(cfg, 12);
  const std::vector<int> ids = {4, 4, 0, 11, 2};
  NoGradGuard no_grad;
  const std::vector<int> pos = {0, 1, 2, 3, 4};
  Tensor x = embedding(p.embedding, ids);
  for (int l = 0; l < 3; ++l) x = block_stack_forward(p, single, x, 1, pos, 1, nullptr, nullptr);
  const Tensor expected = head_forward(x, p, cfg);
  EXPECT_LT(max_abs_diff(vanilla_loop_forward(TokenSequence{ids}, p, cfg).logits, expected), 1e-12);
}

TEST(Forward, FirstTokenStreamPredictsTokenFour) {
  // L=3 on t1..t4: the logit predicting t4 is the head of H^3 at the third
  // position, whose input carries H^2 at the second, whose input carries
  // H^1 at the first.
  const ModelConfig cfg = small_config(Mode::plt, 3, 2);
  const Parameters p = random_params(cfg, 13);
  const std::vector<int> ids = {1, 2, 3, 4};
  NoGradGuard g;
  const auto out = teacher_forced_forward(p, cfg, ids);
  const std::vector<int> pos = {0, 1, 2, 3};
  const Tensor e = embedding(p.embedding, ids);
  const Tensor b3 = add(e, shift_right(out.acts.H[1], 4));
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(b3.at(2, c), e.at(2, c) + out.acts.H[1].at(1, c));
  const Tensor h3 = block_stack_forward(p, cfg, b3, 3, pos, 1, &out.kv[0], nullptr);
  EXPECT_EQ(max_abs_diff(h3, out.acts.H[2]), 0.0);
  const Tensor logit = head_forward(take_rows(h3, std::vector<std::size_t>{2}), p, cfg);
  for (std::size_t t = 0; t < 13; ++t) EXPECT_NEAR(logit[t], out.logits.at(2, t), 1e-12);
}

TEST(Forward, EmptyAndOutOfRangeTokensRejected) {
  const ModelConfig cfg = small_config(Mode::plt, 2, 2);
  const Parameters p = random_params(cfg, 14);
  EXPECT_THROW(plt_train_forward(TokenSequence{}, p, cfg), EmptyInputError);
  EXPECT_THROW(plt_train_forward(TokenSequence{{1, 13}}, p, cfg), DimensionError);
  EXPECT_THROW(vanilla_forward(TokenSequence{{1}}, p, cfg), ConfigError);
}

TEST(Forward, BatchedSequencesMatchSeparateRuns) {
  const ModelConfig cfg = small_config(Mode::plt, 3, 2);
  const Parameters p = random_params(cfg, 15);
  const std::vector<int> a = {1, 2, 3, 4}, b = {9, 8, 7, 6};
  std::vector<int> both = a;
  both.insert(both.end(), b.begin(), b.end());
  NoGradGuard g;
  const Tensor joint = teacher_forced_forward(p, cfg, both, 2).logits;
  const Tensor la = teacher_forced_forward(p, cfg, a).logits;
  const Tensor lb = teacher_forced_forward(p, cfg, b).logits;
  EXPECT_EQ(max_abs_diff(joint, concat_rows({la, lb})), 0.0);
}

TEST(Causality, FutureTokenNeverMovesEarlierStates) {
  Rng rng(16);
  for (Mode mode : {Mode::vanilla, Mode::vanilla_loop, Mode::plt}) {
    for (int trial = 0; trial < 5; ++trial) {
      const ModelConfig cfg = small_config(mode, 3, trial % 2 ? 2 : 0);
      const Parameters p = random_params(cfg, 100 + static_cast<std::uint64_t>(trial));
      auto ids = random_tokens(8, cfg.vocab, rng);
      const std::size_t j = 1 + rng.below(7);
      NoGradGuard g;
      const auto base = teacher_forced_forward(p, cfg, ids);
      ids[j] = (ids[j] + 1) % cfg.vocab;
      const auto pert = teacher_forced_forward(p, cfg, ids);
      for (std::size_t l = 0; l < base.acts.H.size(); ++l)
        for (std::size_t r = 0; r < j; ++r)
          for (std::size_t c = 0; c < 16; ++c) ASSERT_EQ(base.acts.H[l].at(r, c), pert.acts.H[l].at(r, c));
      for (std::size_t r = 0; r < j; ++r)
        for (std::size_t c = 0; c < 13; ++c) ASSERT_EQ(base.logits.at(r, c), pert.logits.at(r, c));
    }
  }
}

TEST(Causality, PreviousLoopStateAtSamePositionIsNotRead) {
  // Changing H^(l-1)[j] while keeping the shared cache fixed leaves H^l at
  // positions <= j untouched: the shift moves it to position j+1.
  for (bool share : {false, true}) {
    ModelConfig cfg = small_config(Mode::plt, 2, share ? 2 : 0);
    cfg.kv_share = share;
    cfg.gswa = share;
    const Parameters p = random_params(cfg, 17);
    const std::vector<int> ids = {1, 2, 3, 4, 5, 6};
    const std::vector<int> pos = {0, 1, 2, 3, 4, 5};
    NoGradGuard g;
    const auto base = teacher_forced_forward(p, cfg, ids);
    const Tensor e = embedding(p.embedding, ids);
    for (std::size_t j = 0; j < 6; ++j) {
      Tensor moved = base.acts.H[0].clone();
      for (std::size_t c = 0; c < 16; ++c) moved.mutable_data()[j * 16 + c] += 1.0;
      const Tensor h2 = block_stack_forward(p, cfg, add(e, shift_right(moved, 6)), 2, pos, 1, &base.kv[0], nullptr);
      for (std::size_t r = 0; r <= j; ++r)
        for (std::size_t c = 0; c < 16; ++c) ASSERT_EQ(h2.at(r, c), base.acts.H[1].at(r, c));
      if (j + 1 < 6) {
        EXPECT_GT(max_abs_diff(h2, base.acts.H[1]), 0.0);
      }
    }
  }
}

TEST(Counting, HandCountedFlopsAndParams) {
  ModelConfig cfg;
  cfg.vocab = 10;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.n_kv_heads = 2;
  cfg.d_ff = 16;
  // q,k,v,o: 4 * 8*8 MACs; MLP: 3 * 8*16 MACs; 2 FLOPs per MAC.
  const FlopCount f = count_flops_per_token(cfg);
  EXPECT_EQ(f.block_per_pass, 2u * (4 * 64 + 3 * 128));
  EXPECT_EQ(f.head, 2u * 8 * 10);
  EXPECT_EQ(f.total(), 1280u + 160u);
  // embedding 80, per layer 2 norms 16 + 4*64 + 3*128, final norm 8, head 80.
  EXPECT_EQ(count_params(cfg), 80u + 16 + 256 + 384 + 8 + 80);
  cfg.weight_tying = true;
  EXPECT_EQ(count_params(cfg), 80u + 16 + 256 + 384 + 8);
  Rng rng(1);
  EXPECT_EQ(count_params(init_parameters(cfg, rng)), count_params(cfg));
}

TEST(Counting, LoopsShareWeights) {
  const ModelConfig vanilla = small_config(Mode::vanilla, 1);
  for (int L : {2, 3, 4}) {
    EXPECT_EQ(count_params(small_config(Mode::vanilla_loop, L)), count_params(vanilla));
    EXPECT_EQ(count_params(small_config(Mode::plt, L, 0)), count_params(vanilla));
    const std::size_t gates = 2u * (16 * 2 + 2);
    EXPECT_EQ(count_params(small_config(Mode::plt, L, 2)), count_params(vanilla) + gates);
    const FlopCount fv = count_flops_per_token(vanilla);
    const FlopCount fl = count_flops_per_token(small_config(Mode::vanilla_loop, L));
    EXPECT_EQ(fl.blocks(), static_cast<std::size_t>(L) * fv.blocks());
  }
}

double plt_loss_value(const Parameters& p, const ModelConfig& cfg, const std::vector<int>& ids) {
  const ForwardOutput out = teacher_forced_forward(p, cfg, ids);
  const std::size_t n = ids.size();
  std::vector<int> targets(ids.begin() + 1, ids.end());
  targets.push_back(0);
  std::vector<double> weights(n, 1.0);
  weights.back() = 0.0;
  return cross_entropy(out.logits, targets, weights).item();
}

TEST(GradCheck, FullLoopedLossMatchesFiniteDifferences) {
  ModelConfig cfg = small_config(Mode::plt, 3, 2, 16, 1);
  const Parameters p = random_params(cfg, 18, 0.2);
  Rng rng(19);
  const auto ids = random_tokens(8, cfg.vocab, rng);
  std::vector<int> targets(ids.begin() + 1, ids.end());
  targets.push_back(0);
  std::vector<double> weights(8, 1.0);
  weights.back() = 0.0;
  const auto report = grad_check(
      [&] { return cross_entropy(teacher_forced_forward(p, cfg, ids).logits, targets, weights); }, p.tensors(),
      1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_err << " at " << report.worst_tensor;
  EXPECT_TRUE(std::isfinite(plt_loss_value(p, cfg, ids)));
}

}  // namespace
}  // namespace plt

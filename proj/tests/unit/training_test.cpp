#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "t2t/training.hpp"

namespace t2t {
namespace {

ModelConfig small_config(Architecture arch) {
  ModelConfig c;
  c.d_model = 16;
  c.d_ff = 32;
  c.d_kv = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  c.vocab_size = 40;
  c.dropout_rate = 0.1;
  c.num_rel_buckets = 8;
  c.rel_max_distance = 16;
  c.architecture = arch;
  return c;
}

std::vector<CorruptionPair> random_pairs(std::size_t n, std::uint64_t seed, std::size_t max_len = 8) {
  Rng rng(seed);
  std::vector<CorruptionPair> out(n);
  for (auto& p : out) {
    p.input_ids.resize(1 + rng.uniform_int(max_len));
    p.target_ids.resize(1 + rng.uniform_int(max_len));
    for (auto& t : p.input_ids) t = static_cast<TokenId>(4 + rng.uniform_int(36));
    for (auto& t : p.target_ids) t = static_cast<TokenId>(4 + rng.uniform_int(36));
  }
  return out;
}

TrainConfig toy_train_config(std::int64_t steps) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.batch_token_budget = 64;
  cfg.max_seq_len = 32;
  cfg.schedule = Schedule::constant(0.01);
  cfg.checkpoint_every = 4;
  cfg.seed = 3;
  return cfg;
}

TEST(Schedule, InverseSqrtValues) {
  const auto s = Schedule::inverse_sqrt(10000);
  EXPECT_EQ(learning_rate(s, 0), 0.01);
  EXPECT_EQ(learning_rate(s, 5000), 0.01);
  EXPECT_EQ(learning_rate(s, 10000), 0.01);
  EXPECT_EQ(learning_rate(s, 40000), 0.005);
  EXPECT_EQ(learning_rate(Schedule::constant(), 123), 0.001);
  EXPECT_THROW(learning_rate(s, -1), ParameterError);
}

TEST(Packing, SingleFullLengthExample) {
  std::vector<CorruptionPair> ex{{TokenSequence(16, 5), TokenSequence(16, 6)}};
  const auto r = pack_batch(ex, false, 64, 16);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].examples.size(), 1u);
  EXPECT_EQ(r.consumed, 1u);
}

TEST(Packing, TwoShortExamplesShareARow) {
  std::vector<CorruptionPair> ex{{TokenSequence(5, 5), TokenSequence(5, 6)}, {TokenSequence(5, 7), TokenSequence(5, 8)}};
  const auto r = pack_batch(ex, false, 16, 16);
  ASSERT_EQ(r.entries.size(), 1u);
  const auto& e = r.entries[0];
  EXPECT_EQ(e.examples, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(e.encoder_segments, (std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}));
  EXPECT_EQ(e.decoder_positions, (std::vector<int>{0, 1, 2, 3, 4, 0, 1, 2, 3, 4}));
  EXPECT_EQ(e.decoder_ids[0], Vocabulary::kPadId);
  EXPECT_EQ(e.decoder_ids[5], Vocabulary::kPadId);
  EXPECT_EQ(e.labels, (TokenSequence{6, 6, 6, 6, 6, 8, 8, 8, 8, 8}));
}

TEST(Packing, SingleStackLayout) {
  std::vector<CorruptionPair> ex{{{10, 11}, {12, 13}}};
  const auto r = pack_batch(ex, true, 8, 8);
  const auto& e = r.entries[0];
  EXPECT_TRUE(e.encoder_ids.empty());
  EXPECT_EQ(e.decoder_ids, (TokenSequence{0, 10, 11, 12}));
  EXPECT_EQ(e.labels, (TokenSequence{-1, -1, 12, 13}));
  EXPECT_EQ(e.prefix_lens, (std::vector<int>{3}));
  const auto m = decoder_mask(e, true);
  EXPECT_TRUE(m(0, 2));
  EXPECT_FALSE(m(0, 3));
  EXPECT_FALSE(decoder_mask(e, false)(0, 2));
}

TEST(Packing, ConservesTokensOverRandomLengths) {
  for (bool single : {false, true}) {
    const auto ex = random_pairs(1000, 4, 20);
    const auto r = pack_batch(ex, single, 1000 * 48, 48);
    ASSERT_EQ(r.consumed, 1000u);
    std::size_t in = 0, packed = 0, targets = 0, packed_targets = 0;
    std::vector<int> seen(1000, 0);
    for (const auto& p : ex) {
      in += p.input_ids.size() + p.target_ids.size();
      targets += p.target_ids.size();
    }
    for (const auto& e : r.entries) {
      EXPECT_LE(e.decoder_ids.size(), 48u);
      EXPECT_LE(e.encoder_ids.size(), 48u);
      packed += e.encoder_ids.size() + e.decoder_ids.size();
      packed_targets += e.num_target_tokens();
      for (auto i : e.examples) ++seen[i];
    }
    EXPECT_EQ(in, packed);
    EXPECT_EQ(targets, packed_targets);
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST(Packing, StopsWhenBudgetIsFull) {
  std::vector<CorruptionPair> ex(5, {TokenSequence(6, 5), TokenSequence(6, 6)});
  const auto r = pack_batch(ex, false, 20, 10);
  EXPECT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.consumed, 2u);
  std::vector<CorruptionPair> too_long{{TokenSequence(11, 5), TokenSequence(1, 6)}};
  EXPECT_THROW(pack_batch(too_long, false, 20, 10), ParameterError);
  const auto cut = truncate_example(too_long[0], true, 10);
  EXPECT_EQ(cut.input_ids.size() + cut.target_ids.size(), 10u);
}

TEST(Packing, SegmentsDoNotInteract) {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kPrefixLm, Architecture::kDecoderLm}) {
    auto cfg = small_config(arch);
    cfg.dropout_rate = 0;
    Transformer<double> model(cfg, 5);
    auto ex = random_pairs(3, 6);
    const bool single = !model.has_encoder();
    auto before = pack_batch(ex, single, 64, 64);
    ASSERT_EQ(before.entries.size(), 1u);
    double sum = 0;
    for (const auto& p : ex) {
      auto alone = pack_batch(std::span<const CorruptionPair>(&p, 1), single, 64, 64);
      const auto [l, n] = entry_loss(model, alone.entries[0], {});
      sum += l.item() * static_cast<double>(n);
    }
    const auto [packed, n] = entry_loss(model, before.entries[0], {});
    EXPECT_NEAR(packed.item() * static_cast<double>(n), sum, 1e-10) << to_string(arch);

    // Perturbing the first segment leaves the logits of the others unchanged.
    const auto& e = before.entries[0];
    auto logits = [&](const PackedEntry& entry) {
      if (!model.has_encoder()) {
        return model.decoder_forward(entry.decoder_ids, nullptr,
                                     decoder_mask(entry, arch == Architecture::kPrefixLm), {}, nullptr,
                                     entry.decoder_positions);
      }
      const auto em = encoder_mask(entry);
      const auto xm = cross_mask(entry);
      auto enc = model.encoder_forward(entry.encoder_ids, {}, &em, entry.encoder_positions);
      return model.decoder_forward(entry.decoder_ids, &enc, decoder_mask(entry, false), {}, &xm,
                                   entry.decoder_positions);
    };
    auto changed = e;
    for (std::size_t i = 0; i < changed.decoder_ids.size(); ++i)
      if (changed.decoder_segments[i] == 0) changed.decoder_ids[i] = 39;
    for (std::size_t i = 0; i < changed.encoder_ids.size(); ++i)
      if (changed.encoder_segments[i] == 0) changed.encoder_ids[i] = 38;
    const auto a = logits(e), b = logits(changed);
    for (std::size_t i = 0; i < e.decoder_ids.size(); ++i) {
      if (e.decoder_segments[i] == 0) continue;
      for (Index v = 0; v < 40; ++v) ASSERT_EQ(a[static_cast<Index>(i) * 40 + v], b[static_cast<Index>(i) * 40 + v]);
    }
  }
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  auto p = Tensor<double>::from_vector({3}, {1, -2, 3}, true);
  p.zero_grad();
  Adam<double> opt;
  EXPECT_TRUE(opt.step({{"p", p}}, 0.1));
  EXPECT_EQ(p[0], 1);
  EXPECT_EQ(p[1], -2);
  EXPECT_EQ(p[2], 3);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  auto x = Tensor<double>::from_vector({1}, {2.0}, true);
  Adam<double> opt;
  for (int step = 0; step < 200; ++step) {
    x.clear_grad();
    backward(sum(mul(x, x)));
    opt.step({{"x", x}}, learning_rate(Schedule::inverse_sqrt(1, 0.5), step));
  }
  EXPECT_LT(std::abs(x[0]), 1e-2);
}

TEST(Adam, SkipsNonFiniteGradients) {
  auto p = Tensor<double>::from_vector({2}, {1, 2}, true);
  p.zero_grad();
  p.mutable_grad()[1] = std::numeric_limits<double>::quiet_NaN();
  Adam<double> opt;
  EXPECT_FALSE(opt.step({{"p", p}}, 0.1));
  EXPECT_EQ(opt.skipped_steps(), 1);
  EXPECT_EQ(p[0], 1);
}

TEST(Checkpoint, RoundTripAndByteStability) {
  Transformer<float> model(small_config(Architecture::kEncoderDecoder), 7);
  auto ckpt = capture(model, 12);
  ckpt.metadata["note"] = "x";
  const auto bytes = checkpoint_bytes(ckpt);
  EXPECT_EQ(bytes.substr(0, 8), "T2TCKPT1");
  std::istringstream in(bytes);
  const auto back = read_checkpoint(in);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(checkpoint_bytes(back), bytes);
  Transformer<float> other(small_config(Architecture::kEncoderDecoder), 8);
  restore(other, back);
  EXPECT_EQ(checkpoint_bytes(capture(other, 12)), checkpoint_bytes(capture(model, 12)));
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  Transformer<float> model(small_config(Architecture::kEncoderDecoder), 7);
  Transformer<float> lm(small_config(Architecture::kDecoderLm), 7);
  EXPECT_THROW(restore(lm, capture(model, 0)), ConfigError);
  const auto bytes = checkpoint_bytes(capture(model, 0));
  std::istringstream bad_magic("XXXXXXXX" + bytes.substr(8));
  EXPECT_THROW(read_checkpoint(bad_magic), DataError);
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), DataError);
  auto missing = capture(model, 0);
  missing.entries.erase("shared_embedding");
  EXPECT_THROW(restore(model, missing), DataError);
}

TEST(Train, ZeroStepsGivesInitialCheckpointOnly) {
  Transformer<float> model(small_config(Architecture::kEncoderDecoder), 9);
  const auto ckpts = train(model, dataset_source(random_pairs(4, 1), true), toy_train_config(0));
  ASSERT_EQ(ckpts.size(), 1u);
  EXPECT_EQ(ckpts[0].step, 0);
}

TEST(Train, CheckpointCadence) {
  Transformer<float> model(small_config(Architecture::kEncoderDecoder), 9);
  const auto ckpts = train(model, dataset_source(random_pairs(4, 1), true), toy_train_config(10));
  std::vector<std::int64_t> steps;
  for (const auto& c : ckpts) steps.push_back(c.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{0, 4, 8, 10}));
}

TEST(Train, OverfitsRepeatedBatch) {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kPrefixLm}) {
    auto cfg = small_config(arch);
    cfg.dropout_rate = 0;
    Transformer<double> model(cfg, 10);
    const auto data = random_pairs(3, 2);
    Trainer<double> trainer(model, dataset_source(data, true), toy_train_config(50));
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(trainer.step().loss);
    int increases = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) increases += losses[i] > losses[i - 1] + 1e-3;
    EXPECT_LE(increases, 5) << to_string(arch);
    EXPECT_LT(losses.back(), 0.5 * losses.front()) << to_string(arch);
  }
}

TEST(Train, DataExhaustionIsAnError) {
  Transformer<float> model(small_config(Architecture::kEncoderDecoder), 9);
  Trainer<float> trainer(model, dataset_source(random_pairs(2, 1), false), toy_train_config(5));
  trainer.step();
  EXPECT_THROW(trainer.step(), DataError);
}

TEST(Train, LogRecordsAreNdjson) {
  Transformer<float> model(small_config(Architecture::kDecoderLm), 9);
  std::ostringstream log;
  train(model, dataset_source(random_pairs(4, 1), true), toy_train_config(2), {}, &log);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    for (const char* key : {"\"step\":", "\"loss\":", "\"lr\":", "\"tokens_seen\":", "\"wall_ms\":"})
      EXPECT_NE(line.find(key), std::string::npos) << line;
  }
  EXPECT_EQ(n, 2);
}

TEST(Train, DeterministicAndResumable) {
  const auto cfg = toy_train_config(8);
  const auto mcfg = small_config(Architecture::kEncoderDecoder);
  auto source = [] { return dataset_source(random_pairs(20, 11), true); };
  Transformer<float> a(mcfg, 12), b(mcfg, 12), c(mcfg, 12);
  const auto full_a = train(a, source(), cfg).back();
  const auto full_b = train(b, source(), cfg).back();
  EXPECT_EQ(checkpoint_bytes(full_a), checkpoint_bytes(full_b));

  Trainer<float> first(c, source(), cfg);
  for (int i = 0; i < 4; ++i) first.step();
  std::stringstream saved;
  write_checkpoint(first.checkpoint(), saved);
  Transformer<float> d(mcfg, 99);
  Trainer<float> second(d, source(), cfg);
  second.restore(read_checkpoint(saved));
  for (int i = 0; i < 4; ++i) second.step();
  EXPECT_EQ(checkpoint_bytes(second.checkpoint()), checkpoint_bytes(full_a));
}

TEST(Adapters, IdentityAtInitAndTrainableSet) {
  auto cfg = small_config(Architecture::kEncoderDecoder);
  cfg.dropout_rate = 0;
  Transformer<double> base(cfg, 13);
  Transformer<double> adapted(cfg, 13);
  adapted.insert_adapters(4, 1);
  const auto ex = random_pairs(2, 3);
  const auto entry = pack_batch(ex, false, 64, 64).entries[0];
  EXPECT_EQ(entry_loss(base, entry, {}).first.item(), entry_loss(adapted, entry, {}).first.item());
  const auto em = encoder_mask(entry);
  const auto a = base.encoder_forward(entry.encoder_ids, {}, &em, entry.encoder_positions);
  const auto b = adapted.encoder_forward(entry.encoder_ids, {}, &em, entry.encoder_positions);
  EXPECT_EQ(a.shape(), b.shape());
  for (Index i = 0; i < a.numel(); ++i) ASSERT_EQ(a[i], b[i]);

  std::int64_t trainable = 0;
  for (const auto& [name, t] : adapted.parameters())
    if (adapter_trainable(name)) trainable += t.numel();
  auto with = cfg;
  with.adapter_dim = 4;
  const std::int64_t norms = 2LL * 2 * 16 + 2LL * 3 * 16 + 2 * 16;
  EXPECT_EQ(trainable, count_params(with) - count_params(cfg) + norms);
}

TEST(Adapters, FrozenParametersStayBitIdentical) {
  auto cfg = small_config(Architecture::kEncoderDecoder);
  Transformer<float> model(cfg, 14);
  model.insert_adapters(4, 2);
  const auto before = capture(model, 0);
  train(model, dataset_source(random_pairs(10, 5), true), toy_train_config(20),
        [](const std::string& name, std::int64_t) { return adapter_trainable(name); });
  const auto after = capture(model, 0);
  int changed = 0;
  for (const auto& [name, e] : before.entries) {
    if (adapter_trainable(name)) {
      changed += e.values != after.entries.at(name).values;
    } else {
      EXPECT_EQ(e.values, after.entries.at(name).values) << name;
    }
  }
  EXPECT_GT(changed, 0);
}

TEST(Unfreeze, TwelveLayerEpisodes) {
  const auto s = gradual_unfreeze_schedule(12, 1 << 18);
  EXPECT_EQ(s.episode_length(), (1 << 18) / 12);
  EXPECT_EQ(s.episode(0), 1);
  EXPECT_EQ(s.lowest_trainable_layer(0), 11);
  EXPECT_TRUE(s.trainable("encoder/block_11/ffn/wi", 0));
  EXPECT_FALSE(s.trainable("encoder/block_10/ffn/wi", 0));
  EXPECT_TRUE(s.trainable("decoder/block_11/cross_attn/q", 0));
  EXPECT_TRUE(s.trainable("shared_embedding", 0));
  for (int n = 1; n <= 12; ++n) {
    const std::int64_t start = (n - 1) * s.episode_length();
    EXPECT_EQ(s.episode(start), n);
    EXPECT_EQ(s.lowest_trainable_layer(start), 12 - n);
    if (n > 1) EXPECT_EQ(s.episode(start - 1), n - 1);
  }
  EXPECT_EQ(s.episode((1 << 18) - 1), 12);
  EXPECT_TRUE(s.trainable("decoder/block_00/self_attn/q", (1 << 18) - 1));
}

TEST(Unfreeze, EnumerationWithRemainder) {
  const auto s = gradual_unfreeze_schedule(3, 13);
  std::vector<int> episodes;
  for (int step = 0; step < 13; ++step) episodes.push_back(s.episode(step));
  EXPECT_EQ(episodes, (std::vector<int>{1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3}));
  EXPECT_THROW(gradual_unfreeze_schedule(3, 2), ParameterError);
}

TEST(SelectBest, PerTaskArgmaxWithEarliestTies) {
  const std::vector<std::int64_t> steps{0, 5000, 10000, 15000, 20000};
  EXPECT_EQ(select_best_checkpoint(steps, {{"mono", {1, 2, 3, 4, 5}}}).at("mono"), 20000);
  const auto best = select_best_checkpoint(
      steps, {{"glue", {0.1, 0.7, 0.6, 0.7, 0.2}}, {"squad", {0.3, 0.3, 0.4, 0.9, 0.8}}, {"flat", {1, 1, 1, 1, 1}}});
  EXPECT_EQ(best.at("glue"), 5000);
  EXPECT_EQ(best.at("squad"), 15000);
  EXPECT_EQ(best.at("flat"), 0);
  EXPECT_THROW(select_best_checkpoint({}, {}), ParameterError);
  EXPECT_THROW(select_best_checkpoint(steps, {{"x", {1}}}), ParameterError);
}

}  // namespace
}  // namespace t2t

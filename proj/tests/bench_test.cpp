#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gsp/bench.hpp"

namespace gsp {
namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.n_classes = 4;
  c.prototypes = 8;
  c.sample_len = 12;
  c.batches_per_epoch = 3;
  c.eval_samples_per_class = 5;
  c.max_epochs = 4;
  c.lr = 1e-2;
  c.seed = 7;
  return c;
}

TEST(SampleTest, MixOfFourTenthsGivesTwentyClassTokens) {
  const SyntheticConfig cfg;
  std::mt19937_64 rng(1);
  const Sample s = compose_sample(cfg, 3, 0.4, rng);
  ASSERT_EQ(s.tokens.size(), 50u);
  EXPECT_EQ(s.class_draws, 20u);
  for (std::size_t j = 0; j < 50; ++j) {
    if (j < 20) {
      EXPECT_GE(s.tokens[j], 12u);
      EXPECT_LT(s.tokens[j], 16u);
    } else {
      EXPECT_GE(s.tokens[j], 64u);
      EXPECT_LT(s.tokens[j], 68u);
    }
  }
}

TEST(SampleTest, MixAboveOneIsClipped) {
  const SyntheticConfig cfg;
  std::mt19937_64 rng(2);
  const Sample s = compose_sample(cfg, 0, 1.3, rng);
  EXPECT_EQ(s.mix, 1.0);
  EXPECT_EQ(s.class_draws, 50u);
  for (std::size_t t : s.tokens) EXPECT_LT(t, 4u);
}

TEST(SampleTest, BatchIsGroupedAndDeterministic) {
  const SyntheticConfig cfg;
  std::mt19937_64 a(3), b(3);
  const auto x = sample_batch(cfg, a), y = sample_batch(cfg, b);
  ASSERT_EQ(x.size(), 64u);
  for (std::size_t s = 0; s < x.size(); ++s) {
    EXPECT_EQ(x[s].label, static_cast<int>(s / 4));
    EXPECT_EQ(x[s].tokens, y[s].tokens);
    EXPECT_EQ(x[s].mix, y[s].mix);
    EXPECT_GE(x[s].mix, 0.0);
    EXPECT_LE(x[s].mix, 1.0);
  }
}

TEST(SampleTest, GatherCopiesTokenRows) {
  const Matrix tokens{{1, 2}, {3, 4}, {5, 6}};
  Sample s;
  s.tokens = {2, 0, 2};
  EXPECT_EQ(gather_features(tokens, s), (Matrix{{5, 6}, {1, 2}, {5, 6}}));
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Vector p{0.0};
  AdamState st;
  adam_step(p, Vector{1.0}, st, AdamConfig{1e-3, 0.9, 0.99, 1e-8});
  EXPECT_NEAR(p[0], -1e-3, 1e-10);
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  Vector p{0.1, -0.2};
  AdamState st;
  for (int k = 0; k < 100; ++k) adam_step(p, Vector{0.0, 0.0}, st, AdamConfig{});
  EXPECT_EQ(p, (Vector{0.1, -0.2}));
}

TEST(AdamTest, ClipsToRange) {
  Vector p{0.31, -0.5, 0.1};
  AdamState st;
  adam_step(p, Vector{0.0, 0.0, 0.0}, st, AdamConfig{}, 0.3);
  EXPECT_EQ(p[0], 0.3);
  EXPECT_EQ(p[1], -0.3);
  EXPECT_EQ(p[2], 0.1);
}

TEST(AdamTest, ShapeMismatch) {
  Vector p{0.0, 0.0};
  AdamState st;
  EXPECT_THROW(adam_step(p, Vector{1.0}, st, AdamConfig{}), DimensionError);
}

TEST(ConfigTest, JsonRoundTrip) {
  SyntheticConfig c = small_config();
  c.pooling = "gap";
  c.zsr_enabled = true;
  c.seed = 123456789012345ULL;
  const nlohmann::json j = c;
  const SyntheticConfig back = parse_synthetic_config(j.dump());
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(ConfigTest, MissingKeysKeepDefaults) {
  const SyntheticConfig c = parse_synthetic_config(R"({"pooling": "gap"})");
  EXPECT_EQ(c.pooling, "gap");
  EXPECT_EQ(c.n_classes, 16);
  EXPECT_EQ(c.prototypes, 64);
  EXPECT_EQ(c.mu, 0.3);
  EXPECT_EQ(c.margin_neg, 0.3841);
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(parse_synthetic_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_synthetic_config(R"({"mu": "high"})"), ConfigError);
  EXPECT_THROW(parse_synthetic_config(R"({"pooling": "max"})"), ConfigError);
  EXPECT_THROW(parse_synthetic_config(R"({"lambda": 2})"), ConfigError);
  EXPECT_THROW(parse_synthetic_config("{"), ParseError);
}

TEST(TrainTest, FullMassFailsFast) {
  SyntheticConfig c = small_config();
  c.mu = 1.0;
  EXPECT_THROW(train(c), ConfigError);
}

TEST(TrainTest, SameSeedGivesIdenticalReport) {
  for (const char* pooling : {"gap", "gsp"}) {
    SyntheticConfig c = small_config();
    c.pooling = pooling;
    c.zsr_enabled = true;
    const std::string a = report_to_json(train(c)).dump(), b = report_to_json(train(c)).dump();
    EXPECT_EQ(a, b) << pooling;
    c.seed += 1;
    EXPECT_NE(report_to_json(train(c)).dump(), a) << pooling;
  }
}

TEST(TrainTest, ReportBookkeeping) {
  SyntheticConfig c = small_config();
  c.max_epochs = 8;
  c.patience = 3;
  const RunReport r = train(c);
  ASSERT_FALSE(r.epochs.empty());
  double best = -1.0;
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    EXPECT_EQ(r.epochs[e].epoch, static_cast<int>(e));
    best = std::max(best, r.epochs[e].map_at_r);
  }
  EXPECT_EQ(r.best_map_at_r, best);
  EXPECT_EQ(r.epochs[static_cast<std::size_t>(r.best_epoch)].map_at_r, best);
  if (r.status == "early_stopped") {
    EXPECT_EQ(static_cast<int>(r.epochs.size()), r.best_epoch + 1 + c.patience);
  }
  EXPECT_EQ(r.eval_embeddings.rows(), 20u);
}

TEST(TrainTest, TokensStayInRange) {
  SyntheticConfig c = small_config();
  c.lr = 0.2;  // large enough that the clip is active
  for (const char* pooling : {"gap", "gsp"}) {
    c.pooling = pooling;
    const RunReport r = train(c);
    EXPECT_LE(max_abs(r.params.tokens.data()), 0.3);
    EXPECT_EQ(max_abs(r.params.tokens.data()), 0.3) << pooling;
  }
}

TEST(TrainTest, AverageWithoutRegularizerNeverTransports) {
  SyntheticConfig c = small_config();
  c.pooling = "gap";
  c.lambda = 0.0;
  c.zsr_enabled = true;
  Counters k = train(c).counters;
  EXPECT_EQ(k.transport_forward, 0u);
  EXPECT_EQ(k.transport_backward, 0u);
  EXPECT_EQ(k.zsr_calls, 0u);

  c.lambda = 0.1;
  k = train(c).counters;
  EXPECT_GT(k.transport_forward, 0u);
  EXPECT_GT(k.zsr_calls, 0u);

  c.pooling = "gsp";
  c.zsr_enabled = false;
  k = train(c).counters;
  EXPECT_GT(k.transport_backward, 0u);
  EXPECT_EQ(k.zsr_calls, 0u);
}

TEST(TrainTest, TripletLossTrains) {
  SyntheticConfig c = small_config();
  c.loss = "triplet";
  const RunReport r = train(c);
  EXPECT_FALSE(r.epochs.empty());
  for (const auto& e : r.epochs) EXPECT_TRUE(std::isfinite(e.train_loss));
}

TEST(TrainTest, LossStaysFiniteOverTwoHundredEpochs) {
  SyntheticConfig c;
  c.zsr_enabled = true;
  c.max_epochs = 200;
  c.patience = 200;
  c.seed = 11;
  const RunReport r = train(c);
  EXPECT_EQ(r.status, "max_epochs");
  ASSERT_EQ(r.epochs.size(), 200u);
  for (const auto& e : r.epochs) EXPECT_TRUE(std::isfinite(e.train_loss)) << "epoch " << e.epoch;
}

TEST(GeometryTest, RowAccounting) {
  SyntheticConfig c;
  c.max_epochs = 1;
  c.batches_per_epoch = 1;
  c.pooling = "gap";
  const RunReport r = train(c);
  std::stringstream ss;
  export_geometry(ss, r);
  const Geometry g = read_geometry(ss);
  std::size_t emb = 0, tok = 0;
  for (const auto& k : g.kind) (k == "embedding" ? emb : tok)++;
  EXPECT_EQ(emb, 320u);
  EXPECT_EQ(tok, 68u);
  EXPECT_EQ(g.label.back(), -1);
  EXPECT_EQ(g.label[320], 0);
}

TEST(GeometryTest, EmptyReportIsHeaderOnly) {
  RunReport r;
  std::stringstream ss;
  export_geometry(ss, r);
  EXPECT_EQ(ss.str(), "kind,label,x0,x1\n");
}

TEST(GeometryTest, RoundTripIsExact) {
  const RunReport r = train(small_config());
  std::stringstream ss;
  export_geometry(ss, r);
  const Geometry g = read_geometry(ss);
  const std::size_t e = r.eval_embeddings.rows();
  for (std::size_t i = 0; i < e; ++i) {
    EXPECT_EQ(g.label[i], r.eval_labels[i]);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(g.coords(i, k), r.eval_embeddings(i, k));
  }
  for (std::size_t t = 0; t < r.params.tokens.rows(); ++t)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(g.coords(e + t, k), r.params.tokens(t, k));
}

TEST(GeometryTest, EpochCsvHasOneRowPerEpoch) {
  const RunReport r = train(small_config());
  std::stringstream ss;
  write_epochs_csv(ss, r);
  std::string line;
  std::size_t rows = 0;
  std::getline(ss, line);
  EXPECT_EQ(line, "epoch,train_loss,map_at_r,p_at_1,p_at_r");
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, r.epochs.size());
}

}  // namespace
}  // namespace gsp

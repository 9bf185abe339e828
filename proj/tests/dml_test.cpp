#include <gtest/gtest.h>

#include <random>
#include <string>

#include "gsp/dml.hpp"
#include "support/oracles.hpp"

namespace gsp {
namespace {

using testing::central_difference;
using testing::random_matrix;
using testing::scaled_error;

EmbeddingBatch random_batch(std::mt19937_64& rng, std::size_t classes, std::size_t per_class, std::size_t d) {
  EmbeddingBatch b{random_matrix(classes * per_class, d, rng), {}};
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t k = 0; k < per_class; ++k) b.labels.push_back(static_cast<int>(c));
  return b;
}

TEST(PairwiseDistancesTest, ThreeFourFive) {
  const Matrix d = pairwise_distances(Matrix{{0, 0}, {3, 4}});
  EXPECT_EQ(d(0, 1), 5.0);
  EXPECT_EQ(d(1, 0), 5.0);
  EXPECT_EQ(d(0, 0), 0.0);
}

TEST(PairwiseDistancesTest, IdenticalEmbeddings) {
  const Matrix d = pairwise_distances(Matrix(4, 3, 0.7));
  EXPECT_EQ(max_abs(d.data()), 0.0);
}

TEST(PairwiseDistancesTest, SymmetricAndDifferentiable) {
  std::mt19937_64 rng(1);
  const Matrix e = random_matrix(6, 3, rng), w = random_matrix(6, 6, rng);
  const Matrix d = pairwise_distances(e);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(d(i, j), d(j, i), 1e-12);
  const Matrix g = pairwise_distances_backward(e, d, w);
  const Matrix fd = central_difference([&](const Matrix& x) { return dot(pairwise_distances(x).data(), w.data()); }, e, 1e-6);
  EXPECT_LE(scaled_error(g, fd), 1e-6);
}

TEST(ContrastiveTest, ActivePositiveHinge) {
  // One positive pair at 0.5 and two far negatives.
  EmbeddingBatch b{Matrix{{0.0}, {0.5}, {10.0}}, {0, 0, 1}};
  EXPECT_NEAR(contrastive_c2(b, 0.2, 1.0).value, 0.3, 1e-15);
}

TEST(ContrastiveTest, InactiveNegativeHinge) {
  EmbeddingBatch b{Matrix{{0.0}, {0.0}, {0.7}}, {0, 0, 1}};
  const auto r = contrastive_c2(b, 0.0, 0.5);
  EXPECT_EQ(r.value, 0.0);
}

TEST(ContrastiveTest, AllInsideMarginsHasZeroGradient) {
  EmbeddingBatch b{Matrix{{0.0, 0.0}, {0.05, 0.0}, {2.0, 0.0}, {2.0, 0.1}}, {0, 0, 1, 1}};
  const auto r = contrastive_c2(b, 0.2, 1.0);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(max_abs(r.grad.data()), 0.0);
}

TEST(ContrastiveTest, EmptySideIsNamed) {
  EmbeddingBatch same{Matrix(3, 2), {1, 1, 1}}, distinct{Matrix(3, 2), {0, 1, 2}};
  try {
    contrastive_c2(same, 0.0, 0.5);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("negative"), std::string::npos);
  }
  try {
    contrastive_c2(distinct, 0.0, 0.5);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
}

TEST(ContrastiveTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingBatch b = random_batch(rng, 3, 3, 4);
    const auto r = contrastive_c2(b, 0.2, 1.5);
    const Matrix fd = central_difference(
        [&](const Matrix& x) { return contrastive_c2(EmbeddingBatch{x, b.labels}, 0.2, 1.5).value; },
        b.embeddings, 1e-7);
    EXPECT_LE(scaled_error(r.grad, fd), 1e-5) << "trial " << trial;
  }
}

TEST(TripletTest, SatisfiedTriple) {
  EmbeddingBatch b{Matrix{{0.0}, {0.2}, {-0.9}}, {0, 0, 1}};
  // Anchor 0: D_ap = 0.2, D_an = 0.9. Anchor 1: D_ap = 0.2, D_an = 1.1.
  EXPECT_EQ(triplet(b, 0.1).value, 0.0);
}

TEST(TripletTest, ViolatedTriple) {
  // Anchor 0: D_ap = 0.9, D_an = 0.2 -> 0.8. Anchor 1: D_ap = 0.9, D_an = 0.7 -> 0.3.
  EmbeddingBatch b{Matrix{{0.0}, {0.9}, {0.2}}, {0, 0, 1}};
  EXPECT_NEAR(triplet(b, 0.1).value, (0.8 + 0.3) / 2.0, 1e-15);
}

TEST(TripletTest, NoValidTriple) {
  EXPECT_THROW(triplet(EmbeddingBatch{Matrix(3, 1), {0, 1, 2}}, 0.1), ConfigError);
  EXPECT_THROW(triplet(EmbeddingBatch{Matrix(3, 1), {0, 0, 0}}, 0.1), ConfigError);
}

TEST(TripletTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingBatch b = random_batch(rng, 3, 3, 4);
    const auto r = triplet(b, 0.3);
    const Matrix fd = central_difference(
        [&](const Matrix& x) { return triplet(EmbeddingBatch{x, b.labels}, 0.3).value; }, b.embeddings, 1e-7);
    EXPECT_LE(scaled_error(r.grad, fd), 1e-5) << "trial " << trial;
  }
}

TEST(DmlPropertyTest, NonNegativeAndInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingBatch b = random_batch(rng, 4, 3, 3);
    const double c = contrastive_c2(b, 0.0, 0.3841).value, t = triplet(b, 0.2).value;
    EXPECT_GE(c, 0.0);
    EXPECT_GE(t, 0.0);

    EmbeddingBatch relabeled = b;
    for (int& y : relabeled.labels) y = (y * 3 + 1) % 4 + 10;
    EXPECT_NEAR(contrastive_c2(relabeled, 0.0, 0.3841).value, c, 1e-12);
    EXPECT_NEAR(triplet(relabeled, 0.2).value, t, 1e-12);

    std::vector<std::size_t> perm(b.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    EmbeddingBatch shuffled{Matrix(b.size(), 3), std::vector<int>(b.size())};
    for (std::size_t i = 0; i < b.size(); ++i) {
      shuffled.labels[i] = b.labels[perm[i]];
      for (std::size_t k = 0; k < 3; ++k) shuffled.embeddings(i, k) = b.embeddings(perm[i], k);
    }
    EXPECT_NEAR(contrastive_c2(shuffled, 0.0, 0.3841).value, c, 1e-12);
    EXPECT_NEAR(triplet(shuffled, 0.2).value, t, 1e-12);
  }
}

TEST(DmlPropertyTest, RejectsBadInput) {
  EXPECT_THROW(contrastive_c2(EmbeddingBatch{Matrix(2, 1), {0}}, 0.0, 0.5), DimensionError);
  EXPECT_THROW(contrastive_c2(EmbeddingBatch{Matrix(2, 1), {0, -1}}, 0.0, 0.5), ConfigError);
  EXPECT_THROW(contrastive_c2(EmbeddingBatch{Matrix(2, 1), {0, 1}}, 0.5, 0.5), ConfigError);
}

}  // namespace
}  // namespace gsp

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "forage/index.hpp"
#include "knn_oracle.hpp"
#include "test_support.hpp"

using namespace forage;

namespace {

std::vector<ImageItem> items_from(const std::vector<oracle::Labeled>& data) {
  std::vector<ImageItem> items;
  for (const auto& d : data) {
    ImageItem it;
    it.id = d.id;
    it.embedding = EmbeddingVector{d.v};
    items.push_back(std::move(it));
  }
  return items;
}

ImageItem with_vec(std::string id, std::vector<double> v) {
  ImageItem it;
  it.id = std::move(id);
  it.embedding = EmbeddingVector{std::move(v)};
  return it;
}

}  // namespace

TEST(Cosine, ClosedForms) {
  const std::vector<double> v{0.3, -1.2, 4.0};
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 1.0 / std::sqrt(2.0), 1e-8);
  EXPECT_NEAR(cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.70710678, 1e-8);
  EXPECT_DOUBLE_EQ(cosine(std::vector<double>{2, 0}, std::vector<double>{-5, 0}), -1.0);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), Error);
  EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);
}

TEST(Cosine, SymmetricAndBounded) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(7), b(7);
    for (auto& x : a) x = g(rng) * 1e3;
    for (auto& x : b) x = g(rng) * 1e-3;
    const double ab = cosine(a, b), ba = cosine(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(std::abs(ab), 1.0);
  }
}

TEST(BuildIndex, NormalizesAndPreservesOrder) {
  const auto index = build_index(std::vector<ImageItem>{with_vec("c", {3, 0, 0, 4}), with_vec("a", {1, 1, 1, 1}),
                                                        with_vec("b", {0, 0, 0, 2})});
  EXPECT_EQ(index.size(), 3u);
  EXPECT_EQ(index.dim(), 4u);
  EXPECT_EQ(index.entries()[0].id, "c");
  EXPECT_EQ(index.entries()[2].id, "b");
  for (const auto& e : index.entries()) {
    double n = 0;
    for (double x : e.unit) n += x * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
  EXPECT_DOUBLE_EQ(index.entries()[0].unit[3], 0.8);
}

TEST(BuildIndex, MixedDimensionsNameTheItem) {
  try {
    build_index(std::vector<ImageItem>{with_vec("a", {1, 2, 3, 4}), with_vec("odd", {1, 2, 3, 4, 5})});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.subject(), "odd");
  }
}

TEST(BuildIndex, ZeroVectorRejectedAndUnembeddedSkipped) {
  EXPECT_THROW(build_index(std::vector<ImageItem>{with_vec("z", {0, 0})}), ValidationError);
  ImageItem bare;
  bare.id = "bare";
  const auto index = build_index(std::vector<ImageItem>{bare, with_vec("a", {1, 0})});
  EXPECT_EQ(index.size(), 1u);
  EXPECT_EQ(index.find("bare"), nullptr);
}

TEST(Knn, SelfSimilarityFirst) {
  const auto data = oracle::random_unit_vectors(30, 8, 4);
  const auto index = build_index(items_from(data));
  const auto r = index.knn(data[12].v, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].id, data[12].id);
  EXPECT_NEAR(r[0].similarity, 1.0, 1e-6);
}

TEST(Knn, SaturatesAtIndexSize) {
  const auto data = oracle::random_unit_vectors(7, 3, 4);
  const auto index = build_index(items_from(data));
  EXPECT_EQ(index.knn(data[0].v, 7).size(), 7u);
  EXPECT_EQ(index.knn(data[0].v, 100).size(), 7u);
  EXPECT_EQ(index.knn(data[0].v, 100, data[0].id).size(), 6u);
}

TEST(Knn, Errors) {
  const auto index = build_index(items_from(oracle::random_unit_vectors(5, 3, 4)));
  EXPECT_THROW(index.knn(std::vector<double>{1, 0}, 2), Error);
  EXPECT_THROW(index.knn(std::vector<double>{1, 0, 0}, 0), Error);
  EXPECT_THROW(index.knn(std::vector<double>{0, 0, 0}, 1), Error);
}

TEST(Knn, TiesBreakById) {
  const auto index = build_index(std::vector<ImageItem>{with_vec("m", {1, 0}), with_vec("b", {2, 0}),
                                                        with_vec("x", {0, 1}), with_vec("a", {3, 0})});
  const auto r = index.knn(std::vector<double>{1, 0}, 4);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].id, "a");
  EXPECT_EQ(r[1].id, "b");
  EXPECT_EQ(r[2].id, "m");
  EXPECT_EQ(r[3].id, "x");
}

TEST(Knn, MatchesBruteForceOracle) {
  const auto data = oracle::random_unit_vectors(200, 64, 7);
  const auto index = build_index(items_from(data));
  for (const auto& q : data)
    for (std::size_t k : {1u, 5u, 20u}) {
      const auto got = index.knn(q.v, k);
      const auto want = oracle::brute_force_knn(data, q.v, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_EQ(got[i].id, want[i].first);
        ASSERT_NEAR(got[i].similarity, want[i].second, 1e-12);
      }
    }
}

// Property: exactness, scale invariance and prefix truncation on random instances.
TEST(KnnProperty, RandomInstances) {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> n_dist(1, 500), d_dist(1, 128);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 25; ++trial) {
    const auto n = n_dist(rng), dim = d_dist(rng);
    const auto data = oracle::random_unit_vectors(n, dim, rng());
    const auto index = build_index(items_from(data));
    const auto query = oracle::random_unit_vectors(1, dim, rng()).front().v;
    const auto full = index.knn(query, n);
    const auto want = oracle::brute_force_knn(data, query, n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(full[i].id, want[i].first);

    auto scaled = query;
    const double s = scale(rng);
    for (auto& x : scaled) x *= s;
    const auto rs = index.knn(scaled, n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(rs[i].id, full[i].id);

    for (std::size_t k = 1; k < std::min<std::size_t>(n, 15); ++k) {
      const auto a = index.knn(query, k), b = index.knn(query, k + 1);
      ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}

TEST(SimilarItems, OnlyCandidate) {
  const auto index = build_index(std::vector<ImageItem>{with_vec("A", {1, 2}), with_vec("B", {2, 1})});
  const auto r = index.similar_items("A", 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, "B");
  EXPECT_NEAR(r[0].similarity, cosine(std::vector<double>{1, 2}, std::vector<double>{2, 1}), 1e-12);
}

TEST(SimilarItems, ExcludesQueryAndEqualsKnn) {
  const auto data = oracle::random_unit_vectors(60, 16, 21);
  const auto index = build_index(items_from(data));
  for (const auto& d : data) {
    const auto r = index.similar_items(d.id, 10);
    EXPECT_TRUE(std::none_of(r.begin(), r.end(), [&](const Neighbor& n) { return n.id == d.id; }));
    EXPECT_EQ(r, index.knn(index.find(d.id)->unit, 10, d.id));
  }
  EXPECT_THROW(index.similar_items("nope", 3), Error);
}

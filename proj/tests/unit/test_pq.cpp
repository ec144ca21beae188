#include <gtest/gtest.h>

#include "aed/pq.hpp"
#include "aed/synthbench.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aed;

namespace {

PqConfig config(std::size_t m, unsigned bits, std::uint64_t seed = 0) {
  PqConfig c;
  c.subvectors = m;
  c.bits = bits;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Pq, ZeroBitsGivesSubspaceMeans) {
  const auto x = testutil::random_matrix(50, 8, 3);
  const auto cb = pq_train(x, config(4, 0));
  EXPECT_EQ(cb.centroids_per_subspace(), 1u);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t j = 0; j < 2; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 50; ++i) mean += x(i, s * 2 + j) / 50.0;
      EXPECT_NEAR(cb.centroid(s, 0)[j], mean, 1e-6);
    }
  for (std::size_t i = 0; i < 50; ++i)
    for (auto c : cb.encode(x.row(i))) EXPECT_EQ(c, 0u);
}

TEST(Pq, SeparatedPointsQuantizeExactly) {
  MatrixD x(4, 4, std::vector<double>{0, 0, 0, 0,  //
                                      0, 0, 10, 10,  //
                                      10, 10, 0, 0,  //
                                      10, 10, 10, 10});
  const auto cb = pq_train(x, config(2, 1));
  ASSERT_FALSE(cb.training_error().empty());
  EXPECT_NEAR(cb.training_error().back(), 0.0, 1e-9);
  // Oracle: the optimal 2-means cost in each subspace is 0 too.
  EXPECT_NEAR(oracle::best_two_means_cost({0, 0, 10, 10}), 0.0, 1e-12);
  std::set<PqCode> codes;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto code = cb.encode(x.row(i));
    codes.insert(code);
    EXPECT_NEAR(cb.adc_distance(x.row(i), code), 0.0, 1e-9);
  }
  EXPECT_EQ(codes.size(), 4u);
}

// Lloyd converges to a fixed point: every point sits with its nearest
// centroid and each centroid is the mean of its points. The cost is bounded
// below by the exhaustive optimum.
TEST(Pq, TwoMeansConvergesToLloydFixedPoint) {
  const std::vector<double> pts = {0.0, 0.3, 0.4, 5.0, 5.5, 9.0};
  MatrixD x(pts.size(), 1, pts);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cb = pq_train(x, config(1, 1, seed));
    const double c0 = cb.centroid(0, 0)[0], c1 = cb.centroid(0, 1)[0];
    double sum[2] = {0, 0}, cost = 0.0;
    int count[2] = {0, 0};
    for (double p : pts) {
      const int k = std::abs(p - c1) < std::abs(p - c0) ? 1 : 0;
      sum[k] += p;
      ++count[k];
      cost += std::min((p - c0) * (p - c0), (p - c1) * (p - c1));
    }
    for (int k = 0; k < 2; ++k) {
      ASSERT_GT(count[k], 0);
      EXPECT_NEAR(k ? c1 : c0, sum[k] / count[k], 1e-6);
    }
    EXPECT_NEAR(cb.training_error().back(), cost, 1e-5);
    EXPECT_GE(cost, oracle::best_two_means_cost(pts) - 1e-9);
  }
}

TEST(Pq, CodeLengthIs128Bits) {
  const auto x = testutil::random_matrix(300, 64, 1);
  const auto cb = pq_train(x, config(16, 8));
  EXPECT_EQ(cb.code_length_bits(), 128u);
  const auto code = cb.encode(x.row(0));
  EXPECT_EQ(code.size(), 16u);
  EXPECT_EQ(cb.pack(code).size(), 16u);
  EXPECT_EQ(cb.unpack(cb.pack(code)), code);
}

TEST(Pq, EncodePicksNearestCentroid) {
  const auto x = testutil::random_matrix(200, 12, 8);
  const auto cb = pq_train(x, config(3, 3, 2));
  const auto queries = testutil::random_matrix(20, 12, 99);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto code = cb.encode(queries.row(q));
    for (std::size_t s = 0; s < 3; ++s) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < cb.centroids_per_subspace(); ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
          const double diff = queries(q, s * 4 + j) - cb.centroid(s, c)[j];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      EXPECT_EQ(code[s], arg);
    }
  }
  // A vector built from centroid tuples encodes to exactly those indices.
  const PqCode target = {3, 0, 7};
  const auto decoded = cb.decode(target);
  EXPECT_EQ(cb.encode(decoded), target);
}

TEST(Pq, AdcMatchesDecodeThenL2) {
  const auto x = testutil::random_matrix(200, 16, 4);
  const auto cb = pq_train(x, config(4, 4, 1));
  aed::Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(16);
    for (auto& v : q) v = rng.normal();
    PqCode code(4);
    for (auto& c : code) c = static_cast<std::uint16_t>(rng.below(16));
    const auto decoded = cb.decode(code);
    EXPECT_NEAR(cb.adc_distance(q, code), oracle::sq_dist(q, decoded), 1e-5);
  }
  const auto code = cb.encode(x.row(0));
  EXPECT_NEAR(cb.adc_distance(cb.decode(code), code), 0.0, 1e-12);
}

TEST(Pq, TrainingErrorNonIncreasingAndDeterministic) {
  const auto x = generate_clustered(600, 32, 10, 0.5, 5.0, 3);
  const auto a = pq_train(x, config(8, 4, 9));
  const auto b = pq_train(x, config(8, 4, 9));
  EXPECT_EQ(a, b);
  const auto& err = a.training_error();
  for (std::size_t i = 1; i < err.size(); ++i) EXPECT_LE(err[i], err[i - 1] * (1 + 1e-12)) << i;
  BlobWriter w1, w2;
  serialize(w1, a);
  serialize(w2, b);
  EXPECT_EQ(w1.bytes(), w2.bytes());
  BlobReader r(w1.bytes());
  EXPECT_EQ(deserialize_pq(r).decode(a.encode(x.row(3))), a.decode(a.encode(x.row(3))));
}

TEST(Pq, AdcConvergesAsQuantizationErrorVanishes) {
  // With as many centroids as distinct points, every point is its own
  // centroid and ADC equals the exact squared distance.
  const auto x = testutil::random_matrix(8, 4, 12);
  const auto cb = pq_train(x, config(2, 3));
  const std::vector<double> q = {0.1, -0.2, 0.3, 0.4};
  for (std::size_t i = 0; i < 8; ++i) {
    std::vector<double> xi(x.row(i).begin(), x.row(i).end());
    EXPECT_NEAR(cb.adc_distance(q, cb.encode(xi)), oracle::sq_dist(q, xi), 1e-5);
  }
}

TEST(Pq, Errors) {
  const auto x = testutil::random_matrix(10, 6, 1);
  EXPECT_THROW(pq_train(x, config(4, 2)), ValidationError);
  EXPECT_THROW(pq_train(MatrixD(0, 6), config(3, 2)), ValidationError);
  EXPECT_THROW(pq_train(x, config(3, 17)), ValidationError);
  const auto cb = pq_train(x, config(3, 1));
  const std::vector<double> bad(5, 0.0);
  EXPECT_THROW(cb.encode(bad), ValidationError);
  EXPECT_THROW(PqCodebook{}.encode(bad), ValidationError);
}

TEST(Pq, WarnsWhenFewerVectorsThanCentroids) {
  std::vector<std::string> seen;
  auto saved = warning_sink();
  warning_sink() = [&](std::string_view m) { seen.emplace_back(m); };
  pq_train(testutil::random_matrix(10, 4, 1), config(2, 8));
  warning_sink() = saved;
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_NE(seen[0].find("centroids"), std::string::npos);
}

TEST(Pq, NormalizeFlagScalesInputs) {
  auto c = config(2, 1);
  c.l2_normalize = true;
  MatrixD x(2, 2, std::vector<double>{3, 4, 30, 40});
  const auto cb = pq_train(x, c);
  const std::vector<double> q = {0.6, 0.8};
  EXPECT_NEAR(cb.adc_distance(q, cb.encode(q)), 0.0, 1e-6);
}

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gmmem/chi_square.hpp"
#include "gmmem/synth.hpp"

using namespace gmmem;

namespace {

GmmSpec acceptance_instance() {
  SeededRng rng(42, 0);
  return make_separated_spec(3, 8, 1.0, WeightProfile::explicit_weights({0.5, 0.3, 0.2}), VarianceProfile::unit(),
                             rng);
}

}  // namespace

TEST(SeededRng, SameSeedAndStreamReproduce) {
  SeededRng a(7, 3), b(7, 3), c(7, 4), e(8, 3);
  bool differs_stream = false, differs_seed = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs_stream |= x != c.next_u64();
    differs_seed |= x != e.next_u64();
  }
  EXPECT_TRUE(differs_stream);
  EXPECT_TRUE(differs_seed);
}

TEST(SeededRng, UniformAndNormalMoments) {
  SeededRng rng(1);
  const int n = 400000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(SampleDataset, StandardNormalMoments) {
  const GmmSpec spec(3, {{1.0, {0, 0, 0}, 1.0}});
  SeededRng rng(2024, 1);
  const std::size_t n = 1000000;
  const Dataset data = sample_dataset(spec, n, rng);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t j = 0; j < n; ++j) {
      s += data.row(j)[c];
      s2 += data.row(j)[c] * data.row(j)[c];
    }
    EXPECT_LE(std::abs(s / n), 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
  }
}

TEST(SampleDataset, SingleSample) {
  const GmmSpec spec = acceptance_instance();
  SeededRng rng(1);
  const Dataset data = sample_dataset(spec, 1, rng);
  EXPECT_EQ(data.n(), 1u);
  ASSERT_TRUE(data.has_labels());
  EXPECT_EQ(data.labels()->size(), 1u);
  EXPECT_THROW(sample_dataset(spec, 0, rng), Error);
}

TEST(SampleDataset, Deterministic) {
  const GmmSpec spec = acceptance_instance();
  SeededRng a(9, 1), b(9, 1);
  EXPECT_EQ(sample_dataset(spec, 5000, a), sample_dataset(spec, 5000, b));
}

TEST(SampleDataset, LabelFrequenciesMatchWeights) {
  const GmmSpec spec = acceptance_instance();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SeededRng rng(seed, 1);
    const std::size_t n = 100000;
    const Dataset data = sample_dataset(spec, n, rng);
    std::vector<double> counts(spec.k(), 0.0);
    for (std::size_t l : *data.labels()) counts[l] += 1.0;
    double stat = 0.0;
    for (std::size_t i = 0; i < spec.k(); ++i) {
      const double expected = n * spec.weight(i);
      stat += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    const double p_value = 1.0 - chi_square_cdf(static_cast<unsigned>(spec.k() - 1), stat);
    EXPECT_GT(p_value, 1e-6) << "seed " << seed << " stat " << stat;
  }
}

TEST(MakeSeparatedSpec, MeetsRequestedMargin) {
  SeededRng rng(3);
  const GmmSpec a = make_separated_spec(2, 2, 1.0, WeightProfile::uniform(), VarianceProfile::unit(), rng);
  EXPECT_TRUE(check_separation(a, 64).holds);
  const GmmSpec b = make_separated_spec(5, 3, 2.0, WeightProfile::uniform(), VarianceProfile::unit(), rng);
  EXPECT_GE(check_separation(b, 64).margin, 128.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 2 + rep % 6, d = 1 + rep % 7;
    const double mult = 1.0 + 0.37 * (rep % 4);
    const GmmSpec s = make_separated_spec(k, d, mult, WeightProfile::geometric(0.6), VarianceProfile::geometric(1.7), rng);
    EXPECT_TRUE(check_separation(s, 64.0 * mult).holds) << rep;
    EXPECT_LT(check_separation(s, 64.0 * mult).margin, 64.0 * mult * (1 + 1e-9));
  }
}

TEST(MakeSeparatedSpec, Profiles) {
  SeededRng rng(4);
  const GmmSpec u = make_separated_spec(4, 2, 1.0, WeightProfile::uniform(), VarianceProfile::unit(), rng);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(u.weight(i), 0.25);
    EXPECT_DOUBLE_EQ(u.variance(i), 1.0);
  }
  const GmmSpec g = make_separated_spec(3, 2, 1.0, WeightProfile::geometric(0.5), VarianceProfile::geometric(4.0), rng);
  EXPECT_NEAR(g.weight(0), 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(g.weight(2), 1.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(g.variance(2), 16.0);
}

TEST(MakeSeparatedSpec, RejectsDegenerateRequests) {
  SeededRng rng(5);
  EXPECT_THROW(make_separated_spec(3, 2, 1.0, WeightProfile::explicit_weights({1, 0, 1}), VarianceProfile::unit(), rng),
               Error);
  EXPECT_THROW(make_separated_spec(3, 2, 1.0, WeightProfile::uniform(), VarianceProfile::explicit_variances({1, -1, 1}), rng),
               Error);
  EXPECT_THROW(make_separated_spec(3, 2, 0.5, WeightProfile::uniform(), VarianceProfile::unit(), rng), Error);
  EXPECT_THROW(make_separated_spec(0, 2, 1.0, WeightProfile::uniform(), VarianceProfile::unit(), rng), Error);
  EXPECT_THROW(make_separated_spec(2, 2, 1.0, WeightProfile::geometric(-1), VarianceProfile::unit(), rng), Error);
}

TEST(PerturbParams, ZeroFractionsReturnTruth) {
  const GmmSpec truth = acceptance_instance();
  SeededRng rng(6);
  EXPECT_EQ(perturb_params(truth, 0, 0, 0, rng), truth);
}

TEST(PerturbParams, MeanMovesByTheBasinRadius) {
  const double S = 100.0;
  const GmmSpec truth(1, {{0.5, {0.0}, 1.0}, {0.5, {S}, 1.0}});
  SeededRng rng(7);
  const GmmSpec p = perturb_params(truth, 1, 0, 0, rng);
  EXPECT_NEAR(std::abs(p.mean(0)[0] - 0.0), S / 16, 1e-12);
  EXPECT_NEAR(std::abs(p.mean(1)[0] - S), S / 16, 1e-12);
}

TEST(PerturbParams, VarianceMovesByHalfOverRootD) {
  const GmmSpec truth(4, {{0.5, {0, 0, 0, 0}, 1.0}, {0.5, {100, 0, 0, 0}, 2.0}});
  SeededRng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const GmmSpec p = perturb_params(truth, 0, 0, 1, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      const double ratio = p.variance(i) / truth.variance(i);
      EXPECT_NEAR(std::abs(ratio - 1.0), 0.25, 1e-12);
    }
  }
}

TEST(PerturbParams, AlwaysInsideTheBasin) {
  SeededRng spec_rng(9);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t k = 1 + rep % 5, d = 1 + rep % 9;
    const GmmSpec truth =
        make_separated_spec(k, d, 1.0, WeightProfile::geometric(0.5), VarianceProfile::geometric(2.0), spec_rng);
    SeededRng rng(rep, 2);
    const GmmSpec p = perturb_params(truth, 1, 1, 1, rng);
    EXPECT_TRUE(in_init_basin(p, truth)) << rep;
  }
}

TEST(PerturbParams, RejectsFractionsOutsideUnitInterval) {
  const GmmSpec truth = acceptance_instance();
  SeededRng rng(10);
  EXPECT_THROW(perturb_params(truth, 1.5, 0, 0, rng), Error);
  EXPECT_THROW(perturb_params(truth, 0, -0.1, 0, rng), Error);
}

TEST(DisplaceMeans, ExactDistance) {
  const GmmSpec truth = acceptance_instance();
  double min_dist = 1e300;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      min_dist = std::min(min_dist, std::sqrt(detail::squared_distance(truth.mean(i), truth.mean(j))));
    }
  }
  SeededRng rng(11);
  const auto means = displace_means(truth, 0.25, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(std::sqrt(detail::squared_distance(means[i], truth.mean(i))), 0.25 * min_dist, 1e-9);
  }
}

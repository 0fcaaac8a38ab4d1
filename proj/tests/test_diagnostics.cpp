#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gmmem/diagnostics.hpp"
#include "gmmem/experiments.hpp"

using namespace gmmem;

namespace {

GmmSpec acceptance_instance() {
  SeededRng rng(42, 0);
  return make_separated_spec(3, 8, 1.0, WeightProfile::explicit_weights({0.5, 0.3, 0.2}), VarianceProfile::unit(),
                             rng);
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) out[c] = a[c] - b[c];
  return out;
}

// The three inequalities, spelled out with whole vectors.
EventFlags flags_by_hand(const std::vector<double>& x, std::size_t j, std::size_t i, const GmmSpec& est,
                         const GmmSpec& truth) {
  const auto mj = vec(truth.mean(j)), mi = vec(truth.mean(i));
  const auto v = minus(x, mj);
  const auto sep = minus(mj, mi);
  const double R2 = dot(sep, sep);
  const double sj = truth.sigma(j), si = truth.sigma(i);
  const double b = R2 / (64.0 * std::max(si, sj) * std::max(si, sj));
  const double d = static_cast<double>(x.size());
  const double q = dot(v, v) / (sj * sj);
  EventFlags f;
  f.e1 = dot(v, sep) >= -R2 / 5.0;
  f.e2 = dot(v, minus(mi, vec(est.mean(i)))) >= -R2 / 64.0 &&
         dot(v, minus(mj, vec(est.mean(j)))) <= (sj / si) * (sj / si) * R2 / 64.0;
  f.e3 = q >= d * (1.0 - 2.0 * std::sqrt(b / d)) && q <= d * (1.0 + 2.0 * std::sqrt(b / d) + 2.0 * b / d);
  return f;
}

}  // namespace

TEST(Beta, Examples) {
  const GmmSpec a(2, {{0.5, {0, 0}, 1.0}, {0.5, {16, 0}, 1.0}});
  EXPECT_DOUBLE_EQ(beta(a, 0, 1), 4.0);
  const GmmSpec b(2, {{0.5, {0, 0}, 1.0}, {0.5, {16, 0}, 4.0}});
  EXPECT_DOUBLE_EQ(beta(b, 0, 1), 1.0);
  const GmmSpec c(2, {{0.5, {1, 1}, 1.0}, {0.5, {1, 1}, 1.0}});
  EXPECT_EQ(beta(c, 0, 1), 0.0);
  EXPECT_THROW(beta(a, 1, 1), Error);
}

TEST(Beta, SymmetricAndQuadraticInScale) {
  const GmmSpec truth = acceptance_instance();
  std::vector<Component> scaled;
  for (const auto& comp : truth.components()) {
    Component s = comp;
    for (auto& m : s.mean) m *= 3.0;
    scaled.push_back(s);
  }
  const GmmSpec big(8, scaled);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      EXPECT_EQ(beta(truth, i, j), beta(truth, j, i));
      EXPECT_NEAR(beta(big, i, j), 9.0 * beta(truth, i, j), 1e-12 * beta(big, i, j));
    }
  }
}

TEST(GoodEventFlags, SampleAtSourceMean) {
  const GmmSpec truth = beta_tuned_instance(8, 1.0);
  const auto f = good_event_flags(truth.mean(1), 1, 0, truth, truth);
  EXPECT_TRUE(f.e1);
  EXPECT_TRUE(f.e2);
  EXPECT_FALSE(f.e3);  // 8 (1 - 2 sqrt(1/8)) > 0
}

TEST(GoodEventFlags, E2HoldsAtTruth) {
  const GmmSpec truth = acceptance_instance();
  SeededRng rng(3);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> x(8);
    for (auto& v : x) v = 50.0 * rng.normal();
    EXPECT_TRUE(good_event_flags(x, 1 + t % 2, 0, truth, truth).e2);
  }
}

TEST(GoodEventFlags, MatchesVectorOracle) {
  const GmmSpec truth = beta_tuned_instance(6, 2.0);
  SeededRng rng(4), prng(5, 2);
  const GmmSpec est = perturb_params(truth, 1, 1, 1, prng);
  for (int t = 0; t < 3000; ++t) {
    const std::size_t j = 1 + t % 2;
    std::vector<double> x = vec(truth.mean(j));
    const double spread = 1.0 + 3.0 * rng.uniform();
    for (auto& v : x) v += spread * rng.normal();
    const EventFlags got = good_event_flags(x, j, 0, est, truth);
    const EventFlags want = flags_by_hand(x, j, 0, est, truth);
    EXPECT_EQ(got.e1, want.e1);
    EXPECT_EQ(got.e2, want.e2);
    EXPECT_EQ(got.e3, want.e3);
  }
}

TEST(GoodEventFlags, Errors) {
  const GmmSpec truth = acceptance_instance();
  EXPECT_THROW(good_event_flags(truth.mean(1), 1, 1, truth, truth), Error);
  EXPECT_THROW(good_event_flags(std::vector<double>(3, 0.0), 1, 0, truth, truth), Error);
  EXPECT_THROW(good_event_flags(truth.mean(1), 5, 0, truth, truth), Error);
}

TEST(BadEventRate, WithinBoundAtBetaFour) {
  const GmmSpec truth = beta_tuned_instance(8, 4.0);
  SeededRng rng(6, kDatasetStream);
  const Dataset data = sample_dataset(truth, 340000, rng);
  const GoodEventReport report = bad_event_rate(data, truth, truth, 0);
  ASSERT_EQ(report.sources.size(), 2u);
  const auto& s1 = report.sources[0];
  EXPECT_EQ(s1.source, 1u);
  EXPECT_DOUBLE_EQ(s1.beta, 4.0);
  EXPECT_GE(s1.n_source, 100000u);
  EXPECT_NEAR(s1.theoretical_bound, 5.0 * std::exp(-4.0), 1e-15);
  ASSERT_TRUE(s1.empirical_bad_rate.has_value());
  EXPECT_LE(*s1.empirical_bad_rate, s1.theoretical_bound + 4.0 * std::sqrt(s1.theoretical_bound *
                                                                          (1 - s1.theoretical_bound) / s1.n_source) +
                                        4.0 / s1.n_source);
  EXPECT_TRUE(s1.within_bound());
  EXPECT_TRUE(report.sources[1].within_bound());
  EXPECT_EQ(s1.flags.size(), s1.n_source);
}

TEST(BadEventRate, AbsentSourceHasNoRate) {
  const GmmSpec truth = acceptance_instance();
  const Dataset data(8, std::vector<double>(16, 0.0), std::vector<std::size_t>{0, 1});
  const GoodEventReport report = bad_event_rate(data, truth, truth, 0);
  EXPECT_TRUE(report.sources[0].empirical_bad_rate.has_value());
  EXPECT_FALSE(report.sources[1].empirical_bad_rate.has_value());
  EXPECT_EQ(report.sources[1].n_source, 0u);
}

TEST(BadEventRate, MissingLabels) {
  const GmmSpec truth = acceptance_instance();
  try {
    bad_event_rate(Dataset(8, std::vector<double>(8, 0.0)), truth, truth, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_labels);
  }
}

TEST(BadEventRate, VeryLargeBetaGivesZero) {
  const GmmSpec truth = beta_tuned_instance(8, 200.0);
  SeededRng rng(7, kDatasetStream);
  const Dataset data = sample_dataset(truth, 100000, rng);
  for (const auto& s : bad_event_rate(data, truth, truth, 0).sources) {
    ASSERT_TRUE(s.empirical_bad_rate.has_value());
    EXPECT_EQ(*s.empirical_bad_rate, 0.0);
  }
}

TEST(FixedPointResidual, DeterministicPerSeed) {
  const GmmSpec truth = acceptance_instance();
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto a = fixed_point_residual(truth, 20000, seeds);
  const auto b = fixed_point_residual(truth, 20000, seeds);
  EXPECT_EQ(a.values, b.values);
  EXPECT_LE(a.median, a.max);
  EXPECT_THROW(fixed_point_residual(truth, 299, seeds), Error);
}

TEST(FixedPointResidual, HalvesWhenNQuadruples) {
  const GmmSpec truth = acceptance_instance();
  std::vector<std::uint64_t> seeds(20);
  for (std::size_t s = 0; s < seeds.size(); ++s) seeds[s] = 100 + s;
  const double small = fixed_point_residual(truth, 10000, seeds).median;
  const double large = fixed_point_residual(truth, 40000, seeds).median;
  EXPECT_GE(large / small, 0.35);
  EXPECT_LE(large / small, 0.65);
}

TEST(FixedPointResidual, SingleComponentIsMleError) {
  const GmmSpec truth(4, {{1.0, {0, 0, 0, 0}, 1.0}});
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto r = fixed_point_residual(truth, 10000, seeds);
  const auto floor = labeled_noise_floor(truth, 10000, seeds);
  for (std::size_t s = 0; s < seeds.size(); ++s) EXPECT_NEAR(r.values[s], floor.values[s], 1e-12);
  EXPECT_LT(r.max, 10.0 * std::sqrt(4.0 / 10000));
}

TEST(ContractionEstimate, Examples) {
  const std::vector<double> geometric{0.4, 0.2, 0.1, 0.05};
  const auto g = contraction_estimate(geometric);
  ASSERT_EQ(g.ratios.size(), 3u);
  for (double r : g.ratios) EXPECT_DOUBLE_EQ(r, 0.5);

  const std::vector<double> flat{0.1, 0.1, 0.1, 0.1, 0.1};
  EXPECT_TRUE(contraction_estimate(flat).ratios.empty());

  const std::vector<double> with_floor{1.0, 0.3, 0.09, 0.01, 0.002, 0.0021, 0.0019};
  const auto w = contraction_estimate(with_floor);
  EXPECT_DOUBLE_EQ(w.plateau, 0.002);
  EXPECT_EQ(w.steps, (std::vector<std::size_t>{0, 1, 2}));

  EXPECT_THROW(contraction_estimate(std::vector<double>{0.1}), Error);
}

TEST(ContractionEstimate, AcceptanceTrace) {
  const GmmSpec truth = acceptance_instance();
  SeededRng rng(8, kDatasetStream), prng(8, kInitStream);
  const Dataset data = sample_dataset(truth, 200000, rng);
  const FitTrace trace = fit(perturb_params(truth, 1, 1, 1, prng), data, EmConfig::plain(1e-10, 50), truth);
  const auto c = contraction_estimate(trace);
  EXPECT_FALSE(c.ratios.empty());
  for (double r : c.ratios) EXPECT_LE(r, 0.7);

  const FitTrace bare = fit(truth, data, EmConfig::plain(1e-10, 3));
  EXPECT_THROW(contraction_estimate(bare), Error);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gmmem/chi_square.hpp"
#include "gmmem/core_model.hpp"
#include "gmmem/error.hpp"
#include "gmmem/parallel.hpp"

namespace gmmem {

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;              // per sample
  std::vector<std::vector<std::size_t>> clusters;   // sample indices in dataset order
};

/// Nearest-mean partition. Exact distance ties go to the lowest index.
inline ClusterAssignment assign_clusters(const Dataset& data, std::span<const std::vector<double>> means) {
  const std::size_t k = means.size();
  if (k == 0) throw Error(ErrorKind::invalid_argument, "need at least one mean");
  for (std::size_t i = 0; i < k; ++i) {
    if (means[i].size() != data.d()) {
      throw Error(ErrorKind::dimension_mismatch, "mean " + std::to_string(i) + " has wrong dimension", i);
    }
  }
  ClusterAssignment out;
  out.cluster_of.resize(data.n());
  parallel_for(data.n(), 16384, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto x = data.row(j);
      std::size_t best = 0;
      double best_dist = detail::squared_distance(x, means[0]);
      for (std::size_t i = 1; i < k; ++i) {
        const double dist = detail::squared_distance(x, means[i]);
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      out.cluster_of[j] = best;
    }
  });
  out.clusters.resize(k);
  for (std::size_t j = 0; j < data.n(); ++j) out.clusters[out.cluster_of[j]].push_back(j);
  return out;
}

/// Robust variance estimate from the squared distances between consecutive
/// members (in the given order). Of the m - 1 values, the one at 1-indexed
/// rank clamp(ceil(alpha_d m), 1, m - 1) after sorting, divided by 2d.
/// For Gaussian members each value is 2 sigma^2 times a chi-square(d) draw,
/// and alpha_d is the CDF of that law at its mean d.
inline double estimate_variance_quantile(std::span<const std::span<const double>> members, std::size_t d) {
  const std::size_t m = members.size();
  if (m < 2) {
    throw Error(ErrorKind::cluster_too_small,
                "cluster too small for variance estimation (" + std::to_string(m) + " member(s))");
  }
  if (d == 0) throw Error(ErrorKind::invalid_argument, "dimension must be positive");
  std::vector<double> gaps;
  gaps.reserve(m - 1);
  for (std::size_t t = 0; t + 1 < m; ++t) {
    if (members[t].size() != d || members[t + 1].size() != d) {
      throw Error(ErrorKind::dimension_mismatch, "cluster member has wrong dimension");
    }
    gaps.push_back(detail::squared_distance(members[t + 1], members[t]));
  }
  const double alpha = chi_square_cdf_at_mean(static_cast<unsigned>(d));
  const auto rank = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(m))), 1, m - 1);
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(rank - 1), gaps.end());
  return gaps[rank - 1] / (2.0 * static_cast<double>(d));
}

inline double estimate_variance_quantile(const std::vector<std::vector<double>>& members, std::size_t d) {
  std::vector<std::span<const double>> views(members.begin(), members.end());
  return estimate_variance_quantile(std::span<const std::span<const double>>(views), d);
}

/// One hard-assignment step from the given means: weights are cluster
/// fractions, means are cluster averages, and variances come from
/// estimate_variance_quantile over each cluster in dataset order.
inline GmmSpec one_step_kmeans(const Dataset& data, std::span<const std::vector<double>> init_means) {
  const ClusterAssignment assignment = assign_clusters(data, init_means);
  const std::size_t k = init_means.size(), d = data.d();
  const double n = static_cast<double>(data.n());
  std::vector<Component> comps;
  comps.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& members = assignment.clusters[i];
    if (members.size() < 2) {
      throw Error(ErrorKind::cluster_too_small,
                  "cluster " + std::to_string(i) + " has " + std::to_string(members.size()) +
                      " member(s); at least 2 are required",
                  i);
    }
    std::vector<double> mean(d, 0.0);
    std::vector<std::span<const double>> rows;
    rows.reserve(members.size());
    for (std::size_t j : members) {
      rows.push_back(data.row(j));
      for (std::size_t c = 0; c < d; ++c) mean[c] += data.row(j)[c];
    }
    for (auto& v : mean) v /= static_cast<double>(members.size());
    const double variance = estimate_variance_quantile(std::span<const std::span<const double>>(rows), d);
    comps.push_back({static_cast<double>(members.size()) / n, std::move(mean), variance});
  }
  return GmmSpec(d, std::move(comps));
}

inline GmmSpec one_step_kmeans(const Dataset& data, const std::vector<std::vector<double>>& init_means) {
  return one_step_kmeans(data, std::span<const std::vector<double>>(init_means));
}

}  // namespace gmmem

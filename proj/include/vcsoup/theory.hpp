#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vcsoup/policy.hpp"

namespace vcsoup {

// A scalar loss over flat parameter vectors. The gradient is optional; when
// absent, Hessian probes fall back to central finite differences of the value.
struct LossFunction {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

// DPO loss landscape in logit-delta coordinates around the reference policy.
LossFunction make_dpo_loss_function(const TabularPolicy& ref,
                                    const PreferenceDataset& dataset,
                                    double beta);

// Cross-dataset gradient agreement at the shared starting point (policy ==
// ref). per_pair_cosines holds one cosine per prompt present in both
// datasets, between the two datasets' gradient contributions on that
// prompt's logits row; prompts whose contribution cancels to zero in either
// dataset are skipped.
struct ConflictReport {
  std::vector<int> matched_prompts;
  std::vector<double> per_pair_cosines;
  double mean_cosine = 0.0;
  double negative_fraction = 0.0;
  double batch_cosine = 0.0;  // cosine of the two full-batch gradients
};

ConflictReport gradient_conflict(const TabularPolicy& ref,
                                 const PreferenceDataset& dataset_i,
                                 const PreferenceDataset& dataset_j,
                                 double beta);

struct HessianProbeOptions {
  double fd_step = 1e-4;
  int power_iterations = 8;
  uint64_t seed = 0x9a7e5eed;
};

// Largest Hessian spectral norm seen along the segment [theta_i, theta_j],
// probed at num_probe_points nested segment positions (endpoints first, then
// bisection order, so the estimate is non-decreasing in the probe count).
double estimate_LH(const LossFunction& loss, std::span<const double> theta_i,
                   std::span<const double> theta_j, int num_probe_points,
                   const HessianProbeOptions& options = {});

// Loss along the linear interpolation w = lambda*theta_i + (1-lambda)*theta_j
// against the chord of endpoint losses, with the curvature bound
// 0.5*lambda*(1-lambda)*L_H*|theta_i-theta_j|^2 per grid point.
struct MergeGapReport {
  std::vector<double> lambdas;
  std::vector<double> path_losses;
  std::vector<double> gaps;
  std::vector<double> bound_values;
  std::array<double, 2> endpoint_losses{};  // (f(theta_i), f(theta_j))
  double l_h = 0.0;
  double theta_distance_sq = 0.0;
  bool bound_holds = false;  // gaps <= bound + 1e-8 everywhere
};

MergeGapReport merging_gap_scan(const LossFunction& loss,
                                std::span<const double> theta_i,
                                std::span<const double> theta_j,
                                int num_lambdas, int lh_probe_points = 5,
                                const HessianProbeOptions& options = {});

// -0.5*lambda*(1-lambda)*(theta_i-theta_j)' H (theta_i-theta_j) for a fixed
// symmetric Hessian; the gap is exact when the loss is quadratic.
double quadratic_gap_closed_form(std::span<const double> hessian,
                                 std::span<const double> theta_i,
                                 std::span<const double> theta_j,
                                 double lambda);

struct GeometryBlock {
  int block_id = 0;
  double l2_distance = 0.0;
  double cosine = 0.0;
};

struct GeometryReport {
  double l2_distance = 0.0;
  double cosine = 0.0;
  bool degenerate = false;  // one of the vectors is zero
  std::vector<GeometryBlock> per_block;  // one block per prompt logits row
};

GeometryReport vector_geometry(const ValueVector& theta_i,
                               const ValueVector& theta_j);

void write_gap_scan_csv(const MergeGapReport& report, const std::string& path);
void write_geometry_csv(const GeometryReport& report, const std::string& path);

}  // namespace vcsoup

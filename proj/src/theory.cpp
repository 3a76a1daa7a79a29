#include "vcsoup/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace vcsoup {

LossFunction make_dpo_loss_function(const TabularPolicy& ref,
                                    const PreferenceDataset& dataset,
                                    double beta) {
  LossFunction f;
  f.value = [ref, dataset, beta](std::span<const double> params) {
    if (params.size() != ref.logits.size()) {
      throw std::invalid_argument("shape mismatch");
    }
    TabularPolicy policy = ref;
    for (size_t i = 0; i < params.size(); ++i) policy.logits[i] += params[i];
    return dpo_loss(policy, ref, dataset, beta);
  };
  f.gradient = [ref, dataset, beta](std::span<const double> params) {
    if (params.size() != ref.logits.size()) {
      throw std::invalid_argument("shape mismatch");
    }
    TabularPolicy policy = ref;
    for (size_t i = 0; i < params.size(); ++i) policy.logits[i] += params[i];
    return dpo_gradient(policy, ref, dataset, beta);
  };
  return f;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_or_zero(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Per-prompt gradient contribution of a dataset at policy == ref, where each
// pair adds mass only on its chosen/rejected logits and the sigmoid factor is
// the same constant for every pair.
std::map<int, std::vector<double>> per_prompt_gradients(
    const TabularPolicy& ref, const PreferenceDataset& dataset, double beta) {
  std::map<int, std::vector<double>> rows;
  const double coeff = -0.5 * beta;  // -beta * sigmoid(0)
  for (const PreferencePair& p : dataset.pairs) {
    if (p.prompt_id < 0 || p.prompt_id >= ref.num_prompts || p.chosen_id < 0 ||
        p.chosen_id >= ref.responses_per_prompt || p.rejected_id < 0 ||
        p.rejected_id >= ref.responses_per_prompt) {
      throw std::invalid_argument("pair index out of range");
    }
    auto it = rows.try_emplace(
        p.prompt_id,
        std::vector<double>(static_cast<size_t>(ref.responses_per_prompt), 0.0))
        .first;
    it->second[p.chosen_id] += coeff;
    it->second[p.rejected_id] -= coeff;
  }
  return rows;
}

}  // namespace

ConflictReport gradient_conflict(const TabularPolicy& ref,
                                 const PreferenceDataset& dataset_i,
                                 const PreferenceDataset& dataset_j,
                                 double beta) {
  const auto rows_i = per_prompt_gradients(ref, dataset_i, beta);
  const auto rows_j = per_prompt_gradients(ref, dataset_j, beta);

  ConflictReport report;
  bool any_shared = false;
  for (const auto& [prompt, grad_i] : rows_i) {
    auto it = rows_j.find(prompt);
    if (it == rows_j.end()) continue;
    any_shared = true;
    if (norm(grad_i) == 0.0 || norm(it->second) == 0.0) continue;
    report.matched_prompts.push_back(prompt);
    report.per_pair_cosines.push_back(cosine_or_zero(grad_i, it->second));
  }
  if (!any_shared) throw std::runtime_error("disjoint prompt supports");

  if (!report.per_pair_cosines.empty()) {
    double sum = 0.0;
    size_t negatives = 0;
    for (double c : report.per_pair_cosines) {
      sum += c;
      if (c < 0.0) ++negatives;
    }
    report.mean_cosine = sum / static_cast<double>(report.per_pair_cosines.size());
    report.negative_fraction =
        static_cast<double>(negatives) /
        static_cast<double>(report.per_pair_cosines.size());
  }
  const std::vector<double> batch_i = dpo_gradient(ref, ref, dataset_i, beta);
  const std::vector<double> batch_j = dpo_gradient(ref, ref, dataset_j, beta);
  report.batch_cosine = cosine_or_zero(batch_i, batch_j);
  return report;
}

namespace {

// Probe positions on [0, 1]: endpoints first, then binary subdivision, so a
// longer prefix always contains every shorter one.
double probe_position(int k) {
  if (k == 0) return 0.0;
  if (k == 1) return 1.0;
  int i = k - 1;  // 1, 2, 3, ... -> van der Corput base 2
  double value = 0.0;
  double denom = 1.0;
  while (i > 0) {
    denom *= 2.0;
    value += static_cast<double>(i & 1) / denom;
    i >>= 1;
  }
  return value;
}

std::vector<double> fd_gradient(const LossFunction& loss,
                                std::span<const double> x, double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (size_t k = 0; k < x.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + step;
    const double fp = loss.value(probe);
    probe[k] = saved - step;
    const double fm = loss.value(probe);
    probe[k] = saved;
    grad[k] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

std::vector<double> gradient_at(const LossFunction& loss,
                                std::span<const double> x, double step) {
  if (loss.gradient) return loss.gradient(x);
  return fd_gradient(loss, x, step);
}

// H v by central difference of the gradient along unit direction v.
std::vector<double> hessian_vector(const LossFunction& loss,
                                   std::span<const double> x,
                                   std::span<const double> v, double step) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> xm(x.begin(), x.end());
  for (size_t i = 0; i < x.size(); ++i) {
    xp[i] += step * v[i];
    xm[i] -= step * v[i];
  }
  const std::vector<double> gp = gradient_at(loss, xp, step);
  const std::vector<double> gm = gradient_at(loss, xm, step);
  std::vector<double> hv(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    hv[i] = (gp[i] - gm[i]) / (2.0 * step);
  }
  return hv;
}

double spectral_norm_at(const LossFunction& loss, std::span<const double> x,
                        const HessianProbeOptions& options, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(x.size());
  for (double& c : v) c = rng.normal();
  double nv = norm(v);
  if (nv == 0.0) {
    v.assign(x.size(), 0.0);
    v[0] = 1.0;
    nv = 1.0;
  }
  for (double& c : v) c /= nv;

  double estimate = 0.0;
  for (int it = 0; it < options.power_iterations; ++it) {
    std::vector<double> hv = hessian_vector(loss, x, v, options.fd_step);
    for (double c : hv) {
      if (!std::isfinite(c)) throw std::runtime_error("non-finite Hessian probe");
    }
    const double nh = norm(hv);
    estimate = nh;
    if (nh < 1e-12) break;  // flat direction; treat as zero curvature
    for (size_t i = 0; i < v.size(); ++i) v[i] = hv[i] / nh;
  }
  return estimate;
}

}  // namespace

double estimate_LH(const LossFunction& loss, std::span<const double> theta_i,
                   std::span<const double> theta_j, int num_probe_points,
                   const HessianProbeOptions& options) {
  if (theta_i.size() != theta_j.size()) {
    throw std::invalid_argument("shape mismatch");
  }
  if (num_probe_points < 2) {
    throw std::invalid_argument("need at least 2 probe points");
  }
  double best = 0.0;
  std::vector<double> xi(theta_i.size());
  for (int k = 0; k < num_probe_points; ++k) {
    const double t = probe_position(k);
    for (size_t e = 0; e < xi.size(); ++e) {
      xi[e] = theta_i[e] + t * (theta_j[e] - theta_i[e]);
    }
    const uint64_t seed = substream_seed(options.seed, "probe/" + std::to_string(k));
    best = std::max(best, spectral_norm_at(loss, xi, options, seed));
  }
  return best;
}

MergeGapReport merging_gap_scan(const LossFunction& loss,
                                std::span<const double> theta_i,
                                std::span<const double> theta_j,
                                int num_lambdas, int lh_probe_points,
                                const HessianProbeOptions& options) {
  if (theta_i.size() != theta_j.size()) {
    throw std::invalid_argument("shape mismatch");
  }
  if (num_lambdas < 3) throw std::invalid_argument("num_lambdas must be >= 3");

  MergeGapReport report;
  report.endpoint_losses = {loss.value(theta_i), loss.value(theta_j)};
  double dist_sq = 0.0;
  for (size_t e = 0; e < theta_i.size(); ++e) {
    const double d = theta_i[e] - theta_j[e];
    dist_sq += d * d;
  }
  report.theta_distance_sq = dist_sq;

  // walk the path first so a non-finite loss is reported with its lambda
  std::vector<double> w(theta_i.size());
  for (int k = 0; k < num_lambdas; ++k) {
    const double lambda =
        static_cast<double>(k) / static_cast<double>(num_lambdas - 1);
    for (size_t e = 0; e < w.size(); ++e) {
      w[e] = lambda * theta_i[e] + (1.0 - lambda) * theta_j[e];
    }
    const double f = loss.value(w);
    if (!std::isfinite(f)) {
      throw std::runtime_error("non-finite loss at lambda=" +
                               std::to_string(lambda));
    }
    const double chord = lambda * report.endpoint_losses[0] +
                         (1.0 - lambda) * report.endpoint_losses[1];
    report.lambdas.push_back(lambda);
    report.path_losses.push_back(f);
    report.gaps.push_back(f - chord);
  }
  report.l_h = estimate_LH(loss, theta_i, theta_j, lh_probe_points, options);
  for (double lambda : report.lambdas) {
    report.bound_values.push_back(0.5 * lambda * (1.0 - lambda) * report.l_h *
                                  dist_sq);
  }
  report.bound_holds = true;
  for (size_t k = 0; k < report.gaps.size(); ++k) {
    if (report.gaps[k] > report.bound_values[k] + 1e-8) {
      report.bound_holds = false;
      break;
    }
  }
  return report;
}

double quadratic_gap_closed_form(std::span<const double> hessian,
                                 std::span<const double> theta_i,
                                 std::span<const double> theta_j,
                                 double lambda) {
  const size_t n = theta_i.size();
  if (theta_j.size() != n || hessian.size() != n * n) {
    throw std::invalid_argument("shape mismatch");
  }
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = r + 1; c < n; ++c) {
      if (std::abs(hessian[r * n + c] - hessian[c * n + r]) > 1e-9) {
        throw std::invalid_argument("asymmetric Hessian");
      }
    }
  }
  std::vector<double> d(n);
  for (size_t e = 0; e < n; ++e) d[e] = theta_i[e] - theta_j[e];
  double quad = 0.0;
  for (size_t r = 0; r < n; ++r) {
    double hd = 0.0;
    for (size_t c = 0; c < n; ++c) hd += hessian[r * n + c] * d[c];
    quad += d[r] * hd;
  }
  return -0.5 * lambda * (1.0 - lambda) * quad;
}

GeometryReport vector_geometry(const ValueVector& theta_i,
                               const ValueVector& theta_j) {
  if (theta_i.num_prompts != theta_j.num_prompts ||
      theta_i.responses_per_prompt != theta_j.responses_per_prompt ||
      theta_i.delta.size() != theta_j.delta.size()) {
    throw std::invalid_argument("shape mismatch");
  }
  GeometryReport report;
  std::vector<double> diff(theta_i.delta.size());
  for (size_t e = 0; e < diff.size(); ++e) {
    diff[e] = theta_i.delta[e] - theta_j.delta[e];
  }
  report.l2_distance = norm(diff);
  const double ni = norm(theta_i.delta);
  const double nj = norm(theta_j.delta);
  report.degenerate = (ni == 0.0 || nj == 0.0);
  report.cosine =
      report.degenerate ? 0.0 : dot(theta_i.delta, theta_j.delta) / (ni * nj);

  const size_t r = static_cast<size_t>(theta_i.responses_per_prompt);
  for (int b = 0; b < theta_i.num_prompts; ++b) {
    std::span<const double> row_i(theta_i.delta.data() + b * r, r);
    std::span<const double> row_j(theta_j.delta.data() + b * r, r);
    GeometryBlock block;
    block.block_id = b;
    double d2 = 0.0;
    for (size_t e = 0; e < r; ++e) {
      const double d = row_i[e] - row_j[e];
      d2 += d * d;
    }
    block.l2_distance = std::sqrt(d2);
    block.cosine = cosine_or_zero(row_i, row_j);
    report.per_block.push_back(block);
  }
  return report;
}

namespace {

void write_csv_double(std::ofstream& out, double v, char sep) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf << sep;
}

}  // namespace

void write_gap_scan_csv(const MergeGapReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "lambda,path_loss,chord_loss,gap,bound\n";
  for (size_t k = 0; k < report.lambdas.size(); ++k) {
    const double chord = report.path_losses[k] - report.gaps[k];
    write_csv_double(out, report.lambdas[k], ',');
    write_csv_double(out, report.path_losses[k], ',');
    write_csv_double(out, chord, ',');
    write_csv_double(out, report.gaps[k], ',');
    write_csv_double(out, report.bound_values[k], '\n');
  }
}

void write_geometry_csv(const GeometryReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "block_id,l2_distance,cosine\n";
  out << -1 << ',';
  write_csv_double(out, report.l2_distance, ',');
  write_csv_double(out, report.cosine, '\n');
  for (const GeometryBlock& b : report.per_block) {
    out << b.block_id << ',';
    write_csv_double(out, b.l2_distance, ',');
    write_csv_double(out, b.cosine, '\n');
  }
}

}  // namespace vcsoup

#include "vcsoup/pareto.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace vcsoup {

bool dominates(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("score length mismatch");
  }
  bool strict = false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

ParetoFrontier pareto_filter(std::span<const CandidateModel> candidates,
                             bool dedupe) {
  if (candidates.empty()) throw std::runtime_error("empty candidate set");
  ParetoFrontier frontier;
  for (size_t i = 0; i < candidates.size(); ++i) {
    bool keep = true;
    for (size_t j = 0; j < candidates.size() && keep; ++j) {
      if (j == i) continue;
      if (dominates(candidates[j].scores, candidates[i].scores)) keep = false;
    }
    if (keep && dedupe) {
      for (size_t j = 0; j < i && keep; ++j) {
        if (candidates[j].scores == candidates[i].scores) {
          // earlier duplicate kept, unless it was itself dominated
          bool j_kept = true;
          for (size_t k = 0; k < candidates.size() && j_kept; ++k) {
            if (k != j && dominates(candidates[k].scores, candidates[j].scores)) {
              j_kept = false;
            }
          }
          if (j_kept) keep = false;
        }
      }
    }
    if (keep) {
      frontier.members.push_back(candidates[i]);
      frontier.member_indices.push_back(i);
    }
  }
  frontier.dominated_count =
      static_cast<int64_t>(candidates.size() - frontier.members.size());
  return frontier;
}

namespace {

// Dominated area of a 2-D point set above ref; tolerates dominated points.
double hv2d(std::vector<std::pair<double, double>> points, double ref_x,
            double ref_y) {
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });
  double area = 0.0;
  double best_y = ref_y;
  for (const auto& [x, y] : points) {
    if (y > best_y) {
      area += (x - ref_x) * (y - best_y);
      best_y = y;
    }
  }
  return area;
}

}  // namespace

double hypervolume(const ParetoFrontier& frontier,
                   std::span<const double> reference_point) {
  const size_t n = reference_point.size();
  if (n != 2 && n != 3) throw std::runtime_error("unsupported dimension");
  std::vector<std::vector<double>> points;
  for (const CandidateModel& c : frontier.members) {
    if (c.scores.size() != n) {
      throw std::invalid_argument("score length mismatch");
    }
    bool above = true;
    for (size_t i = 0; i < n; ++i) above &= c.scores[i] >= reference_point[i];
    if (above) points.push_back(c.scores);
  }
  if (points.empty()) return 0.0;

  if (n == 2) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(points.size());
    for (const auto& p : points) pts.emplace_back(p[0], p[1]);
    return hv2d(std::move(pts), reference_point[0], reference_point[1]);
  }

  // n == 3: sweep distinct z-levels downward; each slab contributes the 2-D
  // area of the points at or above its top level.
  std::vector<double> zs;
  for (const auto& p : points) zs.push_back(p[2]);
  std::sort(zs.begin(), zs.end(), std::greater<>());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  double volume = 0.0;
  for (size_t k = 0; k < zs.size(); ++k) {
    const double top = zs[k];
    const double bottom = (k + 1 < zs.size()) ? zs[k + 1] : reference_point[2];
    if (top <= bottom) continue;
    std::vector<std::pair<double, double>> slab;
    for (const auto& p : points) {
      if (p[2] >= top) slab.emplace_back(p[0], p[1]);
    }
    volume += (top - bottom) *
              hv2d(std::move(slab), reference_point[0], reference_point[1]);
  }
  return volume;
}

std::vector<double> default_reference_point(
    std::span<const CandidateModel> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  std::vector<double> ref(candidates.front().scores.size(),
                          std::numeric_limits<double>::infinity());
  for (const CandidateModel& c : candidates) {
    if (c.scores.size() != ref.size()) {
      throw std::invalid_argument("score length mismatch");
    }
    for (size_t i = 0; i < ref.size(); ++i) {
      ref[i] = std::min(ref[i], c.scores[i]);
    }
  }
  for (double& v : ref) v -= 1e-6;
  return ref;
}

void write_frontier_csv(std::span<const CandidateModel> candidates,
                        const ParetoFrontier& frontier,
                        const std::string& path) {
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  std::vector<bool> is_member(candidates.size(), false);
  for (size_t idx : frontier.member_indices) is_member[idx] = true;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const size_t n_lambda = candidates.front().weights.lambdas.size();
  const size_t n_score = candidates.front().scores.size();
  for (size_t i = 0; i < n_lambda; ++i) out << "lambda_" << (i + 1) << ',';
  for (size_t i = 0; i < n_score; ++i) out << "score_" << (i + 1) << ',';
  out << "pareto\n";
  char buf[40];
  for (size_t i = 0; i < candidates.size(); ++i) {
    const CandidateModel& c = candidates[i];
    for (double l : c.weights.lambdas) {
      std::snprintf(buf, sizeof(buf), "%.17g", l);
      out << buf << ',';
    }
    for (double s : c.scores) {
      std::snprintf(buf, sizeof(buf), "%.17g", s);
      out << buf << ',';
    }
    out << (is_member[i] ? 1 : 0) << '\n';
  }
}

}  // namespace vcsoup

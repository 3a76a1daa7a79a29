#include "vcsoup/soup.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vcsoup {

void WeightVector::validate() const {
  if (lambdas.empty()) throw std::invalid_argument("invalid simplex weights");
  double sum = 0.0;
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument("invalid simplex weights");
    sum += l;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("invalid simplex weights");
  }
}

TabularPolicy merge(const TabularPolicy& ref,
                    std::span<const ValueVector> thetas,
                    const WeightVector& weights) {
  weights.validate();
  if (weights.lambdas.size() != thetas.size()) {
    throw std::invalid_argument("shape mismatch");
  }
  for (const ValueVector& theta : thetas) {
    if (theta.num_prompts != ref.num_prompts ||
        theta.responses_per_prompt != ref.responses_per_prompt) {
      throw std::invalid_argument("shape mismatch");
    }
  }
  TabularPolicy out = ref;
  for (size_t i = 0; i < thetas.size(); ++i) {
    const double lambda = weights.lambdas[i];
    if (lambda == 0.0) continue;
    const std::vector<double>& delta = thetas[i].delta;
    for (size_t e = 0; e < out.logits.size(); ++e) {
      out.logits[e] += lambda * delta[e];
    }
  }
  return out;
}

namespace {

void enumerate_compositions(int remaining, int slots, int m,
                            std::vector<int>& current,
                            std::vector<WeightVector>& out) {
  if (slots == 1) {
    current.push_back(remaining);
    WeightVector w;
    w.lambdas.reserve(current.size());
    for (int k : current) {
      w.lambdas.push_back(static_cast<double>(k) / static_cast<double>(m));
    }
    out.push_back(std::move(w));
    current.pop_back();
    return;
  }
  for (int k = 0; k <= remaining; ++k) {
    current.push_back(k);
    enumerate_compositions(remaining - k, slots - 1, m, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<WeightVector> simplex_grid(int n, double step) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(step > 0.0 && step <= 1.0)) {
    throw std::invalid_argument("step must lie in (0, 1]");
  }
  const double m_real = 1.0 / step;
  const int m = static_cast<int>(std::llround(m_real));
  if (m < 1 || std::abs(m_real - m) > 1e-9 * m) {
    throw std::invalid_argument("1/step is not an integer");
  }
  std::vector<WeightVector> grid;
  std::vector<int> current;
  enumerate_compositions(m, n, m, current, grid);
  return grid;
}

std::vector<CandidateModel> build_candidates(
    const TabularPolicy& ref, std::span<const ValueVector> thetas,
    std::span<const WeightVector> grid, std::span<const RewardModel> models,
    const Universe& validation) {
  if (grid.empty()) throw std::invalid_argument("empty weight grid");
  std::vector<CandidateModel> candidates;
  candidates.reserve(grid.size());
  for (const WeightVector& w : grid) {
    CandidateModel c;
    c.weights = w;
    c.policy = merge(ref, thetas, w);
    c.scores.reserve(models.size());
    for (const RewardModel& model : models) {
      c.scores.push_back(expected_reward(c.policy, model, validation));
    }
    candidates.push_back(std::move(c));
  }
  return candidates;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_candidates_csv(std::span<const CandidateModel> candidates,
                          const std::string& path) {
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const size_t n_lambda = candidates.front().weights.lambdas.size();
  const size_t n_score = candidates.front().scores.size();
  for (size_t i = 0; i < n_lambda; ++i) {
    out << "lambda_" << (i + 1) << ',';
  }
  for (size_t i = 0; i < n_score; ++i) {
    out << "score_" << (i + 1) << (i + 1 < n_score ? "," : "\n");
  }
  for (const CandidateModel& c : candidates) {
    for (double l : c.weights.lambdas) out << format_double(l) << ',';
    for (size_t i = 0; i < c.scores.size(); ++i) {
      out << format_double(c.scores[i]) << (i + 1 < c.scores.size() ? "," : "\n");
    }
  }
}

std::vector<CandidateModel> read_candidates_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("empty candidates CSV " + path);
  }
  size_t n_lambda = 0;
  size_t n_score = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("lambda_", 0) == 0) {
        ++n_lambda;
      } else if (col.rfind("score_", 0) == 0) {
        ++n_score;
      } else {
        throw std::runtime_error("unexpected column \"" + col + "\" in " + path);
      }
    }
  }
  std::vector<CandidateModel> candidates;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    CandidateModel c;
    for (size_t i = 0; i < n_lambda; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("truncated row in " + path);
      }
      c.weights.lambdas.push_back(std::stod(cell));
    }
    for (size_t i = 0; i < n_score; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("truncated row in " + path);
      }
      c.scores.push_back(std::stod(cell));
    }
    candidates.push_back(std::move(c));
  }
  return candidates;
}

}  // namespace vcsoup

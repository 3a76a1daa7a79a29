#include "vcsoup/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vcsoup {

using ordered_json = nlohmann::ordered_json;

std::span<const double> TabularPolicy::row(int prompt_id) const {
  if (prompt_id < 0 || prompt_id >= num_prompts) {
    throw std::invalid_argument("invalid prompt index " +
                                std::to_string(prompt_id));
  }
  return {logits.data() + static_cast<size_t>(prompt_id) * responses_per_prompt,
          static_cast<size_t>(responses_per_prompt)};
}

std::span<double> TabularPolicy::row(int prompt_id) {
  if (prompt_id < 0 || prompt_id >= num_prompts) {
    throw std::invalid_argument("invalid prompt index " +
                                std::to_string(prompt_id));
  }
  return {logits.data() + static_cast<size_t>(prompt_id) * responses_per_prompt,
          static_cast<size_t>(responses_per_prompt)};
}

namespace {

double logsumexp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

void softmax_into(std::span<const double> xs, std::vector<double>& probs) {
  probs.resize(xs.size());
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    probs[i] = std::exp(xs[i] - m);
    acc += probs[i];
  }
  for (double& p : probs) p /= acc;
}

}  // namespace

double TabularPolicy::log_prob(int prompt_id, int response_id) const {
  auto r = row(prompt_id);
  if (response_id < 0 || response_id >= responses_per_prompt) {
    throw std::invalid_argument("invalid response index " +
                                std::to_string(response_id));
  }
  return r[response_id] - logsumexp(r);
}

void TabularPolicy::check_shape(const TabularPolicy& other) const {
  if (num_prompts != other.num_prompts ||
      responses_per_prompt != other.responses_per_prompt) {
    throw std::invalid_argument("shape mismatch");
  }
}

TabularPolicy uniform_policy(const Universe& u,
                             const std::string& universe_ref) {
  TabularPolicy p;
  p.num_prompts = u.num_prompts;
  p.responses_per_prompt = u.responses_per_prompt;
  p.logits.assign(
      static_cast<size_t>(u.num_prompts) * u.responses_per_prompt, 0.0);
  p.universe_ref = universe_ref;
  return p;
}

TabularPolicy restrict_policy(const TabularPolicy& policy,
                              std::span<const int> prompt_ids) {
  if (prompt_ids.empty()) {
    throw std::invalid_argument("empty prompt restriction");
  }
  TabularPolicy out;
  out.num_prompts = static_cast<int>(prompt_ids.size());
  out.responses_per_prompt = policy.responses_per_prompt;
  out.universe_ref = policy.universe_ref;
  out.logits.reserve(prompt_ids.size() *
                     static_cast<size_t>(policy.responses_per_prompt));
  for (int id : prompt_ids) {
    auto r = policy.row(id);
    out.logits.insert(out.logits.end(), r.begin(), r.end());
  }
  return out;
}

ValueVector policy_delta(const TabularPolicy& policy,
                         const TabularPolicy& ref) {
  policy.check_shape(ref);
  ValueVector theta;
  theta.num_prompts = policy.num_prompts;
  theta.responses_per_prompt = policy.responses_per_prompt;
  theta.delta.resize(policy.logits.size());
  for (size_t i = 0; i < policy.logits.size(); ++i) {
    theta.delta[i] = policy.logits[i] - ref.logits[i];
  }
  return theta;
}

TabularPolicy apply_delta(const TabularPolicy& ref, const ValueVector& theta) {
  if (theta.num_prompts != ref.num_prompts ||
      theta.responses_per_prompt != ref.responses_per_prompt) {
    throw std::invalid_argument("shape mismatch");
  }
  TabularPolicy out = ref;
  for (size_t i = 0; i < out.logits.size(); ++i) {
    out.logits[i] += theta.delta[i];
  }
  return out;
}

namespace {

// Margin h of one pair. The per-row logsumexp cancels between chosen and
// rejected, so only four logits enter.
double pair_margin(const TabularPolicy& policy, const TabularPolicy& ref,
                   const PreferencePair& p) {
  auto row = policy.row(p.prompt_id);
  auto ref_row = ref.row(p.prompt_id);
  if (p.chosen_id < 0 || p.chosen_id >= policy.responses_per_prompt ||
      p.rejected_id < 0 || p.rejected_id >= policy.responses_per_prompt) {
    throw std::invalid_argument("pair response index out of range");
  }
  return (row[p.chosen_id] - row[p.rejected_id]) -
         (ref_row[p.chosen_id] - ref_row[p.rejected_id]);
}

}  // namespace

double dpo_loss(const TabularPolicy& policy, const TabularPolicy& ref,
                const PreferenceDataset& dataset, double beta) {
  policy.check_shape(ref);
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  double total = 0.0;
  for (const PreferencePair& p : dataset.pairs) {
    total += softplus_neg(beta * pair_margin(policy, ref, p));
  }
  return total / static_cast<double>(dataset.pairs.size());
}

std::vector<double> dpo_gradient(const TabularPolicy& policy,
                                 const TabularPolicy& ref,
                                 const PreferenceDataset& dataset,
                                 double beta) {
  policy.check_shape(ref);
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  std::vector<double> grad(policy.logits.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(dataset.pairs.size());
  for (const PreferencePair& p : dataset.pairs) {
    const double h = pair_margin(policy, ref, p);
    const double coeff = -beta * sigmoid(-beta * h) * inv_n;
    const size_t base =
        static_cast<size_t>(p.prompt_id) * policy.responses_per_prompt;
    grad[base + p.chosen_id] += coeff;
    grad[base + p.rejected_id] -= coeff;
  }
  return grad;
}

ValueVector train_dpo(const TabularPolicy& ref,
                      const PreferenceDataset& dataset,
                      const DPOTrainConfig& config,
                      std::vector<double>* loss_trajectory) {
  if (dataset.pairs.empty()) {
    throw std::runtime_error("cannot train on empty filtered subset");
  }
  if (!(config.beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");

  TabularPolicy policy = ref;
  const double initial = dpo_loss(policy, ref, dataset, config.beta);
  if (loss_trajectory) loss_trajectory->push_back(initial);
  double final_loss = initial;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> grad =
        dpo_gradient(policy, ref, dataset, config.beta);
    for (size_t i = 0; i < policy.logits.size(); ++i) {
      policy.logits[i] -= config.learning_rate * grad[i];
    }
    final_loss = dpo_loss(policy, ref, dataset, config.beta);
    if (loss_trajectory) loss_trajectory->push_back(final_loss);
  }
  if (final_loss > initial) {
    throw std::runtime_error("training diverged: final loss above initial");
  }
  return policy_delta(policy, ref);
}

double expected_reward(const TabularPolicy& policy, const RewardModel& model,
                       const Universe& u) {
  if (policy.num_prompts != u.num_prompts ||
      policy.responses_per_prompt != u.responses_per_prompt) {
    throw std::invalid_argument("shape mismatch");
  }
  std::vector<double> probs;
  double total = 0.0;
  for (int x = 0; x < u.num_prompts; ++x) {
    softmax_into(policy.row(x), probs);
    double row_value = 0.0;
    for (int y = 0; y < u.responses_per_prompt; ++y) {
      row_value += probs[y] * model.score(u, x, y);
    }
    total += u.prompt_weights[x] * row_value;
  }
  return total;
}

int sample_response(const TabularPolicy& policy, int prompt_id, Rng& rng) {
  std::vector<double> probs;
  softmax_into(policy.row(prompt_id), probs);
  const double ux = rng.uniform();
  double acc = 0.0;
  for (size_t y = 0; y + 1 < probs.size(); ++y) {
    acc += probs[y];
    if (ux < acc) return static_cast<int>(y);
  }
  return static_cast<int>(probs.size()) - 1;
}

int sample_response(const TabularPolicy& policy, int prompt_id, uint64_t seed) {
  Rng rng(seed);
  return sample_response(policy, prompt_id, rng);
}

namespace {

void write_table_json(std::span<const double> values, int num_prompts,
                      int responses_per_prompt, ordered_json& j) {
  j["shape"] = std::vector<int>{num_prompts, responses_per_prompt};
  j["values"] = std::vector<double>(values.begin(), values.end());
}

void read_table_json(const nlohmann::json& j, std::vector<double>& values,
                     int& num_prompts, int& responses_per_prompt) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) {
    throw std::runtime_error("invalid shape");
  }
  num_prompts = shape[0];
  responses_per_prompt = shape[1];
  values = j.at("values").get<std::vector<double>>();
  if (values.size() !=
      static_cast<size_t>(num_prompts) * responses_per_prompt) {
    throw std::runtime_error("values length does not match shape");
  }
}

}  // namespace

TabularPolicy read_policy_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  TabularPolicy p;
  read_table_json(j, p.logits, p.num_prompts, p.responses_per_prompt);
  p.universe_ref = j.value("universe_ref", "");
  return p;
}

void write_policy_json(const TabularPolicy& policy, const std::string& path) {
  ordered_json j;
  write_table_json(policy.logits, policy.num_prompts,
                   policy.responses_per_prompt, j);
  if (!policy.universe_ref.empty()) j["universe_ref"] = policy.universe_ref;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

ValueVector read_value_vector_json(const std::string& path,
                                   ValueVectorMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  ValueVector theta;
  read_table_json(j, theta.delta, theta.num_prompts,
                  theta.responses_per_prompt);
  if (meta) {
    meta->value_name = j.value("value_name", "");
    meta->tau = j.value("tau", 0.0);
    if (j.contains("train_config")) {
      const auto& tc = j.at("train_config");
      meta->train_config.beta = tc.value("beta", 0.1);
      meta->train_config.learning_rate = tc.value("learning_rate", 0.05);
      meta->train_config.epochs = tc.value("epochs", 300);
      meta->train_config.seed = tc.value("seed", uint64_t{0});
    }
  }
  return theta;
}

void write_value_vector_json(const ValueVector& theta,
                             const ValueVectorMeta& meta,
                             const std::string& path) {
  ordered_json j;
  write_table_json(theta.delta, theta.num_prompts, theta.responses_per_prompt,
                   j);
  j["value_name"] = meta.value_name;
  j["tau"] = meta.tau;
  j["train_config"] = {{"beta", meta.train_config.beta},
                       {"learning_rate", meta.train_config.learning_rate},
                       {"epochs", meta.train_config.epochs},
                       {"seed", meta.train_config.seed}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

}  // namespace vcsoup

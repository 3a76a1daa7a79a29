#include "vcsoup/reward.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vcsoup {

using ordered_json = nlohmann::ordered_json;

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_neg(double x) {
  // log(1 + exp(-x)) without overflow for large |x|
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double RewardModel::score(const Universe& u, int prompt_id,
                          int response_id) const {
  auto f = u.response_feature(prompt_id, response_id);
  if (weight.size() != f.size()) {
    throw std::invalid_argument("reward weight dimension mismatch");
  }
  double s = bias;
  for (size_t k = 0; k < f.size(); ++k) s += weight[k] * f[k];
  return s;
}

double bt_loss(const RewardModel& model, const PreferenceDataset& dataset,
               const Universe& u, double l2) {
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  double total = 0.0;
  for (const PreferencePair& p : dataset.pairs) {
    const double margin = model.score(u, p.prompt_id, p.chosen_id) -
                          model.score(u, p.prompt_id, p.rejected_id);
    total += softplus_neg(margin);
  }
  double reg = 0.0;
  for (double w : model.weight) reg += w * w;
  return total / static_cast<double>(dataset.pairs.size()) + l2 * reg;
}

std::vector<double> bt_loss_gradient(const RewardModel& model,
                                     const PreferenceDataset& dataset,
                                     const Universe& u, double l2) {
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  std::vector<double> grad(model.weight.size(), 0.0);
  for (const PreferencePair& p : dataset.pairs) {
    auto fw = u.response_feature(p.prompt_id, p.chosen_id);
    auto fl = u.response_feature(p.prompt_id, p.rejected_id);
    double margin = 0.0;
    for (size_t k = 0; k < grad.size(); ++k) {
      margin += model.weight[k] * (fw[k] - fl[k]);
    }
    const double coeff = -sigmoid(-margin);
    for (size_t k = 0; k < grad.size(); ++k) {
      grad[k] += coeff * (fw[k] - fl[k]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.pairs.size());
  for (size_t k = 0; k < grad.size(); ++k) {
    grad[k] = grad[k] * inv_n + 2.0 * l2 * model.weight[k];
  }
  return grad;
}

RewardModel train_bradley_terry(const PreferenceDataset& dataset,
                                const Universe& u, const BTTrainConfig& config,
                                std::vector<double>* loss_trajectory) {
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.l2 < 0.0) throw std::invalid_argument("l2 must be >= 0");
  dataset.validate_against(u);

  RewardModel model;
  model.kind = RewardKind::trained_bt;
  model.weight.assign(static_cast<size_t>(u.feature_dim), 0.0);
  model.bias = 0.0;

  if (loss_trajectory) {
    loss_trajectory->push_back(bt_loss(model, dataset, u, config.l2));
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> grad =
        bt_loss_gradient(model, dataset, u, config.l2);
    for (size_t k = 0; k < model.weight.size(); ++k) {
      model.weight[k] -= config.learning_rate * grad[k];
    }
    if (loss_trajectory) {
      loss_trajectory->push_back(bt_loss(model, dataset, u, config.l2));
    }
  }
  return model;
}

RewardStats compute_stats(const RewardModel& model,
                          const PreferenceDataset& dataset, const Universe& u) {
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  std::vector<double> scores;
  scores.reserve(dataset.pairs.size() * 2);
  for (const PreferencePair& p : dataset.pairs) {
    scores.push_back(model.score(u, p.prompt_id, p.chosen_id));
    scores.push_back(model.score(u, p.prompt_id, p.rejected_id));
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return RewardStats{mean, std::sqrt(var),
                     static_cast<int64_t>(scores.size())};
}

double pairwise_accuracy(const RewardModel& model,
                         const PreferenceDataset& dataset, const Universe& u) {
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  double correct = 0.0;
  for (const PreferencePair& p : dataset.pairs) {
    const double sw = model.score(u, p.prompt_id, p.chosen_id);
    const double sl = model.score(u, p.prompt_id, p.rejected_id);
    if (sw > sl) {
      correct += 1.0;
    } else if (sw == sl) {
      correct += 0.5;
    }
  }
  return correct / static_cast<double>(dataset.pairs.size());
}

namespace {

std::string kind_to_string(RewardKind kind) {
  return kind == RewardKind::linear_analytic ? "linear-analytic" : "trained-bt";
}

RewardKind kind_from_string(const std::string& s) {
  if (s == "linear-analytic") return RewardKind::linear_analytic;
  if (s == "trained-bt") return RewardKind::trained_bt;
  throw std::runtime_error("unknown reward kind \"" + s + "\"");
}

}  // namespace

RewardModel read_reward_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed reward JSON in " + path + ": " +
                             e.what());
  }
  RewardModel m;
  m.kind = kind_from_string(j.at("kind").get<std::string>());
  m.weight = j.at("weight").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  return m;
}

void write_reward_json(const RewardModel& model, const std::string& path) {
  ordered_json j;
  j["kind"] = kind_to_string(model.kind);
  j["weight"] = model.weight;
  j["bias"] = model.bias;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

RewardStats read_stats_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return RewardStats{j.at("mean").get<double>(), j.at("stddev").get<double>(),
                     j.at("count").get<int64_t>()};
}

void write_stats_json(const RewardStats& stats, const std::string& path) {
  ordered_json j;
  j["mean"] = stats.mean;
  j["stddev"] = stats.stddev;
  j["count"] = stats.count;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

}  // namespace vcsoup

#include "vcsoup/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vcsoup/rng.hpp"

namespace vcsoup {

using ordered_json = nlohmann::ordered_json;

std::span<const double> Universe::prompt_feature(int prompt_id) const {
  check_prompt(prompt_id);
  return {prompt_features.data() +
              static_cast<size_t>(prompt_id) * feature_dim,
          static_cast<size_t>(feature_dim)};
}

std::span<const double> Universe::response_feature(int prompt_id,
                                                   int response_id) const {
  check_response(prompt_id, response_id);
  const size_t offset =
      (static_cast<size_t>(prompt_id) * responses_per_prompt + response_id) *
      feature_dim;
  return {response_features.data() + offset, static_cast<size_t>(feature_dim)};
}

void Universe::check_prompt(int prompt_id) const {
  if (prompt_id < 0 || prompt_id >= num_prompts) {
    throw std::invalid_argument("invalid prompt index " +
                                std::to_string(prompt_id));
  }
}

void Universe::check_response(int prompt_id, int response_id) const {
  check_prompt(prompt_id);
  if (response_id < 0 || response_id >= responses_per_prompt) {
    throw std::invalid_argument("invalid response index " +
                                std::to_string(response_id));
  }
}

void Universe::validate() const {
  if (num_prompts < 1 || responses_per_prompt < 1 || feature_dim < 1) {
    throw std::runtime_error("universe counts must be positive");
  }
  const size_t p = static_cast<size_t>(num_prompts);
  const size_t r = static_cast<size_t>(responses_per_prompt);
  const size_t f = static_cast<size_t>(feature_dim);
  if (prompt_features.size() != p * f ||
      response_features.size() != p * r * f || prompt_weights.size() != p) {
    throw std::runtime_error("universe shape mismatch");
  }
  for (double v : prompt_features) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite prompt feature");
  }
  for (double v : response_features) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite response feature");
  }
  double sum = 0.0;
  for (double w : prompt_weights) {
    if (!(w >= 0.0)) throw std::runtime_error("negative prompt weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::runtime_error("prompt weights do not sum to 1");
  }
}

void PreferenceDataset::validate_against(const Universe& u) const {
  for (size_t i = 0; i < pairs.size(); ++i) {
    const PreferencePair& p = pairs[i];
    u.check_response(p.prompt_id, p.chosen_id);
    u.check_response(p.prompt_id, p.rejected_id);
    if (p.chosen_id == p.rejected_id) {
      throw std::runtime_error("chosen equals rejected in pair " +
                               std::to_string(i));
    }
  }
}

Universe generate_universe(int num_prompts, int responses_per_prompt,
                           int feature_dim, uint64_t seed) {
  if (num_prompts < 1 || responses_per_prompt < 1 || feature_dim < 1) {
    throw std::invalid_argument("universe counts must be positive");
  }
  Universe u;
  u.num_prompts = num_prompts;
  u.responses_per_prompt = responses_per_prompt;
  u.feature_dim = feature_dim;

  Rng rng(seed);
  u.prompt_features.resize(static_cast<size_t>(num_prompts) * feature_dim);
  for (double& v : u.prompt_features) v = rng.normal();
  u.response_features.resize(static_cast<size_t>(num_prompts) *
                             responses_per_prompt * feature_dim);
  for (double& v : u.response_features) v = rng.normal();
  u.prompt_weights.assign(static_cast<size_t>(num_prompts),
                          1.0 / num_prompts);
  return u;
}

Universe restrict_universe(const Universe& u, std::span<const int> prompt_ids) {
  if (prompt_ids.empty()) {
    throw std::invalid_argument("empty prompt restriction");
  }
  Universe out;
  out.num_prompts = static_cast<int>(prompt_ids.size());
  out.responses_per_prompt = u.responses_per_prompt;
  out.feature_dim = u.feature_dim;
  double weight_sum = 0.0;
  for (int id : prompt_ids) {
    u.check_prompt(id);
    weight_sum += u.prompt_weights[id];
  }
  if (weight_sum <= 0.0) {
    throw std::runtime_error("restricted prompt weights sum to zero");
  }
  const size_t f = static_cast<size_t>(u.feature_dim);
  const size_t row = static_cast<size_t>(u.responses_per_prompt) * f;
  for (int id : prompt_ids) {
    const size_t pid = static_cast<size_t>(id);
    out.prompt_features.insert(out.prompt_features.end(),
                               u.prompt_features.begin() + pid * f,
                               u.prompt_features.begin() + (pid + 1) * f);
    out.response_features.insert(out.response_features.end(),
                                 u.response_features.begin() + pid * row,
                                 u.response_features.begin() + (pid + 1) * row);
    out.prompt_weights.push_back(u.prompt_weights[id] / weight_sum);
  }
  return out;
}

Universe read_universe_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed universe JSON in " + path + ": " +
                             e.what());
  }
  static const char* kKeys[] = {"num_prompts",      "responses_per_prompt",
                                "feature_dim",      "prompt_features",
                                "response_features", "prompt_weights"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known |= (it.key() == k);
    if (!known) {
      throw std::runtime_error("unknown field \"" + it.key() +
                               "\" in universe JSON");
    }
  }
  Universe u;
  try {
    u.num_prompts = j.at("num_prompts").get<int>();
    u.responses_per_prompt = j.at("responses_per_prompt").get<int>();
    u.feature_dim = j.at("feature_dim").get<int>();
    for (const auto& row : j.at("prompt_features")) {
      for (const auto& v : row) u.prompt_features.push_back(v.get<double>());
    }
    for (const auto& prompt : j.at("response_features")) {
      for (const auto& row : prompt) {
        for (const auto& v : row) u.response_features.push_back(v.get<double>());
      }
    }
    for (const auto& v : j.at("prompt_weights")) {
      u.prompt_weights.push_back(v.get<double>());
    }
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error("invalid universe JSON in " + path + ": " +
                             e.what());
  }
  u.validate();
  return u;
}

void write_universe_json(const Universe& u, const std::string& path) {
  u.validate();
  ordered_json j;
  j["num_prompts"] = u.num_prompts;
  j["responses_per_prompt"] = u.responses_per_prompt;
  j["feature_dim"] = u.feature_dim;
  ordered_json pf = ordered_json::array();
  for (int x = 0; x < u.num_prompts; ++x) {
    auto row = u.prompt_feature(x);
    pf.push_back(ordered_json(std::vector<double>(row.begin(), row.end())));
  }
  j["prompt_features"] = std::move(pf);
  ordered_json rf = ordered_json::array();
  for (int x = 0; x < u.num_prompts; ++x) {
    ordered_json prompt = ordered_json::array();
    for (int y = 0; y < u.responses_per_prompt; ++y) {
      auto row = u.response_feature(x, y);
      prompt.push_back(ordered_json(std::vector<double>(row.begin(), row.end())));
    }
    rf.push_back(std::move(prompt));
  }
  j["response_features"] = std::move(rf);
  j["prompt_weights"] = u.prompt_weights;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

namespace {

int require_int_field(const nlohmann::json& obj, const char* key, size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw std::runtime_error("missing field \"" + std::string(key) +
                             "\" at line " + std::to_string(line));
  }
  if (!it->is_number_integer()) {
    throw std::runtime_error("field \"" + std::string(key) +
                             "\" is not an integer at line " +
                             std::to_string(line));
  }
  return it->get<int>();
}

}  // namespace

PreferenceDataset read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PreferenceDataset d;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      // allow a trailing blank line only
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw std::runtime_error("malformed line " + std::to_string(line_no));
    }
    nlohmann::json obj =
        nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw std::runtime_error("malformed line " + std::to_string(line_no));
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it.key() != "prompt_id" && it.key() != "chosen_id" &&
          it.key() != "rejected_id") {
        throw std::runtime_error("unknown field \"" + it.key() +
                                 "\" at line " + std::to_string(line_no));
      }
    }
    PreferencePair p;
    p.prompt_id = require_int_field(obj, "prompt_id", line_no);
    p.chosen_id = require_int_field(obj, "chosen_id", line_no);
    p.rejected_id = require_int_field(obj, "rejected_id", line_no);
    if (p.prompt_id < 0 || p.chosen_id < 0 || p.rejected_id < 0) {
      throw std::runtime_error("negative index at line " +
                               std::to_string(line_no));
    }
    if (p.chosen_id == p.rejected_id) {
      throw std::runtime_error("chosen equals rejected at line " +
                               std::to_string(line_no));
    }
    d.pairs.push_back(p);
  }

  std::ifstream meta(path + ".meta.json");
  if (meta) {
    nlohmann::json m;
    try {
      meta >> m;
      d.value_name = m.value("value_name", "");
      d.universe_ref = m.value("universe", "");
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed sidecar " + path + ".meta.json: " +
                               e.what());
    }
  }
  return d;
}

void write_pairs_jsonl(const PreferenceDataset& dataset,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const PreferencePair& p : dataset.pairs) {
    out << "{\"prompt_id\":" << p.prompt_id << ",\"chosen_id\":" << p.chosen_id
        << ",\"rejected_id\":" << p.rejected_id << "}\n";
  }
  out.close();
  if (!dataset.value_name.empty() || !dataset.universe_ref.empty()) {
    ordered_json m;
    m["value_name"] = dataset.value_name;
    m["universe"] = dataset.universe_ref;
    std::ofstream meta(path + ".meta.json");
    if (!meta) throw std::runtime_error("cannot write " + path + ".meta.json");
    meta << m.dump() << '\n';
  }
}

}  // namespace vcsoup

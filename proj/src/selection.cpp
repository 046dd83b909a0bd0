#include "basen/selection.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <stdexcept>

namespace basen {

int count_duplicates(const std::vector<int>& indices) {
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return static_cast<int>(indices.size() - sorted.size());
}

std::string channel_subset_to_json(const ChannelSubset& subset) {
  nlohmann::ordered_json j;
  j["method"] = subset.method;
  j["gamma_or_K"] = subset.gamma_or_k;
  j["indices"] = subset.indices;
  j["duplicate_count"] = subset.duplicate_count;
  j["mean_probabilities"] = subset.mean_probabilities;
  return j.dump(2) + "\n";
}

ChannelSubset channel_subset_from_json(const std::string& text) {
  ChannelSubset s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("channel_subset_from_json: ") + e.what());
  }
  s.method = j.at("method").get<std::string>();
  s.gamma_or_k = j.at("gamma_or_K").get<double>();
  s.indices = j.at("indices").get<std::vector<int>>();
  s.duplicate_count = j.at("duplicate_count").get<int>();
  s.mean_probabilities = j.at("mean_probabilities").get<std::vector<double>>();
  return s;
}

ChannelSubset aggregate_selection(const std::vector<Eigen::VectorXd>& selection_vectors,
                                  double threshold) {
  if (selection_vectors.empty())
    throw std::invalid_argument("aggregate_selection: empty selection list");
  const Eigen::Index q = selection_vectors.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
  for (const auto& s : selection_vectors) {
    if (s.size() != q)
      throw std::invalid_argument("aggregate_selection: inconsistent vector lengths");
    mean += s;
  }
  mean /= static_cast<double>(selection_vectors.size());

  ChannelSubset subset;
  subset.method = "convrs";
  subset.mean_probabilities.assign(mean.data(), mean.data() + q);
  for (Eigen::Index c = 0; c < q; ++c)
    if (mean[c] >= threshold) subset.indices.push_back(static_cast<int>(c));
  subset.duplicate_count = 0;
  return subset;
}

}  // namespace basen

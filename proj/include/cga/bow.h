#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cga/corpus.h"
#include "cga/forecaster.h"

namespace cga {

// Sparse token counts, sorted by feature index. The bias feature is implicit.
using SparseFeatures = std::vector<std::pair<std::size_t, double>>;

struct BowExample {
  SparseFeatures features;
  double target = 0.0;  // in [0, 1]
};

struct BowHyper {
  std::uint64_t seed = 1;
  int epochs = 10;
  double learning_rate = 0.01;
  int max_halvings = 30;
};

struct BowTrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  double final_learning_rate = 0.0;
  std::vector<double> loss_curve;  // entry 0 is the loss at zero weights

  friend bool operator==(const BowTrainingMeta&, const BowTrainingMeta&) = default;
};

// Logistic regression over bag-of-words counts. weights.size() is
// vocabulary size + 1; the last weight is the bias.
struct BowModel {
  std::vector<std::string> vocabulary;  // index order
  std::map<std::string, std::size_t, std::less<>> index;
  std::vector<double> weights;
  BowTrainingMeta meta;

  std::size_t dimension() const { return weights.size(); }
  SparseFeatures featurize(std::span<const Utterance> utterances) const;
  double predict(const SparseFeatures& features) const;

  friend bool operator==(const BowModel& a, const BowModel& b) {
    return a.vocabulary == b.vocabulary && a.weights == b.weights && a.meta == b.meta;
  }
};

double sigmoid(double z);

// w . x including the bias. Throws ValidationError on an out-of-range index.
double logit(std::span<const double> weights, const SparseFeatures& features);

// Cross-entropy of one example: softplus(z) - y z.
double cross_entropy(std::span<const double> weights, const BowExample& example);
double mean_cross_entropy(std::span<const double> weights, std::span<const BowExample> examples);

// (sigmoid(w . x) - y) x, bias included, as a dense vector.
std::vector<double> bow_gradient(std::span<const double> weights, const BowExample& example);
std::vector<double> bow_gradient(const BowModel& model, const BowExample& example);

// Trains on one final snapshot per conversation (utterances 1..N_c-1,
// target = label) with per-example gradient steps in an order shuffled once
// by seed. An epoch that would raise the mean loss is redone at half the step
// size, so the recorded loss curve never increases.
BowModel fit_bow(std::span<const Conversation* const> train, const BowHyper& hyper);

Json to_json(const BowModel& model);
BowModel bow_from_json(const Json& j);
void save_bow(const BowModel& model, const std::filesystem::path& path);
BowModel load_bow(const std::filesystem::path& path);

class BowForecaster final : public Forecaster {
 public:
  explicit BowForecaster(std::shared_ptr<const BowModel> model);
  double score(const PrefixView& prefix) const override;
  ForecasterDescriptor descriptor() const override { return {"bow", ContextMode::kFull}; }
  const BowModel& model() const { return *model_; }

 private:
  std::shared_ptr<const BowModel> model_;
};

}  // namespace cga

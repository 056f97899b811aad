#include "cga/bow.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "cga/error.h"
#include "cga/random.h"
#include "cga/tokenize.h"

namespace cga {

namespace {

constexpr const char* kFormat = "cga-bow";
constexpr int kFormatVersion = 1;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

std::string exact_decimal(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_decimal(const Json& j) {
  if (!j.is_string()) throw ValidationError("model weights must be decimal strings");
  const std::string s = j.get<std::string>();
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(x)) {
    throw ValidationError("bad decimal \"" + s + "\" in model file");
  }
  return x;
}

SparseFeatures count_tokens(std::span<const Utterance> utterances,
                            const std::map<std::string, std::size_t, std::less<>>& index) {
  std::map<std::size_t, double> counts;
  for (const Utterance& u : utterances) {
    for (const std::string& token : tokenize(u.text)) {
      auto it = index.find(token);
      if (it != index.end()) counts[it->second] += 1.0;
    }
  }
  return SparseFeatures(counts.begin(), counts.end());
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(std::span<const double> weights, const SparseFeatures& features) {
  if (weights.empty()) throw ValidationError("empty weight vector");
  const std::size_t bias = weights.size() - 1;
  double z = weights[bias];
  for (const auto& [idx, value] : features) {
    if (idx >= bias) {
      throw ValidationError("feature index " + std::to_string(idx) + " outside vocabulary of size " +
                            std::to_string(bias));
    }
    z += weights[idx] * value;
  }
  return z;
}

double cross_entropy(std::span<const double> weights, const BowExample& example) {
  const double z = logit(weights, example.features);
  return softplus(z) - example.target * z;
}

double mean_cross_entropy(std::span<const double> weights, std::span<const BowExample> examples) {
  double total = 0.0;
  for (const BowExample& ex : examples) total += cross_entropy(weights, ex);
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

std::vector<double> bow_gradient(std::span<const double> weights, const BowExample& example) {
  const double residual = sigmoid(logit(weights, example.features)) - example.target;
  std::vector<double> grad(weights.size(), 0.0);
  for (const auto& [idx, value] : example.features) grad[idx] += residual * value;
  grad.back() = residual;
  return grad;
}

std::vector<double> bow_gradient(const BowModel& model, const BowExample& example) {
  return bow_gradient(model.weights, example);
}

SparseFeatures BowModel::featurize(std::span<const Utterance> utterances) const {
  return count_tokens(utterances, index);
}

double BowModel::predict(const SparseFeatures& features) const { return sigmoid(logit(weights, features)); }

BowModel fit_bow(std::span<const Conversation* const> train, const BowHyper& hyper) {
  if (train.empty()) throw ValidationError("BoW training set is empty");
  if (hyper.epochs < 0 || !(hyper.learning_rate > 0.0)) throw ValidationError("invalid BoW hyperparameters");
  bool has_pos = false;
  bool has_neg = false;
  for (const Conversation* c : train) (c->derails() ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw ValidationError("BoW training set contains a single class");

  // Final snapshot: everything but the label-bearing utterance.
  std::set<std::string> tokens;
  for (const Conversation* c : train) {
    for (const Utterance& u : prefix(*c, c->forecastable()).utterances()) {
      for (std::string& t : tokenize(u.text)) tokens.insert(std::move(t));
    }
  }
  if (tokens.empty()) throw ValidationError("BoW vocabulary is empty");

  BowModel model;
  model.vocabulary.assign(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i) model.index.emplace(model.vocabulary[i], i);
  model.weights.assign(model.vocabulary.size() + 1, 0.0);

  std::vector<BowExample> examples;
  examples.reserve(train.size());
  for (const Conversation* c : train) {
    examples.push_back({model.featurize(prefix(*c, c->forecastable()).utterances()), c->derails() ? 1.0 : 0.0});
  }

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(hyper.seed);
  rng.shuffle(order);

  double rate = hyper.learning_rate;
  model.meta.loss_curve.push_back(mean_cross_entropy(model.weights, examples));
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<double> candidate;
    double loss = 0.0;
    for (int halvings = 0;; ++halvings) {
      candidate = model.weights;
      for (std::size_t i : order) {
        const BowExample& ex = examples[i];
        const double residual = sigmoid(logit(candidate, ex.features)) - ex.target;
        for (const auto& [idx, value] : ex.features) candidate[idx] -= rate * residual * value;
        candidate.back() -= rate * residual;
      }
      loss = mean_cross_entropy(candidate, examples);
      if (std::isfinite(loss) && loss <= model.meta.loss_curve.back()) break;
      if (halvings == hyper.max_halvings) {
        candidate = model.weights;
        loss = model.meta.loss_curve.back();
        break;
      }
      rate /= 2.0;
    }
    model.weights = std::move(candidate);
    model.meta.loss_curve.push_back(loss);
  }
  model.meta.seed = hyper.seed;
  model.meta.epochs = hyper.epochs;
  model.meta.learning_rate = hyper.learning_rate;
  model.meta.final_learning_rate = rate;
  return model;
}

Json to_json(const BowModel& model) {
  Json j = Json::object();
  j["format"] = kFormat;
  j["version"] = kFormatVersion;
  j["vocabulary"] = model.vocabulary;
  Json weights = Json::array();
  for (double w : model.weights) weights.push_back(exact_decimal(w));
  j["weights"] = std::move(weights);
  Json meta = Json::object();
  meta["seed"] = model.meta.seed;
  meta["epochs"] = model.meta.epochs;
  meta["learning_rate"] = exact_decimal(model.meta.learning_rate);
  meta["final_learning_rate"] = exact_decimal(model.meta.final_learning_rate);
  Json curve = Json::array();
  for (double l : model.meta.loss_curve) curve.push_back(exact_decimal(l));
  meta["loss_curve"] = std::move(curve);
  j["training_meta"] = std::move(meta);
  return j;
}

BowModel bow_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kFormat) throw ValidationError("not a BoW model file");
  if (j.value("version", 0) != kFormatVersion) throw ValidationError("unsupported BoW model version");
  BowModel model;
  try {
    model.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    for (const Json& w : j.at("weights")) model.weights.push_back(parse_decimal(w));
    const Json& meta = j.at("training_meta");
    model.meta.seed = meta.at("seed").get<std::uint64_t>();
    model.meta.epochs = meta.at("epochs").get<int>();
    model.meta.learning_rate = parse_decimal(meta.at("learning_rate"));
    model.meta.final_learning_rate = parse_decimal(meta.at("final_learning_rate"));
    for (const Json& l : meta.at("loss_curve")) model.meta.loss_curve.push_back(parse_decimal(l));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed BoW model: ") + e.what());
  }
  if (model.weights.size() != model.vocabulary.size() + 1) {
    throw ValidationError("BoW model has " + std::to_string(model.weights.size()) + " weights for a vocabulary of " +
                          std::to_string(model.vocabulary.size()));
  }
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i) {
    if (!model.index.emplace(model.vocabulary[i], i).second) {
      throw ValidationError("duplicate vocabulary entry \"" + model.vocabulary[i] + "\"");
    }
  }
  return model;
}

void save_bow(const BowModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path.string());
  out << to_json(model).dump(2) << '\n';
}

BowModel load_bow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  try {
    return bow_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

BowForecaster::BowForecaster(std::shared_ptr<const BowModel> model) : model_(std::move(model)) {
  if (!model_ || model_->weights.empty()) throw Error("BowForecaster needs a trained model");
}

double BowForecaster::score(const PrefixView& prefix) const {
  return model_->predict(model_->featurize(prefix.utterances()));
}

}  // namespace cga

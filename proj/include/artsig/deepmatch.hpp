#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artsig/corpus.hpp"
#include "artsig/mlp.hpp"
#include "artsig/rng.hpp"

namespace artsig {

// Column a of w2 together with b2[a] is the neural signature of artist a.
using Classifier = BasicClassifier<float>;

struct TrainConfig {
  std::size_t hidden_dim = 512;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
Classifier init_classifier(std::size_t d, std::size_t h, std::size_t a, std::uint64_t seed);

struct ForwardResult {
  std::vector<float> logits;
  std::vector<float> probabilities;
};

ForwardResult forward(const Classifier& c, std::span<const float> x);

// Probability that one weighted draw picks example i: 1 / (A * n_label(i)),
// where A counts the classes with at least one example.
std::vector<double> sampling_probabilities(std::span<const std::size_t> labels, std::size_t classes);

// count draws with replacement from sampling_probabilities: a class chosen
// uniformly among the present ones, then an example uniformly within it.
std::vector<std::size_t> weighted_sample(std::span<const std::size_t> labels, std::size_t classes,
                                         std::size_t count, CounterRng& rng);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_batch_loss = 0.0;
};

// Mini-batch momentum SGD on softmax cross-entropy. Each epoch draws
// inputs.rows() examples by inverse-class-frequency sampling. Gradients are
// reduced over fixed-size chunks in a fixed order, so parameters do not depend
// on the worker count.
Classifier train(Classifier c, const EmbeddingStore& inputs, std::span<const std::size_t> labels,
                 const TrainConfig& cfg, std::vector<EpochLog>* log = nullptr);

// Trains on the corpus train split with labels = artist ids. Throws
// ValidationError when an artist has no training image.
Classifier train(Classifier c, const Corpus& corpus, const TrainConfig& cfg, std::vector<EpochLog>* log = nullptr);

double mean_loss(const Classifier& c, const EmbeddingStore& inputs, std::span<const std::size_t> labels);

// Index of the largest logit; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const float> logits);

std::size_t predict_image(const Classifier& c, std::span<const float> x);

std::vector<std::size_t> predict_all(const Classifier& c, const EmbeddingStore& images);

inline constexpr double kMajorityThreshold = 0.5;

struct MatchDecision {
  std::optional<std::size_t> predicted;  // absent = abstain
  std::size_t modal = 0;                 // most frequent prediction (ties: lowest id)
  double confidence = 0.0;               // fraction of images predicted to modal
  std::vector<std::size_t> predictions;  // per image, input order

  // Fraction of the images predicted to the given class.
  double fraction_for(std::size_t cls) const;
};

MatchDecision decide(std::vector<std::size_t> predictions, double threshold = kMajorityThreshold);

// Majority vote over per-image predictions with abstention below threshold.
MatchDecision deep_match(const Classifier& c, const EmbeddingStore& test_set, double threshold = kMajorityThreshold);

// Checkpoint: "ARTK" magic, u32 version, u64 header length, JSON header
// (dims, config, seed, extra), then W1, b1, W2, b2 as ARTS matrix sections.
void save_classifier(const Classifier& c, const TrainConfig& cfg, const std::filesystem::path& path,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());

struct LoadedClassifier {
  Classifier classifier;
  TrainConfig config;
  nlohmann::json header;
};

LoadedClassifier load_classifier(const std::filesystem::path& path);

}  // namespace artsig

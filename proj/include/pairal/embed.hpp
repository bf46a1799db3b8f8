#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string_view>
#include <vector>

namespace pairal {

using Vector = std::vector<double>;

struct TokenizerConfig {
  bool lowercase = true;
  std::uint32_t buckets = 1u << 16;
  std::uint64_t seed = 0x7a3f1e2d5c4b6a98ULL;
  // Stand-in for a word-piece length limit.
  std::size_t max_tokens = 256;
};

// Whitespace tokenizer with feature hashing into a fixed number of buckets.
class Tokenizer {
 public:
  explicit Tokenizer(TokenizerConfig config = {});

  std::vector<std::uint32_t> tokenize(std::string_view text) const;
  const TokenizerConfig& config() const { return config_; }

 private:
  TokenizerConfig config_;
};

// Distinct buckets of a text with their mean-pooling weights (count / length).
struct TokenBag {
  std::vector<std::uint32_t> buckets;
  std::vector<double> weights;
};

TokenBag make_bag(std::span<const std::uint32_t> tokens);

struct ModelConfig {
  std::size_t dim = 64;
  TokenizerConfig tokenizer;
  std::uint64_t init_seed = 0;
  double init_scale = 0.1;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

// Hashed bag-of-tokens embedder with a batch-normalized cosine logistic head:
//   p(y=1 | x1, x2) = sigmoid(w * bn(cos(e(x1), e(x2))) + b),  w >= 0.
class EmbeddingModel {
 public:
  // Table rows are drawn from N(0, init_scale^2) by a per-row seeded stream,
  // so the untrained model is a deterministic function of the config.
  static EmbeddingModel initialize(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  std::size_t dim() const { return config_.dim; }
  std::size_t buckets() const { return config_.tokenizer.buckets; }

  std::span<const double> row(std::uint32_t bucket) const;
  std::span<double> mutable_row(std::uint32_t bucket);
  // The row as produced by initialize().
  Vector initial_row(std::uint32_t bucket) const;

  // Throws EMPTY_TEXT when the text has no tokens.
  TokenBag bag(std::string_view text) const;
  Vector embed(const TokenBag& bag) const;
  Vector embed(std::string_view text) const { return embed(bag(text)); }

  double weight() const { return weight_; }
  double bias() const { return bias_; }
  double bn_mean() const { return bn_mean_; }
  double bn_var() const { return bn_var_; }
  void set_head(double weight, double bias);
  void set_bn_stats(double mean, double var);

  // Inference-mode probability (running batch-norm statistics).
  double probability_from_cosine(double cosine) const;
  double predict_prob(std::span<const double> u, std::span<const double> v) const;

 private:
  EmbeddingModel(const ModelConfig& config);

  ModelConfig config_;
  Tokenizer tokenizer_;
  std::vector<double> table_;
  double weight_ = 1.0;
  double bias_ = 0.0;
  double bn_mean_ = 0.0;
  double bn_var_ = 1.0;
};

// Unit-length copy; throws DEGENERATE_EMBEDDING for a zero vector.
Vector normalized(std::span<const double> v);
double dot(std::span<const double> u, std::span<const double> v);
// Dot product of the normalized vectors.
double cosine(std::span<const double> u, std::span<const double> v);
double sigmoid(double z);

// Training-mode probabilities: the cosines are normalized by their own batch
// mean and (biased) variance.
std::vector<double> predict_prob_training(const EmbeddingModel& model,
                                          std::span<const double> cosines);

struct Example {
  TokenBag left;
  TokenBag right;
  int label = 0;
};

Example make_example(const EmbeddingModel& model, std::string_view left, std::string_view right,
                     int label);

struct BatchGradient {
  double loss = 0.0;
  std::map<std::uint32_t, Vector> rows;
  double d_weight = 0.0;
  double d_bias = 0.0;
  double batch_mean = 0.0;
  double batch_var = 0.0;
};

// Mean binary cross-entropy of one batch (training-mode batch norm) and its
// gradient with respect to the touched table rows, w and b.
BatchGradient batch_loss_and_grad(const EmbeddingModel& model, std::span<const Example> batch);
double batch_loss(const EmbeddingModel& model, std::span<const Example> batch);

struct TrainConfig {
  std::size_t epochs = 2;
  std::size_t batch_size = 16;
  double learning_rate = 1e-2;
  // Applied to w and b only.
  double head_lr_multiplier = 20.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-6;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

// Minibatch Adam on the BCE loss; lazy (row-sparse) moments for the table.
// Throws SINGLE_CLASS, NAN_LOSS.
TrainReport train(EmbeddingModel& model, std::span<const Example> examples,
                  const TrainConfig& config);

struct Standardized {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 1.0;
};

// Population standardization; throws DEGENERATE_FEATURE on zero variance.
Standardized standardize(std::span<const double> feature);

struct LogisticFit {
  double weight = 1.0;
  double bias = 0.0;
};

// Full-batch gradient descent on mean BCE of sigmoid(weight * x + bias).
LogisticFit fit_logistic_gd(std::span<const double> x, std::span<const int> y,
                            std::size_t iterations, double learning_rate,
                            bool nonnegative_weight);

struct RefitReport {
  double feature_mean = 0.0;
  double feature_stddev = 1.0;
  LogisticFit standardized_fit;
};

// Refits (w, b) with the embeddings frozen: logistic regression on the
// standardized cosine feature, then folds the standardization into the head so
// probability_from_cosine() reproduces the fitted model.
RefitReport refit_output_layer(EmbeddingModel& model, std::span<const Example> examples,
                               std::size_t iterations = 10000, double learning_rate = 1.0);

std::vector<double> example_cosines(const EmbeddingModel& model, std::span<const Example> examples);

// Binary checkpoint: header, head parameters and every table row that differs
// from its initial value.
void save_checkpoint(const EmbeddingModel& model, std::ostream& out);
void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_checkpoint(std::istream& in);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace pairal

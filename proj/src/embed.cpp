#include "pairal/embed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "pairal/error.hpp"
#include "pairal/rng.hpp"

namespace pairal {

// ---------------------------------------------------------------- tokenizer

Tokenizer::Tokenizer(TokenizerConfig config) : config_(config) {
  if (config_.buckets == 0) throw Error(ErrorCode::kInvalidArgument, "tokenizer needs >= 1 bucket");
}

std::vector<std::uint32_t> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < text.size() && out.size() < config_.max_tokens) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::uint64_t h = 0xcbf29ce484222325ULL ^ config_.seed;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      auto c = static_cast<unsigned char>(text[i]);
      if (config_.lowercase && c < 0x80) c = static_cast<unsigned char>(std::tolower(c));
      h ^= c;
      h *= 0x100000001b3ULL;
      ++i;
    }
    out.push_back(static_cast<std::uint32_t>(mix_seed(h) % config_.buckets));
  }
  return out;
}

TokenBag make_bag(std::span<const std::uint32_t> tokens) {
  TokenBag bag;
  if (tokens.empty()) return bag;
  std::vector<std::uint32_t> sorted(tokens.begin(), tokens.end());
  std::sort(sorted.begin(), sorted.end());
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    bag.buckets.push_back(sorted[i]);
    bag.weights.push_back(static_cast<double>(j - i) * inv);
    i = j;
  }
  return bag;
}

// ---------------------------------------------------------------- vector math

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

Vector normalized(std::span<const double> v) {
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kDegenerateEmbedding, "embedding has zero or non-finite norm");
  }
  Vector out(v.begin(), v.end());
  for (auto& x : out) x /= norm;
  return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  const Vector a = normalized(u);
  const Vector b = normalized(v);
  return dot(a, b);
}

double sigmoid(double z) {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  // Keep the open interval even where the logistic saturates in double.
  constexpr double kHi = 1.0 - 0x1.0p-53;
  return std::clamp(p, std::numeric_limits<double>::min(), kHi);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

// ---------------------------------------------------------------- model

EmbeddingModel::EmbeddingModel(const ModelConfig& config)
    : config_(config), tokenizer_(config.tokenizer) {
  if (config_.dim < 2) throw Error(ErrorCode::kInvalidArgument, "embedding dim must be >= 2");
}

EmbeddingModel EmbeddingModel::initialize(const ModelConfig& config) {
  EmbeddingModel model(config);
  model.table_.resize(std::size_t{config.tokenizer.buckets} * config.dim);
  for (std::uint32_t r = 0; r < config.tokenizer.buckets; ++r) {
    Vector init = model.initial_row(r);
    std::copy(init.begin(), init.end(), model.table_.begin() + std::size_t{r} * config.dim);
  }
  return model;
}

Vector EmbeddingModel::initial_row(std::uint32_t bucket) const {
  Rng rng(mix_seed(config_.init_seed, bucket));
  Vector row(config_.dim);
  for (auto& x : row) x = config_.init_scale * rng.normal();
  return row;
}

std::span<const double> EmbeddingModel::row(std::uint32_t bucket) const {
  return {table_.data() + std::size_t{bucket} * config_.dim, config_.dim};
}

std::span<double> EmbeddingModel::mutable_row(std::uint32_t bucket) {
  return {table_.data() + std::size_t{bucket} * config_.dim, config_.dim};
}

TokenBag EmbeddingModel::bag(std::string_view text) const {
  const auto tokens = tokenizer_.tokenize(text);
  if (tokens.empty()) throw Error(ErrorCode::kEmptyText, "text has no tokens");
  return make_bag(tokens);
}

Vector EmbeddingModel::embed(const TokenBag& bag) const {
  if (bag.buckets.empty()) throw Error(ErrorCode::kEmptyText, "text has no tokens");
  Vector out(config_.dim, 0.0);
  for (std::size_t k = 0; k < bag.buckets.size(); ++k) {
    const auto r = row(bag.buckets[k]);
    const double w = bag.weights[k];
    for (std::size_t j = 0; j < config_.dim; ++j) out[j] += w * r[j];
  }
  return out;
}

void EmbeddingModel::set_head(double weight, double bias) {
  weight_ = std::max(weight, 0.0);
  bias_ = bias;
}

void EmbeddingModel::set_bn_stats(double mean, double var) {
  bn_mean_ = mean;
  bn_var_ = std::max(var, 0.0);
}

double EmbeddingModel::probability_from_cosine(double c) const {
  const double normalized_c = (c - bn_mean_) / std::sqrt(bn_var_ + config_.bn_epsilon);
  return sigmoid(weight_ * normalized_c + bias_);
}

double EmbeddingModel::predict_prob(std::span<const double> u, std::span<const double> v) const {
  return probability_from_cosine(cosine(u, v));
}

std::vector<double> predict_prob_training(const EmbeddingModel& model,
                                          std::span<const double> cosines) {
  const double n = static_cast<double>(cosines.size());
  const double mean = std::accumulate(cosines.begin(), cosines.end(), 0.0) / n;
  double var = 0.0;
  for (double c : cosines) var += (c - mean) * (c - mean);
  var /= n;
  const double s = std::sqrt(var + model.config().bn_epsilon);
  std::vector<double> out;
  out.reserve(cosines.size());
  for (double c : cosines) out.push_back(sigmoid(model.weight() * (c - mean) / s + model.bias()));
  return out;
}

Example make_example(const EmbeddingModel& model, std::string_view left, std::string_view right,
                     int label) {
  return {model.bag(left), model.bag(right), label};
}

std::vector<double> example_cosines(const EmbeddingModel& model, std::span<const Example> examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(cosine(model.embed(ex.left), model.embed(ex.right)));
  return out;
}

// ---------------------------------------------------------------- gradients

namespace {

struct Forward {
  Vector u, v;
  double nu = 0.0, nv = 0.0, c = 0.0;
};

Forward forward_pair(const EmbeddingModel& model, const Example& ex) {
  Forward f;
  f.u = model.embed(ex.left);
  f.v = model.embed(ex.right);
  f.nu = std::sqrt(dot(f.u, f.u));
  f.nv = std::sqrt(dot(f.v, f.v));
  if (!(f.nu > 0.0) || !(f.nv > 0.0)) {
    throw Error(ErrorCode::kDegenerateEmbedding, "zero-norm embedding in training batch");
  }
  f.c = dot(f.u, f.v) / (f.nu * f.nv);
  return f;
}

}  // namespace

BatchGradient batch_loss_and_grad(const EmbeddingModel& model, std::span<const Example> batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const double eps = model.config().bn_epsilon;
  const double w = model.weight();
  const double b = model.bias();

  std::vector<Forward> fwd;
  fwd.reserve(n);
  for (const auto& ex : batch) fwd.push_back(forward_pair(model, ex));

  BatchGradient grad;
  double mean = 0.0;
  for (const auto& f : fwd) mean += f.c;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& f : fwd) var += (f.c - mean) * (f.c - mean);
  var /= static_cast<double>(n);
  const double s = std::sqrt(var + eps);
  grad.batch_mean = mean;
  grad.batch_var = var;

  std::vector<double> chat(n), dz(n);
  for (std::size_t i = 0; i < n; ++i) {
    chat[i] = (fwd[i].c - mean) / s;
    const double z = w * chat[i] + b;
    const int y = batch[i].label;
    grad.loss += softplus(z) - y * z;
    dz[i] = (sigmoid(z) - y) / static_cast<double>(n);
    grad.d_weight += dz[i] * chat[i];
    grad.d_bias += dz[i];
  }
  grad.loss /= static_cast<double>(n);

  // Batch-norm backward.
  double mean_g = 0.0, mean_g_chat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_g += w * dz[i];
    mean_g_chat += w * dz[i] * chat[i];
  }
  mean_g /= static_cast<double>(n);
  mean_g_chat /= static_cast<double>(n);

  const std::size_t d = model.dim();
  for (std::size_t i = 0; i < n; ++i) {
    const double dc = (w * dz[i] - mean_g - chat[i] * mean_g_chat) / s;
    const auto& f = fwd[i];
    Vector du(d), dv(d);
    const double inv_uv = 1.0 / (f.nu * f.nv);
    for (std::size_t j = 0; j < d; ++j) {
      du[j] = dc * (f.v[j] * inv_uv - f.c * f.u[j] / (f.nu * f.nu));
      dv[j] = dc * (f.u[j] * inv_uv - f.c * f.v[j] / (f.nv * f.nv));
    }
    auto scatter = [&](const TokenBag& bag, const Vector& g) {
      for (std::size_t k = 0; k < bag.buckets.size(); ++k) {
        auto [it, inserted] = grad.rows.try_emplace(bag.buckets[k], Vector(d, 0.0));
        for (std::size_t j = 0; j < d; ++j) it->second[j] += bag.weights[k] * g[j];
      }
    };
    scatter(batch[i].left, du);
    scatter(batch[i].right, dv);
  }
  return grad;
}

double batch_loss(const EmbeddingModel& model, std::span<const Example> batch) {
  std::vector<double> cosines;
  cosines.reserve(batch.size());
  for (const auto& ex : batch) cosines.push_back(forward_pair(model, ex).c);
  const double n = static_cast<double>(batch.size());
  const double mean = std::accumulate(cosines.begin(), cosines.end(), 0.0) / n;
  double var = 0.0;
  for (double c : cosines) var += (c - mean) * (c - mean);
  var /= n;
  const double s = std::sqrt(var + model.config().bn_epsilon);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double z = model.weight() * (cosines[i] - mean) / s + model.bias();
    loss += softplus(z) - batch[i].label * z;
  }
  return loss / n;
}

// ---------------------------------------------------------------- training

namespace {

struct AdamMoments {
  Vector m, v;
};

void check_two_classes(std::span<const Example> examples) {
  bool pos = false, neg = false;
  for (const auto& ex : examples) {
    (ex.label == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) {
    throw Error(ErrorCode::kSingleClass, "training data needs at least one example of each label");
  }
}

}  // namespace

TrainReport train(EmbeddingModel& model, std::span<const Example> examples,
                  const TrainConfig& config) {
  if (config.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (config.batch_size < 2) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 2");
  if (examples.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need >= 2 examples");
  check_two_classes(examples);

  const std::size_t d = model.dim();
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double head_lr = config.learning_rate * config.head_lr_multiplier;
  const double momentum = model.config().bn_momentum;

  std::unordered_map<std::uint32_t, AdamMoments> table_state;
  double mw = 0, vw = 0, mb = 0, vb = 0;
  double b1t = 1.0, b2t = 1.0;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(config.seed, 0x747261696eULL));

  TrainReport report;
  std::vector<Example> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t begin = 0;
    while (begin < order.size()) {
      std::size_t end = std::min(begin + config.batch_size, order.size());
      // A trailing single example cannot be batch-normalized; fold it in.
      if (order.size() - end == 1) end = order.size();
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(examples[order[k]]);

      BatchGradient g = batch_loss_and_grad(model, batch);
      if (!std::isfinite(g.loss)) {
        throw Error(ErrorCode::kNanLoss,
                    "non-finite loss at epoch " + std::to_string(epoch) + " step " +
                        std::to_string(report.steps) + " (w=" + std::to_string(model.weight()) +
                        ", b=" + std::to_string(model.bias()) +
                        ", batch var=" + std::to_string(g.batch_var) + ")");
      }
      loss_sum += g.loss * static_cast<double>(end - begin);

      ++report.steps;
      b1t *= b1;
      b2t *= b2;
      const double c1 = 1.0 - b1t;
      const double c2 = 1.0 - b2t;
      for (auto& [bucket, grad_row] : g.rows) {
        auto& st = table_state[bucket];
        if (st.m.empty()) {
          st.m.assign(d, 0.0);
          st.v.assign(d, 0.0);
        }
        auto row = model.mutable_row(bucket);
        for (std::size_t j = 0; j < d; ++j) {
          st.m[j] = b1 * st.m[j] + (1 - b1) * grad_row[j];
          st.v[j] = b2 * st.v[j] + (1 - b2) * grad_row[j] * grad_row[j];
          row[j] -= config.learning_rate * (st.m[j] / c1) /
                    (std::sqrt(st.v[j] / c2) + config.adam_epsilon);
        }
      }
      mw = b1 * mw + (1 - b1) * g.d_weight;
      vw = b2 * vw + (1 - b2) * g.d_weight * g.d_weight;
      mb = b1 * mb + (1 - b1) * g.d_bias;
      vb = b2 * vb + (1 - b2) * g.d_bias * g.d_bias;
      const double w = model.weight() - head_lr * (mw / c1) / (std::sqrt(vw / c2) + config.adam_epsilon);
      const double bias = model.bias() - head_lr * (mb / c1) / (std::sqrt(vb / c2) + config.adam_epsilon);
      model.set_head(w, bias);  // clamps w at 0

      const double bn = static_cast<double>(end - begin);
      const double unbiased = g.batch_var * bn / (bn - 1.0);
      model.set_bn_stats((1 - momentum) * model.bn_mean() + momentum * g.batch_mean,
                         (1 - momentum) * model.bn_var() + momentum * unbiased);
      begin = end;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return report;
}

// ---------------------------------------------------------------- refit

Standardized standardize(std::span<const double> feature) {
  if (feature.empty()) throw Error(ErrorCode::kDegenerateFeature, "empty feature");
  const double n = static_cast<double>(feature.size());
  const double mean = std::accumulate(feature.begin(), feature.end(), 0.0) / n;
  double var = 0.0;
  for (double x : feature) var += (x - mean) * (x - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12) || !std::isfinite(sd)) {
    throw Error(ErrorCode::kDegenerateFeature, "feature has zero variance");
  }
  Standardized out;
  out.mean = mean;
  out.stddev = sd;
  out.values.reserve(feature.size());
  for (double x : feature) out.values.push_back((x - mean) / sd);
  return out;
}

LogisticFit fit_logistic_gd(std::span<const double> x, std::span<const int> y,
                            std::size_t iterations, double learning_rate,
                            bool nonnegative_weight) {
  LogisticFit fit;
  const double n = static_cast<double>(x.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = sigmoid(fit.weight * x[i] + fit.bias) - y[i];
      gw += r * x[i];
      gb += r;
    }
    fit.weight -= learning_rate * gw / n;
    fit.bias -= learning_rate * gb / n;
    if (nonnegative_weight) fit.weight = std::max(fit.weight, 0.0);
  }
  return fit;
}

RefitReport refit_output_layer(EmbeddingModel& model, std::span<const Example> examples,
                               std::size_t iterations, double learning_rate) {
  check_two_classes(examples);
  const auto features = standardize(example_cosines(model, examples));
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);

  RefitReport report;
  report.feature_mean = features.mean;
  report.feature_stddev = features.stddev;
  report.standardized_fit = fit_logistic_gd(features.values, labels, iterations, learning_rate, true);

  // z = (c - mu) / sigma and c = bn_mean + s * chat, so
  // w' z + b' = (w' s / sigma) chat + b' + w' (bn_mean - mu) / sigma.
  const double s = std::sqrt(model.bn_var() + model.config().bn_epsilon);
  const auto& f = report.standardized_fit;
  model.set_head(f.weight * s / features.stddev,
                 f.bias + f.weight * (model.bn_mean() - features.mean) / features.stddev);
  return report;
}

// ---------------------------------------------------------------- checkpoint

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");

constexpr char kMagic[8] = {'P', 'A', 'I', 'R', 'A', 'L', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kParse, "truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(const EmbeddingModel& model, std::ostream& out) {
  const auto& cfg = model.config();
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, std::uint64_t{cfg.dim});
  put(out, cfg.tokenizer.buckets);
  put(out, std::uint8_t{cfg.tokenizer.lowercase});
  put(out, cfg.tokenizer.seed);
  put(out, std::uint64_t{cfg.tokenizer.max_tokens});
  put(out, cfg.init_seed);
  put(out, cfg.init_scale);
  put(out, cfg.bn_momentum);
  put(out, cfg.bn_epsilon);
  put(out, model.weight());
  put(out, model.bias());
  put(out, model.bn_mean());
  put(out, model.bn_var());

  std::vector<std::uint32_t> changed;
  for (std::uint32_t r = 0; r < cfg.tokenizer.buckets; ++r) {
    const Vector init = model.initial_row(r);
    const auto cur = model.row(r);
    if (std::memcmp(init.data(), cur.data(), cfg.dim * sizeof(double)) != 0) changed.push_back(r);
  }
  put(out, std::uint64_t{changed.size()});
  for (std::uint32_t r : changed) {
    put(out, r);
    out.write(reinterpret_cast<const char*>(model.row(r).data()),
              static_cast<std::streamsize>(cfg.dim * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint");
}

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  save_checkpoint(model, out);
}

EmbeddingModel load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kParse, "not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error(ErrorCode::kParse, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.dim = get<std::uint64_t>(in);
  cfg.tokenizer.buckets = get<std::uint32_t>(in);
  cfg.tokenizer.lowercase = get<std::uint8_t>(in) != 0;
  cfg.tokenizer.seed = get<std::uint64_t>(in);
  cfg.tokenizer.max_tokens = get<std::uint64_t>(in);
  cfg.init_seed = get<std::uint64_t>(in);
  cfg.init_scale = get<double>(in);
  cfg.bn_momentum = get<double>(in);
  cfg.bn_epsilon = get<double>(in);
  const double w = get<double>(in);
  const double b = get<double>(in);
  const double mean = get<double>(in);
  const double var = get<double>(in);

  EmbeddingModel model = EmbeddingModel::initialize(cfg);
  model.set_head(w, b);
  model.set_bn_stats(mean, var);
  const auto rows = get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < rows; ++k) {
    const auto r = get<std::uint32_t>(in);
    if (r >= cfg.tokenizer.buckets) throw Error(ErrorCode::kParse, "checkpoint row out of range");
    auto dst = model.mutable_row(r);
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(cfg.dim * sizeof(double)));
    if (!in) throw Error(ErrorCode::kParse, "truncated checkpoint");
  }
  return model;
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace pairal

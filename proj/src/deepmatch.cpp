#include "artsig/deepmatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "artsig/errors.hpp"
#include "artsig/parallel.hpp"
#include "io_util.hpp"

namespace artsig {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;    // "init"
constexpr std::uint64_t kSampleStream = 0x73616d70;  // "samp"
constexpr std::size_t kGradientChunk = 32;
constexpr char kCheckpointMagic[4] = {'A', 'R', 'T', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void fill_uniform(std::vector<float>& values, double bound, CounterRng& rng) {
  for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden_dim < 1) throw ValidationError("hidden_dim must be at least 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  return {{"hidden_dim", cfg.hidden_dim}, {"learning_rate", cfg.learning_rate}, {"momentum", cfg.momentum},
          {"epochs", cfg.epochs},         {"batch_size", cfg.batch_size},       {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

Classifier init_classifier(std::size_t d, std::size_t h, std::size_t a, std::uint64_t seed) {
  if (d < 1 || h < 1 || a < 1) throw ValidationError("classifier dimensions must be at least 1");
  Classifier c(d, h, a);
  CounterRng rng(seed, kInitStream);
  fill_uniform(c.w1, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  fill_uniform(c.w2, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  return c;
}

ForwardResult forward(const Classifier& c, std::span<const float> x) {
  if (x.size() != c.input_dim) {
    throw ValidationError("input has dimension " + std::to_string(x.size()) + ", classifier expects " +
                          std::to_string(c.input_dim));
  }
  Activations<float> act(c);
  forward_pass(c, x, act);
  return {std::move(act.logits), std::move(act.probs)};
}

std::vector<double> sampling_probabilities(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<std::size_t> sizes(classes, 0);
  for (std::size_t l : labels) ++sizes.at(l);
  const auto present = static_cast<double>(std::count_if(sizes.begin(), sizes.end(), [](auto n) { return n > 0; }));
  std::vector<double> p(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = 1.0 / (present * static_cast<double>(sizes[labels[i]]));
  return p;
}

std::vector<std::size_t> weighted_sample(std::span<const std::size_t> labels, std::size_t classes, std::size_t count,
                                         CounterRng& rng) {
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members.at(labels[i]).push_back(i);
  std::vector<std::size_t> present;
  for (std::size_t k = 0; k < classes; ++k) {
    if (!members[k].empty()) present.push_back(k);
  }
  if (present.empty()) throw ValidationError("cannot sample from an empty training set");
  std::vector<std::size_t> out(count);
  for (auto& idx : out) {
    const auto& pool = members[present[rng.uniform_index(present.size())]];
    idx = pool[rng.uniform_index(pool.size())];
  }
  return out;
}

Classifier train(Classifier c, const EmbeddingStore& inputs, std::span<const std::size_t> labels,
                 const TrainConfig& cfg, std::vector<EpochLog>* log) {
  cfg.validate();
  if (inputs.rows() == 0) throw ValidationError("training set is empty");
  if (inputs.rows() != labels.size()) throw ValidationError("label count does not match training rows");
  if (inputs.dim() != c.input_dim) throw ValidationError("training inputs do not match classifier input_dim");
  for (std::size_t l : labels) {
    if (l >= c.classes) throw ValidationError("label " + std::to_string(l) + " exceeds classifier outputs");
  }

  Gradients<float> velocity(c.input_dim, c.hidden_dim, c.classes);
  CounterRng rng(cfg.seed, kSampleStream);
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);
  const std::size_t n = inputs.rows();

  std::vector<Gradients<float>> chunk_grads;
  std::vector<double> chunk_loss;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = weighted_sample(labels, c.classes, n, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::size_t chunks = (stop - start + kGradientChunk - 1) / kGradientChunk;
      const float scale = 1.0f / static_cast<float>(stop - start);
      if (chunk_grads.size() < chunks) chunk_grads.resize(chunks, Gradients<float>(c.input_dim, c.hidden_dim, c.classes));
      chunk_loss.assign(chunks, 0.0);

      parallel_for(chunks, [&](std::size_t ch) {
        auto& g = chunk_grads[ch];
        std::fill(g.w1.begin(), g.w1.end(), 0.0f);
        std::fill(g.b1.begin(), g.b1.end(), 0.0f);
        std::fill(g.w2.begin(), g.w2.end(), 0.0f);
        std::fill(g.b2.begin(), g.b2.end(), 0.0f);
        Activations<float> act(c);
        const std::size_t lo = start + ch * kGradientChunk;
        const std::size_t hi = std::min(stop, lo + kGradientChunk);
        double loss = 0.0;
        for (std::size_t e = lo; e < hi; ++e) {
          const std::size_t row = order[e];
          loss += accumulate_gradient(c, inputs.row(row), labels[row], scale, g, act);
        }
        chunk_loss[ch] = loss;
      });

      // Fixed-order reduction into chunk 0, then the momentum step.
      auto& total = chunk_grads[0];
      for (std::size_t ch = 1; ch < chunks; ++ch) {
        const auto& g = chunk_grads[ch];
        for (std::size_t i = 0; i < total.w1.size(); ++i) total.w1[i] += g.w1[i];
        for (std::size_t i = 0; i < total.b1.size(); ++i) total.b1[i] += g.b1[i];
        for (std::size_t i = 0; i < total.w2.size(); ++i) total.w2[i] += g.w2[i];
        for (std::size_t i = 0; i < total.b2.size(); ++i) total.b2[i] += g.b2[i];
      }
      auto step = [&](std::vector<float>& param, std::vector<float>& vel, const std::vector<float>& grad) {
        for (std::size_t i = 0; i < param.size(); ++i) {
          vel[i] = mu * vel[i] + grad[i];
          param[i] -= lr * vel[i];
        }
      };
      step(c.w1, velocity.w1, total.w1);
      step(c.b1, velocity.b1, total.b1);
      step(c.w2, velocity.w2, total.w2);
      step(c.b2, velocity.b2, total.b2);

      double batch_loss = 0.0;
      for (double l : chunk_loss) batch_loss += l;
      loss_sum += batch_loss / static_cast<double>(stop - start);
      ++batches;
    }
    if (log != nullptr) log->push_back({epoch + 1, loss_sum / static_cast<double>(batches)});
  }

  for (const auto* param : {&c.w1, &c.b1, &c.w2, &c.b2}) {
    for (float v : *param) {
      if (!std::isfinite(v)) throw DataError("training diverged (non-finite parameters)");
    }
  }
  return c;
}

Classifier train(Classifier c, const Corpus& corpus, const TrainConfig& cfg, std::vector<EpochLog>* log) {
  const auto rows = corpus.rows_with(Split::kTrain);
  std::vector<std::size_t> labels;
  std::vector<std::size_t> per_artist(corpus.artist_count(), 0);
  for (std::size_t r : rows) {
    labels.push_back(corpus.images[r].artist_id);
    ++per_artist[corpus.images[r].artist_id];
  }
  for (std::size_t a = 0; a < per_artist.size(); ++a) {
    if (per_artist[a] == 0) {
      throw ValidationError("artist \"" + corpus.artists[a].name + "\" has no training images");
    }
  }
  return train(std::move(c), corpus.embeddings.select(rows), labels, cfg, log);
}

double mean_loss(const Classifier& c, const EmbeddingStore& inputs, std::span<const std::size_t> labels) {
  std::vector<double> losses(inputs.rows());
  parallel_for(inputs.rows(), [&](std::size_t i) {
    Activations<float> act(c);
    forward_pass(c, inputs.row(i), act);
    losses[i] = -std::log(std::max(static_cast<double>(act.probs[labels[i]]), 1e-30));
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return inputs.rows() == 0 ? 0.0 : total / static_cast<double>(inputs.rows());
}

std::size_t argmax_lowest(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

std::size_t predict_image(const Classifier& c, std::span<const float> x) { return argmax_lowest(forward(c, x).logits); }

std::vector<std::size_t> predict_all(const Classifier& c, const EmbeddingStore& images) {
  if (images.rows() > 0 && images.dim() != c.input_dim) {
    throw ValidationError("images have dimension " + std::to_string(images.dim()) + ", classifier expects " +
                          std::to_string(c.input_dim));
  }
  std::vector<std::size_t> out(images.rows());
  parallel_for(images.rows(), [&](std::size_t i) {
    Activations<float> act(c);
    forward_pass(c, images.row(i), act);
    out[i] = argmax_lowest(act.logits);
  });
  return out;
}

double MatchDecision::fraction_for(std::size_t cls) const {
  if (predictions.empty()) return 0.0;
  const auto hits = std::count(predictions.begin(), predictions.end(), cls);
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

MatchDecision decide(std::vector<std::size_t> predictions, double threshold) {
  if (predictions.empty()) throw ValidationError("deep_match needs a nonempty test set");
  std::vector<std::size_t> sorted = predictions;
  std::sort(sorted.begin(), sorted.end());
  std::size_t modal = sorted.front();
  std::size_t best = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    if (j - i > best) {  // strict: earlier (lower) class wins ties
      best = j - i;
      modal = sorted[i];
    }
    i = j;
  }
  MatchDecision out;
  out.modal = modal;
  out.confidence = static_cast<double>(best) / static_cast<double>(predictions.size());
  if (out.confidence >= threshold) out.predicted = modal;
  out.predictions = std::move(predictions);
  return out;
}

MatchDecision deep_match(const Classifier& c, const EmbeddingStore& test_set, double threshold) {
  if (test_set.rows() == 0) throw ValidationError("deep_match needs a nonempty test set");
  return decide(predict_all(c, test_set), threshold);
}

void save_classifier(const Classifier& c, const TrainConfig& cfg, const std::filesystem::path& path,
                     const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json header;
  header["input_dim"] = c.input_dim;
  header["hidden_dim"] = c.hidden_dim;
  header["classes"] = c.classes;
  header["activation"] = "relu";
  header["config"] = to_json(cfg);
  header["seed"] = cfg.seed;
  header["extra"] = extra;
  const std::string text = header.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, 4);
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((kCheckpointVersion >> (8 * i)) & 0xff));
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_matrix_section(out, c.input_dim, c.hidden_dim, c.w1);
  write_matrix_section(out, 1, c.hidden_dim, c.b1);
  write_matrix_section(out, c.hidden_dim, c.classes, c.w2);
  write_matrix_section(out, 1, c.classes, c.b2);
  detail::write_file(path, out.str());
}

LoadedClassifier load_classifier(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path), std::ios::binary);
  char magic[4] = {};
  unsigned char fixed[12] = {};
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(fixed), 12);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError(path.string() + ": not a checkpoint");
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) version = (version << 8) | fixed[i];
  if (version != kCheckpointVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
  std::uint64_t len = 0;
  for (int i = 11; i >= 4; --i) len = (len << 8) | fixed[i];
  if (len > (std::uint64_t{1} << 30)) throw FormatError(path.string() + ": header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError(path.string() + ": truncated header");

  LoadedClassifier out;
  try {
    out.header = nlohmann::json::parse(text);
    out.config = train_config_from_json(out.header.at("config"));
    const auto d = out.header.at("input_dim").get<std::size_t>();
    const auto h = out.header.at("hidden_dim").get<std::size_t>();
    const auto a = out.header.at("classes").get<std::size_t>();
    out.classifier = Classifier(d, h, a);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  auto& c = out.classifier;
  auto load = [&](std::vector<float>& dst, std::size_t rows, std::size_t cols) {
    auto section = read_matrix_section(in);
    if (section.n != rows || section.d != cols) throw FormatError(path.string() + ": section shape mismatch");
    dst = std::move(section.values);
  };
  load(c.w1, c.input_dim, c.hidden_dim);
  load(c.b1, 1, c.hidden_dim);
  load(c.w2, c.hidden_dim, c.classes);
  load(c.b2, 1, c.classes);
  return out;
}

}  // namespace artsig

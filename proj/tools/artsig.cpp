// artsig command line: tagging, signature mining, matching and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "artsig/composer.hpp"
#include "artsig/corpus.hpp"
#include "artsig/deepmatch.hpp"
#include "artsig/errors.hpp"
#include "artsig/harness.hpp"
#include "artsig/parallel.hpp"
#include "artsig/tagger.hpp"
#include "artsig/tagmatch.hpp"

namespace fs = std::filesystem;
using namespace artsig;

namespace {

struct Options {
  std::string embeddings;
  std::string manifest;
  std::string vocab;
  std::string concepts;
  std::string out;
  std::string tags;
  std::string reference_tags;
  std::string profiles;
  std::string model;
  std::string report;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::uint32_t artist = 0;
  double z_threshold = 1.5;
  std::size_t min_count = 3;
  std::size_t cap = 25;
  std::size_t k_matches = 10;
  std::size_t hidden_dim = 512;
  double test_fraction = 0.2;
  std::size_t min_test = 20;
  std::size_t epochs = TrainConfig{}.epochs;
  double learning_rate = TrainConfig{}.learning_rate;
  std::size_t batch_size = TrainConfig{}.batch_size;
};

PipelineConfig pipeline(const Options& o) {
  PipelineConfig cfg;
  cfg.split = {o.test_fraction, o.min_test, o.seed};
  cfg.tagger.z_threshold = o.z_threshold;
  cfg.composer.min_count = o.min_count;
  cfg.composer.intersection_cap = o.cap;
  cfg.tagmatch.matches_per_artist = o.k_matches;
  cfg.train.hidden_dim = o.hidden_dim;
  cfg.train.seed = o.seed;
  cfg.train.epochs = o.epochs;
  cfg.train.learning_rate = o.learning_rate;
  cfg.train.batch_size = o.batch_size;
  cfg.validate();
  if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) throw ValidationError("--test-fraction must lie in (0, 1)");
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

EmbeddingStore load_store(const std::string& path) {
  std::vector<std::string> warnings;
  auto store = read_embedding_store(path, &warnings);
  print_warnings(warnings);
  return store;
}

bool needs_split(const Corpus& corpus) {
  for (const auto& img : corpus.images) {
    if (img.is_real() && img.split == Split::kUnassigned) return true;
  }
  return false;
}

// Loads the corpus and splits it when any real image is unassigned. The split
// manifest is written next to the outputs when out_dir is given.
Corpus load_split_corpus(const Options& o, const PipelineConfig& cfg, const std::optional<fs::path>& out_dir) {
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(o.embeddings, o.manifest, &warnings);
  print_warnings(warnings);
  corpus.validate();
  if (needs_split(corpus)) {
    corpus = split_corpus(std::move(corpus), cfg.split);
    if (out_dir) {
      fs::create_directories(*out_dir);
      write_manifest({corpus.artists, corpus.images}, *out_dir / "split_manifest.json");
    }
  }
  return corpus;
}

void write_json(const nlohmann::ordered_json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + out + " for writing");
  f << j.dump(2) << '\n';
}

std::vector<std::string> ids_for(const Options& o, std::size_t rows) {
  std::vector<std::string> ids;
  if (!o.manifest.empty()) {
    for (const auto& img : read_manifest(o.manifest).images) ids.push_back(img.image_id);
    if (ids.size() != rows) {
      throw DataError("manifest lists " + std::to_string(ids.size()) + " images, store has " + std::to_string(rows));
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) ids.push_back(std::to_string(i));
  }
  return ids;
}

int cmd_tag(const Options& o) {
  const auto cfg = pipeline(o);
  const Vocabulary vocab = load_vocabulary(o.vocab);
  const EmbeddingStore images = load_store(o.embeddings);
  const EmbeddingStore concepts = load_store(o.concepts);
  if (concepts.rows() != vocab.concept_count()) throw ValidationError("concept store does not match the vocabulary");
  const auto tags = tag_corpus(cosine_similarities(images, concepts), vocab, cfg.tagger, ids_for(o, images.rows()));
  write_tag_sets(tags, o.out);
  std::cerr << tags.size() << " images, " << mean_tags_per_image(tags) << " tags per image\n";
  return kExitOk;
}

// Per-artist train-split tag sets, keyed through the (split) manifest.
std::vector<std::vector<AtomicTagSet>> train_tags_by_artist(const Corpus& corpus,
                                                            const std::vector<AtomicTagSet>& tags) {
  std::map<std::string, const AtomicTagSet*> by_id;
  for (const auto& t : tags) by_id[t.image_id] = &t;
  std::vector<std::vector<AtomicTagSet>> out(corpus.artist_count());
  for (const auto& img : corpus.images) {
    if (img.split != Split::kTrain) continue;
    const auto it = by_id.find(img.image_id);
    if (it == by_id.end()) throw DataError("no tag set for image " + img.image_id);
    out[img.artist_id].push_back(*it->second);
  }
  return out;
}

Corpus manifest_corpus(const Options& o, const PipelineConfig& cfg) {
  Manifest m = read_manifest(o.manifest);
  Corpus corpus{std::move(m.images), std::move(m.artists), {}};
  if (needs_split(corpus)) {
    // Splitting only needs the records; give it a placeholder store of the right height.
    corpus.embeddings = EmbeddingStore(corpus.images.size(), 1, std::vector<float>(corpus.images.size(), 1.0f));
    corpus = split_corpus(std::move(corpus), cfg.split);
  }
  return corpus;
}

int cmd_compose(const Options& o) {
  const auto cfg = pipeline(o);
  const Corpus corpus = manifest_corpus(o, cfg);
  const auto grouped = train_tags_by_artist(corpus, read_tag_sets(o.tags));
  std::vector<ArtistTagProfile> profiles(grouped.size());
  parallel_for(grouped.size(), [&](std::size_t a) {
    profiles[a] = mine_profile(grouped[a], cfg.composer, static_cast<ArtistId>(a));
  });
  write_profiles(profiles, o.out);
  return kExitOk;
}

int cmd_tagmatch(const Options& o) {
  const auto cfg = pipeline(o);
  const ReferenceIndex index(read_profiles(o.profiles));
  const TestPortfolio test = TestPortfolio::mine(read_tag_sets(o.tags), cfg.composer);
  MatchResult result = tag_match(test, index, cfg.tagmatch);
  if (!o.reference_tags.empty() && !o.manifest.empty()) {
    const auto grouped = train_tags_by_artist(manifest_corpus(o, cfg), read_tag_sets(o.reference_tags));
    attach_attribution(result, test, [&](ArtistId a) -> std::span<const AtomicTagSet> { return grouped.at(a); });
  }
  std::optional<Vocabulary> vocab;
  if (!o.vocab.empty()) vocab = load_vocabulary(o.vocab);
  write_json(match_result_to_json(result, vocab ? &*vocab : nullptr, cfg.tagmatch.matches_per_artist), o.out);
  return kExitOk;
}

int cmd_train(const Options& o) {
  const auto cfg = pipeline(o);
  const Corpus corpus = load_split_corpus(o, cfg, fs::absolute(o.out).parent_path());
  Classifier c = init_classifier(corpus.embeddings.dim(), cfg.train.hidden_dim, corpus.artist_count(), cfg.train.seed);
  std::vector<EpochLog> log;
  c = train(std::move(c), corpus, cfg.train, &log);
  for (const auto& e : log) std::cerr << "epoch " << e.epoch << " loss " << e.mean_batch_loss << '\n';
  nlohmann::ordered_json artists = nlohmann::ordered_json::array();
  for (const auto& a : corpus.artists) artists.push_back(a.name);
  save_classifier(c, cfg.train, o.out, {{"artists", artists}});
  return kExitOk;
}

int cmd_deepmatch(const Options& o) {
  pipeline(o);
  const LoadedClassifier loaded = load_classifier(o.model);
  const EmbeddingStore images = load_store(o.embeddings);
  if (images.dim() != loaded.classifier.input_dim) throw ValidationError("embedding dimension does not match model");
  const MatchDecision d = deep_match(loaded.classifier, images);
  nlohmann::ordered_json j;
  j["predicted"] = d.predicted ? nlohmann::ordered_json(*d.predicted) : nlohmann::ordered_json(nullptr);
  j["modal"] = d.modal;
  j["confidence"] = d.confidence;
  j["predictions"] = d.predictions;
  write_json(j, o.out);
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = pipeline(o);
  const fs::path out_dir(o.out);
  const Corpus corpus = load_split_corpus(o, cfg, out_dir);
  const Vocabulary vocab = load_vocabulary(o.vocab);
  const EmbeddingStore concepts = load_store(o.concepts);
  const EvaluationRun run = run_evaluation(corpus, vocab, concepts, cfg);
  ReportInputs inputs;
  inputs.provenance = run.provenance;
  inputs.holdout = &run.holdout;
  inputs.generated = run.generated;
  inputs.vocab = &vocab;
  emit_report(report_to_json(inputs), out_dir);
  const auto& agg = run.holdout.aggregates;
  std::cerr << "held-out match rate " << agg.match_rate << "%, TagMatch top-1 " << agg.topk_accuracy[0] << "%\n";
  return kExitOk;
}

int cmd_holdout_similar(const Options& o) {
  const auto cfg = pipeline(o);
  const Corpus corpus = load_split_corpus(o, cfg, std::nullopt);
  Classifier full;
  if (!o.model.empty()) {
    full = load_classifier(o.model).classifier;
  } else {
    full = train(init_classifier(corpus.embeddings.dim(), cfg.train.hidden_dim, corpus.artist_count(), cfg.train.seed),
                 corpus, cfg.train);
  }
  nlohmann::ordered_json verdicts = nlohmann::ordered_json::array();
  for (const auto& v : unprecedented_similarity(corpus, o.artist, full, cfg)) verdicts.push_back(to_json(v));
  write_json(verdicts, o.out);
  return kExitOk;
}

int cmd_report(const Options& o) {
  std::ifstream in(o.report, std::ios::binary);
  if (!in) throw IoError("cannot open " + o.report);
  nlohmann::ordered_json report;
  try {
    report = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  const std::string md = render_markdown(report);
  if (o.out.empty()) {
    std::cout << md;
  } else {
    std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + o.out + " for writing");
    f << md;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Artistic style signatures and style copying detection"};
  app.require_subcommand(1);
  Options o;

  const auto shared = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Seed for splits and training");
    sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--z-threshold", o.z_threshold, "Per-aspect z-score threshold");
    sub->add_option("--min-count", o.min_count, "Minimum images for a common tag or signature");
    sub->add_option("--cap", o.cap, "Maximum common tags per image before truncation");
    sub->add_option("--k-matches", o.k_matches, "Scores kept per reference artist");
    sub->add_option("--hidden-dim", o.hidden_dim, "Classifier hidden width");
    sub->add_option("--test-fraction", o.test_fraction, "Held-out fraction per artist");
    sub->add_option("--min-test-per-artist", o.min_test, "Minimum held-out images per artist");
    sub->add_option("--epochs", o.epochs, "Training epochs");
    sub->add_option("--learning-rate", o.learning_rate, "Training learning rate");
    sub->add_option("--batch-size", o.batch_size, "Training batch size");
  };

  auto* tag = app.add_subcommand("tag", "Assign atomic tags to images");
  shared(tag);
  tag->add_option("--embeddings", o.embeddings, "Image embedding store")->required();
  tag->add_option("--concepts", o.concepts, "Concept embedding store")->required();
  tag->add_option("--vocab", o.vocab, "Vocabulary JSON")->required();
  tag->add_option("--manifest", o.manifest, "Image manifest (for image ids)");
  tag->add_option("--out", o.out, "Tag-set JSON output")->required();

  auto* compose = app.add_subcommand("compose", "Mine per-artist tag signatures from the train split");
  shared(compose);
  compose->add_option("--tags", o.tags, "Tag sets of the corpus")->required();
  compose->add_option("--manifest", o.manifest, "Image manifest")->required();
  compose->add_option("--out", o.out, "Profile JSON output")->required();

  auto* tagmatch = app.add_subcommand("tagmatch", "Rank reference artists for a set of tagged images");
  shared(tagmatch);
  tagmatch->add_option("--profiles", o.profiles, "Reference profiles")->required();
  tagmatch->add_option("--tags", o.tags, "Tag sets of the test images")->required();
  tagmatch->add_option("--reference-tags", o.reference_tags, "Tag sets of the reference corpus (for attribution)");
  tagmatch->add_option("--manifest", o.manifest, "Reference manifest (for attribution)");
  tagmatch->add_option("--vocab", o.vocab, "Vocabulary JSON (for tag names)");
  tagmatch->add_option("--out", o.out, "Match JSON output (stdout if omitted)");

  auto* train_cmd = app.add_subcommand("train", "Train the artist classifier on the train split");
  shared(train_cmd);
  train_cmd->add_option("--embeddings", o.embeddings, "Image embedding store")->required();
  train_cmd->add_option("--manifest", o.manifest, "Image manifest")->required();
  train_cmd->add_option("--out", o.out, "Checkpoint output")->required();

  auto* deep = app.add_subcommand("deepmatch", "Classify a set of images by majority vote");
  shared(deep);
  deep->add_option("--model", o.model, "Classifier checkpoint")->required();
  deep->add_option("--embeddings", o.embeddings, "Embedding store of the image set")->required();
  deep->add_option("--out", o.out, "Decision JSON output (stdout if omitted)");

  auto* evaluate = app.add_subcommand("evaluate", "Run the held-out and generated-set protocols and write a report");
  shared(evaluate);
  evaluate->add_option("--embeddings", o.embeddings, "Image embedding store")->required();
  evaluate->add_option("--manifest", o.manifest, "Image manifest")->required();
  evaluate->add_option("--vocab", o.vocab, "Vocabulary JSON")->required();
  evaluate->add_option("--concepts", o.concepts, "Concept embedding store")->required();
  evaluate->add_option("--out", o.out, "Output directory")->required();

  auto* similar = app.add_subcommand("holdout-similar", "Test an artist's generated images for unprecedented similarity");
  shared(similar);
  similar->add_option("--embeddings", o.embeddings, "Image embedding store")->required();
  similar->add_option("--manifest", o.manifest, "Image manifest")->required();
  similar->add_option("--artist", o.artist, "Artist id")->required();
  similar->add_option("--model", o.model, "Classifier trained on every artist (trained here if omitted)");
  similar->add_option("--out", o.out, "Verdict JSON output (stdout if omitted)");

  auto* report = app.add_subcommand("report", "Render report.md from report.json");
  report->add_option("--report", o.report, "report.json")->required();
  report->add_option("--out", o.out, "Markdown output (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    set_default_workers(o.workers);
    if (*tag) return cmd_tag(o);
    if (*compose) return cmd_compose(o);
    if (*tagmatch) return cmd_tagmatch(o);
    if (*train_cmd) return cmd_train(o);
    if (*deep) return cmd_deepmatch(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*similar) return cmd_holdout_similar(o);
    if (*report) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitValidation;
}

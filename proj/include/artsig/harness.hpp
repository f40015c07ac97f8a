#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artsig/composer.hpp"
#include "artsig/corpus.hpp"
#include "artsig/deepmatch.hpp"
#include "artsig/tagger.hpp"
#include "artsig/tagmatch.hpp"

namespace artsig {

struct PipelineConfig {
  SplitConfig split;
  TaggerConfig tagger;
  ComposerConfig composer;
  TagMatchConfig tagmatch;
  TrainConfig train;
  double majority_threshold = kMajorityThreshold;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

inline constexpr std::size_t kTopK[] = {1, 5, 10};

struct DeepMatchRow {
  std::optional<ArtistId> predicted;
  ArtistId modal = 0;
  double confidence = 0.0;        // fraction predicted to the modal artist
  double label_confidence = 0.0;  // fraction predicted to the evaluated artist
  std::size_t correct_images = 0;

  bool matched(ArtistId artist) const { return predicted && *predicted == artist; }
};

struct TagMatchRow {
  std::size_t rank = 0;  // finite rank of the evaluated artist, 0 if unranked
  std::optional<ArtistId> top1;
  bool hit[std::size(kTopK)] = {};
};

struct ArtistEvaluation {
  ArtistId artist_id = 0;
  std::string artist_name;
  std::size_t images = 0;
  DeepMatchRow deep;
  TagMatchRow tag;
  MatchResult evidence;  // TagMatch result with attribution for top-1 and the evaluated artist
  std::vector<std::uint32_t> commonality;  // per-signature sharing counts (see tag_commonality)
};

struct EvaluationAggregates {
  std::size_t artists = 0;
  std::size_t matched = 0;
  double match_rate = 0.0;  // percent
  double mean_confidence = 0.0;
  double confidence_quartiles[3] = {};
  double image_accuracy = 0.0;  // percent, pooled over images
  double topk_accuracy[std::size(kTopK)] = {};  // percent
};

struct EvaluationReport {
  std::string label;  // "holdout" or "generated:<model>"
  std::vector<ArtistEvaluation> per_artist;  // ascending artist id
  EvaluationAggregates aggregates;
  std::vector<ArtistId> skipped;  // artists without images for this protocol
};

EvaluationAggregates aggregate(std::span<const ArtistEvaluation> rows);

// Type-7 (linear interpolation) quantile of unsorted values, p in [0, 1].
double quantile_type7(std::vector<double> values, double p);

// Reference state mined from the train split and shared by every protocol.
struct ReferenceModel {
  std::vector<AtomicTagSet> tags;  // one per corpus image, row order
  ReferenceIndex index;
  Classifier classifier;
  std::vector<std::vector<AtomicTagSet>> train_tags;  // per artist
};

// Tags every image, mines per-artist profiles on the train split and trains
// the classifier. The corpus must already be split.
ReferenceModel build_reference(const Corpus& corpus, const Vocabulary& vocab, const EmbeddingStore& concepts,
                               const PipelineConfig& cfg);

// One set of images with the artist it is labelled as.
struct LabelledSet {
  ArtistId artist = 0;
  std::vector<std::size_t> rows;
};

// Runs DeepMatch and TagMatch on every set. For real sets the commonality is
// measured on the artist's reference profile, otherwise on the set's own.
EvaluationReport evaluate_sets(std::string label, std::span<const LabelledSet> sets, bool real_sets,
                               const Corpus& corpus, const ReferenceModel& model, const PipelineConfig& cfg);

// Per artist: the held-out test split. Throws DataError if an artist has none.
EvaluationReport evaluate_holdout(const Corpus& corpus, const ReferenceModel& model, const PipelineConfig& cfg);

// One report per generative-model tag found in the generated split (sorted by
// tag). Artists without generated images are listed in `skipped`.
std::vector<EvaluationReport> evaluate_generated(const Corpus& corpus, const ReferenceModel& model,
                                                 const PipelineConfig& cfg);

struct UnprecedentedVerdict {
  ArtistId artist = 0;
  ArtistId most_similar = 0;
  double false_positive_rate = 0.0;
  std::string model;  // generative-model tag of the evaluated set
  bool generated_flagged = false;
  double generated_confidence = 0.0;
  bool similar_flagged = false;
  double similar_confidence = 0.0;
  bool unprecedented = false;
};

// generated flagged AND (similar artist not flagged OR generated confidence
// strictly above the similar artist's confidence).
bool is_unprecedented(bool generated_flagged, double generated_confidence, bool similar_flagged,
                      double similar_confidence);

// b* = artist (other than a) whose test images are most often predicted as a,
// normalized by its test-set size; ties go to the lower id.
std::pair<ArtistId, double> most_similar_artist(const Corpus& corpus, const Classifier& classifier, ArtistId artist);

// Retrains without b*, then runs DeepMatch on all of b*'s real works and on
// a's generated set(s). One verdict per generative-model tag.
std::vector<UnprecedentedVerdict> unprecedented_similarity(const Corpus& corpus, ArtistId artist,
                                                           const Classifier& full_classifier,
                                                           const PipelineConfig& cfg);

struct CommonalityDistribution {
  std::vector<std::uint32_t> samples;  // one per subject signature, signature order
  std::map<std::uint32_t, std::size_t> histogram;
  double mean = 0.0;
};

// Number of other reference artists possessing each signature of the subject.
// Real reference artists are subtracted from their own counts.
CommonalityDistribution tag_commonality(const UniquenessIndex& uniqueness, const ArtistTagProfile& subject,
                                        bool is_real_artist);

struct ReportInputs {
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();
  const EvaluationReport* holdout = nullptr;
  std::vector<EvaluationReport> generated;
  std::vector<UnprecedentedVerdict> verdicts;
  const Vocabulary* vocab = nullptr;
};

nlohmann::ordered_json report_to_json(const ReportInputs& inputs);
// report.md content, rendered only from report.json.
std::string render_markdown(const nlohmann::ordered_json& report);

// Writes report.json (byte-deterministic) and report.md into out_dir.
void emit_report(const nlohmann::ordered_json& report, const std::filesystem::path& out_dir);

nlohmann::ordered_json to_json(const EvaluationReport& report, const Vocabulary* vocab);
nlohmann::ordered_json to_json(const UnprecedentedVerdict& verdict);

// Full evaluation: tag, mine, train, held-out and generated protocols.
struct EvaluationRun {
  ReferenceModel model;
  EvaluationReport holdout;
  std::vector<EvaluationReport> generated;
  nlohmann::ordered_json provenance;
};

EvaluationRun run_evaluation(const Corpus& corpus, const Vocabulary& vocab, const EmbeddingStore& concepts,
                             const PipelineConfig& cfg);

std::string hex_digest(std::uint64_t value);

}  // namespace artsig

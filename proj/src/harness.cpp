#include "artsig/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>

#include "artsig/errors.hpp"
#include "artsig/parallel.hpp"

namespace artsig {

void PipelineConfig::validate() const {
  if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1)");
  }
  tagger.validate();
  composer.validate();
  tagmatch.validate();
  train.validate();
  if (!(majority_threshold > 0.0 && majority_threshold <= 1.0)) {
    throw ValidationError("majority threshold must lie in (0, 1]");
  }
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = {{"test_fraction", split.test_fraction},
                {"min_test_per_artist", split.min_test_per_artist},
                {"seed", split.seed}};
  j["tagger"] = {{"z_threshold", tagger.z_threshold}, {"std_floor", tagger.std_floor}};
  j["composer"] = {{"min_count", composer.min_count}, {"intersection_cap", composer.intersection_cap}};
  j["tagmatch"] = {{"matches_per_artist", tagmatch.matches_per_artist}};
  j["train"] = artsig::to_json(train);
  j["majority_threshold"] = majority_threshold;
  return j;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EvaluationAggregates aggregate(std::span<const ArtistEvaluation> rows) {
  EvaluationAggregates agg;
  agg.artists = rows.size();
  if (rows.empty()) return agg;
  std::vector<double> confidences;
  std::size_t images = 0;
  std::size_t correct = 0;
  std::size_t hits[std::size(kTopK)] = {};
  double confidence_sum = 0.0;
  for (const auto& r : rows) {
    if (r.deep.matched(r.artist_id)) ++agg.matched;
    confidences.push_back(r.deep.label_confidence);
    confidence_sum += r.deep.label_confidence;
    images += r.images;
    correct += r.deep.correct_images;
    for (std::size_t k = 0; k < std::size(kTopK); ++k) hits[k] += r.tag.hit[k] ? 1 : 0;
  }
  const auto n = static_cast<double>(rows.size());
  agg.match_rate = 100.0 * static_cast<double>(agg.matched) / n;
  agg.mean_confidence = confidence_sum / n;
  agg.confidence_quartiles[0] = quantile_type7(confidences, 0.25);
  agg.confidence_quartiles[1] = quantile_type7(confidences, 0.50);
  agg.confidence_quartiles[2] = quantile_type7(confidences, 0.75);
  agg.image_accuracy = images == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(images);
  for (std::size_t k = 0; k < std::size(kTopK); ++k) agg.topk_accuracy[k] = 100.0 * static_cast<double>(hits[k]) / n;
  return agg;
}

namespace {

std::vector<AtomicTagSet> gather(std::span<const AtomicTagSet> tags, std::span<const std::size_t> rows) {
  std::vector<AtomicTagSet> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(tags[r]);
  return out;
}

std::vector<std::string> image_ids(const Corpus& corpus) {
  std::vector<std::string> ids;
  ids.reserve(corpus.images.size());
  for (const auto& img : corpus.images) ids.push_back(img.image_id);
  return ids;
}

}  // namespace

ReferenceModel build_reference(const Corpus& corpus, const Vocabulary& vocab, const EmbeddingStore& concepts,
                               const PipelineConfig& cfg) {
  cfg.validate();
  if (concepts.rows() != vocab.concept_count()) {
    throw ValidationError("concept store has " + std::to_string(concepts.rows()) + " rows, vocabulary has " +
                          std::to_string(vocab.concept_count()) + " concepts");
  }
  const auto ids = image_ids(corpus);
  auto tags = tag_corpus(cosine_similarities(corpus.embeddings, concepts), vocab, cfg.tagger, ids);

  const std::size_t artists = corpus.artist_count();
  std::vector<std::vector<AtomicTagSet>> train_tags(artists);
  for (ArtistId a = 0; a < artists; ++a) {
    const auto rows = corpus.rows_of(a, Split::kTrain);
    if (rows.empty()) throw ValidationError("artist \"" + corpus.artist_name(a) + "\" has no training images");
    train_tags[a] = gather(tags, rows);
  }
  std::vector<ArtistTagProfile> profiles(artists);
  parallel_for(artists, [&](std::size_t a) {
    profiles[a] = mine_profile(train_tags[a], cfg.composer, static_cast<ArtistId>(a));
  });

  Classifier classifier = init_classifier(corpus.embeddings.dim(), cfg.train.hidden_dim, artists, cfg.train.seed);
  classifier = train(std::move(classifier), corpus, cfg.train);

  return ReferenceModel{std::move(tags), ReferenceIndex(std::move(profiles)), std::move(classifier),
                        std::move(train_tags)};
}

CommonalityDistribution tag_commonality(const UniquenessIndex& uniqueness, const ArtistTagProfile& subject,
                                        bool is_real_artist) {
  CommonalityDistribution out;
  double sum = 0.0;
  for (const auto& entry : subject.signatures) {
    const auto it = uniqueness.find(entry.first);
    std::uint32_t n = it == uniqueness.end() ? 0 : it->second;
    if (is_real_artist && n > 0) --n;
    out.samples.push_back(n);
    ++out.histogram[n];
    sum += n;
  }
  out.mean = out.samples.empty() ? 0.0 : sum / static_cast<double>(out.samples.size());
  return out;
}

EvaluationReport evaluate_sets(std::string label, std::span<const LabelledSet> sets, bool real_sets,
                               const Corpus& corpus, const ReferenceModel& model, const PipelineConfig& cfg) {
  EvaluationReport report;
  report.label = std::move(label);
  report.per_artist.resize(sets.size());
  const auto lookup = [&](ArtistId a) -> std::span<const AtomicTagSet> { return model.train_tags.at(a); };

  parallel_for(sets.size(), [&](std::size_t i) {
    const auto& set = sets[i];
    if (set.rows.empty()) throw DataError("artist " + std::to_string(set.artist) + " has an empty evaluation set");
    auto& row = report.per_artist[i];
    row.artist_id = set.artist;
    row.artist_name = corpus.artist_name(set.artist);
    row.images = set.rows.size();

    const MatchDecision decision =
        deep_match(model.classifier, corpus.embeddings.select(set.rows), cfg.majority_threshold);
    if (decision.predicted) row.deep.predicted = static_cast<ArtistId>(*decision.predicted);
    row.deep.modal = static_cast<ArtistId>(decision.modal);
    row.deep.confidence = decision.confidence;
    row.deep.label_confidence = decision.fraction_for(set.artist);
    row.deep.correct_images =
        static_cast<std::size_t>(std::count(decision.predictions.begin(), decision.predictions.end(), set.artist));

    const TestPortfolio test = TestPortfolio::mine(gather(model.tags, set.rows), cfg.composer);
    MatchResult result = tag_match(test, model.index, cfg.tagmatch);
    attach_attribution(result, test, lookup, 1, set.artist);
    row.tag.rank = finite_rank_of(result, set.artist);
    if (!result.ranking.empty() && result.ranking.front().finite()) row.tag.top1 = result.ranking.front().artist_id;
    for (std::size_t k = 0; k < std::size(kTopK); ++k) row.tag.hit[k] = row.tag.rank != 0 && row.tag.rank <= kTopK[k];
    row.evidence = std::move(result);

    const ArtistTagProfile* subject = real_sets ? model.index.profile_of(set.artist) : &test.profile;
    if (subject != nullptr) row.commonality = tag_commonality(model.index.uniqueness(), *subject, real_sets).samples;
  });

  std::sort(report.per_artist.begin(), report.per_artist.end(),
            [](const ArtistEvaluation& a, const ArtistEvaluation& b) { return a.artist_id < b.artist_id; });
  report.aggregates = aggregate(report.per_artist);
  return report;
}

EvaluationReport evaluate_holdout(const Corpus& corpus, const ReferenceModel& model, const PipelineConfig& cfg) {
  std::vector<LabelledSet> sets;
  for (ArtistId a = 0; a < corpus.artist_count(); ++a) {
    auto rows = corpus.rows_of(a, Split::kTest);
    if (rows.empty()) throw DataError("artist \"" + corpus.artist_name(a) + "\" has no held-out images");
    sets.push_back({a, std::move(rows)});
  }
  return evaluate_sets("holdout", sets, true, corpus, model, cfg);
}

std::vector<EvaluationReport> evaluate_generated(const Corpus& corpus, const ReferenceModel& model,
                                                 const PipelineConfig& cfg) {
  std::set<std::string> models;
  for (const auto& img : corpus.images) {
    if (img.split == Split::kGenerated) models.insert(img.source);
  }
  std::vector<EvaluationReport> reports;
  for (const auto& tag : models) {
    std::vector<std::vector<std::size_t>> rows(corpus.artist_count());
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
      const auto& img = corpus.images[i];
      if (img.split == Split::kGenerated && img.source == tag) rows[img.artist_id].push_back(i);
    }
    std::vector<LabelledSet> sets;
    std::vector<ArtistId> skipped;
    for (ArtistId a = 0; a < corpus.artist_count(); ++a) {
      if (rows[a].empty()) {
        skipped.push_back(a);
      } else {
        sets.push_back({a, std::move(rows[a])});
      }
    }
    if (!skipped.empty()) {
      std::cerr << "warning: " << skipped.size() << " artist(s) have no images generated by " << tag << "; skipped\n";
    }
    auto report = evaluate_sets("generated:" + tag, sets, false, corpus, model, cfg);
    report.skipped = std::move(skipped);
    reports.push_back(std::move(report));
  }
  return reports;
}

bool is_unprecedented(bool generated_flagged, double generated_confidence, bool similar_flagged,
                      double similar_confidence) {
  return generated_flagged && (!similar_flagged || generated_confidence > similar_confidence);
}

std::pair<ArtistId, double> most_similar_artist(const Corpus& corpus, const Classifier& classifier, ArtistId artist) {
  if (corpus.artist_count() < 2) throw ValidationError("most similar artist needs at least two artists");
  std::optional<ArtistId> best;
  double best_rate = -1.0;
  for (ArtistId b = 0; b < corpus.artist_count(); ++b) {
    if (b == artist) continue;
    const auto rows = corpus.rows_of(b, Split::kTest);
    if (rows.empty()) continue;
    const auto predictions = predict_all(classifier, corpus.embeddings.select(rows));
    const auto hits = std::count(predictions.begin(), predictions.end(), artist);
    const double rate = static_cast<double>(hits) / static_cast<double>(rows.size());
    if (rate > best_rate) {
      best_rate = rate;
      best = b;
    }
  }
  if (!best) throw DataError("no other artist has held-out images");
  return {*best, best_rate};
}

std::vector<UnprecedentedVerdict> unprecedented_similarity(const Corpus& corpus, ArtistId artist,
                                                           const Classifier& full_classifier,
                                                           const PipelineConfig& cfg) {
  cfg.validate();
  if (artist >= corpus.artist_count()) throw ValidationError("unknown artist " + std::to_string(artist));
  if (corpus.artist_count() < 2) throw ValidationError("unprecedented similarity needs at least two artists");

  std::map<std::string, std::vector<std::size_t>> generated;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const auto& img = corpus.images[i];
    if (img.split == Split::kGenerated && img.artist_id == artist) generated[img.source].push_back(i);
  }
  if (generated.empty()) {
    throw DataError("artist \"" + corpus.artist_name(artist) + "\" has no generated images");
  }

  const auto [similar, rate] = most_similar_artist(corpus, full_classifier, artist);

  // Retrain on every artist except b*; classes above b* shift down by one.
  const auto to_class = [similar](ArtistId a) -> std::size_t { return a < similar ? a : a - 1; };
  const auto to_artist = [similar](std::size_t c) -> std::size_t { return c < similar ? c : c + 1; };
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  for (std::size_t r : corpus.rows_with(Split::kTrain)) {
    if (corpus.images[r].artist_id == similar) continue;
    rows.push_back(r);
    labels.push_back(to_class(corpus.images[r].artist_id));
  }
  Classifier reduced = init_classifier(corpus.embeddings.dim(), cfg.train.hidden_dim, corpus.artist_count() - 1,
                                       cfg.train.seed);
  reduced = train(std::move(reduced), corpus.embeddings.select(rows), labels, cfg.train);

  const auto decide_as_artists = [&](std::span<const std::size_t> set_rows) {
    auto predictions = predict_all(reduced, corpus.embeddings.select(set_rows));
    for (auto& p : predictions) p = to_artist(p);
    return decide(std::move(predictions), cfg.majority_threshold);
  };

  const MatchDecision similar_decision = decide_as_artists(corpus.real_rows_of(similar));
  const bool similar_flagged = similar_decision.predicted && *similar_decision.predicted == artist;
  const double similar_confidence = similar_decision.fraction_for(artist);

  std::vector<UnprecedentedVerdict> verdicts;
  for (const auto& [model, set_rows] : generated) {
    const MatchDecision gen = decide_as_artists(set_rows);
    UnprecedentedVerdict v;
    v.artist = artist;
    v.most_similar = similar;
    v.false_positive_rate = rate;
    v.model = model;
    v.generated_flagged = gen.predicted && *gen.predicted == artist;
    v.generated_confidence = gen.fraction_for(artist);
    v.similar_flagged = similar_flagged;
    v.similar_confidence = similar_confidence;
    v.unprecedented = is_unprecedented(v.generated_flagged, v.generated_confidence, v.similar_flagged,
                                       v.similar_confidence);
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

std::string hex_digest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

EvaluationRun run_evaluation(const Corpus& corpus, const Vocabulary& vocab, const EmbeddingStore& concepts,
                             const PipelineConfig& cfg) {
  ReferenceModel model = build_reference(corpus, vocab, concepts, cfg);
  EvaluationReport holdout = evaluate_holdout(corpus, model, cfg);
  std::vector<EvaluationReport> generated = evaluate_generated(corpus, model, cfg);

  std::string manifest_bytes;
  for (const auto& img : corpus.images) {
    manifest_bytes += img.image_id + '\x1f' + std::to_string(img.artist_id) + '\x1f' +
                      std::string(to_string(img.split)) + '\x1f' + img.source + '\x1e';
  }
  std::string vocab_bytes;
  for (ConceptId c = 0; c < vocab.concept_count(); ++c) vocab_bytes += vocab.caption(c) + '\x1e';

  nlohmann::ordered_json provenance;
  provenance["config"] = cfg.to_json();
  provenance["corpus"] = {{"images", corpus.images.size()},
                          {"artists", corpus.artist_count()},
                          {"embedding_dim", corpus.embeddings.dim()},
                          {"embeddings_fnv1a64", hex_digest(digest(corpus.embeddings))},
                          {"manifest_fnv1a64", hex_digest(digest(manifest_bytes))},
                          {"concepts_fnv1a64", hex_digest(digest(concepts))},
                          {"vocabulary_fnv1a64", hex_digest(digest(vocab_bytes))}};
  provenance["mean_tags_per_image"] = mean_tags_per_image(model.tags);
  std::size_t truncated = 0;
  for (const auto& p : model.index.profiles()) truncated += p.truncated_images;
  provenance["truncated_intersections"] = truncated;

  return EvaluationRun{std::move(model), std::move(holdout), std::move(generated), std::move(provenance)};
}

}  // namespace artsig

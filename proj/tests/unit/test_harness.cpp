#include <cmath>

#include <gtest/gtest.h>

#include "artsig/errors.hpp"
#include "artsig/harness.hpp"
#include "fixtures.hpp"

using namespace artsig;

namespace {

PipelineConfig small_pipeline() {
  PipelineConfig cfg;
  cfg.split.min_test_per_artist = 8;
  cfg.train.hidden_dim = 64;
  cfg.train.batch_size = 32;  // a few SGD steps per epoch on the small corpus
  return cfg;
}

// Planted corpus, split, plus a "copy" model whose generated images duplicate
// each artist's held-out embeddings.
struct CopyCorpus {
  artsig::testing::PlantedFixture fx;
  Corpus corpus;
};

CopyCorpus copy_corpus(const PipelineConfig& cfg) {
  artsig::testing::PlantedParams p;
  p.artists = 6;
  p.images_per_artist = 40;
  CopyCorpus out{artsig::testing::make_planted(p), {}};
  Corpus c = split_corpus(out.fx.corpus, cfg.split);
  std::vector<float> values(c.embeddings.values().begin(), c.embeddings.values().end());
  const auto test_rows = c.rows_with(Split::kTest);
  for (std::size_t r : test_rows) {
    ImageRecord img = c.images[r];
    img.image_id += "-copy";
    img.split = Split::kGenerated;
    img.source = "copy";
    c.images.push_back(img);
    const auto row = c.embeddings.row(r);
    values.insert(values.end(), row.begin(), row.end());
  }
  c.embeddings = EmbeddingStore(c.images.size(), c.embeddings.dim(), std::move(values));
  out.corpus = std::move(c);
  return out;
}

ArtistEvaluation row_with(ArtistId a, bool matched, double label_conf, std::size_t images, std::size_t correct,
                          std::size_t rank) {
  ArtistEvaluation e;
  e.artist_id = a;
  e.images = images;
  e.deep.confidence = label_conf;
  e.deep.label_confidence = label_conf;
  e.deep.correct_images = correct;
  if (matched) e.deep.predicted = a;
  e.tag.rank = rank;
  for (std::size_t k = 0; k < std::size(kTopK); ++k) e.tag.hit[k] = rank >= 1 && rank <= kTopK[k];
  return e;
}

}  // namespace

TEST(Quantile, Type7Examples) {
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_type7({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_type7({7}, 0.3), 7.0);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 9}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 9}, 1.0), 9.0);
}

TEST(Aggregate, HandExample) {
  const std::vector<ArtistEvaluation> rows = {row_with(0, true, 0.8, 10, 8, 1), row_with(1, false, 0.2, 30, 6, 3),
                                              row_with(2, true, 0.6, 10, 6, 0), row_with(3, true, 1.0, 10, 10, 12)};
  const auto agg = aggregate(rows);
  EXPECT_EQ(agg.artists, 4u);
  EXPECT_EQ(agg.matched, 3u);
  EXPECT_DOUBLE_EQ(agg.match_rate, 75.0);
  EXPECT_DOUBLE_EQ(agg.mean_confidence, 0.65);
  EXPECT_DOUBLE_EQ(agg.confidence_quartiles[0], 0.5);
  EXPECT_DOUBLE_EQ(agg.confidence_quartiles[1], 0.7);
  EXPECT_DOUBLE_EQ(agg.confidence_quartiles[2], 0.85);
  EXPECT_DOUBLE_EQ(agg.image_accuracy, 50.0);
  EXPECT_DOUBLE_EQ(agg.topk_accuracy[0], 25.0);
  EXPECT_DOUBLE_EQ(agg.topk_accuracy[1], 50.0);
  EXPECT_DOUBLE_EQ(agg.topk_accuracy[2], 50.0);
}

TEST(Aggregate, TopKIsNestedAndRatesBounded) {
  CounterRng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<ArtistEvaluation> rows;
    const auto n = 1 + rng.uniform_index(30);
    for (ArtistId a = 0; a < n; ++a) {
      const auto images = 1 + rng.uniform_index(20);
      const auto correct = rng.uniform_index(images + 1);
      rows.push_back(row_with(a, rng.uniform01() < 0.5, static_cast<double>(correct) / images, images, correct,
                              rng.uniform_index(15)));
    }
    const auto agg = aggregate(rows);
    EXPECT_LE(agg.topk_accuracy[0], agg.topk_accuracy[1]);
    EXPECT_LE(agg.topk_accuracy[1], agg.topk_accuracy[2]);
    EXPECT_LE(agg.topk_accuracy[2], 100.0);
    EXPECT_GE(agg.match_rate, 0.0);
    EXPECT_LE(agg.match_rate, 100.0);
    EXPECT_LE(agg.confidence_quartiles[0], agg.confidence_quartiles[1]);
    EXPECT_LE(agg.confidence_quartiles[1], agg.confidence_quartiles[2]);
  }
}

TEST(Unprecedented, DecisionRule) {
  EXPECT_TRUE(is_unprecedented(true, 0.7, false, 0.9));
  EXPECT_TRUE(is_unprecedented(true, 0.7, true, 0.6));
  EXPECT_FALSE(is_unprecedented(true, 0.6, true, 0.6));
  EXPECT_FALSE(is_unprecedented(true, 0.55, true, 0.8));
  EXPECT_FALSE(is_unprecedented(false, 0.9, false, 0.1));
}

TEST(Commonality, RealArtistExcludesItself) {
  ArtistTagProfile subject;
  subject.portfolio_size = 10;
  subject.signatures = {{TagSignature{{1}}, 4}, {TagSignature{{2}}, 4}, {TagSignature{{1, 2}}, 3}};
  const UniquenessIndex u = {{TagSignature{{1}}, 3}, {TagSignature{{2}}, 3}, {TagSignature{{1, 2}}, 5}};
  const auto generated = tag_commonality(u, subject, false);
  EXPECT_EQ(generated.samples, (std::vector<std::uint32_t>{3, 5, 3}));
  const auto real = tag_commonality(u, subject, true);
  EXPECT_EQ(real.samples, (std::vector<std::uint32_t>{2, 4, 2}));
  EXPECT_DOUBLE_EQ(real.mean, 8.0 / 3.0);
  EXPECT_EQ(real.histogram.at(2), 2u);

  const UniquenessIndex only_self = {{TagSignature{{1}}, 1}, {TagSignature{{2}}, 1}, {TagSignature{{1, 2}}, 1}};
  for (auto n : tag_commonality(only_self, subject, true).samples) EXPECT_EQ(n, 0u);
  const UniquenessIndex none;
  for (auto n : tag_commonality(none, subject, false).samples) EXPECT_EQ(n, 0u);
}

TEST(Config, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.majority_threshold = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.split.test_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new PipelineConfig(small_pipeline());
    data_ = new CopyCorpus(copy_corpus(*cfg_));
    run_ = new EvaluationRun(run_evaluation(data_->corpus, data_->fx.vocab, data_->fx.concepts, *cfg_));
  }
  static void TearDownTestSuite() {
    delete run_;
    delete data_;
    delete cfg_;
  }
  static PipelineConfig* cfg_;
  static CopyCorpus* data_;
  static EvaluationRun* run_;
};

PipelineConfig* PipelineTest::cfg_ = nullptr;
CopyCorpus* PipelineTest::data_ = nullptr;
EvaluationRun* PipelineTest::run_ = nullptr;

TEST_F(PipelineTest, CopiedTestImagesScoreLikeTheHoldout) {
  ASSERT_EQ(run_->generated.size(), 1u);
  const auto& gen = run_->generated[0];
  EXPECT_EQ(gen.label, "generated:copy");
  ASSERT_EQ(gen.per_artist.size(), run_->holdout.per_artist.size());
  for (std::size_t i = 0; i < gen.per_artist.size(); ++i) {
    const auto& g = gen.per_artist[i];
    const auto& h = run_->holdout.per_artist[i];
    EXPECT_EQ(g.artist_id, h.artist_id);
    EXPECT_EQ(g.images, h.images);
    EXPECT_EQ(g.deep.predicted, h.deep.predicted);
    EXPECT_EQ(g.deep.confidence, h.deep.confidence);
    EXPECT_EQ(g.deep.label_confidence, h.deep.label_confidence);
    EXPECT_EQ(g.tag.rank, h.tag.rank);
    EXPECT_EQ(g.tag.top1, h.tag.top1);
    ASSERT_EQ(g.evidence.ranking.size(), h.evidence.ranking.size());
    for (std::size_t r = 0; r < g.evidence.ranking.size(); ++r) {
      EXPECT_EQ(g.evidence.ranking[r].artist_id, h.evidence.ranking[r].artist_id);
      EXPECT_EQ(g.evidence.ranking[r].score, h.evidence.ranking[r].score);
    }
  }
  EXPECT_EQ(gen.aggregates.match_rate, run_->holdout.aggregates.match_rate);
}

TEST_F(PipelineTest, PlantedArtistsAreRecognized) {
  EXPECT_DOUBLE_EQ(run_->holdout.aggregates.match_rate, 100.0);
  EXPECT_DOUBLE_EQ(run_->holdout.aggregates.topk_accuracy[0], 100.0);
}

TEST_F(PipelineTest, ReportIsDeterministicAndCarriesEvidence) {
  ReportInputs in;
  in.provenance = run_->provenance;
  in.holdout = &run_->holdout;
  in.generated = run_->generated;
  in.vocab = &data_->fx.vocab;
  const auto a = report_to_json(in).dump(2);
  const auto b = report_to_json(in).dump(2);
  EXPECT_EQ(a, b);
  const auto j = nlohmann::json::parse(a);
  const auto& first = j["holdout"]["per_artist"][0];
  EXPECT_TRUE(first.contains("deepmatch"));
  EXPECT_TRUE(first.contains("tagmatch"));
  const auto& evidence = first["evidence"];
  ASSERT_FALSE(evidence["ranking"].empty());
  ASSERT_FALSE(evidence["attribution"].empty());
  const auto& att = evidence["attribution"][0];
  EXPECT_TRUE(att.contains("tags"));
  EXPECT_TRUE(att.contains("names"));
  EXPECT_FALSE(att["test_images"].empty());
  EXPECT_FALSE(att["reference_images"].empty());
  EXPECT_TRUE(j["provenance"].contains("config"));
  EXPECT_EQ(j["generated"].size(), 1u);

  const auto md = render_markdown(report_to_json(in));
  EXPECT_NE(md.find("Style recognizability"), std::string::npos);
  EXPECT_NE(md.find("TagMatch evidence"), std::string::npos);
}

TEST_F(PipelineTest, UnrecognizedArtistGetsNoUniqueStyleNotice) {
  auto holdout = run_->holdout;
  holdout.per_artist[0].deep.predicted.reset();
  ReportInputs in;
  in.holdout = &holdout;
  in.vocab = &data_->fx.vocab;
  const auto md = render_markdown(report_to_json(in));
  EXPECT_NE(md.find("No unique style detected."), std::string::npos);
}

TEST_F(PipelineTest, UnprecedentedVerdictUsesRetrainedClassifier) {
  const auto verdicts = unprecedented_similarity(data_->corpus, 0, run_->model.classifier, *cfg_);
  ASSERT_EQ(verdicts.size(), 1u);
  const auto& v = verdicts[0];
  EXPECT_EQ(v.artist, 0u);
  EXPECT_NE(v.most_similar, 0u);
  EXPECT_EQ(v.model, "copy");
  EXPECT_EQ(v.unprecedented,
            is_unprecedented(v.generated_flagged, v.generated_confidence, v.similar_flagged, v.similar_confidence));
  // Planted artists are well separated: a's copies stay a, b*'s works do not become a.
  EXPECT_TRUE(v.unprecedented);
}

TEST(Holdout, ArtistWithoutTestImagesIsADataError) {
  auto cfg = small_pipeline();
  auto data = copy_corpus(cfg);
  for (auto& img : data.corpus.images) {
    if (img.artist_id == 1 && img.split == Split::kTest) img.split = Split::kTrain;
  }
  const auto model = build_reference(data.corpus, data.fx.vocab, data.fx.concepts, cfg);
  EXPECT_THROW(evaluate_holdout(data.corpus, model, cfg), DataError);
}

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "artsig/corpus.hpp"
#include "artsig/errors.hpp"
#include "artsig/parallel.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace artsig;
using artsig::testing::arts_bytes;
using artsig::testing::random_store;
using artsig::testing::scratch_dir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

Corpus toy_corpus(const std::vector<std::size_t>& sizes) {
  Corpus c;
  std::size_t rows = 0;
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    c.artists.push_back({static_cast<ArtistId>(a), "artist" + std::to_string(a)});
    for (std::size_t i = 0; i < sizes[a]; ++i) {
      ImageRecord r;
      r.image_id = std::to_string(a) + "/" + std::to_string(i);
      r.artist_id = static_cast<ArtistId>(a);
      c.images.push_back(r);
      ++rows;
    }
  }
  c.embeddings = EmbeddingStore(rows, 1, std::vector<float>(rows, 1.0f));
  return c;
}

}  // namespace

TEST(EmbeddingStore, RoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  CounterRng rng(11);
  const auto store = random_store(rng, 17, 9);
  write_embedding_store(store, dir / "a.arts");
  const auto back = read_embedding_store(dir / "a.arts");
  EXPECT_EQ(back, store);
}

TEST(EmbeddingStore, WritesAreByteDeterministic) {
  const auto dir = scratch_dir("determinism");
  CounterRng rng(12);
  const auto store = random_store(rng, 5, 3);
  write_embedding_store(store, dir / "a.arts");
  write_embedding_store(store, dir / "b.arts");
  EXPECT_EQ(slurp(dir / "a.arts"), slurp(dir / "b.arts"));
}

TEST(EmbeddingStore, HeaderLayout) {
  const auto dir = scratch_dir("layout");
  const EmbeddingStore store(1, 2, {0.6f, 0.8f});
  write_embedding_store(store, dir / "a.arts");
  const auto bytes = slurp(dir / "a.arts");
  ASSERT_EQ(bytes.size(), 24u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "ARTS");
  EXPECT_EQ(bytes, arts_bytes("ARTS", 1, 1, 2, {0.6f, 0.8f}));
}

TEST(EmbeddingStore, BadMagicIsFormatError) {
  const auto dir = scratch_dir("magic");
  dump(dir / "x.arts", arts_bytes("XXXX", 1, 1, 2, {0.6f, 0.8f}));
  EXPECT_THROW(read_embedding_store(dir / "x.arts"), FormatError);
}

TEST(EmbeddingStore, BadVersionAndTruncationAreFormatErrors) {
  const auto dir = scratch_dir("version");
  dump(dir / "v.arts", arts_bytes("ARTS", 2, 1, 2, {0.6f, 0.8f}));
  EXPECT_THROW(read_embedding_store(dir / "v.arts"), FormatError);
  dump(dir / "t.arts", arts_bytes("ARTS", 1, 2, 2, {0.6f, 0.8f}));
  EXPECT_THROW(read_embedding_store(dir / "t.arts"), FormatError);
  dump(dir / "h.arts", std::string("ARTS\x01\x00", 6));
  EXPECT_THROW(read_embedding_store(dir / "h.arts"), FormatError);
}

TEST(EmbeddingStore, ZeroRowIsDataError) {
  const auto dir = scratch_dir("zero");
  std::vector<float> v = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0};
  dump(dir / "z.arts", arts_bytes("ARTS", 1, 3, 4, v));
  EXPECT_THROW(read_embedding_store(dir / "z.arts"), DataError);
}

TEST(EmbeddingStore, NanIsDataError) {
  const auto dir = scratch_dir("nan");
  dump(dir / "n.arts", arts_bytes("ARTS", 1, 1, 2, {std::numeric_limits<float>::quiet_NaN(), 1.0f}));
  EXPECT_THROW(read_embedding_store(dir / "n.arts"), DataError);
}

TEST(EmbeddingStore, SmallNormDriftIsRenormalizedWithWarning) {
  const auto dir = scratch_dir("drift");
  dump(dir / "d.arts", arts_bytes("ARTS", 1, 2, 2, {0.6f * 1.003f, 0.8f * 1.003f, 1.0f, 0.0f}));
  std::vector<std::string> warnings;
  const auto store = read_embedding_store(dir / "d.arts", &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NEAR(store.row(0)[0], 0.6f, 1e-6);
  EXPECT_NEAR(store.row(0)[1], 0.8f, 1e-6);
  EXPECT_NO_THROW(validate_store(store));
}

TEST(EmbeddingStore, LargeNormDriftIsDataError) {
  const auto dir = scratch_dir("bigdrift");
  dump(dir / "d.arts", arts_bytes("ARTS", 1, 1, 2, {0.6f * 1.02f, 0.8f * 1.02f}));
  EXPECT_THROW(read_embedding_store(dir / "d.arts"), DataError);
}

TEST(EmbeddingStore, ZeroDimensionIsRejectedOnWrite) {
  const auto dir = scratch_dir("d0");
  const EmbeddingStore store(0, 0, {});
  EXPECT_THROW(write_embedding_store(store, dir / "d0.arts"), ValidationError);
}

TEST(EmbeddingStore, EmptyStoreRoundTrips) {
  const auto dir = scratch_dir("empty");
  const EmbeddingStore store(0, 4, {});
  write_embedding_store(store, dir / "e.arts");
  EXPECT_EQ(read_embedding_store(dir / "e.arts"), store);
}

TEST(EmbeddingStore, NonUnitStoreIsRejectedOnWrite) {
  const auto dir = scratch_dir("nonunit");
  EXPECT_THROW(write_embedding_store(EmbeddingStore(1, 2, {1.0f, 1.0f}), dir / "x.arts"), ValidationError);
}

TEST(Cosine, IdentityOrthogonalityAndHandExample) {
  const EmbeddingStore a(3, 2, {1, 0, 0, 1, 0.6f, 0.8f});
  const EmbeddingStore b(1, 2, {1, 0});
  const auto s = cosine_similarities(a, b);
  EXPECT_DOUBLE_EQ(s.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.at(1, 0), 0.0);
  EXPECT_NEAR(s.at(2, 0), 0.6, 1e-7);
}

TEST(Cosine, DimensionMismatchIsValidationError) {
  EXPECT_THROW(cosine_similarities(EmbeddingStore(1, 2, {1, 0}), EmbeddingStore(1, 3, {1, 0, 0})),
               ValidationError);
}

TEST(Cosine, SymmetricAndClamped) {
  CounterRng rng(3);
  const auto a = random_store(rng, 13, 6);
  const auto b = random_store(rng, 7, 6);
  const auto ab = cosine_similarities(a, b);
  const auto ba = cosine_similarities(b, a);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      EXPECT_NEAR(ab.at(i, j), ba.at(j, i), 1e-6);
      EXPECT_LE(std::abs(ab.at(i, j)), 1.0);
    }
  }
}

TEST(Cosine, IndependentOfWorkerCount) {
  CounterRng rng(4);
  const auto a = random_store(rng, 101, 8);
  const auto b = random_store(rng, 9, 8);
  set_default_workers(1);
  const auto one = cosine_similarities(a, b);
  set_default_workers(8);
  const auto many = cosine_similarities(a, b);
  set_default_workers(1);
  EXPECT_EQ(one.values, many.values);
}

TEST(Split, HundredImagesGiveTwentyTest) {
  const auto c = split_corpus(toy_corpus({100}), {0.2, 20, 1});
  EXPECT_EQ(c.rows_of(0, Split::kTest).size(), 20u);
  EXPECT_EQ(c.rows_of(0, Split::kTrain).size(), 80u);
}

TEST(Split, MinimumIsAHardFloor) {
  const auto c = split_corpus(toy_corpus({30}), {0.2, 20, 1});
  EXPECT_EQ(c.rows_of(0, Split::kTest).size(), 20u);
  EXPECT_EQ(test_count_for(101, {0.2, 20, 0}), 21u);
}

TEST(Split, TooFewImagesNamesTheArtist) {
  try {
    split_corpus(toy_corpus({50, 10}), {0.2, 20, 1});
    FAIL() << "expected a split error";
  } catch (const SplitError& e) {
    EXPECT_NE(std::string(e.what()).find("artist1"), std::string::npos);
  }
}

TEST(Split, FractionOutsideUnitIntervalIsRejected) {
  EXPECT_THROW(split_corpus(toy_corpus({50}), {1.0, 1, 1}), ValidationError);
  EXPECT_THROW(split_corpus(toy_corpus({50}), {0.0, 1, 1}), ValidationError);
}

TEST(Split, DeterministicGivenSeedAndSeedSensitive) {
  const auto a = split_corpus(toy_corpus({60, 45}), {0.2, 10, 9});
  const auto b = split_corpus(toy_corpus({60, 45}), {0.2, 10, 9});
  const auto c = split_corpus(toy_corpus({60, 45}), {0.2, 10, 10});
  EXPECT_EQ(a.rows_of(0, Split::kTest), b.rows_of(0, Split::kTest));
  EXPECT_EQ(a.rows_of(1, Split::kTest), b.rows_of(1, Split::kTest));
  EXPECT_NE(a.rows_of(0, Split::kTest), c.rows_of(0, Split::kTest));
}

TEST(Split, PartitionsRealImagesAndLeavesGeneratedAlone) {
  auto corpus = toy_corpus({40, 40});
  for (int i = 0; i < 5; ++i) {
    ImageRecord r;
    r.image_id = "gen" + std::to_string(i);
    r.artist_id = 1;
    r.split = Split::kGenerated;
    r.source = "model";
    corpus.images.push_back(r);
  }
  corpus.embeddings = EmbeddingStore(85, 1, std::vector<float>(85, 1.0f));
  const auto c = split_corpus(corpus, {0.25, 5, 3});
  for (ArtistId a = 0; a < 2; ++a) {
    const auto test = c.rows_of(a, Split::kTest);
    const auto train = c.rows_of(a, Split::kTrain);
    std::set<std::size_t> all(test.begin(), test.end());
    all.insert(train.begin(), train.end());
    EXPECT_EQ(all.size(), 40u);
    EXPECT_EQ(test.size() + train.size(), 40u);
  }
  EXPECT_EQ(c.rows_with(Split::kGenerated).size(), 5u);
  EXPECT_TRUE(c.rows_with(Split::kUnassigned).empty());
}

TEST(Corpus, ValidateCatchesBrokenInvariants) {
  auto c = toy_corpus({3, 2});
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(c.validate(true), DataError);

  auto dup = c;
  dup.images[1].image_id = dup.images[0].image_id;
  EXPECT_THROW(dup.validate(), DataError);

  auto bad_artist = c;
  bad_artist.images[0].artist_id = 9;
  EXPECT_THROW(bad_artist.validate(), DataError);

  auto gen = c;
  gen.images[0].split = Split::kGenerated;
  EXPECT_THROW(gen.validate(), DataError);

  auto rows = c;
  rows.embeddings = EmbeddingStore(4, 1, std::vector<float>(4, 1.0f));
  EXPECT_THROW(rows.validate(), DataError);
}

TEST(Manifest, RoundTrip) {
  const auto dir = scratch_dir("manifest");
  auto c = toy_corpus({2, 3});
  c.images[0].title = "the starry night";
  c.images[4].split = Split::kGenerated;
  c.images[4].source = "model-x";
  write_manifest({c.artists, c.images}, dir / "m.json");
  const auto m = read_manifest(dir / "m.json");
  ASSERT_EQ(m.images.size(), c.images.size());
  ASSERT_EQ(m.artists.size(), 2u);
  EXPECT_EQ(m.artists[1].name, "artist1");
  EXPECT_EQ(m.images[0].title, "the starry night");
  EXPECT_EQ(m.images[4].split, Split::kGenerated);
  EXPECT_EQ(m.images[4].source, "model-x");
  EXPECT_EQ(m.images[3].image_id, c.images[3].image_id);
}

TEST(Manifest, MalformedJsonIsFormatError) {
  const auto dir = scratch_dir("badmanifest");
  dump(dir / "m.json", "{not json");
  EXPECT_THROW(read_manifest(dir / "m.json"), FormatError);
}

TEST(Manifest, LoadCorpusChecksRowCount) {
  const auto dir = scratch_dir("loadcorpus");
  auto c = toy_corpus({2, 2});
  write_manifest({c.artists, c.images}, dir / "m.json");
  write_embedding_store(EmbeddingStore(3, 1, {1, 1, 1}), dir / "e.arts");
  EXPECT_THROW(load_corpus(dir / "e.arts", dir / "m.json"), DataError);
}

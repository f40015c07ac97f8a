#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "artsig/composer.hpp"
#include "artsig/corpus.hpp"
#include "artsig/rng.hpp"
#include "artsig/tagger.hpp"

namespace artsig::testing {

// Bundled vocabulary shipped in data/.
std::filesystem::path data_dir();
Vocabulary bundled_vocabulary();

// Random unit-norm store.
EmbeddingStore random_store(CounterRng& rng, std::size_t n, std::size_t d);

// Synthetic corpus with planted tag signatures and clustered embeddings.
//
// Each embedding is [cluster part | concept part]. The concept part has one
// coordinate per vocabulary concept and concept embeddings are the matching
// one-hot rows, so an image's similarity to a concept is proportional to that
// coordinate. Present concepts get a value in [0.8, 1]; absent ones are 0, so
// aspects without a present concept have zero spread and stay untagged.
//
// Every artist owns `core_per_artist` concepts from distinct aspects that no
// other artist ever uses. Noise tags come from the concepts nobody owns.
struct PlantedParams {
  std::size_t artists = 20;
  std::size_t images_per_artist = 60;
  std::size_t core_per_artist = 4;
  double core_presence = 0.9;
  double noise_fraction = 0.3;  // target share of noise among an image's tags
  std::size_t cluster_dims = 32;
  double sigma = 1.0;        // noise norm of the cluster part
  double separation = 4.0;   // pairwise centroid distance in units of sigma
  std::size_t generated_per_artist = 0;
  std::vector<std::string> generated_models = {"model-a"};
  std::uint64_t seed = 7;
};

struct PlantedFixture {
  Corpus corpus;  // real images unassigned, generated images tagged by model
  Vocabulary vocab;
  EmbeddingStore concepts;
  std::vector<std::vector<ConceptId>> cores;  // per artist
  std::vector<AtomicTagSet> planted_tags;     // tags each image was built to carry
};

PlantedFixture make_planted(const PlantedParams& params);

// Writes embeddings.arts, manifest.json, concepts.arts and vocabulary.json.
void write_fixture(const PlantedFixture& fixture, const std::filesystem::path& dir);

// Minimal ARTS header bytes followed by payload (for malformed-file fixtures).
std::string arts_bytes(const char magic[4], std::uint32_t version, std::uint64_t n, std::uint64_t d,
                       const std::vector<float>& values);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace artsig::testing

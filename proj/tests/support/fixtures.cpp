#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#ifndef ARTSIG_DATA_DIR
#error "ARTSIG_DATA_DIR must point at the bundled data directory"
#endif

namespace artsig::testing {

namespace fs = std::filesystem;

fs::path data_dir() { return fs::path(ARTSIG_DATA_DIR); }

Vocabulary bundled_vocabulary() { return load_vocabulary(data_dir() / "vocabulary.json"); }

EmbeddingStore random_store(CounterRng& rng, std::size_t n, std::size_t d) {
  std::vector<float> values(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (;;) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        values[i * d + j] = static_cast<float>(rng.normal());
        norm += double(values[i * d + j]) * values[i * d + j];
      }
      if (norm > 1e-6) break;
    }
  }
  return EmbeddingStore::normalized(n, d, std::move(values));
}

namespace {

// How many present concepts an aspect can carry while each still clears a
// z-score of 1.5 (two of ten already gives z = 2).
std::size_t aspect_capacity(std::size_t size) { return std::clamp<std::size_t>(size / 5, 1, 2); }

struct Builder {
  const PlantedParams& p;
  PlantedFixture& fx;
  std::vector<bool> owned;
  std::vector<ConceptId> pool;

  void assign_cores() {
    const auto& aspects = fx.vocab.aspects();
    if (p.core_per_artist > aspects.size()) throw std::invalid_argument("more cores than aspects");
    owned.assign(fx.vocab.concept_count(), false);
    std::vector<ConceptId> next(aspects.size());
    for (std::size_t a = 0; a < aspects.size(); ++a) next[a] = fx.vocab.aspect_range(a).first;
    fx.cores.assign(p.artists, {});
    std::size_t cursor = 0;
    for (std::size_t artist = 0; artist < p.artists; ++artist) {
      for (std::size_t j = 0; j < p.core_per_artist; ++j) {
        std::size_t tries = 0;
        for (;; cursor = (cursor + 1) % aspects.size()) {
          if (++tries > aspects.size()) throw std::invalid_argument("vocabulary too small for planted cores");
          if (next[cursor] < fx.vocab.aspect_range(cursor).second) break;
        }
        fx.cores[artist].push_back(next[cursor]++);
        owned[fx.cores[artist].back()] = true;
        cursor = (cursor + 1) % aspects.size();
      }
      std::sort(fx.cores[artist].begin(), fx.cores[artist].end());
    }
    for (ConceptId c = 0; c < fx.vocab.concept_count(); ++c) {
      if (!owned[c]) pool.push_back(c);
    }
  }

  // Concept coordinates and tags for one image of the artist.
  std::vector<ConceptId> draw_tags(std::size_t artist, CounterRng& rng) {
    std::vector<ConceptId> tags;
    for (ConceptId c : fx.cores[artist]) {
      if (rng.uniform01() < p.core_presence) tags.push_back(c);
    }
    const double expected_core = p.core_presence * static_cast<double>(p.core_per_artist);
    const double noise_mean = expected_core * p.noise_fraction / (1.0 - p.noise_fraction);
    std::size_t noise = static_cast<std::size_t>(noise_mean);
    if (rng.uniform01() < noise_mean - std::floor(noise_mean)) ++noise;

    std::vector<std::size_t> per_aspect(fx.vocab.aspects().size());
    for (ConceptId c : tags) ++per_aspect[fx.vocab.aspect_of(c)];
    for (std::size_t added = 0, tries = 0; added < noise && tries < 1000 && !pool.empty(); ++tries) {
      const ConceptId c = pool[rng.uniform_index(pool.size())];
      const std::size_t a = fx.vocab.aspect_of(c);
      const auto [first, last] = fx.vocab.aspect_range(a);
      if (std::find(tags.begin(), tags.end(), c) != tags.end()) continue;
      if (per_aspect[a] >= aspect_capacity(last - first)) continue;
      ++per_aspect[a];
      tags.push_back(c);
      ++added;
    }
    std::sort(tags.begin(), tags.end());
    return tags;
  }

  void add_image(std::size_t artist, std::string id, Split split, std::string source, CounterRng& rng) {
    const std::size_t cd = p.cluster_dims;
    const std::size_t d = cd + fx.vocab.concept_count();
    std::vector<float> row(d, 0.0f);
    const double radius = p.separation * p.sigma / std::sqrt(2.0);
    for (std::size_t j = 0; j < cd; ++j) {
      const double centre = j == artist ? radius : 0.0;
      row[j] = static_cast<float>(centre + rng.normal() * p.sigma / std::sqrt(static_cast<double>(cd)));
    }
    auto tags = draw_tags(artist, rng);
    for (ConceptId c : tags) row[cd + c] = static_cast<float>(rng.uniform(0.8, 1.0));
    rows.insert(rows.end(), row.begin(), row.end());

    ImageRecord rec;
    rec.image_id = id;
    rec.artist_id = static_cast<ArtistId>(artist);
    rec.title = "work " + id;
    rec.split = split;
    rec.source = std::move(source);
    fx.corpus.images.push_back(std::move(rec));
    fx.planted_tags.push_back({std::move(id), std::move(tags)});
  }

  std::vector<float> rows;
};

}  // namespace

PlantedFixture make_planted(const PlantedParams& params) {
  if (params.artists > params.cluster_dims) throw std::invalid_argument("need one cluster axis per artist");
  PlantedFixture fx;
  fx.vocab = bundled_vocabulary();
  Builder b{params, fx, {}, {}, {}};
  b.assign_cores();

  for (std::size_t a = 0; a < params.artists; ++a) {
    fx.corpus.artists.push_back({static_cast<ArtistId>(a), "Artist " + std::to_string(a)});
  }
  for (std::size_t a = 0; a < params.artists; ++a) {
    CounterRng rng(params.seed, a);
    for (std::size_t i = 0; i < params.images_per_artist; ++i) {
      b.add_image(a, "a" + std::to_string(a) + "-" + std::to_string(i), Split::kUnassigned, std::string(kRealSource), rng);
    }
  }
  for (std::size_t m = 0; m < params.generated_models.size() && params.generated_per_artist > 0; ++m) {
    const auto& model = params.generated_models[m];
    for (std::size_t a = 0; a < params.artists; ++a) {
      CounterRng rng(params.seed ^ 0x9e3779b97f4a7c15ULL, a * 131 + m);
      for (std::size_t i = 0; i < params.generated_per_artist; ++i) {
        b.add_image(a, "a" + std::to_string(a) + "-" + model + "-" + std::to_string(i), Split::kGenerated, model,
                    rng);
      }
    }
  }

  const std::size_t d = params.cluster_dims + fx.vocab.concept_count();
  fx.corpus.embeddings = EmbeddingStore::normalized(fx.corpus.images.size(), d, std::move(b.rows));

  std::vector<float> concept_rows(fx.vocab.concept_count() * d, 0.0f);
  for (ConceptId c = 0; c < fx.vocab.concept_count(); ++c) concept_rows[c * d + params.cluster_dims + c] = 1.0f;
  fx.concepts = EmbeddingStore(fx.vocab.concept_count(), d, std::move(concept_rows));
  return fx;
}

void write_fixture(const PlantedFixture& fixture, const fs::path& dir) {
  fs::create_directories(dir);
  write_embedding_store(fixture.corpus.embeddings, dir / "embeddings.arts");
  write_embedding_store(fixture.concepts, dir / "concepts.arts");
  write_manifest({fixture.corpus.artists, fixture.corpus.images}, dir / "manifest.json");
  fs::copy_file(data_dir() / "vocabulary.json", dir / "vocabulary.json", fs::copy_options::overwrite_existing);
}

std::string arts_bytes(const char magic[4], std::uint32_t version, std::uint64_t n, std::uint64_t d,
                       const std::vector<float>& values) {
  std::string out(magic, 4);
  const auto put = [&out](const void* p, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < size; ++i) out.push_back(static_cast<char>(bytes[i]));
  };
  // Test hosts are little-endian; the library itself does not assume so.
  put(&version, 4);
  put(&n, 8);
  put(&d, 8);
  for (float v : values) put(&v, 4);
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("artsig-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace artsig::testing

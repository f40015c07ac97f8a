#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artsig {

using ArtistId = std::uint32_t;

enum class Split { kTrain, kTest, kGenerated, kUnassigned };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

inline constexpr std::string_view kRealSource = "real";

struct ImageRecord {
  std::string image_id;
  ArtistId artist_id = 0;
  std::string title;
  Split split = Split::kUnassigned;
  // "real" for works by the artist; otherwise the tag of the generative model
  // that produced the image (e.g. "sd-v1.4").
  std::string source{kRealSource};

  bool is_real() const { return source == kRealSource; }
};

struct ArtistRecord {
  ArtistId id = 0;
  std::string name;
};

// n x d row-major float32 matrix. Rows of a valid store are unit vectors; the
// container itself only enforces the shape so that invalid stores can be built
// and rejected by the readers and writers.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t n, std::size_t d, std::vector<float> values);

  // L2-normalizes every row. Zero rows raise DataError.
  static EmbeddingStore normalized(std::size_t n, std::size_t d, std::vector<float> values);

  std::size_t rows() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const float> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  std::span<const float> values() const { return values_; }

  EmbeddingStore select(std::span<const std::size_t> row_indices) const;

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 1;
  std::vector<float> values_;
};

inline constexpr double kUnitNormTolerance = 1e-4;
inline constexpr double kRenormalizeLimit = 1e-2;

// Throws ValidationError unless d >= 1, all entries are finite and every row
// norm is within kUnitNormTolerance of one.
void validate_store(const EmbeddingStore& store);

// "ARTS" container: magic, u32 version, u64 n, u64 d, n*d float32, all LE.
EmbeddingStore read_embedding_store(const std::filesystem::path& path,
                                    std::vector<std::string>* warnings = nullptr);
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path);

// Raw section I/O shared with the classifier checkpoint. No norm checks.
struct MatrixSection {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> values;
};
void write_matrix_section(std::ostream& out, std::size_t n, std::size_t d,
                          std::span<const float> values);
MatrixSection read_matrix_section(std::istream& in);

struct Corpus {
  std::vector<ImageRecord> images;
  std::vector<ArtistRecord> artists;
  EmbeddingStore embeddings;

  // Throws DataError when an invariant is broken. A reference-grade corpus
  // additionally needs kReferenceGradeMinImages real works per artist.
  void validate(bool reference_grade = false) const;

  std::size_t artist_count() const { return artists.size(); }
  const std::string& artist_name(ArtistId id) const { return artists.at(id).name; }

  // Row indices of the artist's images with the given split, in record order.
  std::vector<std::size_t> rows_of(ArtistId artist, Split split) const;
  // Real images of the artist regardless of split.
  std::vector<std::size_t> real_rows_of(ArtistId artist) const;
  // Row indices with the given split across all artists.
  std::vector<std::size_t> rows_with(Split split) const;
};

inline constexpr std::size_t kReferenceGradeMinImages = 100;

struct Manifest {
  std::vector<ArtistRecord> artists;
  std::vector<ImageRecord> images;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

Corpus load_corpus(const std::filesystem::path& embeddings, const std::filesystem::path& manifest,
                   std::vector<std::string>* warnings = nullptr);

struct SplitConfig {
  double test_fraction = 0.2;
  std::size_t min_test_per_artist = 20;
  std::uint64_t seed = 0;
};

// Stratified per-artist train/test assignment of the real images. Generated
// images keep their split.
Corpus split_corpus(Corpus corpus, const SplitConfig& cfg);

// Number of test images split_corpus assigns to a portfolio of the given size.
std::size_t test_count_for(std::size_t portfolio_size, const SplitConfig& cfg);

struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

SimilarityMatrix cosine_similarities(const EmbeddingStore& images, const EmbeddingStore& concepts);

// FNV-1a over the store's shape and float bytes; used as a provenance digest.
std::uint64_t digest(const EmbeddingStore& store);
std::uint64_t digest(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace artsig

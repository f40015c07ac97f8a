#include "artsig/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "artsig/errors.hpp"
#include "artsig/parallel.hpp"
#include "artsig/rng.hpp"
#include "io_util.hpp"

namespace artsig {

using detail::read_file;
using detail::write_file;

namespace {

constexpr char kMagic[4] = {'A', 'R', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 24;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void encode_floats(std::span<const float> values, std::string& out) {
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * 4);
  char* dst = out.data() + offset;
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(dst, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) dst[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
}

void decode_floats(const unsigned char* src, std::size_t count, std::vector<float>& out) {
  out.resize(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count != 0) std::memcpy(out.data(), src, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32(src + 4 * i));
  }
}

struct Header {
  std::uint64_t n;
  std::uint64_t d;
};

Header parse_header(const unsigned char* bytes) {
  if (std::memcmp(bytes, kMagic, 4) != 0) throw FormatError("bad magic: expected \"ARTS\"");
  const std::uint32_t version = get_u32(bytes + 4);
  if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version));
  const Header h{get_u64(bytes + 8), get_u64(bytes + 16)};
  if (h.d == 0) throw FormatError("dimensionality must be at least 1");
  if (h.n > std::numeric_limits<std::uint64_t>::max() / 4 / h.d) throw FormatError("n*d overflows");
  return h;
}

double row_norm(std::span<const float> row) {
  double sq = 0.0;
  for (float v : row) sq += static_cast<double>(v) * v;
  return std::sqrt(sq);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kGenerated: return "generated";
    case Split::kUnassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  if (text == "generated") return Split::kGenerated;
  if (text == "unassigned" || text.empty()) return Split::kUnassigned;
  throw DataError("unknown split \"" + std::string(text) + "\"");
}

EmbeddingStore::EmbeddingStore(std::size_t n, std::size_t d, std::vector<float> values)
    : n_(n), d_(d), values_(std::move(values)) {
  if (values_.size() != n * d) {
    throw ValidationError("embedding store shape " + std::to_string(n) + "x" + std::to_string(d) +
                          " does not match " + std::to_string(values_.size()) + " values");
  }
}

EmbeddingStore EmbeddingStore::normalized(std::size_t n, std::size_t d, std::vector<float> values) {
  EmbeddingStore store(n, d, std::move(values));
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = row_norm(store.row(i));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DataError("row " + std::to_string(i) + " cannot be normalized");
    }
    for (std::size_t j = 0; j < d; ++j) {
      float& v = store.values_[i * d + j];
      v = static_cast<float>(v / norm);
    }
  }
  return store;
}

EmbeddingStore EmbeddingStore::select(std::span<const std::size_t> row_indices) const {
  std::vector<float> out;
  out.reserve(row_indices.size() * d_);
  for (std::size_t r : row_indices) {
    const auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return EmbeddingStore(row_indices.size(), d_, std::move(out));
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.n_ != b.n_ || a.d_ != b.d_) return false;
  return a.values_.empty() ||
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

void validate_store(const EmbeddingStore& store) {
  if (store.dim() < 1) throw ValidationError("embedding dimensionality must be at least 1");
  for (std::size_t i = 0; i < store.rows(); ++i) {
    const auto row = store.row(i);
    for (float v : row) {
      if (!std::isfinite(v)) throw ValidationError("row " + std::to_string(i) + " has a non-finite entry");
    }
    const double norm = row_norm(row);
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw ValidationError("row " + std::to_string(i) + " is not unit norm (" + std::to_string(norm) + ")");
    }
  }
}

void write_matrix_section(std::ostream& out, std::size_t n, std::size_t d, std::span<const float> values) {
  if (values.size() != n * d) throw ValidationError("matrix section shape mismatch");
  std::string bytes;
  bytes.reserve(kHeaderBytes + values.size() * 4);
  bytes.append(kMagic, 4);
  put_u32(bytes, kVersion);
  put_u64(bytes, n);
  put_u64(bytes, d);
  encode_floats(values, bytes);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed to write matrix section");
}

MatrixSection read_matrix_section(std::istream& in) {
  unsigned char header[kHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError("truncated header");
  const Header h = parse_header(header);
  const std::size_t count = h.n * h.d;
  std::string payload(count * 4, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) throw FormatError("truncated payload");
  MatrixSection section{h.n, h.d, {}};
  decode_floats(reinterpret_cast<const unsigned char*>(payload.data()), count, section.values);
  for (float v : section.values) {
    if (!std::isfinite(v)) throw DataError("non-finite entry in matrix section");
  }
  return section;
}

EmbeddingStore read_embedding_store(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes) throw FormatError(path.string() + ": truncated header");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const Header h = parse_header(raw);
  const std::size_t count = h.n * h.d;
  if (bytes.size() != kHeaderBytes + count * 4) {
    throw FormatError(path.string() + ": payload size does not match header (" + std::to_string(h.n) +
                      "x" + std::to_string(h.d) + ")");
  }
  std::vector<float> values;
  decode_floats(raw + kHeaderBytes, count, values);

  for (std::size_t i = 0; i < h.n; ++i) {
    std::span<float> row(values.data() + i * h.d, h.d);
    for (float v : row) {
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite entry in row " + std::to_string(i));
    }
    const double norm = row_norm(row);
    const double deviation = std::abs(norm - 1.0);
    if (deviation >= kRenormalizeLimit) {
      throw DataError(path.string() + ": row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    if (deviation > kUnitNormTolerance) {
      for (float& v : row) v = static_cast<float>(v / norm);
      const std::string msg = path.string() + ": renormalized row " + std::to_string(i) + " (norm " +
                              std::to_string(norm) + ")";
      if (warnings != nullptr) {
        warnings->push_back(msg);
      } else {
        std::cerr << "warning: " << msg << '\n';
      }
    }
  }
  return EmbeddingStore(h.n, h.d, std::move(values));
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  validate_store(store);
  std::ostringstream out(std::ios::binary);
  write_matrix_section(out, store.rows(), store.dim(), store.values());
  write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Corpus and manifest

void Corpus::validate(bool reference_grade) const {
  if (embeddings.rows() != images.size()) {
    throw DataError("embedding rows (" + std::to_string(embeddings.rows()) + ") != manifest records (" +
                    std::to_string(images.size()) + ")");
  }
  for (std::size_t a = 0; a < artists.size(); ++a) {
    if (artists[a].id != a) throw DataError("artist ids must be 0..A-1 in table order");
  }
  std::vector<std::size_t> per_artist(artists.size(), 0);
  std::set<std::string_view> ids;
  for (const auto& img : images) {
    if (img.artist_id >= artists.size()) {
      throw DataError("image " + img.image_id + " references unknown artist " + std::to_string(img.artist_id));
    }
    if (!ids.insert(img.image_id).second) throw DataError("duplicate image_id " + img.image_id);
    if (img.split == Split::kGenerated && img.is_real()) {
      throw DataError("image " + img.image_id + " is in the generated split but has source \"real\"");
    }
    if (img.is_real()) ++per_artist[img.artist_id];
  }
  for (std::size_t a = 0; a < artists.size(); ++a) {
    if (per_artist[a] == 0) throw DataError("artist " + artists[a].name + " has no images");
    if (reference_grade && per_artist[a] < kReferenceGradeMinImages) {
      throw DataError("artist " + artists[a].name + " has fewer than " +
                      std::to_string(kReferenceGradeMinImages) + " images");
    }
  }
}

std::vector<std::size_t> Corpus::rows_of(ArtistId artist, Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].artist_id == artist && images[i].split == split) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> Corpus::real_rows_of(ArtistId artist) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].artist_id == artist && images[i].is_real()) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> Corpus::rows_with(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].split == split) rows.push_back(i);
  }
  return rows;
}

Manifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }

  Manifest manifest;
  try {
    const nlohmann::json* records = &doc;
    std::map<ArtistId, std::string> table;
    if (doc.is_object()) {
      records = &doc.at("images");
      if (doc.contains("artists")) {
        for (const auto& [key, name] : doc.at("artists").items()) {
          table[static_cast<ArtistId>(std::stoul(key))] = name.get<std::string>();
        }
      }
    }
    if (!records->is_array()) throw FormatError(path.string() + ": image records must be an array");
    for (const auto& r : *records) {
      ImageRecord img;
      img.image_id = r.at("image_id").get<std::string>();
      img.artist_id = r.at("artist_id").get<ArtistId>();
      img.title = r.value("title", "");
      img.split = split_from_string(r.value("split", "unassigned"));
      img.source = r.value("source", std::string(kRealSource));
      const std::string name = r.value("artist_name", "");
      auto [it, inserted] = table.emplace(img.artist_id, name);
      if (!inserted && !name.empty() && it->second != name) {
        throw DataError(path.string() + ": artist " + std::to_string(img.artist_id) + " has two names (\"" +
                        it->second + "\", \"" + name + "\")");
      }
      manifest.images.push_back(std::move(img));
    }
    for (const auto& [id, name] : table) manifest.artists.push_back({id, name});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError(path.string() + ": artist table keys must be integers");
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json table = nlohmann::ordered_json::object();
  std::map<ArtistId, std::string> names;
  for (const auto& a : manifest.artists) names[a.id] = a.name;
  for (const auto& [id, name] : names) table[std::to_string(id)] = name;
  doc["artists"] = table;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& img : manifest.images) {
    records.push_back({{"image_id", img.image_id},
                       {"artist_id", img.artist_id},
                       {"artist_name", names.count(img.artist_id) ? names[img.artist_id] : ""},
                       {"title", img.title},
                       {"split", std::string(to_string(img.split))},
                       {"source", img.source}});
  }
  doc["images"] = std::move(records);
  write_file(path, doc.dump(1) + "\n");
}

Corpus load_corpus(const std::filesystem::path& embeddings, const std::filesystem::path& manifest,
                   std::vector<std::string>* warnings) {
  Manifest m = read_manifest(manifest);
  Corpus corpus{std::move(m.images), std::move(m.artists), read_embedding_store(embeddings, warnings)};
  corpus.validate();
  return corpus;
}

std::size_t test_count_for(std::size_t portfolio_size, const SplitConfig& cfg) {
  // Ceil with a small slack so 0.2 * 100 yields 20, not 21.
  const double raw = cfg.test_fraction * static_cast<double>(portfolio_size);
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  count = std::max(count, cfg.min_test_per_artist);
  if (portfolio_size >= 2) count = std::min(count, portfolio_size - 1);
  return count;
}

Corpus split_corpus(Corpus corpus, const SplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1)");
  }
  for (const auto& artist : corpus.artists) {
    std::vector<std::size_t> rows = corpus.real_rows_of(artist.id);
    if (rows.size() < cfg.min_test_per_artist + 1) {
      throw SplitError("artist \"" + artist.name + "\" (id " + std::to_string(artist.id) + ") has " +
                       std::to_string(rows.size()) + " images; needs at least " +
                       std::to_string(cfg.min_test_per_artist + 1));
    }
    const std::size_t n_test = test_count_for(rows.size(), cfg);
    CounterRng rng(cfg.seed, artist.id);
    shuffle(std::span<std::size_t>(rows), rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      corpus.images[rows[i]].split = i < n_test ? Split::kTest : Split::kTrain;
    }
  }
  return corpus;
}

SimilarityMatrix cosine_similarities(const EmbeddingStore& images, const EmbeddingStore& concepts) {
  if (images.dim() != concepts.dim()) {
    throw ValidationError("dimensionality mismatch: images have d=" + std::to_string(images.dim()) +
                          ", concepts have d=" + std::to_string(concepts.dim()));
  }
  SimilarityMatrix sims{images.rows(), concepts.rows(), {}};
  sims.values.resize(sims.rows * sims.cols);
  parallel_for(images.rows(), [&](std::size_t i) {
    const auto x = images.row(i);
    for (std::size_t j = 0; j < concepts.rows(); ++j) {
      const auto c = concepts.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) dot += static_cast<double>(x[k]) * c[k];
      sims.values[i * sims.cols + j] = std::clamp(dot, -1.0, 1.0);
    }
  });
  return sims;
}

std::uint64_t digest(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t digest(const EmbeddingStore& store) {
  std::string bytes;
  put_u64(bytes, store.rows());
  put_u64(bytes, store.dim());
  encode_floats(store.values(), bytes);
  return digest(bytes);
}

}  // namespace artsig

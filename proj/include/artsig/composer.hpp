#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "artsig/corpus.hpp"
#include "artsig/tagger.hpp"

namespace artsig {

// A composition of atomic tags, kept as strictly increasing concept ids.
struct TagSignature {
  std::vector<ConceptId> tags;

  std::size_t size() const { return tags.size(); }
  // True when every tag of this signature is in the (sorted) tag list.
  bool contained_in(std::span<const ConceptId> sorted_tags) const;

  friend auto operator<=>(const TagSignature&, const TagSignature&) = default;
  friend bool operator==(const TagSignature&, const TagSignature&) = default;
};

struct TagSignatureHash {
  std::size_t operator()(const TagSignature& s) const noexcept;
};

struct ComposerConfig {
  std::size_t min_count = 3;
  std::size_t intersection_cap = 25;

  void validate() const;
};

struct ArtistTagProfile {
  ArtistId artist_id = 0;
  std::size_t portfolio_size = 0;
  std::vector<ConceptId> common_atomic;
  std::map<TagSignature, std::uint32_t> signatures;
  // Images whose common-tag intersection exceeded the cap and was truncated.
  std::size_t truncated_images = 0;

  std::uint32_t count(const TagSignature& s) const;
  // count / portfolio_size, or 0 when the signature is not stored.
  double frequency(const TagSignature& s) const;
};

// Tags present in at least min_count images of the portfolio, sorted.
std::vector<ConceptId> common_atomic_tags(std::span<const AtomicTagSet> portfolio, const ComposerConfig& cfg);

// Counts every nonempty subset of tag(x) ∩ common once per image, then keeps
// the subsets seen in at least min_count images. Intersections larger than
// intersection_cap keep the cap most frequent atomic tags (ties: lower id).
ArtistTagProfile compose_signatures(std::span<const AtomicTagSet> portfolio, std::span<const ConceptId> common,
                                    const ComposerConfig& cfg, ArtistId artist_id = 0);

// common_atomic_tags followed by compose_signatures.
ArtistTagProfile mine_profile(std::span<const AtomicTagSet> portfolio, const ComposerConfig& cfg,
                              ArtistId artist_id = 0);

// Signature -> number of profiles containing it.
using UniquenessIndex = std::map<TagSignature, std::uint32_t>;

UniquenessIndex signature_uniqueness(std::span<const ArtistTagProfile> profiles);

std::string profiles_to_json(std::span<const ArtistTagProfile> profiles);
std::vector<ArtistTagProfile> profiles_from_json(std::string_view text);
void write_profiles(std::span<const ArtistTagProfile> profiles, const std::filesystem::path& path);
std::vector<ArtistTagProfile> read_profiles(const std::filesystem::path& path);

}  // namespace artsig

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "artsig/composer.hpp"
#include "artsig/corpus.hpp"
#include "artsig/tagger.hpp"

namespace artsig {

struct TagMatchConfig {
  std::size_t matches_per_artist = 10;

  void validate() const;
};

// A set of test images together with the profile mined from them using the
// same tagger/composer settings as the reference corpus.
struct TestPortfolio {
  std::vector<AtomicTagSet> tag_sets;
  ArtistTagProfile profile;

  static TestPortfolio mine(std::vector<AtomicTagSet> tag_sets, const ComposerConfig& cfg);
};

// integer_part: reference artists sharing the tag; decimal_part: absolute
// frequency difference between test and reference portfolio.
struct MatchScore {
  std::uint32_t integer_part = 0;
  double decimal_part = 0.0;

  double total() const { return static_cast<double>(integer_part) + decimal_part; }
};

struct KeptTag {
  TagSignature signature;
  std::uint32_t uniqueness = 0;
  double freq_test = 0.0;
  double freq_ref = 0.0;
  MatchScore score;
};

inline constexpr double kNoMatch = std::numeric_limits<double>::infinity();

struct RankedArtist {
  ArtistId artist_id = 0;
  double score = kNoMatch;
  // Uniqueness of the first (most unique) kept tag, used for tie breaking.
  std::uint32_t lead_uniqueness = std::numeric_limits<std::uint32_t>::max();
  std::vector<KeptTag> kept;

  bool finite() const { return score != kNoMatch; }
};

struct Attribution {
  ArtistId artist_id = 0;
  TagSignature signature;
  std::vector<std::string> test_images;
  std::vector<std::string> reference_images;
};

struct MatchResult {
  std::vector<RankedArtist> ranking;  // ascending score
  std::size_t matched_tags = 0;
  std::vector<Attribution> attribution;

  const RankedArtist* find(ArtistId artist) const;
};

// Reference side of TagMatch, built once per corpus and reused per query.
class ReferenceIndex {
 public:
  explicit ReferenceIndex(std::vector<ArtistTagProfile> profiles);
  ReferenceIndex(std::vector<ArtistTagProfile> profiles, UniquenessIndex uniqueness);

  std::span<const ArtistTagProfile> profiles() const { return profiles_; }
  const UniquenessIndex& uniqueness() const { return uniqueness_; }
  // Positions (into profiles()) of the profiles holding the signature, in
  // ascending artist id order; nullptr when no reference artist has it.
  const std::vector<std::size_t>* holders(const TagSignature& s) const;
  const ArtistTagProfile* profile_of(ArtistId artist) const;

 private:
  void build();

  std::vector<ArtistTagProfile> profiles_;
  UniquenessIndex uniqueness_;
  std::unordered_map<TagSignature, std::vector<std::size_t>, TagSignatureHash> holders_;
  std::unordered_map<ArtistId, std::size_t> by_artist_;
};

// Traverses matched tags from most to least unique (ties: longer first, then
// lexicographic ids), keeps the first k scores per sharing artist and ranks
// artists by their mean kept score; artists with fewer than k matches score
// +inf. Equal scores break by lead_uniqueness, then by artist id.
MatchResult tag_match(const TestPortfolio& test, const ReferenceIndex& references, const TagMatchConfig& cfg);
MatchResult tag_match(const TestPortfolio& test, std::span<const ArtistTagProfile> references,
                      const UniquenessIndex& uniqueness, const TagMatchConfig& cfg);

// Ids of the images whose tag set contains every tag of the signature.
std::vector<std::string> attribute(const TagSignature& signature, std::span<const AtomicTagSet> tag_sets);

using ReferencePortfolioLookup = std::function<std::span<const AtomicTagSet>(ArtistId)>;

// Fills result.attribution for the kept tags of the first top_artists
// finite-score artists of the ranking (and for `also_artist`, if given).
void attach_attribution(MatchResult& result, const TestPortfolio& test, const ReferencePortfolioLookup& lookup,
                        std::size_t top_artists = 1, std::optional<ArtistId> also_artist = std::nullopt);

// True iff the artist is among the first k finite-score ranking entries.
bool topk_hit(const MatchResult& result, ArtistId true_artist, std::size_t k);

// 1-based position of the artist among finite-score entries; 0 if absent.
std::size_t finite_rank_of(const MatchResult& result, ArtistId artist);

// Evidence payload. kept_artists limits the per-artist kept-tag lists to the
// first entries of the ranking (0 = all finite entries). Tag names are added
// when a vocabulary is supplied.
nlohmann::ordered_json match_result_to_json(const MatchResult& result, const Vocabulary* vocab = nullptr,
                                            std::size_t kept_artists = 0);

}  // namespace artsig

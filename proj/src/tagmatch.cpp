#include "artsig/tagmatch.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "artsig/errors.hpp"

namespace artsig {

void TagMatchConfig::validate() const {
  if (matches_per_artist < 1) throw ValidationError("matches_per_artist must be at least 1");
}

TestPortfolio TestPortfolio::mine(std::vector<AtomicTagSet> tag_sets, const ComposerConfig& cfg) {
  if (tag_sets.empty()) throw ValidationError("test portfolio is empty");
  TestPortfolio out;
  out.profile = mine_profile(tag_sets, cfg);
  out.tag_sets = std::move(tag_sets);
  return out;
}

const RankedArtist* MatchResult::find(ArtistId artist) const {
  for (const auto& r : ranking) {
    if (r.artist_id == artist) return &r;
  }
  return nullptr;
}

ReferenceIndex::ReferenceIndex(std::vector<ArtistTagProfile> profiles) : profiles_(std::move(profiles)) {
  if (profiles_.empty()) throw ValidationError("reference set is empty");
  uniqueness_ = signature_uniqueness(profiles_);
  build();
}

ReferenceIndex::ReferenceIndex(std::vector<ArtistTagProfile> profiles, UniquenessIndex uniqueness)
    : profiles_(std::move(profiles)), uniqueness_(std::move(uniqueness)) {
  if (profiles_.empty()) throw ValidationError("reference set is empty");
  build();
}

void ReferenceIndex::build() {
  std::vector<std::size_t> order(profiles_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return profiles_[a].artist_id < profiles_[b].artist_id; });
  for (std::size_t pos : order) {
    const auto& p = profiles_[pos];
    if (!by_artist_.emplace(p.artist_id, pos).second) {
      throw ValidationError("duplicate reference profile for artist " + std::to_string(p.artist_id));
    }
    for (const auto& entry : p.signatures) {
      if (!uniqueness_.contains(entry.first)) {
        throw ValidationError("uniqueness index was not built over the reference profiles");
      }
      holders_[entry.first].push_back(pos);
    }
  }
}

const std::vector<std::size_t>* ReferenceIndex::holders(const TagSignature& s) const {
  const auto it = holders_.find(s);
  return it == holders_.end() ? nullptr : &it->second;
}

const ArtistTagProfile* ReferenceIndex::profile_of(ArtistId artist) const {
  const auto it = by_artist_.find(artist);
  return it == by_artist_.end() ? nullptr : &profiles_[it->second];
}

MatchResult tag_match(const TestPortfolio& test, const ReferenceIndex& references, const TagMatchConfig& cfg) {
  cfg.validate();
  if (test.profile.portfolio_size == 0) throw ValidationError("test portfolio is empty");

  struct Matched {
    const TagSignature* signature;
    std::uint32_t uniqueness;
    const std::vector<std::size_t>* holders;
  };
  std::vector<Matched> matched;
  for (const auto& entry : test.profile.signatures) {
    if (const auto* h = references.holders(entry.first)) {
      matched.push_back({&entry.first, references.uniqueness().at(entry.first), h});
    }
  }
  std::sort(matched.begin(), matched.end(), [](const Matched& a, const Matched& b) {
    if (a.uniqueness != b.uniqueness) return a.uniqueness < b.uniqueness;
    if (a.signature->size() != b.signature->size()) return a.signature->size() > b.signature->size();
    return a.signature->tags < b.signature->tags;
  });

  const auto profiles = references.profiles();
  const std::size_t k = cfg.matches_per_artist;
  std::vector<RankedArtist> rows(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) rows[i].artist_id = profiles[i].artist_id;

  for (const auto& m : matched) {
    const double freq_test = test.profile.frequency(*m.signature);
    for (std::size_t pos : *m.holders) {
      auto& row = rows[pos];
      if (row.kept.size() >= k) continue;
      const double freq_ref = profiles[pos].frequency(*m.signature);
      KeptTag kept{*m.signature, m.uniqueness, freq_test, freq_ref, {m.uniqueness, std::abs(freq_test - freq_ref)}};
      if (row.kept.empty()) row.lead_uniqueness = m.uniqueness;
      row.kept.push_back(std::move(kept));
    }
  }

  for (auto& row : rows) {
    if (row.kept.size() < k) {
      row.score = kNoMatch;
      continue;
    }
    double sum = 0.0;
    for (const auto& t : row.kept) sum += t.score.total();
    row.score = sum / static_cast<double>(row.kept.size());
  }
  std::sort(rows.begin(), rows.end(), [](const RankedArtist& a, const RankedArtist& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.lead_uniqueness != b.lead_uniqueness) return a.lead_uniqueness < b.lead_uniqueness;
    return a.artist_id < b.artist_id;
  });

  MatchResult result;
  result.ranking = std::move(rows);
  result.matched_tags = matched.size();
  return result;
}

MatchResult tag_match(const TestPortfolio& test, std::span<const ArtistTagProfile> references,
                      const UniquenessIndex& uniqueness, const TagMatchConfig& cfg) {
  const ReferenceIndex index(std::vector<ArtistTagProfile>(references.begin(), references.end()), uniqueness);
  return tag_match(test, index, cfg);
}

std::vector<std::string> attribute(const TagSignature& signature, std::span<const AtomicTagSet> tag_sets) {
  std::vector<std::string> ids;
  for (const auto& t : tag_sets) {
    if (signature.contained_in(t.tags)) ids.push_back(t.image_id);
  }
  return ids;
}

void attach_attribution(MatchResult& result, const TestPortfolio& test, const ReferencePortfolioLookup& lookup,
                        std::size_t top_artists, std::optional<ArtistId> also_artist) {
  result.attribution.clear();
  std::size_t taken = 0;
  for (const auto& row : result.ranking) {
    const bool wanted = (row.finite() && taken < top_artists) || (also_artist && row.artist_id == *also_artist);
    if (row.finite() && taken < top_artists) ++taken;
    if (!wanted) continue;
    const auto reference = lookup(row.artist_id);
    for (const auto& kept : row.kept) {
      result.attribution.push_back(
          {row.artist_id, kept.signature, attribute(kept.signature, test.tag_sets), attribute(kept.signature, reference)});
    }
  }
}

bool topk_hit(const MatchResult& result, ArtistId true_artist, std::size_t k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  const std::size_t rank = finite_rank_of(result, true_artist);
  return rank != 0 && rank <= k;
}

std::size_t finite_rank_of(const MatchResult& result, ArtistId artist) {
  std::size_t position = 0;
  for (const auto& row : result.ranking) {
    if (!row.finite()) break;
    ++position;
    if (row.artist_id == artist) return position;
  }
  return 0;
}

namespace {

nlohmann::ordered_json signature_json(const TagSignature& s, const Vocabulary* vocab) {
  nlohmann::ordered_json out;
  out["tags"] = s.tags;
  if (vocab != nullptr) {
    std::vector<std::string> names;
    for (ConceptId id : s.tags) names.push_back(vocab->caption(id));
    out["names"] = names;
  }
  return out;
}

}  // namespace

nlohmann::ordered_json match_result_to_json(const MatchResult& result, const Vocabulary* vocab,
                                            std::size_t kept_artists) {
  nlohmann::ordered_json out;
  out["matched_tags"] = result.matched_tags;
  nlohmann::ordered_json ranking = nlohmann::ordered_json::array();
  std::size_t shown = 0;
  for (const auto& row : result.ranking) {
    if (!row.finite()) break;
    nlohmann::ordered_json r;
    r["artist_id"] = row.artist_id;
    r["score"] = row.score;
    if (kept_artists == 0 || shown < kept_artists) {
      nlohmann::ordered_json kept = nlohmann::ordered_json::array();
      for (const auto& t : row.kept) {
        auto k = signature_json(t.signature, vocab);
        k["uniqueness"] = t.uniqueness;
        k["freq_test"] = t.freq_test;
        k["freq_ref"] = t.freq_ref;
        k["score"] = t.score.total();
        kept.push_back(std::move(k));
      }
      r["kept"] = std::move(kept);
    }
    ++shown;
    ranking.push_back(std::move(r));
  }
  out["ranking"] = std::move(ranking);
  out["unmatched_artists"] = result.ranking.size() - shown;
  nlohmann::ordered_json attribution = nlohmann::ordered_json::array();
  for (const auto& a : result.attribution) {
    auto entry = signature_json(a.signature, vocab);
    entry["artist_id"] = a.artist_id;
    entry["test_images"] = a.test_images;
    entry["reference_images"] = a.reference_images;
    attribution.push_back(std::move(entry));
  }
  out["attribution"] = std::move(attribution);
  return out;
}

}  // namespace artsig

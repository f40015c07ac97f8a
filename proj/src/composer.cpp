#include "artsig/composer.hpp"

#include <algorithm>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "artsig/errors.hpp"
#include "artsig/rng.hpp"
#include "io_util.hpp"

namespace artsig {

bool TagSignature::contained_in(std::span<const ConceptId> sorted_tags) const {
  return std::includes(sorted_tags.begin(), sorted_tags.end(), tags.begin(), tags.end());
}

std::size_t TagSignatureHash::operator()(const TagSignature& s) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.tags.size();
  for (ConceptId t : s.tags) h = mix64(h ^ t);
  return static_cast<std::size_t>(h);
}

void ComposerConfig::validate() const {
  if (min_count < 1) throw ValidationError("min_count must be at least 1");
  if (intersection_cap < 1) throw ValidationError("intersection_cap must be at least 1");
  if (intersection_cap > 30) throw ValidationError("intersection_cap above 30 is not supported");
}

std::uint32_t ArtistTagProfile::count(const TagSignature& s) const {
  const auto it = signatures.find(s);
  return it == signatures.end() ? 0 : it->second;
}

double ArtistTagProfile::frequency(const TagSignature& s) const {
  if (portfolio_size == 0) return 0.0;
  return static_cast<double>(count(s)) / static_cast<double>(portfolio_size);
}

namespace {

std::map<ConceptId, std::uint32_t> atomic_counts(std::span<const AtomicTagSet> portfolio) {
  std::map<ConceptId, std::uint32_t> counts;
  for (const auto& image : portfolio) {
    for (ConceptId t : image.tags) ++counts[t];
  }
  return counts;
}

}  // namespace

std::vector<ConceptId> common_atomic_tags(std::span<const AtomicTagSet> portfolio, const ComposerConfig& cfg) {
  cfg.validate();
  if (portfolio.empty()) throw ValidationError("cannot mine tags from an empty portfolio");
  std::vector<ConceptId> common;
  for (const auto& [tag, n] : atomic_counts(portfolio)) {
    if (n >= cfg.min_count) common.push_back(tag);
  }
  return common;
}

ArtistTagProfile compose_signatures(std::span<const AtomicTagSet> portfolio, std::span<const ConceptId> common,
                                    const ComposerConfig& cfg, ArtistId artist_id) {
  cfg.validate();
  ArtistTagProfile profile;
  profile.artist_id = artist_id;
  profile.portfolio_size = portfolio.size();
  profile.common_atomic.assign(common.begin(), common.end());
  std::sort(profile.common_atomic.begin(), profile.common_atomic.end());
  profile.common_atomic.erase(std::unique(profile.common_atomic.begin(), profile.common_atomic.end()),
                              profile.common_atomic.end());

  const auto atomic = atomic_counts(portfolio);
  std::unordered_map<TagSignature, std::uint32_t, TagSignatureHash> counts;
  std::vector<ConceptId> inter;
  TagSignature subset;
  for (const auto& image : portfolio) {
    inter.clear();
    std::set_intersection(image.tags.begin(), image.tags.end(), profile.common_atomic.begin(),
                          profile.common_atomic.end(), std::back_inserter(inter));
    if (inter.size() > cfg.intersection_cap) {
      std::stable_sort(inter.begin(), inter.end(), [&](ConceptId a, ConceptId b) {
        const auto ca = atomic.at(a);
        const auto cb = atomic.at(b);
        return ca != cb ? ca > cb : a < b;
      });
      inter.resize(cfg.intersection_cap);
      std::sort(inter.begin(), inter.end());
      ++profile.truncated_images;
    }

    // Streams every nonempty subset; bit k of mask selects inter[k], so each
    // subset is visited once per image and stays sorted.
    const std::uint64_t limit = std::uint64_t{1} << inter.size();
    for (std::uint64_t mask = 1; mask < limit; ++mask) {
      subset.tags.clear();
      for (std::size_t k = 0; k < inter.size(); ++k) {
        if (mask & (std::uint64_t{1} << k)) subset.tags.push_back(inter[k]);
      }
      auto it = counts.find(subset);
      if (it == counts.end()) {
        counts.emplace(subset, 1);
      } else {
        ++it->second;
      }
    }
  }

  for (auto& [sig, n] : counts) {
    if (n >= cfg.min_count) profile.signatures.emplace(sig, n);
  }
  return profile;
}

ArtistTagProfile mine_profile(std::span<const AtomicTagSet> portfolio, const ComposerConfig& cfg,
                              ArtistId artist_id) {
  const auto common = common_atomic_tags(portfolio, cfg);
  return compose_signatures(portfolio, common, cfg, artist_id);
}

UniquenessIndex signature_uniqueness(std::span<const ArtistTagProfile> profiles) {
  if (profiles.empty()) throw ValidationError("uniqueness needs at least one profile");
  UniquenessIndex index;
  for (const auto& p : profiles) {
    for (const auto& entry : p.signatures) ++index[entry.first];
  }
  return index;
}

std::string profiles_to_json(std::span<const ArtistTagProfile> profiles) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    nlohmann::ordered_json sigs = nlohmann::ordered_json::array();
    for (const auto& [sig, n] : p.signatures) sigs.push_back({{"tags", sig.tags}, {"count", n}});
    doc.push_back({{"artist_id", p.artist_id},
                   {"portfolio_size", p.portfolio_size},
                   {"common_atomic", p.common_atomic},
                   {"signatures", std::move(sigs)}});
  }
  return doc.dump() + "\n";
}

std::vector<ArtistTagProfile> profiles_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::vector<ArtistTagProfile> out;
    for (const auto& r : doc) {
      ArtistTagProfile p;
      p.artist_id = r.at("artist_id").get<ArtistId>();
      p.portfolio_size = r.at("portfolio_size").get<std::size_t>();
      for (const auto& s : r.at("signatures")) {
        TagSignature sig{s.at("tags").get<std::vector<ConceptId>>()};
        if (sig.tags.empty() || !std::is_sorted(sig.tags.begin(), sig.tags.end()) ||
            std::adjacent_find(sig.tags.begin(), sig.tags.end()) != sig.tags.end()) {
          throw FormatError("profile signatures must be nonempty and strictly increasing");
        }
        const auto n = s.at("count").get<std::uint32_t>();
        if (n == 0 || n > p.portfolio_size) throw FormatError("signature count outside [1, portfolio_size]");
        p.signatures.emplace(std::move(sig), n);
      }
      if (r.contains("common_atomic")) {
        p.common_atomic = r.at("common_atomic").get<std::vector<ConceptId>>();
      } else {
        for (const auto& [sig, n] : p.signatures) {
          if (sig.size() == 1) p.common_atomic.push_back(sig.tags.front());
        }
      }
      out.push_back(std::move(p));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profiles: ") + e.what());
  }
}

void write_profiles(std::span<const ArtistTagProfile> profiles, const std::filesystem::path& path) {
  detail::write_file(path, profiles_to_json(profiles));
}

std::vector<ArtistTagProfile> read_profiles(const std::filesystem::path& path) {
  return profiles_from_json(detail::read_file(path));
}

}  // namespace artsig

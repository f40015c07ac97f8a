#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "artsig/corpus.hpp"

namespace artsig {

using ConceptId = std::uint32_t;

struct Aspect {
  std::string name;
  std::string caption_template;  // exactly one "{}"
  std::vector<std::string> descriptors;
};

// Concept ids enumerate descriptors aspect-major in file order.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> prompt_templates, std::vector<Aspect> aspects);

  const std::vector<std::string>& prompt_templates() const { return prompt_templates_; }
  const std::vector<Aspect>& aspects() const { return aspects_; }
  std::size_t concept_count() const { return offsets_.empty() ? 0 : offsets_.back(); }

  // Half-open concept id range [first, second) of aspect a.
  std::pair<ConceptId, ConceptId> aspect_range(std::size_t a) const {
    return {static_cast<ConceptId>(offsets_[a]), static_cast<ConceptId>(offsets_[a + 1])};
  }
  std::size_t aspect_of(ConceptId id) const;
  const std::string& descriptor(ConceptId id) const;
  // Descriptor rendered through its aspect's caption template.
  std::string caption(ConceptId id) const;

 private:
  std::vector<std::string> prompt_templates_;
  std::vector<Aspect> aspects_;
  std::vector<std::size_t> offsets_;
};

std::string render_template(std::string_view templ, std::string_view value);

// Throws ValidationError on duplicate aspects or descriptors, aspects with
// fewer than two descriptors, or templates without exactly one placeholder.
Vocabulary parse_vocabulary(std::string_view json_text);
Vocabulary load_vocabulary(const std::filesystem::path& path);

struct AtomicTagSet {
  std::string image_id;
  std::vector<ConceptId> tags;  // strictly increasing

  bool contains(ConceptId id) const;
  friend bool operator==(const AtomicTagSet&, const AtomicTagSet&) = default;
};

struct TaggerConfig {
  double z_threshold = 1.5;
  double std_floor = 1e-9;

  void validate() const;
};

// Selective per-aspect zero-shot tagging: a concept is assigned when its
// similarity z-score within its aspect (population std) reaches z_threshold.
// Aspects whose spread is at or below std_floor contribute no tags.
AtomicTagSet assign_atomic_tags(std::span<const double> sim_row, const Vocabulary& vocab,
                                const TaggerConfig& cfg, std::string image_id = {});

// image_ids may be empty, otherwise it must have sims.rows entries.
std::vector<AtomicTagSet> tag_corpus(const SimilarityMatrix& sims, const Vocabulary& vocab,
                                     const TaggerConfig& cfg, std::span<const std::string> image_ids = {});

double mean_tags_per_image(std::span<const AtomicTagSet> tag_sets);

std::string tag_sets_to_json(std::span<const AtomicTagSet> tag_sets);
std::vector<AtomicTagSet> tag_sets_from_json(std::string_view text);
void write_tag_sets(std::span<const AtomicTagSet> tag_sets, const std::filesystem::path& path);
std::vector<AtomicTagSet> read_tag_sets(const std::filesystem::path& path);

}  // namespace artsig

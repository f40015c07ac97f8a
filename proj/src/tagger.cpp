#include "artsig/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "artsig/errors.hpp"
#include "artsig/parallel.hpp"
#include "io_util.hpp"

namespace artsig {

namespace {

std::size_t count_placeholders(std::string_view text) {
  std::size_t count = 0;
  for (auto pos = text.find("{}"); pos != std::string_view::npos; pos = text.find("{}", pos + 2)) ++count;
  return count;
}

}  // namespace

std::string render_template(std::string_view templ, std::string_view value) {
  const auto pos = templ.find("{}");
  if (pos == std::string_view::npos) throw ValidationError("template has no placeholder: " + std::string(templ));
  std::string out(templ.substr(0, pos));
  out += value;
  out += templ.substr(pos + 2);
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> prompt_templates, std::vector<Aspect> aspects)
    : prompt_templates_(std::move(prompt_templates)), aspects_(std::move(aspects)) {
  for (const auto& t : prompt_templates_) {
    if (count_placeholders(t) != 1) throw ValidationError("prompt template needs exactly one {}: \"" + t + "\"");
  }
  std::set<std::string> names;
  offsets_.push_back(0);
  for (const auto& aspect : aspects_) {
    if (!names.insert(aspect.name).second) throw ValidationError("duplicate aspect \"" + aspect.name + "\"");
    if (count_placeholders(aspect.caption_template) != 1) {
      throw ValidationError("aspect \"" + aspect.name + "\": caption template needs exactly one {}");
    }
    if (aspect.descriptors.size() < 2) {
      throw ValidationError("aspect \"" + aspect.name + "\" needs at least two descriptors");
    }
    std::set<std::string> seen;
    for (const auto& d : aspect.descriptors) {
      if (!seen.insert(d).second) {
        throw ValidationError("aspect \"" + aspect.name + "\": duplicate descriptor \"" + d + "\"");
      }
    }
    offsets_.push_back(offsets_.back() + aspect.descriptors.size());
  }
}

std::size_t Vocabulary::aspect_of(ConceptId id) const {
  if (id >= concept_count()) throw ValidationError("concept id " + std::to_string(id) + " out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), static_cast<std::size_t>(id));
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

const std::string& Vocabulary::descriptor(ConceptId id) const {
  const std::size_t a = aspect_of(id);
  return aspects_[a].descriptors[id - offsets_[a]];
}

std::string Vocabulary::caption(ConceptId id) const {
  return render_template(aspects_[aspect_of(id)].caption_template, descriptor(id));
}

Vocabulary parse_vocabulary(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("vocabulary: ") + e.what());
  }
  try {
    std::vector<std::string> templates = doc.value("prompt_templates", std::vector<std::string>{});
    std::vector<Aspect> aspects;
    for (const auto& a : doc.at("aspects")) {
      aspects.push_back({a.at("name").get<std::string>(), a.at("caption_template").get<std::string>(),
                         a.at("descriptors").get<std::vector<std::string>>()});
    }
    return Vocabulary(std::move(templates), std::move(aspects));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("vocabulary: ") + e.what());
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) { return parse_vocabulary(detail::read_file(path)); }

bool AtomicTagSet::contains(ConceptId id) const { return std::binary_search(tags.begin(), tags.end(), id); }

void TaggerConfig::validate() const {
  if (!(z_threshold > 0.0)) throw ValidationError("z_threshold must be positive");
  if (!(std_floor >= 0.0)) throw ValidationError("std_floor must be non-negative");
}

AtomicTagSet assign_atomic_tags(std::span<const double> sim_row, const Vocabulary& vocab, const TaggerConfig& cfg,
                                std::string image_id) {
  if (sim_row.size() != vocab.concept_count()) {
    throw ValidationError("similarity row has " + std::to_string(sim_row.size()) + " entries, vocabulary has " +
                          std::to_string(vocab.concept_count()) + " concepts");
  }
  for (double s : sim_row) {
    if (!std::isfinite(s)) throw ValidationError("non-finite similarity for image " + image_id);
  }

  AtomicTagSet out{std::move(image_id), {}};
  for (std::size_t a = 0; a < vocab.aspects().size(); ++a) {
    const auto [first, last] = vocab.aspect_range(a);
    const auto values = sim_row.subspan(first, last - first);
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double s : values) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / n);
    if (sd <= cfg.std_floor) continue;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if ((values[j] - mean) / sd >= cfg.z_threshold) out.tags.push_back(first + static_cast<ConceptId>(j));
    }
  }
  return out;
}

std::vector<AtomicTagSet> tag_corpus(const SimilarityMatrix& sims, const Vocabulary& vocab, const TaggerConfig& cfg,
                                     std::span<const std::string> image_ids) {
  cfg.validate();
  if (sims.cols != vocab.concept_count()) {
    throw ValidationError("similarity matrix has " + std::to_string(sims.cols) + " columns, vocabulary has " +
                          std::to_string(vocab.concept_count()) + " concepts");
  }
  if (!image_ids.empty() && image_ids.size() != sims.rows) {
    throw ValidationError("image id count does not match similarity rows");
  }
  std::vector<AtomicTagSet> out(sims.rows);
  parallel_for(sims.rows, [&](std::size_t i) {
    out[i] = assign_atomic_tags(sims.row(i), vocab, cfg, image_ids.empty() ? std::string() : image_ids[i]);
  });
  return out;
}

double mean_tags_per_image(std::span<const AtomicTagSet> tag_sets) {
  if (tag_sets.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& t : tag_sets) total += t.tags.size();
  return static_cast<double>(total) / static_cast<double>(tag_sets.size());
}

std::string tag_sets_to_json(std::span<const AtomicTagSet> tag_sets) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& t : tag_sets) doc.push_back({{"image_id", t.image_id}, {"tags", t.tags}});
  return doc.dump() + "\n";
}

std::vector<AtomicTagSet> tag_sets_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::vector<AtomicTagSet> out;
    for (const auto& r : doc) {
      AtomicTagSet t{r.at("image_id").get<std::string>(), r.at("tags").get<std::vector<ConceptId>>()};
      std::sort(t.tags.begin(), t.tags.end());
      t.tags.erase(std::unique(t.tags.begin(), t.tags.end()), t.tags.end());
      out.push_back(std::move(t));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tag sets: ") + e.what());
  }
}

void write_tag_sets(std::span<const AtomicTagSet> tag_sets, const std::filesystem::path& path) {
  detail::write_file(path, tag_sets_to_json(tag_sets));
}

std::vector<AtomicTagSet> read_tag_sets(const std::filesystem::path& path) {
  return tag_sets_from_json(detail::read_file(path));
}

}  // namespace artsig

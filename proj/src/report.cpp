#include <cstdio>
#include <filesystem>
#include <sstream>

#include "artsig/errors.hpp"
#include "artsig/harness.hpp"
#include "io_util.hpp"

namespace artsig {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kEvidenceArtists = 10;

ojson aggregates_json(const EvaluationAggregates& a) {
  ojson j;
  j["artists"] = a.artists;
  j["matched"] = a.matched;
  j["match_rate"] = a.match_rate;
  j["mean_confidence"] = a.mean_confidence;
  j["confidence_quartiles"] = {a.confidence_quartiles[0], a.confidence_quartiles[1], a.confidence_quartiles[2]};
  j["image_accuracy"] = a.image_accuracy;
  ojson topk;
  for (std::size_t k = 0; k < std::size(kTopK); ++k) topk["top" + std::to_string(kTopK[k])] = a.topk_accuracy[k];
  j["tagmatch_topk_accuracy"] = std::move(topk);
  return j;
}

ojson optional_id(const std::optional<ArtistId>& id) { return id ? ojson(*id) : ojson(nullptr); }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string percent(double fraction) { return fmt("%.1f%%", 100.0 * fraction); }

std::string join(const ojson& items, const char* sep) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += sep;
    out += item.is_string() ? item.get<std::string>() : item.dump();
  }
  return out;
}

std::string artist_label(const ojson& names, const ojson& id) {
  if (id.is_null()) return "none";
  const auto key = std::to_string(id.get<std::uint64_t>());
  return names.contains(key) ? names[key].get<std::string>() + " (" + key + ")" : key;
}

const ojson* row_for(const ojson& report, std::uint64_t artist) {
  for (const auto& row : report["per_artist"]) {
    if (row["artist_id"].get<std::uint64_t>() == artist) return &row;
  }
  return nullptr;
}

void render_evidence(std::ostringstream& md, const ojson& row, const ojson& names) {
  const auto& evidence = row["evidence"];
  const auto& ranking = evidence["ranking"];
  if (ranking.empty()) {
    md << "No reference artist shares enough signatures with this set.\n\n";
    return;
  }
  md << "| rank | artist | score |\n|---|---|---|\n";
  std::size_t rank = 0;
  for (const auto& r : ranking) {
    md << "| " << ++rank << " | " << artist_label(names, r["artist_id"]) << " | "
       << fmt("%.4f", r["score"].get<double>()) << " |\n";
  }
  md << '\n';
  for (const auto& a : evidence["attribution"]) {
    const auto& tags = a.contains("names") ? a["names"] : a["tags"];
    md << "- **" << join(tags, " + ") << "** for " << artist_label(names, a["artist_id"]) << "\n";
    md << "  - set images: " << join(a["test_images"], ", ") << "\n";
    md << "  - reference images: " << join(a["reference_images"], ", ") << "\n";
  }
  md << '\n';
}

}  // namespace

ojson to_json(const EvaluationReport& report, const Vocabulary* vocab) {
  ojson j;
  j["label"] = report.label;
  j["aggregates"] = aggregates_json(report.aggregates);
  j["skipped"] = report.skipped;
  ojson rows = ojson::array();
  for (const auto& r : report.per_artist) {
    ojson row;
    row["artist_id"] = r.artist_id;
    row["artist_name"] = r.artist_name;
    row["images"] = r.images;
    row["deepmatch"] = {{"predicted", optional_id(r.deep.predicted)},
                        {"matched", r.deep.matched(r.artist_id)},
                        {"modal", r.deep.modal},
                        {"confidence", r.deep.confidence},
                        {"label_confidence", r.deep.label_confidence},
                        {"correct_images", r.deep.correct_images}};
    ojson tag;
    tag["rank"] = r.tag.rank == 0 ? ojson(nullptr) : ojson(r.tag.rank);
    tag["top1"] = optional_id(r.tag.top1);
    for (std::size_t k = 0; k < std::size(kTopK); ++k) tag["top" + std::to_string(kTopK[k]) + "_hit"] = r.tag.hit[k];
    row["tagmatch"] = std::move(tag);
    ojson hist = ojson::object();
    double sum = 0.0;
    for (std::uint32_t c : r.commonality) {
      const auto key = std::to_string(c);
      hist[key] = hist.value(key, 0) + 1;
      sum += c;
    }
    row["commonality"] = {{"signatures", r.commonality.size()},
                          {"mean", r.commonality.empty() ? 0.0 : sum / static_cast<double>(r.commonality.size())},
                          {"histogram", std::move(hist)}};
    row["evidence"] = match_result_to_json(r.evidence, vocab, kEvidenceArtists);
    auto& ranking = row["evidence"]["ranking"];
    if (ranking.size() > kEvidenceArtists) ranking.erase(ranking.begin() + kEvidenceArtists, ranking.end());
    rows.push_back(std::move(row));
  }
  j["per_artist"] = std::move(rows);
  return j;
}

ojson to_json(const UnprecedentedVerdict& v) {
  ojson j;
  j["artist_id"] = v.artist;
  j["most_similar"] = v.most_similar;
  j["false_positive_rate"] = v.false_positive_rate;
  j["model"] = v.model;
  j["generated_flagged"] = v.generated_flagged;
  j["generated_confidence"] = v.generated_confidence;
  j["similar_flagged"] = v.similar_flagged;
  j["similar_confidence"] = v.similar_confidence;
  j["unprecedented"] = v.unprecedented;
  return j;
}

ojson report_to_json(const ReportInputs& inputs) {
  ojson j;
  j["provenance"] = inputs.provenance;
  if (inputs.holdout != nullptr) {
    ojson names = ojson::object();
    for (const auto& r : inputs.holdout->per_artist) names[std::to_string(r.artist_id)] = r.artist_name;
    j["artists"] = std::move(names);
    j["holdout"] = to_json(*inputs.holdout, inputs.vocab);
  }
  ojson generated = ojson::array();
  double match_rate = 0.0;
  double confidence = 0.0;
  ojson coverage = ojson::object();
  for (const auto& g : inputs.generated) {
    generated.push_back(to_json(g, inputs.vocab));
    match_rate += g.aggregates.match_rate;
    confidence += g.aggregates.mean_confidence;
    coverage[g.label] = g.aggregates.artists;
  }
  j["generated"] = std::move(generated);
  if (!inputs.generated.empty()) {
    const auto n = static_cast<double>(inputs.generated.size());
    j["generated_average"] = {{"models", inputs.generated.size()},
                              {"match_rate", match_rate / n},
                              {"mean_confidence", confidence / n},
                              {"artists_per_model", std::move(coverage)}};
  }
  ojson verdicts = ojson::array();
  for (const auto& v : inputs.verdicts) verdicts.push_back(to_json(v));
  j["unprecedented"] = std::move(verdicts);
  return j;
}

std::string render_markdown(const ojson& report) {
  std::ostringstream md;
  const ojson names = report.value("artists", ojson::object());
  md << "# Style copying report\n\n";
  if (report.contains("holdout")) {
    const auto& agg = report["holdout"]["aggregates"];
    md << "Held-out match rate " << fmt("%.1f%%", agg["match_rate"].get<double>()) << " over "
       << agg["artists"].get<std::size_t>() << " artists; TagMatch top-1 "
       << fmt("%.1f%%", agg["tagmatch_topk_accuracy"]["top1"].get<double>()) << ".\n\n";
  }
  if (report.contains("generated_average")) {
    const auto& avg = report["generated_average"];
    md << "Generated-set match rate averaged over " << avg["models"].get<std::size_t>() << " model(s): "
       << fmt("%.1f%%", avg["match_rate"].get<double>()) << ".\n\n";
  }

  if (report.contains("holdout")) {
    for (const auto& row : report["holdout"]["per_artist"]) {
      const auto artist = row["artist_id"].get<std::uint64_t>();
      const auto& deep = row["deepmatch"];
      md << "## " << row["artist_name"].get<std::string>() << " (" << artist << ")\n\n";
      md << "### 1. Style recognizability\n\n";
      md << "Held-out works: " << row["images"].get<std::size_t>() << ". DeepMatch prediction: "
         << artist_label(names, deep["predicted"]) << ", " << percent(deep["label_confidence"].get<double>())
         << " of works attributed to this artist. TagMatch rank: "
         << (row["tagmatch"]["rank"].is_null() ? std::string("unranked") : row["tagmatch"]["rank"].dump())
         << ".\n\n";
      if (!deep["matched"].get<bool>()) {
        md << "**No unique style detected.** The classifier does not recognize this artist's held-out works, "
              "so generated images cannot be attributed to them.\n\n";
        continue;
      }
      md << "### 2. Generated images\n\n";
      const ojson* evidence_row = nullptr;
      for (const auto& g : report["generated"]) {
        const ojson* gen = row_for(g, artist);
        if (gen == nullptr) continue;
        if (evidence_row == nullptr) evidence_row = gen;
        const auto& gd = (*gen)["deepmatch"];
        md << "- " << g["label"].get<std::string>() << ": " << gen->at("images").get<std::size_t>()
           << " images, " << (gd["matched"].get<bool>() ? "matched" : "not matched") << ", confidence "
           << percent(gd["label_confidence"].get<double>()) << "\n";
      }
      if (evidence_row == nullptr) md << "No generated images were supplied for this artist.\n";
      md << '\n';
      md << "### 3. TagMatch evidence\n\n";
      render_evidence(md, evidence_row != nullptr ? *evidence_row : row, names);
    }
  }

  if (report.contains("unprecedented") && !report["unprecedented"].empty()) {
    md << "## Unprecedented similarity\n\n";
    md << "| artist | most similar | model | generated | similar artist | unprecedented |\n|---|---|---|---|---|---|\n";
    for (const auto& v : report["unprecedented"]) {
      md << "| " << artist_label(names, v["artist_id"]) << " | " << artist_label(names, v["most_similar"]) << " | "
         << v["model"].get<std::string>() << " | " << percent(v["generated_confidence"].get<double>()) << " | "
         << percent(v["similar_confidence"].get<double>()) << " | " << (v["unprecedented"].get<bool>() ? "yes" : "no")
         << " |\n";
    }
    md << '\n';
  }
  return md.str();
}

void emit_report(const ojson& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  detail::write_file(out_dir / "report.json", report.dump(2) + "\n");
  detail::write_file(out_dir / "report.md", render_markdown(report));
}

}  // namespace artsig

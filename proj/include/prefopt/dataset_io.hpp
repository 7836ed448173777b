#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "prefopt/domain.hpp"

namespace prefopt {

enum class Schema { plain, scored };

inline Schema parse_schema(const std::string& name) {
  if (name == "plain") return Schema::plain;
  if (name == "scored") return Schema::scored;
  throw ValidationError("unknown dataset schema '" + name + "'");
}

namespace detail {

[[noreturn]] inline void bad_line(std::size_t line, const std::string& field, const std::string& why) {
  throw ValidationError("line " + std::to_string(line) + ": field '" + field + "' " + why);
}

inline Label label_field(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) bad_line(line, key, "is missing");
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.get<std::int64_t>();
  bad_line(line, key, "must be a string or an integer");
}

inline int score_field(const ordered_json& j, const char* key, std::size_t line, int score_max) {
  if (!j.contains(key)) bad_line(line, key, "is missing");
  const auto& v = j.at(key);
  if (!v.is_number_integer()) bad_line(line, key, "must be an integer");
  const int s = v.get<int>();
  if (s < 1 || s > score_max) {
    bad_line(line, key, "value " + std::to_string(s) + " outside [1, " + std::to_string(score_max) + "]");
  }
  return s;
}

inline void put_label(ordered_json& j, const char* key, const Label& label) {
  std::visit([&](const auto& v) { j[key] = v; }, label);
}

}  // namespace detail

// One JSON object per line; blank lines are skipped. Records are validated as
// they are read and errors carry the 1-based line number.
inline PreferenceDataset parse_dataset(std::istream& in, Schema schema, int score_max = 10) {
  PreferenceDataset ds;
  ds.provenance["schema"] = schema == Schema::plain ? "plain" : "scored";
  ds.provenance["score_max"] = score_max;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw ValidationError("line " + std::to_string(line) + ": record must be an object");
    PreferenceTriple t;
    if (!j.contains("id")) detail::bad_line(line, "id", "is missing");
    if (!j["id"].is_string()) detail::bad_line(line, "id", "must be a string");
    t.id = j["id"].get<std::string>();
    t.prompt = detail::label_field(j, "prompt", line);
    t.chosen = detail::label_field(j, "chosen", line);
    t.rejected = detail::label_field(j, "rejected", line);
    if (t.chosen == t.rejected) detail::bad_line(line, "rejected", "equals chosen");
    std::vector<std::string> known = {"id", "prompt", "chosen", "rejected"};
    if (schema == Schema::scored) {
      t.chosen_score = detail::score_field(j, "chosen_score", line, score_max);
      t.rejected_score = detail::score_field(j, "rejected_score", line, score_max);
      if (*t.chosen_score < *t.rejected_score) {
        spdlog::warn("line {}: chosen_score {} below rejected_score {}", line, *t.chosen_score,
                     *t.rejected_score);
      }
      known.push_back("chosen_score");
      known.push_back("rejected_score");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end()) t.extra[it.key()] = it.value();
    }
    if (!ids.insert(t.id).second) detail::bad_line(line, "id", "duplicates an earlier id '" + t.id + "'");
    ds.triples.push_back(std::move(t));
  }
  return ds;
}

inline PreferenceDataset load_dataset(const std::filesystem::path& path, Schema schema, int score_max = 10) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  auto ds = parse_dataset(in, schema, score_max);
  ds.provenance["source"] = path.string();
  return ds;
}

inline ordered_json triple_to_json(const PreferenceTriple& t, Schema schema) {
  ordered_json j;
  j["id"] = t.id;
  detail::put_label(j, "prompt", t.prompt);
  detail::put_label(j, "chosen", t.chosen);
  detail::put_label(j, "rejected", t.rejected);
  if (schema == Schema::scored) {
    if (!t.scored()) throw ValidationError("record '" + t.id + "' has no scores for the scored schema");
    j["chosen_score"] = *t.chosen_score;
    j["rejected_score"] = *t.rejected_score;
  }
  for (auto it = t.extra.begin(); it != t.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline void write_dataset(std::ostream& out, const PreferenceDataset& ds, Schema schema) {
  for (const auto& t : ds.triples) out << triple_to_json(t, schema).dump() << '\n';
}

inline void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path, Schema schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset file " + path.string());
  write_dataset(out, ds, schema);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace prefopt

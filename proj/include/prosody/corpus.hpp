#pragma once

// Dataset plumbing: the segment manifest, perception-test marks and the
// speaker-group train/test splits used by the recognition harness.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/pitch_analysis.hpp"
#include "prosody/speaker.hpp"

namespace prosody {

enum class EntryKind { Phoneme, Presentation };

constexpr std::string_view to_string(EntryKind k) { return k == EntryKind::Phoneme ? "phoneme" : "presentation"; }

struct ManifestEntry {
  std::string segment_id;
  std::string path;  // as written in the manifest, relative to its directory
  EntryKind kind = EntryKind::Presentation;
  std::string label;
  SpeakerGroup speaker_group = SpeakerGroup::Male;
};

struct CorpusManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const {
    const std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<ManifestEntry> of_kind(EntryKind kind) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [&](const ManifestEntry& e) { return e.kind == kind; });
    return out;
  }
};

inline const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> header = {"segment_id", "path", "kind", "label", "speaker_group"};
  return header;
}

inline CorpusManifest parse_manifest(std::istream& in, const std::string& name, const std::filesystem::path& base_dir,
                                     bool check_files = true) {
  const auto table = csv::parse(in, name);
  csv::require_header(table, manifest_header(), name);
  CorpusManifest manifest;
  manifest.base_dir = base_dir;
  std::set<std::string, std::less<>> seen;
  for (const auto& row : table.rows) {
    const std::string where = name + ":" + std::to_string(row.line);
    if (row.fields.size() != 5) {
      throw Error(ErrorCode::MalformedRow, where + ": expected 5 fields, got " + std::to_string(row.fields.size()));
    }
    ManifestEntry e;
    e.segment_id = row.fields[0];
    e.path = row.fields[1];
    e.label = row.fields[3];
    if (e.segment_id.empty() || e.path.empty()) {
      throw Error(ErrorCode::MalformedRow, where + ": segment_id and path are required");
    }
    if (row.fields[2] == "phoneme") {
      e.kind = EntryKind::Phoneme;
    } else if (row.fields[2] == "presentation") {
      e.kind = EntryKind::Presentation;
    } else {
      throw Error(ErrorCode::MalformedRow, where + ": kind must be phoneme or presentation");
    }
    if (row.fields[4] == "male") {
      e.speaker_group = SpeakerGroup::Male;
    } else if (row.fields[4] == "female") {
      e.speaker_group = SpeakerGroup::Female;
    } else {
      throw Error(ErrorCode::MalformedRow, where + ": speaker_group must be male or female");
    }
    if (!seen.insert(e.segment_id).second) {
      throw Error(ErrorCode::DuplicateId, where + ": duplicate segment_id '" + e.segment_id + "'");
    }
    manifest.entries.push_back(std::move(e));
    if (check_files && !std::filesystem::exists(manifest.resolve(manifest.entries.back()))) {
      throw Error(ErrorCode::MissingFile, where + ": " + manifest.resolve(manifest.entries.back()).string());
    }
  }
  return manifest;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path, bool check_files = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open manifest " + path.string());
  return parse_manifest(in, path.string(), path.parent_path(), check_files);
}

inline std::string serialize_manifest(const CorpusManifest& manifest) {
  std::string out = csv::join(manifest_header()) + "\n";
  for (const auto& e : manifest.entries) {
    out += csv::join({e.segment_id, e.path, std::string(to_string(e.kind)), e.label,
                      std::string(to_string(e.speaker_group))});
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Marks grouped per segment, ordered by segment_id. When `known_ids` is
/// given, marks for any other segment raise UnknownSegment.
inline std::vector<PerceptionRecord> parse_perception_labels(
    std::istream& in, const std::string& name,
    std::optional<std::span<const std::string>> known_ids = std::nullopt) {
  const auto table = csv::parse(in, name);
  csv::require_header(table, {"segment_id", "rater_id", "mark"}, name);
  std::set<std::string, std::less<>> known;
  if (known_ids) known.insert(known_ids->begin(), known_ids->end());

  std::map<std::string, std::vector<int>, std::less<>> marks;
  std::set<std::pair<std::string, std::string>> rated;
  for (const auto& row : table.rows) {
    const std::string where = name + ":" + std::to_string(row.line);
    if (row.fields.size() != 3) throw Error(ErrorCode::MalformedRow, where + ": expected 3 fields");
    const auto& id = row.fields[0];
    if (id.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty segment_id");
    const long long mark = csv::parse_int(row.fields[2], where);
    if (mark < 1 || mark > 3) {
      throw Error(ErrorCode::MarkOutOfRange, where + ": mark " + row.fields[2] + " outside {1,2,3}");
    }
    if (known_ids && !known.contains(id)) {
      throw Error(ErrorCode::UnknownSegment, where + ": segment '" + id + "' not in manifest");
    }
    if (!rated.emplace(id, row.fields[1]).second) {
      throw Error(ErrorCode::DuplicateId, where + ": rater '" + row.fields[1] + "' already marked '" + id + "'");
    }
    marks[id].push_back(static_cast<int>(mark));
  }
  std::vector<PerceptionRecord> out;
  for (auto& [id, m] : marks) out.push_back(make_perception_record(id, std::move(m)));
  return out;
}

inline std::vector<PerceptionRecord> load_perception_labels(
    const std::filesystem::path& path, std::optional<std::span<const std::string>> known_ids = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open perception labels " + path.string());
  return parse_perception_labels(in, path.string(), known_ids);
}

// ---------------------------------------------------------------------------
// Splits

template <class Entry>
concept GroupedSegment = requires(const Entry& e) {
  { e.segment_id } -> std::convertible_to<std::string>;
  { e.speaker_group } -> std::convertible_to<SpeakerGroup>;
};

template <class Entry>
struct TrainTestSplit {
  std::vector<Entry> train;
  std::vector<Entry> test;
};

inline constexpr double kSameGroupTrainFraction = 0.7;

/// Training share of a same-group split of `n` items: round(0.7 n), kept in
/// [1, n-1] so both sides are non-empty whenever n >= 2.
inline std::size_t same_group_train_count(std::size_t n, double fraction = kSameGroupTrainFraction) {
  if (n < 2) return n;
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Different groups: all of one against all of the other. Same group: the
/// first 70% by segment_id train, the rest test.
template <GroupedSegment Entry>
TrainTestSplit<Entry> split_by_group(std::span<const Entry> entries, SpeakerGroup train_group, SpeakerGroup test_group) {
  auto members = [&](SpeakerGroup g) {
    std::vector<Entry> out;
    for (const auto& e : entries) {
      if (e.speaker_group == g) out.push_back(e);
    }
    std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.segment_id < b.segment_id; });
    return out;
  };
  TrainTestSplit<Entry> split;
  if (train_group != test_group) {
    split.train = members(train_group);
    split.test = members(test_group);
    if (split.train.empty()) throw Error(ErrorCode::EmptyGroup, "no " + std::string(to_string(train_group)) + " entries");
    if (split.test.empty()) throw Error(ErrorCode::EmptyGroup, "no " + std::string(to_string(test_group)) + " entries");
    return split;
  }
  auto all = members(train_group);
  if (all.size() < 2) {
    throw Error(ErrorCode::EmptyGroup, "need at least 2 " + std::string(to_string(train_group)) +
                                           " entries to split, have " + std::to_string(all.size()));
  }
  const std::size_t k = same_group_train_count(all.size());
  split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  return split;
}

template <GroupedSegment Entry>
TrainTestSplit<Entry> split_by_group(const std::vector<Entry>& entries, SpeakerGroup train_group,
                                     SpeakerGroup test_group) {
  return split_by_group(std::span<const Entry>(entries), train_group, test_group);
}

}  // namespace prosody

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "prosody/corpus.hpp"

using namespace prosody;

namespace {

ErrorCode parse_code(const std::string& text, bool check_files = false) {
  std::istringstream in(text);
  try {
    parse_manifest(in, "m.csv", ".", check_files);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

std::string manifest_rows(int n, const std::string& kind = "presentation") {
  std::string text = "segment_id,path,kind,label,speaker_group\n";
  for (int i = 0; i < n; ++i) {
    char row[128];
    std::snprintf(row, sizeof row, "s%02d,audio/s%02d.wav,%s,x,%s\n", i, i, kind.c_str(), i % 4 ? "female" : "male");
    text += row;
  }
  return text;
}

}  // namespace

TEST(LoadManifest, ThirtyTwoRows) {
  std::istringstream in(manifest_rows(32));
  const auto m = parse_manifest(in, "m.csv", ".", false);
  EXPECT_EQ(m.entries.size(), 32u);
  EXPECT_EQ(m.entries[0].kind, EntryKind::Presentation);
  EXPECT_EQ(m.entries[0].speaker_group, SpeakerGroup::Male);
  EXPECT_EQ(m.entries[1].speaker_group, SpeakerGroup::Female);
}

TEST(LoadManifest, HeaderOnlyIsEmpty) {
  std::istringstream in("segment_id,path,kind,label,speaker_group\n");
  EXPECT_TRUE(parse_manifest(in, "m.csv", ".").entries.empty());
}

TEST(LoadManifest, Errors) {
  EXPECT_EQ(parse_code(manifest_rows(2) + "s01,b.wav,phoneme,y,male\n"), ErrorCode::DuplicateId);
  EXPECT_EQ(parse_code(manifest_rows(2), true), ErrorCode::MissingFile);
  EXPECT_EQ(parse_code("segment_id,path,kind,label,speaker_group\na,b.wav,video,x,male\n"), ErrorCode::MalformedRow);
  EXPECT_EQ(parse_code("segment_id,path,kind,label,speaker_group\na,b.wav,phoneme,x,child\n"), ErrorCode::MalformedRow);
  EXPECT_EQ(parse_code("segment_id,path,kind\na,b,c\n"), ErrorCode::MalformedRow);
  EXPECT_EQ(parse_code(""), ErrorCode::MalformedRow);
  try {
    load_manifest("/nonexistent/manifest.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(LoadManifest, MalformedRowNamesLine) {
  std::istringstream in(manifest_rows(3) + "broken,row\n");
  try {
    parse_manifest(in, "m.csv", ".", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("m.csv:5"), std::string::npos) << e.what();
  }
}

TEST(LoadManifest, ResolvesRelativeToManifest) {
  const auto dir = oracle::fresh_dir("manifest");
  std::filesystem::create_directories(dir / "audio");
  std::ofstream(dir / "audio" / "s00.wav") << "x";
  csv::write_file(dir / "m.csv", "segment_id,path,kind,label,speaker_group\ns00,audio/s00.wav,phoneme,a,male\n");
  const auto m = load_manifest(dir / "m.csv");
  EXPECT_EQ(m.resolve(m.entries[0]), dir / "audio" / "s00.wav");
}

TEST(ManifestProperty, SerializeRoundTripIsByteIdentical) {
  for (int n : {0, 1, 7, 32}) {
    const std::string text = manifest_rows(n, n % 2 ? "phoneme" : "presentation");
    std::istringstream in(text);
    const auto m = parse_manifest(in, "m.csv", ".", false);
    EXPECT_EQ(serialize_manifest(m), text);
    std::istringstream again(serialize_manifest(m));
    EXPECT_EQ(serialize_manifest(parse_manifest(again, "m.csv", ".", false)), text);
  }
}

TEST(PerceptionLabels, Examples) {
  std::istringstream in("segment_id,rater_id,mark\nseg,r1,1\nseg,r2,2\nseg,r3,3\n");
  const auto r = parse_perception_labels(in, "l.csv");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].average_mark, 2.0);

  auto code = [](const std::string& text, std::optional<std::vector<std::string>> ids = std::nullopt) {
    std::istringstream s(text);
    try {
      if (ids) {
        parse_perception_labels(s, "l.csv", std::span<const std::string>(*ids));
      } else {
        parse_perception_labels(s, "l.csv");
      }
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code("segment_id,rater_id,mark\nseg,r1,4\n"), ErrorCode::MarkOutOfRange);
  EXPECT_EQ(code("segment_id,rater_id,mark\nseg,r1,0\n"), ErrorCode::MarkOutOfRange);
  EXPECT_EQ(code("segment_id,rater_id,mark\nother,r1,2\n", std::vector<std::string>{"seg"}), ErrorCode::UnknownSegment);
  EXPECT_EQ(code("segment_id,rater_id,mark\nseg,r1,2\nseg,r1,3\n"), ErrorCode::DuplicateId);
  EXPECT_EQ(code("segment_id,rater_id,mark\nseg,r1,two\n"), ErrorCode::MalformedRow);
}

TEST(PerceptionLabels, ThreeRatersThirtyTwoSegments) {
  std::string text = "segment_id,rater_id,mark\n";
  for (int r = 0; r < 3; ++r) {
    for (int s = 31; s >= 0; --s) {
      text += "s" + std::to_string(s) + ",r" + std::to_string(r) + "," + std::to_string(1 + (s + r) % 3) + "\n";
    }
  }
  std::istringstream in(text);
  const auto recs = parse_perception_labels(in, "l.csv");
  ASSERT_EQ(recs.size(), 32u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].marks.size(), 3u);
    EXPECT_DOUBLE_EQ(recs[i].average_mark, 2.0);
    if (i > 0) EXPECT_LT(recs[i - 1].segment_id, recs[i].segment_id);
  }
}

TEST(SplitByGroup, CrossGroup) {
  std::istringstream in(manifest_rows(12));
  const auto m = parse_manifest(in, "m.csv", ".", false);
  const auto split = split_by_group(m.entries, SpeakerGroup::Male, SpeakerGroup::Female);
  EXPECT_EQ(split.train.size(), 3u);
  EXPECT_EQ(split.test.size(), 9u);
  for (const auto& e : split.train) EXPECT_EQ(e.speaker_group, SpeakerGroup::Male);
  for (const auto& e : split.test) EXPECT_EQ(e.speaker_group, SpeakerGroup::Female);
}

TEST(SplitByGroup, SameGroupSeventyThirty) {
  std::vector<ManifestEntry> entries;
  for (int i = 9; i >= 0; --i) entries.push_back({"f" + std::to_string(i), "x.wav", EntryKind::Phoneme, "a", SpeakerGroup::Female});
  const auto split = split_by_group(entries, SpeakerGroup::Female, SpeakerGroup::Female);
  ASSERT_EQ(split.train.size(), 7u);
  ASSERT_EQ(split.test.size(), 3u);
  EXPECT_EQ(split.train.front().segment_id, "f0");
  EXPECT_EQ(split.test.front().segment_id, "f7");
  EXPECT_EQ(split.test.back().segment_id, "f9");
}

TEST(SplitByGroup, EmptyGroup) {
  std::vector<ManifestEntry> entries = {{"m1", "x.wav", EntryKind::Phoneme, "a", SpeakerGroup::Male}};
  try {
    split_by_group(entries, SpeakerGroup::Male, SpeakerGroup::Female);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
}

TEST(SplitByGroupProperty, DeterministicDisjointNonEmpty) {
  for (std::size_t n = 2; n < 40; ++n) {
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
      entries.push_back({"id" + std::to_string((i * 7919) % 1000), "x.wav", EntryKind::Phoneme, "a", SpeakerGroup::Male});
    }
    const auto a = split_by_group(entries, SpeakerGroup::Male, SpeakerGroup::Male);
    std::reverse(entries.begin(), entries.end());
    const auto b = split_by_group(entries, SpeakerGroup::Male, SpeakerGroup::Male);
    ASSERT_FALSE(a.train.empty());
    ASSERT_FALSE(a.test.empty());
    EXPECT_EQ(a.train.size() + a.test.size(), n);
    EXPECT_EQ(a.train.size(), same_group_train_count(n));
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].segment_id, b.train[i].segment_id);
    EXPECT_LT(a.train.back().segment_id, a.test.front().segment_id);
  }
}

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "prefopt/dataset_io.hpp"
#include "prefopt/domain.hpp"

using namespace prefopt;

namespace {

PreferenceDataset numbered(std::size_t n) {
  PreferenceDataset ds;
  for (std::size_t i = 0; i < n; ++i) ds.triples.push_back(make_triple("p" + std::to_string(i), i % 3, 0, 1));
  return ds;
}

}  // namespace

TEST(Labels, IndexAndTextForms) {
  EXPECT_EQ(index_of(label_of(3), 4, "prompt"), 3u);
  EXPECT_THROW(index_of(label_of(4), 4, "prompt"), ValidationError);
  EXPECT_THROW(index_of(Label{std::string("hello")}, 4, "prompt"), ValidationError);
  EXPECT_EQ(to_string(Label{std::string("hello")}), "hello");
  EXPECT_EQ(to_string(label_of(7)), "7");
}

TEST(Space, RejectsEmptyAndMismatchedLabels) {
  EXPECT_THROW(Space::make(0), ValidationError);
  EXPECT_THROW(Space::make(2, {"a"}), ValidationError);
  EXPECT_EQ(Space::make(2, {"a", "b"}).display(1), "b");
  EXPECT_EQ(Space::make(3).display(2), "2");
}

TEST(FeatureMap, OneHotRowsAreIdentity) {
  const auto fm = FeatureMap::one_hot(2, 3);
  EXPECT_EQ(fm.dim(), 6u);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 3; ++y) {
      const Eigen::VectorXd phi = fm.phi(x, y);
      EXPECT_EQ(phi.sum(), 1.0);
      EXPECT_EQ(phi[static_cast<Eigen::Index>(x * 3 + y)], 1.0);
    }
}

TEST(FeatureMap, GaussianIsSeededAndRoundTrips) {
  const auto a = FeatureMap::random_gaussian(3, 4, 5, 42, 0.5);
  const auto b = FeatureMap::random_gaussian(3, 4, 5, 42, 0.5);
  const auto c = FeatureMap::random_gaussian(3, 4, 5, 43, 0.5);
  EXPECT_EQ(a.matrix(), b.matrix());
  EXPECT_NE(a.matrix(), c.matrix());
  EXPECT_EQ(FeatureMap::from_json(a.to_json()).matrix(), a.matrix());
  EXPECT_THROW(FeatureMap::random_gaussian(3, 4, 0, 1), ValidationError);
}

TEST(DatasetIo, EmptyInputGivesEmptyDataset) {
  std::istringstream in("");
  EXPECT_EQ(parse_dataset(in, Schema::scored).size(), 0u);
}

TEST(DatasetIo, ScoredLinesKeepFileOrder) {
  std::istringstream in(
      R"({"id":"a","prompt":"p","chosen":"x","rejected":"y","chosen_score":8,"rejected_score":3}
{"id":"b","prompt":1,"chosen":2,"rejected":0,"chosen_score":5,"rejected_score":4}

{"id":"c","prompt":"q","chosen":"u","rejected":"v","chosen_score":2,"rejected_score":9,"note":"kept"}
)");
  const auto ds = parse_dataset(in, Schema::scored);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.triples[0].id, "a");
  EXPECT_EQ(ds.triples[1].chosen, label_of(2));
  EXPECT_EQ(*ds.triples[2].rejected_score, 9);
  EXPECT_EQ(ds.triples[2].extra["note"], "kept");

  std::ostringstream out;
  write_dataset(out, ds, Schema::scored);
  std::istringstream again(out.str());
  EXPECT_EQ(parse_dataset(again, Schema::scored).triples, ds.triples);
}

TEST(DatasetIo, ChosenEqualsRejectedNamesTheLine) {
  std::istringstream in(R"({"id":"a","prompt":"p","chosen":"x","rejected":"y"}
{"id":"b","prompt":"p","chosen":"x","rejected":"x"}
)");
  try {
    parse_dataset(in, Schema::plain);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, RejectsBadRecords) {
  for (const char* bad : {R"({"id":"a","prompt":"p","chosen":"x"})",
                          R"({"id":"a","prompt":"p","chosen":"x","rejected":"y","chosen_score":11,"rejected_score":1})",
                          R"({"id":"a","prompt":"p","chosen":"x","rejected":"y","chosen_score":2.5,"rejected_score":1})",
                          "not json", "[1,2]"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_dataset(in, Schema::scored), ValidationError) << bad;
  }
  std::istringstream dup(R"({"id":"a","prompt":"p","chosen":"x","rejected":"y"}
{"id":"a","prompt":"p","chosen":"y","rejected":"x"})");
  EXPECT_THROW(parse_dataset(dup, Schema::plain), ValidationError);
}

TEST(Dataset, ValidateCatchesDuplicatesAndScores) {
  auto ds = numbered(3);
  EXPECT_NO_THROW(ds.validate());
  ds.triples[2].id = "p0";
  EXPECT_THROW(ds.validate(), ValidationError);
  ds = numbered(2);
  ds.triples[0].chosen_score = 0;
  EXPECT_THROW(ds.validate(), ValidationError);
}

TEST(Partition, EqualThirds) {
  const auto parts = partition_dataset(numbered(9), 3);
  ASSERT_EQ(parts.size(), 3u);
  for (const auto& p : parts) EXPECT_EQ(p.size(), 3u);
}

TEST(Partition, SinglePartIsInput) {
  const auto ds = numbered(7);
  const auto parts = partition_dataset(ds, 1);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].triples, ds.triples);
}

TEST(Partition, RemainderGoesFirstAndCoversInput) {
  const auto ds = numbered(10);
  const auto parts = partition_dataset(ds, 3);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].size(), 4u);
  EXPECT_EQ(parts[1].size(), 3u);
  EXPECT_EQ(parts[2].size(), 3u);
  std::vector<std::string> joined;
  std::set<std::string> unique;
  for (const auto& p : parts)
    for (const auto& t : p.triples) {
      joined.push_back(t.id);
      unique.insert(t.id);
    }
  ASSERT_EQ(joined.size(), ds.size());
  EXPECT_EQ(unique.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(joined[i], ds.triples[i].id);
  EXPECT_THROW(partition_dataset(ds, 0), ValidationError);
}

TEST(Dataset, ComparisonsUseIndices) {
  const auto ds = numbered(4);
  const auto comps = ds.comparisons(3, 2);
  ASSERT_EQ(comps.size(), 4u);
  EXPECT_EQ(comps[3].prompt, 0u);
  EXPECT_THROW(ds.comparisons(2, 2), ValidationError);
}

TEST(DatasetIo, SaveLoadRoundTripsThroughFile) {
  auto ds = numbered(4);
  ds.triples[1].prompt = Label{std::string("text prompt")};
  ds.triples[2].extra["source"] = "web";
  for (auto& t : ds.triples) {
    t.chosen_score = 7;
    t.rejected_score = 2;
  }
  const auto path = std::filesystem::temp_directory_path() / "prefopt_domain_roundtrip.jsonl";
  save_dataset(ds, path, Schema::scored);
  const auto back = load_dataset(path, Schema::scored);
  std::filesystem::remove(path);
  std::ostringstream a;
  std::ostringstream b;
  write_dataset(a, ds, Schema::scored);
  write_dataset(b, back, Schema::scored);
  EXPECT_EQ(a.str(), b.str());
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back.triples[1].prompt, ds.triples[1].prompt);
  EXPECT_EQ(back.triples[2].extra["source"], "web");
}

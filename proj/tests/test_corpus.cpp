/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace secevent;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("secevent_test_" + name)).string();
}

const char* kThree =
    R"({"tweet_id":"1","user_id":"a","posted_at":"2022-06-01T00:00:00Z","text":"WhatsApp zero-day exploited"})"
    "\n"
    R"({"tweet_id":"2","user_id":"b","posted_at":"2022-06-01T01:00:00Z","text":"patch now","gold_event_id":"E1","gold_categories":["Vulnerability"]})"
    "\n"
    R"({"tweet_id":"3","user_id":"c","posted_at":"2022-06-01T02:00:00Z","text":"hello","follower_count":12})"
    "\n";

TweetRecord random_tweet(Rng& rng, std::size_t i) {
  static const std::vector<std::string> pieces = {"ransomware", "CVE-2023-1234", "caf\xc3\xa9", "\xf0\x9f\x94\x92",
                                                  "\"quoted\"",  "back\\slash",   "tab\there", "LockBit",
                                                  "data leak",   "\xe6\xbc\x8f\xe6\xb4\x9e"};
  TweetRecord t;
  t.tweet_id = "id-" + std::to_string(i);
  t.user_id = "user" + std::to_string(uniform_index(rng, 50));
  t.posted_at = Timestamp{1577836800 + static_cast<std::int64_t>(uniform_index(rng, 100000000))};
  const auto words = 1 + uniform_index(rng, 6);
  for (std::size_t w = 0; w < words; ++w) t.text += (w ? " " : "") + pieces[uniform_index(rng, pieces.size())];
  if (uniform01(rng) < 0.5) t.gold_event_id = "E" + std::to_string(uniform_index(rng, 20));
  if (uniform01(rng) < 0.5) {
    CategorySet s;
    for (std::size_t c = 0; c < kNumCategories; ++c) s[c] = uniform01(rng) < 0.3;
    t.gold_categories = s;
  }
  if (uniform01(rng) < 0.5) t.follower_count = uniform_index(rng, 1000000);
  if (uniform01(rng) < 0.5) {
    std::vector<EntityMention> ms;
    // first word as a spanned mention
    const auto first = t.text.substr(0, t.text.find(' '));
    ms.push_back(EntityMention::make(EntityType{static_cast<std::uint8_t>(uniform_index(rng, kNumEntityTypes))}, first,
                                     Span{0, utf8_length(first)}));
    if (uniform01(rng) < 0.5) ms.push_back(EntityMention::make(EntityType{3}, "Some  Tool"));
    t.entities = std::move(ms);
  }
  if (uniform01(rng) < 0.3) {
    std::vector<double> e(4);
    for (auto& x : e) x = normal(rng);
    t.text_embedding = std::move(e);
  }
  return t;
}

}  // namespace

TEST(LoadCorpus, ThreeWellFormedLines) {
  const auto c = parse_corpus(kThree);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_FALSE(c.features.has_value());
  EXPECT_EQ(c.tweets[0].text, "WhatsApp zero-day exploited");
  EXPECT_EQ(*c.tweets[1].gold_event_id, "E1");
  EXPECT_TRUE((*c.tweets[1].gold_categories)[static_cast<std::size_t>(Category::Vulnerability)]);
  EXPECT_EQ(c.tweets[2].followers(), 12u);
  EXPECT_EQ(c.tweets[0].followers(), 0u);
}

TEST(LoadCorpus, FeatureRowMismatchIsRejected) {
  std::string five;
  for (int i = 0; i < 5; ++i)
    five += R"({"tweet_id":")" + std::to_string(i) + R"(","user_id":"u","posted_at":"2022-06-01T00:00:00Z","text":"x"})" "\n";
  const auto jsonl = tmp_path("five.jsonl"), feats = tmp_path("four.twzf");
  write_file(jsonl, five);
  write_feature_matrix(feats, Matrix::Ones(4, 3));
  EXPECT_THROW(load_corpus(jsonl, feats), DataError);
  write_feature_matrix(feats, Matrix::Ones(5, 3));
  const auto c = load_corpus(jsonl, feats);
  ASSERT_TRUE(c.features.has_value());
  EXPECT_EQ(c.features->rows(), 5);
}

TEST(LoadCorpus, ErrorsCarryLineNumbers) {
  const std::string bad = std::string(kThree) + "{not json}\n";
  try {
    parse_corpus(bad);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_corpus(std::string(kThree) + R"({"tweet_id":"1","user_id":"z","posted_at":"2022-06-01T00:00:00Z","text":""})"),
               DataError);
  EXPECT_THROW(parse_corpus(R"({"tweet_id":"9","user_id":"z","posted_at":"2022-06-01T00:00:00Z","text":"","gold_categories":["Spam"]})"),
               DataError);
  EXPECT_THROW(parse_corpus(R"({"tweet_id":"9","user_id":"z","posted_at":"2022-06-01","text":""})"), DataError);
  EXPECT_THROW(parse_corpus(R"({"tweet_id":"9","user_id":"z","posted_at":"2022-06-01T00:00:00Z","text":"","follower_count":-3})"),
               DataError);
  EXPECT_THROW(parse_corpus(R"({"tweet_id":"9","posted_at":"2022-06-01T00:00:00Z","text":""})"), DataError);
}

TEST(LoadCorpus, RandomizedRoundTripPreservesFields) {
  Rng rng(11);
  Corpus c;
  for (std::size_t i = 0; i < 1000; ++i) c.tweets.push_back(random_tweet(rng, i));
  const auto text = serialize_corpus(c);
  const auto back = parse_corpus(text);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) ASSERT_EQ(back.tweets[i], c.tweets[i]) << i;
  // save, load, save is byte-identical
  const auto path = tmp_path("roundtrip.jsonl");
  save_corpus(back, path);
  EXPECT_EQ(read_file(path), text);
  EXPECT_EQ(serialize_corpus(load_corpus(path)), text);
}

TEST(FeatureFile, LayoutAndBitExactRoundTrip) {
  Matrix m(2, 3);
  m << 1.0, -2.5, 0.125, 3.0, 1e-3, -0.0;
  const auto bytes = serialize_feature_matrix(m);
  ASSERT_EQ(bytes.size(), 16u + 24u);
  EXPECT_EQ(bytes.substr(0, 4), "TWZF");
  ByteReader in(std::string_view(bytes).substr(4));
  EXPECT_EQ(in.u32(), 1u);
  EXPECT_EQ(in.u32(), 2u);
  EXPECT_EQ(in.u32(), 3u);
  EXPECT_EQ(in.f32(), 1.0f);
  EXPECT_EQ(in.f32(), -2.5f);
  const auto back = parse_feature_matrix(bytes);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(static_cast<float>(back.data()[i])),
              std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
  EXPECT_EQ(serialize_feature_matrix(back), bytes);
  EXPECT_THROW(parse_feature_matrix(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(parse_feature_matrix("TWZX" + bytes.substr(4)), DataError);
}

TEST(TemporalFeatures, Examples) {
  auto tf = temporal_features(parse_timestamp("2020-01-02T00:00:00Z"));
  EXPECT_DOUBLE_EQ(tf.hours_since_epoch, 24.0);
  EXPECT_DOUBLE_EQ(tf.days_since_epoch, 1.0);
  tf = temporal_features(parse_timestamp("2020-01-01T06:00:00Z"));
  EXPECT_DOUBLE_EQ(tf.hours_since_epoch, 6.0);
  EXPECT_DOUBLE_EQ(tf.days_since_epoch, 0.25);
  tf = temporal_features(parse_timestamp("2022-06-01T00:00:00Z"));
  const double days = static_cast<double>(oracle::civil_days(2022, 6, 1) - oracle::civil_days(2020, 1, 1));
  EXPECT_DOUBLE_EQ(tf.days_since_epoch, days);
  EXPECT_DOUBLE_EQ(tf.hours_since_epoch, days * 24.0);
  EXPECT_DOUBLE_EQ(tf.hours_since_epoch, 21168.0);
  EXPECT_THROW(temporal_features(parse_timestamp("2019-12-31T23:59:59Z")), DataError);
}

TEST(TemporalFeatures, MonotoneAndDaysAreHoursOver24) {
  Rng rng(5);
  std::int64_t prev = kTemporalEpoch;
  double prev_h = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto t = prev + 1 + static_cast<std::int64_t>(uniform_index(rng, 100000));
    const auto f = temporal_features(Timestamp{t});
    EXPECT_GT(f.hours_since_epoch, prev_h);
    EXPECT_EQ(f.days_since_epoch, f.hours_since_epoch / 24.0);
    prev = t;
    prev_h = f.hours_since_epoch;
  }
}

namespace {
Corpus at_times(const std::vector<std::int64_t>& ts) {
  Corpus c;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    TweetRecord t;
    t.tweet_id = std::to_string(i);
    t.user_id = "u";
    t.posted_at = Timestamp{ts[i]};
    c.tweets.push_back(t);
  }
  return c;
}
}  // namespace

TEST(WindowStream, OverlappingExample) {
  const auto day = parse_timestamp("2022-06-01T00:00:00Z").seconds;
  const auto w = window_stream(at_times({day + 1800, day + 5 * 3600 + 1800}), 6 * 3600, 4 * 3600);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].start.seconds, day);
  EXPECT_EQ(w[0].member_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(w[1].start.seconds, day + 4 * 3600);
  EXPECT_EQ(w[1].end().seconds, day + 10 * 3600);
  EXPECT_EQ(w[1].member_indices, (std::vector<std::size_t>{1}));
}

TEST(WindowStream, StrideEqualsLengthPartitions) {
  Rng rng(9);
  std::vector<std::int64_t> ts;
  for (int i = 0; i < 300; ++i) ts.push_back(1654041600 + static_cast<std::int64_t>(uniform_index(rng, 3 * 86400)));
  const auto c = at_times(ts);
  std::vector<int> seen(c.size());
  for (const auto& w : window_stream(c, 3600 * 5, 3600 * 5))
    for (auto i : w.member_indices) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(WindowStream, BruteForceMembership) {
  Rng rng(21);
  std::vector<std::int64_t> ts;
  for (int i = 0; i < 500; ++i) ts.push_back(1654041600 + 1234 + static_cast<std::int64_t>(uniform_index(rng, 48 * 3600)));
  const auto c = at_times(ts);
  const auto windows = window_stream(c, 6 * 3600, 4 * 3600);
  std::vector<int> seen(c.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& w = windows[k];
    if (k > 0) {
      EXPECT_EQ(w.start.seconds - windows[k - 1].start.seconds, 4 * 3600);
    }
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (ts[i] >= w.start.seconds && ts[i] < w.start.seconds + 6 * 3600) expect.push_back(i);
    EXPECT_EQ(w.member_indices, expect);
    for (auto i : w.member_indices) ++seen[i];
  }
  for (int s : seen) EXPECT_TRUE(s == 1 || s == 2);
  EXPECT_EQ(windows.front().start.seconds % 3600, 0);
}

TEST(WindowStream, Errors) {
  EXPECT_THROW(window_stream(Corpus{}, 3600, 3600), DataError);
  EXPECT_THROW(window_stream(at_times({0}), 0, 3600), UsageError);
  EXPECT_THROW(window_stream(at_times({0}), 3600, -1), UsageError);
}

TEST(Select, CarriesFeatureRows) {
  auto c = parse_corpus(kThree);
  Matrix f(3, 2);
  f << 1, 2, 3, 4, 5, 6;
  c.features = f;
  const auto s = select(c, {2, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.tweets[0].tweet_id, "3");
  EXPECT_EQ((*s.features)(0, 1), 6.0);
  EXPECT_EQ((*s.features)(1, 0), 1.0);
}

TEST(EventLabels, DenseFirstAppearance) {
  Corpus c = at_times({1, 2, 3, 4});
  c.tweets[0].gold_event_id = "B";
  c.tweets[2].gold_event_id = "A";
  c.tweets[3].gold_event_id = "B";
  const auto l = event_labels(c);
  EXPECT_EQ(l.label, (std::vector<int>{0, -1, 1, 0}));
  EXPECT_EQ(l.event_ids, (std::vector<std::string>{"B", "A"}));
}

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

#include "secevent/userscore.hpp"

#include <gtest/gtest.h>

using namespace secevent;

namespace {

UserActivity activity(std::string id, std::vector<std::pair<std::size_t, std::size_t>> windows, std::uint64_t followers) {
  UserActivity a;
  a.user_id = std::move(id);
  for (auto [e, n] : windows) a.windows.push_back({n, e});
  a.followers = followers;
  return a;
}

}  // namespace

TEST(ScoreUser, Examples) {
  EXPECT_EQ(score_user(activity("a", {{3, 3}, {1, 4}}, 0)), 0.0);
  // natural log: density 1 with F = 1 gives ln 2
  EXPECT_NEAR(score_user(activity("b", {{2, 2}, {5, 5}}, 1)), std::log(2.0), 1e-15);
  EXPECT_NEAR(score_user(activity("c", {{2, 4}, {1, 2}}, 99)), 2.302585092994046, 1e-12);
}

TEST(ScoreUser, IdleWindowsAndErrors) {
  const auto a = activity("a", {{1, 1}, {0, 0}}, 9);
  EXPECT_NEAR(score_user(a), std::log(10.0), 1e-15);
  EXPECT_NEAR(score_user(a, true), 0.5 * std::log(10.0), 1e-15);
  EXPECT_THROW(score_user(activity("x", {{3, 2}}, 1)), DataError);
  EXPECT_THROW(score_user(activity("x", {{0, 0}}, 1)), DataError);
}

TEST(RankUsers, FollowersBreakEqualDensity) {
  const auto r = rank_users({activity("small", {{1, 2}}, 10), activity("big", {{1, 2}}, 1000)});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].user_id, "big");
}

TEST(RankUsers, ZeroDensityRanksBelowPositive) {
  const auto r = rank_users({activity("loud", {{0, 50}, {0, 40}}, 100000), activity("quiet", {{1, 3}}, 5)});
  EXPECT_EQ(r[0].user_id, "quiet");
  EXPECT_EQ(r[1].score, 0.0);
}

TEST(RankUsers, MatchesRecomputation) {
  Rng rng(50);
  std::vector<UserActivity> users;
  for (int u = 0; u < 50; ++u) {
    std::vector<std::pair<std::size_t, std::size_t>> w;
    for (int t = 0; t < 6; ++t) {
      const auto n = uniform_index(rng, 5);
      w.emplace_back(n ? uniform_index(rng, n + 1) : 0, n);
    }
    if (std::all_of(w.begin(), w.end(), [](auto p) { return p.second == 0; })) w[0] = {1, 1};
    users.push_back(activity("u" + std::to_string(u), w, uniform_index(rng, 4) ? uniform_index(rng, 100000) : 0));
  }
  std::vector<std::pair<double, std::string>> expected;
  for (const auto& u : users) {
    double sum = 0.0;
    int active = 0;
    for (const auto& w : u.windows)
      if (w.tweets) sum += double(w.event_tweets) / double(w.tweets), ++active;
    expected.emplace_back(-(sum / active) * std::log1p(double(u.followers)), u.user_id);
  }
  std::sort(expected.begin(), expected.end());
  const auto r = rank_users(users);
  ASSERT_EQ(r.size(), 50u);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(r[i].score, -expected[i].first, 1e-12);
    EXPECT_EQ(r[i].user_id, expected[i].second) << i;
  }
}

TEST(RankUsers, OrderIndependentOfLogBase) {
  Rng rng(51);
  std::vector<UserActivity> users;
  for (int u = 0; u < 30; ++u)
    users.push_back(activity("u" + std::to_string(u), {{uniform_index(rng, 4), 4}}, 1 + uniform_index(rng, 1000)));
  const auto r = rank_users(users);
  for (std::size_t i = 1; i < r.size(); ++i) {
    // log10 scores are ln scores / ln 10, so order is preserved
    EXPECT_GE(r[i - 1].score / std::log(10.0), r[i].score / std::log(10.0));
  }
}

TEST(UserActivity, CountsEventTweetsPerWindow) {
  Corpus c;
  auto add = [&](std::string id, std::string user, std::int64_t t, std::uint64_t f) {
    TweetRecord r;
    r.tweet_id = std::move(id);
    r.user_id = std::move(user);
    r.posted_at = Timestamp{t};
    r.text = "x";
    r.follower_count = f;
    c.tweets.push_back(r);
  };
  add("1", "a", 0, 10);
  add("2", "a", 3600, 10);
  add("3", "b", 3600, 99);
  add("4", "a", 7 * 3600, 10);
  const auto windows = window_stream(c, 6 * 3600, 6 * 3600);
  ASSERT_EQ(windows.size(), 2u);
  EventInstance ev;
  ev.tweet_ids = {"1", "3"};
  ev.window_start = windows[0].start;
  ev.categories.set(3);
  const auto acts = user_activity({ev}, c, windows);
  ASSERT_EQ(acts.size(), 2u);
  EXPECT_EQ(acts[0].user_id, "a");
  EXPECT_EQ(acts[0].windows[0].tweets, 2u);
  EXPECT_EQ(acts[0].windows[0].event_tweets, 1u);
  EXPECT_EQ(acts[0].windows[1].event_tweets, 0u);
  EXPECT_EQ(acts[1].followers, 99u);
  const auto ranked = rank_users({ev}, c, windows);
  EXPECT_EQ(ranked[0].user_id, "b");
  EXPECT_NEAR(ranked[1].score, 0.25 * std::log(11.0), 1e-12);
  EXPECT_TRUE(user_activity({ev}, c, windows, Category::DataPrivacy)[1].windows[0].event_tweets == 0);
  ev.window_start = Timestamp{5};
  EXPECT_THROW(user_activity({ev}, c, windows), DataError);
}

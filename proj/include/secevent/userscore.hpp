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

#ifndef SECEVENT_USERSCORE_HPP_
#define SECEVENT_USERSCORE_HPP_

#include "secevent/clustering.hpp"
#include "secevent/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace secevent {

struct WindowActivity {
  std::size_t tweets = 0;        // N_t
  std::size_t event_tweets = 0;  // e_t
};

struct UserActivity {
  std::string user_id;
  std::vector<WindowActivity> windows;
  std::uint64_t followers = 0;
};

// Mean per-window event density times ln(followers + 1). Windows where the
// user posted nothing are skipped unless `count_idle_windows`, which scores
// them as zero density.
inline double score_user(const UserActivity& a, bool count_idle_windows = false) {
  double density = 0.0;
  std::size_t periods = 0;
  for (const auto& w : a.windows) {
    if (w.event_tweets > w.tweets) throw DataError("user '" + a.user_id + "': event tweets exceed tweets in a window");
    if (w.tweets == 0) {
      periods += count_idle_windows;
      continue;
    }
    density += static_cast<double>(w.event_tweets) / static_cast<double>(w.tweets);
    ++periods;
  }
  if (periods == 0) throw DataError("user '" + a.user_id + "' has no active windows");
  return density / static_cast<double>(periods) * std::log(static_cast<double>(a.followers) + 1.0);
}

struct UserScore {
  std::string user_id;
  double score = 0.0;
  std::size_t windows = 0;
  std::uint64_t followers = 0;
};

/// Per-user activity over `windows`: N_t counts the user's tweets in window t,
/// e_t those that belong to a retained event detected in window t (restricted
/// to events carrying `category` when given).
inline std::vector<UserActivity> user_activity(const std::vector<EventInstance>& events, const Corpus& corpus,
                                               const std::vector<Window>& windows,
                                               std::optional<Category> category = std::nullopt) {
  std::map<std::string, UserActivity> users;
  bool missing_followers = false;
  for (const auto& t : corpus.tweets) {
    auto& u = users[t.user_id];
    u.user_id = t.user_id;
    u.windows.resize(windows.size());
    if (!t.follower_count) missing_followers = true;
    u.followers = std::max(u.followers, t.followers());
  }
  if (missing_followers) warn("some tweets lack follower_count; treated as 0");

  std::map<std::int64_t, std::size_t> window_of;
  for (std::size_t w = 0; w < windows.size(); ++w) window_of.emplace(windows[w].start.seconds, w);
  std::vector<std::unordered_set<std::string>> event_tweets(windows.size());
  for (const auto& ev : events) {
    if (category && !ev.categories[static_cast<std::size_t>(*category)]) continue;
    auto it = window_of.find(ev.window_start.seconds);
    if (it == window_of.end()) throw DataError("event '" + ev.event_id + "' does not start on a window boundary");
    event_tweets[it->second].insert(ev.tweet_ids.begin(), ev.tweet_ids.end());
  }
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (auto i : windows[w].member_indices) {
      const auto& t = corpus.tweets[i];
      auto& slot = users[t.user_id].windows[w];
      ++slot.tweets;
      slot.event_tweets += event_tweets[w].count(t.tweet_id);
    }
  }
  std::vector<UserActivity> out;
  out.reserve(users.size());
  for (auto& [id, u] : users) out.push_back(std::move(u));
  return out;
}

// Sorted by descending score, ties by user_id.
inline std::vector<UserScore> rank_users(const std::vector<UserActivity>& activity, bool count_idle_windows = false) {
  std::vector<UserScore> out;
  for (const auto& a : activity) {
    std::size_t active = 0;
    for (const auto& w : a.windows) active += w.tweets > 0;
    if (active == 0) continue;
    out.push_back({a.user_id, score_user(a, count_idle_windows), count_idle_windows ? a.windows.size() : active,
                   a.followers});
  }
  std::sort(out.begin(), out.end(), [](const UserScore& x, const UserScore& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.user_id < y.user_id;
  });
  return out;
}

inline std::vector<UserScore> rank_users(const std::vector<EventInstance>& events, const Corpus& corpus,
                                         const std::vector<Window>& windows,
                                         std::optional<Category> category = std::nullopt) {
  return rank_users(user_activity(events, corpus, windows, category));
}

inline OrderedJson user_score_to_json(const UserScore& s) {
  OrderedJson j;
  j["user_id"] = s.user_id;
  j["score"] = s.score;
  j["windows"] = s.windows;
  j["followers"] = s.followers;
  return j;
}

}  // namespace secevent

#endif  // SECEVENT_USERSCORE_HPP_

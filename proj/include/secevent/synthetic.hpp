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

#ifndef SECEVENT_SYNTHETIC_HPP_
#define SECEVENT_SYNTHETIC_HPP_

#include "secevent/entities.hpp"

#include <set>
#include <string>
#include <vector>

namespace secevent {

// Seeded synthetic stream: K events x m tweets with event-specific entity
// vocabularies, a pool of topic terms shared by all events, and noise tweets.
struct SyntheticSpec {
  std::size_t events = 20;
  std::size_t tweets_per_event = 10;
  std::size_t noise_tweets = 100;
  double topic_overlap = 0.3;  // fraction of each tweet's words drawn from the shared topic pool
  std::size_t words_per_tweet = 14;
  std::size_t entities_per_event = 4;
  std::size_t keywords_per_event = 6;
  std::size_t shared_pool = 40;
  std::size_t filler_pool = 3000;
  double noise_entity_rate = 0.5;  // noise tweets mentioning one rarely repeated entity
  std::size_t category_cues = 0;   // per-category cue terms; event tweets carry one when > 0
  double train_fraction = 0.5;
  double validation_fraction = 0.2;
  std::int64_t start = 1654041600;  // 2022-06-01T00:00:00Z
  std::int64_t span_seconds = 30 * 86400;
  std::int64_t event_duration = 12 * 3600;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  Corpus train, validation, test;
  Gazetteer gazetteer;
};

namespace detail {

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string fresh(std::size_t syllables) {
    static constexpr const char* kOnset[] = {"b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                             "br", "cr", "dr", "gl", "kr", "pl", "st", "tr", "sh", "th"};
    static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnset[uniform_index(rng_, std::size(kOnset))];
        w += kVowel[uniform_index(rng_, std::size(kVowel))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

}  // namespace detail

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.events < 2 || spec.tweets_per_event < 2) throw UsageError("synthetic corpus needs >= 2 events of >= 2 tweets");
  if (spec.topic_overlap < 0.0 || spec.topic_overlap > 1.0) throw UsageError("topic overlap must lie in [0, 1]");
  Rng rng(spec.seed);
  detail::WordMaker words(rng);
  SyntheticCorpus out;
  out.train.split = SplitTag::Train;
  out.validation.split = SplitTag::Validation;
  out.test.split = SplitTag::Test;

  std::vector<std::string> shared, filler;
  for (std::size_t i = 0; i < spec.shared_pool; ++i) shared.push_back(words.fresh(2));
  for (std::size_t i = 0; i < spec.filler_pool; ++i) filler.push_back(words.fresh(2 + uniform_index(rng, 2)));

  struct EntityDef {
    std::string surface;
    EntityType type;
  };
  auto make_entity = [&] {
    EntityDef e;
    e.surface = words.fresh(3);
    if (uniform01(rng) < 0.3) e.surface += ' ' + words.fresh(2);
    e.type = EntityType{static_cast<std::uint8_t>(uniform_index(rng, kNumEntityTypes))};
    out.gazetteer.add(e.surface, e.type);
    return e;
  };

  const auto n_train = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(spec.events))));
  const auto n_val = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(spec.validation_fraction * static_cast<double>(spec.events))));
  if (n_train + n_val >= spec.events) throw UsageError("synthetic split leaves no test events");
  std::vector<std::size_t> split_of(spec.events);
  for (std::size_t e = 0; e < spec.events; ++e) split_of[e] = e < n_train ? 0 : (e < n_train + n_val ? 1 : 2);
  shuffle(split_of, rng);
  Corpus* splits[3] = {&out.train, &out.validation, &out.test};

  const std::size_t user_pool = 4 * (spec.events * spec.tweets_per_event + spec.noise_tweets);
  std::size_t next_tweet = 0;
  auto add_tweet = [&](Corpus& c, std::vector<std::string> tokens, std::int64_t t, std::optional<std::string> event,
                       CategorySet cats) {
    shuffle(tokens, rng);
    std::string text;
    for (const auto& tok : tokens) text += (text.empty() ? "" : " ") + tok;
    TweetRecord rec;
    rec.tweet_id = "t" + std::to_string(next_tweet++);
    rec.user_id = "u" + std::to_string(uniform_index(rng, user_pool));
    rec.posted_at = Timestamp{t};
    rec.text = std::move(text);
    rec.gold_event_id = std::move(event);
    rec.gold_categories = cats;
    rec.follower_count = static_cast<std::uint64_t>(std::floor(std::exp(uniform(rng, 0.0, std::log(100000.0)))));
    c.tweets.push_back(std::move(rec));
  };
  auto fill = [&](std::vector<std::string>& tokens, std::size_t n_shared) {
    for (std::size_t i = 0; i < n_shared; ++i) tokens.push_back(shared[uniform_index(rng, shared.size())]);
    while (tokens.size() < spec.words_per_tweet) tokens.push_back(filler[uniform_index(rng, filler.size())]);
  };
  const auto n_shared = static_cast<std::size_t>(std::lround(spec.topic_overlap * static_cast<double>(spec.words_per_tweet)));
  std::vector<std::vector<std::string>> cues(kNumCategories);
  for (auto& pool : cues)
    for (std::size_t i = 0; i < spec.category_cues; ++i) pool.push_back(words.fresh(2));

  for (std::size_t e = 0; e < spec.events; ++e) {
    std::vector<EntityDef> ents;
    for (std::size_t i = 0; i < spec.entities_per_event; ++i) ents.push_back(make_entity());
    std::vector<std::string> keywords;
    for (std::size_t i = 0; i < spec.keywords_per_event; ++i) keywords.push_back(words.fresh(3));
    CategorySet cats;
    cats.set(2 + uniform_index(rng, 5));
    if (uniform01(rng) < 0.2) cats.set(2 + uniform_index(rng, 5));
    const auto t0 = spec.start + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(spec.span_seconds - spec.event_duration)));
    const std::string event_id = "E" + std::to_string(e);
    for (std::size_t k = 0; k < spec.tweets_per_event; ++k) {
      std::vector<std::string> tokens;
      const std::size_t n_ent = 1 + uniform_index(rng, 2);
      for (std::size_t i = 0; i < n_ent; ++i) tokens.push_back(ents[uniform_index(rng, ents.size())].surface);
      for (std::size_t i = 0; i < 2; ++i) tokens.push_back(keywords[uniform_index(rng, keywords.size())]);
      if (spec.category_cues > 0) {
        std::vector<std::size_t> own;
        for (std::size_t c = 0; c < kNumCategories; ++c)
          if (cats[c]) own.push_back(c);
        const auto& pool = cues[own[uniform_index(rng, own.size())]];
        tokens.push_back(pool[uniform_index(rng, pool.size())]);
      }
      fill(tokens, n_shared);
      const auto t = t0 + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(spec.event_duration)));
      add_tweet(*splits[split_of[e]], std::move(tokens), t, event_id, cats);
    }
  }

  std::vector<EntityDef> noise_entities;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, spec.noise_tweets * 2); ++i) noise_entities.push_back(make_entity());
  for (std::size_t k = 0; k < spec.noise_tweets; ++k) {
    std::vector<std::string> tokens;
    if (uniform01(rng) < spec.noise_entity_rate)
      tokens.push_back(noise_entities[uniform_index(rng, noise_entities.size())].surface);
    fill(tokens, n_shared);
    CategorySet cats;
    cats.set(uniform_index(rng, 2));
    const double r = uniform01(rng);
    auto& target = r < spec.train_fraction ? out.train : (r < spec.train_fraction + spec.validation_fraction ? out.validation : out.test);
    add_tweet(target, std::move(tokens), spec.start + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(spec.span_seconds))),
              std::nullopt, cats);
  }

  for (Corpus* c : splits) {
    std::stable_sort(c->tweets.begin(), c->tweets.end(),
                     [](const TweetRecord& a, const TweetRecord& b) { return a.posted_at < b.posted_at; });
  }
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_SYNTHETIC_HPP_

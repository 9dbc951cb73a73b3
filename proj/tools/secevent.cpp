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

#include "secevent/secevent.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace secevent;

namespace {

void emit(const std::string& path, std::string_view contents) {
  if (path.empty() || path == "-") std::cout << contents << std::flush;
  else write_file(path, contents);
}

std::int64_t duration_arg(const std::string& s) {
  const auto v = parse_duration(s);
  if (v <= 0) throw UsageError("duration must be positive: '" + s + "'");
  return v;
}

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : parse_config(read_file(path));
}

Corpus load_input(const std::string& path, const std::string& features) {
  return load_corpus(path, features.empty() ? std::nullopt : std::optional<std::string>(features));
}

std::optional<Gazetteer> load_gazetteer(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return Gazetteer::from_tsv(read_file(path));
}

std::optional<CategorizerModel> load_categorizer(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return parse_categorizer(read_file(path));
}

template <typename T>
const T* ptr(const std::optional<T>& o) {
  return o ? &*o : nullptr;
}

std::optional<Category> category_arg(const std::string& s) {
  if (s.empty() || s == "all") return std::nullopt;
  const auto c = parse_category(s);
  if (!c) throw UsageError("unknown category '" + s + "'");
  return c;
}

// Predicted labels per tweet from detected events; tweets outside every event
// become noise. The first event containing a tweet wins.
std::vector<int> labels_from_events(const Corpus& corpus, const std::vector<EventInstance>& events) {
  std::unordered_map<std::string, int> of;
  for (std::size_t e = 0; e < events.size(); ++e)
    for (const auto& id : events[e].tweet_ids) of.try_emplace(id, static_cast<int>(e));
  std::vector<int> out;
  out.reserve(corpus.size());
  for (const auto& t : corpus.tweets) {
    auto it = of.find(t.tweet_id);
    out.push_back(it == of.end() ? kNoise : it->second);
  }
  return out;
}

double eps_value(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !(v > 0.0) || !std::isfinite(v))
    throw UsageError("--eps expects a positive number or 'auto', got '" + s + "'");
  return v;
}

OrderedJson ratio_json(const Ratio& r) {
  OrderedJson j;
  j["value"] = r.value();
  j["correct"] = r.num;
  j["total"] = r.den;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Security event detection from short-post streams"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "secevent 1.0.0");

  // ingest
  std::string in, features, out, annotations;
  auto* ingest = app.add_subcommand("ingest", "Validate a tweet JSONL file and write it in canonical form");
  ingest->add_option("--input", in, "Tweet JSONL")->required();
  ingest->add_option("--features", features, "TWZF feature matrix aligned with the input rows");
  ingest->add_option("--annotations", annotations, "Entity annotation JSONL to attach");
  ingest->add_option("--out", out, "Output JSONL (default stdout)");

  // window
  std::string length = "6h", stride = "4h";
  auto* window = app.add_subcommand("window", "List the sliding windows of a corpus as JSONL");
  window->add_option("--input", in)->required();
  window->add_option("--length", length, "Window length")->capture_default_str();
  window->add_option("--stride", stride, "Window stride")->capture_default_str();
  window->add_option("--out", out);

  // extract-entities
  std::string gazetteer;
  auto* extract = app.add_subcommand("extract-entities", "Attach gazetteer entity mentions to every tweet");
  extract->add_option("--input", in)->required();
  extract->add_option("--gazetteer", gazetteer, "TSV of surface<TAB>type")->required();
  extract->add_option("--out", out);

  // ner-eval
  std::string gold, pred;
  auto* ner = app.add_subcommand("ner-eval", "Exact-match precision/recall/F1 of predicted against gold annotations");
  ner->add_option("--gold", gold, "Gold annotation JSONL")->required();
  ner->add_option("--pred", pred, "Predicted annotation JSONL")->required();

  // train-categorizer
  std::string validation, model, config_path;
  std::optional<double> lr;
  std::optional<std::size_t> batch, patience, max_epochs;
  std::optional<std::uint64_t> seed;
  auto* train_cat = app.add_subcommand("train-categorizer", "Fit the seven linear category heads");
  train_cat->add_option("--input", in, "Training corpus with gold categories")->required();
  train_cat->add_option("--features", features);
  train_cat->add_option("--validation", validation, "Validation corpus for early stopping");
  train_cat->add_option("--lr", lr, "Learning rate (default 1e-5)");
  train_cat->add_option("--batch", batch, "Batch size (default 64)");
  train_cat->add_option("--patience", patience, "Early-stopping patience (default 5)");
  train_cat->add_option("--max-epochs", max_epochs);
  train_cat->add_option("--seed", seed);
  train_cat->add_option("--config", config_path);
  train_cat->add_option("--out", model, "Model file")->required();

  // tag-categories
  auto* tag = app.add_subcommand("tag-categories", "Predict category labels for every tweet");
  tag->add_option("--input", in)->required();
  tag->add_option("--features", features);
  tag->add_option("--model", model)->required();
  tag->add_option("--config", config_path);
  tag->add_option("--out", out);

  // build-graph
  std::string self_loops = "on", blocks;
  std::optional<std::size_t> max_posting;
  std::string features_out;
  auto* graph = app.add_subcommand("build-graph", "Build the tweet relation graph and node features");
  graph->add_option("--input", in)->required();
  graph->add_option("--features", features);
  graph->add_option("--self-loops", self_loops)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  graph->add_option("--max-posting", max_posting, "Skip entity keys shared by more tweets than this");
  graph->add_option("--blocks", blocks, "Feature blocks, e.g. text,temporal[,category]");
  graph->add_option("--config", config_path);
  graph->add_option("--features-out", features_out, "Write assembled node features (TWZF)");
  graph->add_option("--out", out);

  // train
  std::string checkpoint, log_path;
  std::optional<double> margin;
  std::string monitor;
  auto* train_cmd = app.add_subcommand("train", "Train the graph attention embedder");
  train_cmd->add_option("--input", in, "Training corpus with entities and gold event ids")->required();
  train_cmd->add_option("--features", features);
  train_cmd->add_option("--validation", validation)->required();
  train_cmd->add_option("--validation-features", features_out);
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--lr", lr, "Learning rate (default 0.003)");
  train_cmd->add_option("--margin", margin, "Hinge margin (default 100)");
  train_cmd->add_option("--patience", patience, "Early-stopping patience (default 2)");
  train_cmd->add_option("--max-epochs", max_epochs);
  train_cmd->add_option("--monitor", monitor, "Early-stopping signal")->check(CLI::IsMember({"loss", "ami"}));
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--log", log_path, "Training log JSONL");
  train_cmd->add_option("--out", checkpoint, "Checkpoint file")->required();

  // embed
  auto* embed = app.add_subcommand("embed", "Embed a corpus with a trained checkpoint (TWZF output)");
  embed->add_option("--input", in)->required();
  embed->add_option("--features", features);
  embed->add_option("--checkpoint", checkpoint)->required();
  embed->add_option("--config", config_path);
  embed->add_option("--out", out)->required();

  // cluster
  std::string embeddings, eps_arg;
  std::optional<std::size_t> min_pts;
  std::optional<double> filter_threshold;
  auto* cluster = app.add_subcommand("cluster", "DBSCAN over embeddings, then cluster-score filtering");
  cluster->add_option("--input", in, "Corpus the embeddings belong to")->required();
  cluster->add_option("--embeddings", embeddings, "TWZF embedding matrix")->required();
  cluster->add_option("--eps", eps_arg, "Radius, or 'auto' to tune on the input's gold event ids")->required();
  cluster->add_option("--min-pts", min_pts, "Core point threshold (default 3)");
  cluster->add_option("--filter-threshold", filter_threshold, "Minimum users/tweets score (default 0.80)");
  cluster->add_option("--config", config_path);
  cluster->add_option("--out", out);

  // detect
  std::string categorizer, timings_out, raw_out, train_path;
  bool merge = false, do_train = false;
  auto* detect = app.add_subcommand("detect", "Windowed tag, gate, extract, graph, embed, cluster, filter");
  detect->add_option("--input", in)->required();
  detect->add_option("--features", features);
  detect->add_option("--config", config_path);
  detect->add_option("--checkpoint", checkpoint);
  detect->add_option("--categorizer", categorizer, "Category model; without it every tweet passes the gate");
  detect->add_option("--gazetteer", gazetteer);
  detect->add_option("--eps", eps_arg, "Radius, or 'auto' to tune on --validation");
  detect->add_option("--min-pts", min_pts);
  detect->add_option("--filter-threshold", filter_threshold);
  detect->add_option("--seed", seed);
  detect->add_option("--lr", lr);
  detect->add_option("--margin", margin);
  detect->add_option("--patience", patience);
  detect->add_option("--max-epochs", max_epochs);
  detect->add_option("--monitor", monitor)->check(CLI::IsMember({"loss", "ami"}));
  detect->add_flag("--train", do_train, "Train a checkpoint first from --train-input and --validation");
  detect->add_option("--train-input", train_path);
  detect->add_option("--validation", validation);
  detect->add_flag("--merge", merge, "Merge events repeated in adjacent windows");
  detect->add_option("--raw-out", raw_out, "Per-window events before merging");
  detect->add_option("--timings", timings_out, "Stage timing report (JSON)");
  detect->add_option("--out", out);

  // evaluate
  std::string events_path, tags_path;
  std::optional<double> purity;
  auto* evaluate = app.add_subcommand("evaluate", "Clustering, event-level and category metrics as JSON");
  evaluate->add_option("--input", in, "Corpus with gold event ids and categories")->required();
  evaluate->add_option("--events", events_path, "Detected events JSONL")->required();
  evaluate->add_option("--tags", tags_path, "Predicted categories from tag-categories");
  evaluate->add_option("--purity", purity, "Event correctness threshold (default 0.5)");

  // score-users
  std::string category;
  std::size_t top = 0;
  auto* score = app.add_subcommand("score-users", "Rank users by event density and reach");
  score->add_option("--input", in)->required();
  score->add_option("--events", events_path)->required();
  score->add_option("--category", category, "Category label or 'all'");
  score->add_option("--top", top, "Keep the k best users (0 = all)");
  score->add_option("--length", length)->capture_default_str();
  score->add_option("--stride", stride)->capture_default_str();
  score->add_option("--out", out);

  // export-trend
  std::string bucket = "1h";
  auto* trend = app.add_subcommand("export-trend", "Per-bucket tweet counts of each event as CSV");
  trend->add_option("--input", in)->required();
  trend->add_option("--events", events_path)->required();
  trend->add_option("--bucket", bucket)->capture_default_str();
  trend->add_option("--out", out);

  // gen-synthetic
  SyntheticSpec spec;
  std::string out_dir;
  auto* synth = app.add_subcommand("gen-synthetic", "Write a seeded synthetic corpus split into train/validation/test");
  synth->add_option("--events", spec.events)->capture_default_str();
  synth->add_option("--tweets-per-event", spec.tweets_per_event)->capture_default_str();
  synth->add_option("--noise", spec.noise_tweets, "Noise tweets")->capture_default_str();
  synth->add_option("--overlap", spec.topic_overlap, "Fraction of words from the shared topic pool")->capture_default_str();
  synth->add_option("--category-cues", spec.category_cues)->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--out-dir", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto apply_train_flags = [&](PipelineConfig& cfg) {
      if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
        cfg.categorizer.seed = *seed;
      }
      if (lr) cfg.train.learning_rate = *lr;
      if (margin) cfg.train.margin = *margin;
      if (patience) cfg.train.patience = *patience;
      if (max_epochs) cfg.train.max_epochs = *max_epochs;
      if (monitor == "ami") cfg.train.monitor = TrainConfig::Monitor::Ami;
      if (monitor == "loss") cfg.train.monitor = TrainConfig::Monitor::Loss;
      if (min_pts) cfg.min_pts = cfg.train.min_pts = *min_pts;
      if (filter_threshold) cfg.filter_threshold = *filter_threshold;
    };

    if (*ingest) {
      Corpus c = load_input(in, features);
      if (!annotations.empty()) c = import_annotations(std::move(c), annotations);
      emit(out, serialize_corpus(c));
      std::size_t labeled = 0;
      for (const auto& t : c.tweets) labeled += t.gold_event_id.has_value();
      std::cerr << "ingested " << c.size() << " tweets (" << labeled << " with event ids)"
                << (c.features ? ", features " + std::to_string(c.features->cols()) + "-dim" : std::string()) << '\n';
    } else if (*window) {
      const Corpus c = load_corpus(in);
      std::string text;
      for (const auto& w : window_stream(c, duration_arg(length), duration_arg(stride))) {
        OrderedJson j;
        j["start"] = format_timestamp(w.start);
        j["end"] = format_timestamp(w.end());
        j["tweets"] = w.member_indices.size();
        std::vector<std::string> ids;
        for (auto i : w.member_indices) ids.push_back(c.tweets[i].tweet_id);
        j["tweet_ids"] = ids;
        text += j.dump() + '\n';
      }
      emit(out, text);
    } else if (*extract) {
      Corpus c = load_corpus(in);
      extract_entities(c, *load_gazetteer(gazetteer));
      emit(out, serialize_corpus(c));
    } else if (*ner) {
      const auto g = parse_annotations(read_file(gold)), p = parse_annotations(read_file(pred));
      std::map<std::string, std::size_t> slot;
      for (const auto* side : {&g, &p})
        for (const auto& a : *side) slot.try_emplace(a.tweet_id, slot.size());
      std::vector<std::vector<EntityMention>> gm(slot.size()), pm(slot.size());
      for (const auto& a : g) gm[slot[a.tweet_id]] = a.mentions;
      for (const auto& a : p) pm[slot[a.tweet_id]] = a.mentions;
      const auto s = ner_evaluate(gm, pm);
      OrderedJson j;
      j["precision"] = s.precision;
      j["recall"] = s.recall;
      j["f1"] = s.f1;
      j["true_positives"] = s.true_positives;
      j["false_positives"] = s.false_positives;
      j["false_negatives"] = s.false_negatives;
      std::cout << j.dump(2) << '\n';
    } else if (*train_cat) {
      PipelineConfig cfg = load_config(config_path);
      auto& tc = cfg.categorizer;
      if (lr) tc.learning_rate = *lr;
      if (batch) tc.batch_size = *batch;
      if (patience) tc.patience = *patience;
      if (max_epochs) tc.max_epochs = *max_epochs;
      if (seed) tc.seed = *seed;
      const Corpus c = load_input(in, features);
      Matrix vx(0, 0), vy(0, static_cast<Eigen::Index>(kNumCategories));
      if (!validation.empty()) {
        const Corpus v = load_corpus(validation);
        vx = text_feature_matrix(v, cfg.blocks.hash_dim);
        vy = category_matrix(v);
      }
      const auto r = train_categorizer(text_feature_matrix(c, cfg.blocks.hash_dim), category_matrix(c), vx, vy, tc);
      write_file(model, serialize_categorizer(r.model));
      std::cerr << "trained categorizer for " << r.epochs_run << " epochs\n";
    } else if (*tag) {
      const PipelineConfig cfg = load_config(config_path);
      const Corpus c = load_input(in, features);
      const auto m = parse_categorizer(read_file(model));
      const auto p = predict_categories(m, text_feature_matrix(c, cfg.blocks.hash_dim));
      std::string text;
      for (std::size_t i = 0; i < c.size(); ++i) {
        OrderedJson j;
        j["tweet_id"] = c.tweets[i].tweet_id;
        CategorySet s;
        OrderedJson probs;
        for (std::size_t k = 0; k < kNumCategories; ++k) {
          s[k] = p.labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) != 0.0;
          probs[std::string(kCategoryNames[k])] = p.prob(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        }
        j["categories"] = category_names(s);
        j["security"] = has_security_label(s);
        j["probabilities"] = probs;
        text += j.dump() + '\n';
      }
      emit(out, text);
    } else if (*graph) {
      PipelineConfig cfg = load_config(config_path);
      cfg.graph.self_loops = self_loops == "on";
      if (max_posting) cfg.graph.max_posting = *max_posting;
      if (!blocks.empty()) {
        const auto keep = cfg.blocks;
        cfg.blocks = FeatureBlocks::parse(blocks);
        cfg.blocks.hash_dim = keep.hash_dim;
        cfg.blocks.standardize_temporal = keep.standardize_temporal;
      }
      const Corpus c = load_input(in, features);
      const auto s = prepare_split(c, cfg);
      emit(out, dump_graph(s.graph));
      if (!features_out.empty()) write_feature_matrix(features_out, s.features.matrix);
      std::cerr << "graph: " << s.graph.size() << " nodes, " << s.graph.edges().size() << " edges, feature width "
                << s.features.layout.width() << '\n';
    } else if (*train_cmd) {
      PipelineConfig cfg = load_config(config_path);
      apply_train_flags(cfg);
      const Corpus tr = load_input(in, features);
      const Corpus va = load_input(validation, features_out);
      std::string log;
      const auto te = train_embedder(tr, va, cfg, nullptr, [&](const EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << '\n';
      });
      write_file(checkpoint, serialize_checkpoint(te.checkpoint));
      if (!log_path.empty()) write_file(log_path, serialize_train_log(te.result.log));
      const auto eps = tune_eps_on(va, te.checkpoint, cfg);
      std::cerr << "best epoch " << te.result.best_epoch << ", validation eps " << eps.eps << " (AMI " << eps.ami
                << ")\n";
    } else if (*embed) {
      const PipelineConfig cfg = load_config(config_path);
      const Corpus c = load_input(in, features);
      const auto ck = parse_checkpoint(read_file(checkpoint));
      write_feature_matrix(out, embed_corpus(c, ck, cfg.graph));
    } else if (*cluster) {
      PipelineConfig cfg = load_config(config_path);
      apply_train_flags(cfg);
      const Corpus c = load_corpus(in);
      const Matrix emb = read_feature_matrix(embeddings);
      if (static_cast<std::size_t>(emb.rows()) != c.size())
        throw DataError("embedding rows (" + std::to_string(emb.rows()) + ") != corpus tweets (" +
                        std::to_string(c.size()) + ")");
      double eps = 0.0;
      if (eps_arg == "auto") {
        const auto r = tune_eps(emb, event_labels(c).label, cfg.min_pts, cfg.noise_mode);
        eps = r.eps;
        std::cerr << "eps " << r.eps << " (AMI " << r.ami << ")\n";
      } else {
        eps = eps_value(eps_arg);
      }
      const auto a = dbscan(emb, {eps, cfg.min_pts});
      WindowRef span;
      if (!c.tweets.empty()) {
        const auto [lo, hi] = std::minmax_element(c.tweets.begin(), c.tweets.end(), [](const auto& x, const auto& y) {
          return x.posted_at < y.posted_at;
        });
        span = {lo->posted_at, hi->posted_at.seconds - lo->posted_at.seconds + 1};
      }
      emit(out, serialize_events(filter_clusters(a, c, cfg.filter_threshold, span)));
    } else if (*detect) {
      PipelineConfig cfg = load_config(config_path);
      apply_train_flags(cfg);
      if (!gazetteer.empty()) cfg.gazetteer = gazetteer;
      if (!categorizer.empty()) cfg.categorizer_model = categorizer;
      if (merge) cfg.merge = true;
      const auto gaz = load_gazetteer(cfg.gazetteer);
      const auto cat = load_categorizer(cfg.categorizer_model);
      const Corpus c = load_input(in, features);
      std::optional<Corpus> val;
      if (!validation.empty()) {
        val = load_corpus(validation);
        if (gaz) extract_entities(*val, *gaz);
      }
      GatCheckpoint ck;
      if (do_train) {
        if (train_path.empty() || !val) throw UsageError("--train needs --train-input and --validation");
        Corpus tr = load_corpus(train_path);
        if (gaz) extract_entities(tr, *gaz);
        ck = train_embedder(tr, *val, cfg, ptr(cat)).checkpoint;
        if (!checkpoint.empty()) write_file(checkpoint, serialize_checkpoint(ck));
      } else {
        if (checkpoint.empty()) throw UsageError("detect needs --checkpoint or --train");
        ck = parse_checkpoint(read_file(checkpoint));
      }
      if (eps_arg == "auto" || (eps_arg.empty() && !cfg.eps)) {
        if (!val) throw UsageError("automatic eps needs --validation");
        cfg.eps = tune_eps_on(*val, ck, cfg, ptr(cat)).eps;
        std::cerr << "eps " << *cfg.eps << '\n';
      } else if (!eps_arg.empty()) {
        cfg.eps = eps_value(eps_arg);
      }
      const auto result = run_detect(cfg, c, {&ck, ptr(cat), ptr(gaz)});
      if (!raw_out.empty()) write_file(raw_out, serialize_events(result.events));
      const auto events = cfg.merge ? merge_events(result.events, c, cfg.window_stride, cfg.merge_jaccard) : result.events;
      emit(out, serialize_events(events));
      const auto report = timings_to_json(result.timings).dump(2) + '\n';
      if (!timings_out.empty()) write_file(timings_out, report);
      std::cerr << report;
    } else if (*evaluate) {
      const Corpus c = load_corpus(in);
      const auto events = parse_events(read_file(events_path));
      OrderedJson report;
      const auto truth = event_labels(c).label;
      const auto predicted = labels_from_events(c, events);
      ClusterAssignment a{predicted, static_cast<int>(events.size())};
      const auto scores = score_labeled(truth, a);
      report["clustering"] = {{"AMI", scores.ami}, {"ARI", scores.ari}, {"NMI", scores.nmi}};
      std::vector<DetectedEvent> detected;
      for (const auto& e : events) detected.push_back({e.tweet_ids, e.categories});
      const auto r = event_eval(detected, c, purity.value_or(0.5));
      OrderedJson prec, rec;
      for (const auto& [k, v] : r.precision) prec[k] = ratio_json(v);
      for (const auto& [k, v] : r.recall) rec[k] = ratio_json(v);
      prec["Total"] = ratio_json(r.total_precision);
      rec["Total"] = ratio_json(r.total_recall);
      report["precision"] = prec;
      report["recall"] = rec;
      report["events_detected"] = events.size();
      if (!tags_path.empty()) {
        std::unordered_map<std::string, CategorySet> tags;
        std::istringstream lines(read_file(tags_path));
        for (std::string line; std::getline(lines, line);) {
          if (line.empty()) continue;
          const auto j = Json::parse(line);
          CategorySet s;
          for (const auto& name : j.at("categories")) {
            const auto cat_id = parse_category(name.get<std::string>());
            if (!cat_id) throw DataError("unknown category in tags");
            s.set(static_cast<std::size_t>(*cat_id));
          }
          tags[j.at("tweet_id").get<std::string>()] = s;
        }
        Matrix gm = category_matrix(c), pm = Matrix::Zero(gm.rows(), gm.cols());
        for (std::size_t i = 0; i < c.size(); ++i) {
          auto it = tags.find(c.tweets[i].tweet_id);
          if (it == tags.end()) throw DataError("tags lack tweet '" + c.tweets[i].tweet_id + "'");
          for (std::size_t k = 0; k < kNumCategories; ++k)
            pm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = it->second[k];
        }
        const auto ml = multilabel_metrics(gm, pm);
        report["categories"] = {{"hamming_loss", ml.hamming_loss},     {"jaccard", ml.jaccard},
                                {"subset_accuracy", ml.subset_accuracy}, {"micro_f1", ml.micro_f1},
                                {"macro_f1", ml.macro_f1}};
      }
      std::cout << report.dump(2) << '\n';
    } else if (*score) {
      const Corpus c = load_corpus(in);
      const auto events = parse_events(read_file(events_path));
      const auto windows = window_stream(c, duration_arg(length), duration_arg(stride));
      auto ranked = rank_users(events, c, windows, category_arg(category));
      if (top > 0 && ranked.size() > top) ranked.resize(top);
      std::string text;
      for (const auto& s : ranked) text += user_score_to_json(s).dump() + '\n';
      emit(out, text);
    } else if (*trend) {
      const Corpus c = load_corpus(in);
      emit(out, trend_csv(export_trend(parse_events(read_file(events_path)), c, duration_arg(bucket))));
    } else if (*synth) {
      const auto syn = generate_synthetic(spec);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      save_corpus(syn.train, (dir / "train.jsonl").string());
      save_corpus(syn.validation, (dir / "validation.jsonl").string());
      save_corpus(syn.test, (dir / "test.jsonl").string());
      write_file((dir / "gazetteer.tsv").string(), syn.gazetteer.to_tsv());
      std::cerr << "wrote " << syn.train.size() << "/" << syn.validation.size() << "/" << syn.test.size()
                << " tweets and " << syn.gazetteer.size() << " gazetteer entries to " << out_dir << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

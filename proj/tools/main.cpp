// fgd: command-line driver for data generation, training, detection and
// evaluation.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "fgd/detector.hpp"
#include "fgd/io.hpp"
#include "fgd/posegan.hpp"
#include "fgd/streams.hpp"
#include "fgd/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fgd;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// key=value snapshot of every option of the subcommand, defaults included;
// --out and --config are left out so reruns elsewhere give the same file
void write_effective_config(const CLI::App& sub, const fs::path& out) {
  KeyValues kv;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out") continue;
    std::string value = opt->count() ? opt->results().back() : opt->get_default_str();
    if (!opt->count() && value.empty()) continue;
    kv[name] = value;
  }
  kv["command"] = sub.get_name();
  fs::create_directories(out);
  write_file_atomic(out / "effective_config.txt", format_key_values(kv));
}

std::vector<VideoSample> load_split(const fs::path& root) {
  std::vector<VideoSample> out;
  for (const auto& dir : list_samples(root)) out.push_back(load_sample(dir));
  if (out.empty()) throw IoError(root.string() + ": no samples");
  return out;
}

// A sample directory itself, or a root holding sample directories.
std::vector<fs::path> sample_dirs(const fs::path& p) {
  if (fs::exists(p / "frames.fgt")) return {p};
  auto dirs = list_samples(p);
  if (dirs.empty()) throw IoError(p.string() + ": no samples");
  return dirs;
}

SynthConfig data_config(const fs::path& split_root) {
  const fs::path cfg = split_root / "config.txt";
  if (!fs::exists(cfg)) return SynthConfig{};
  return SynthConfig::from_key_values(parse_key_values(read_file(cfg), cfg.string()));
}

// "5-40", "5-40:5" or "5,10,20"
std::vector<std::size_t> parse_windows(const std::string& spec) {
  std::vector<std::size_t> out;
  try {
    if (auto dash = spec.find('-'); dash != std::string::npos) {
      const auto colon = spec.find(':');
      const std::size_t lo = std::stoul(spec.substr(0, dash));
      const std::size_t hi = std::stoul(spec.substr(dash + 1, colon == std::string::npos ? std::string::npos : colon - dash - 1));
      const std::size_t step = colon == std::string::npos ? 1 : std::stoul(spec.substr(colon + 1));
      if (step == 0 || lo > hi) throw std::invalid_argument("range");
      for (std::size_t w = lo; w <= hi; w += step) out.push_back(w);
    } else {
      std::stringstream ss(spec);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    }
  } catch (const std::logic_error&) {
    throw ContractError("bad window set '" + spec + "' (expected 5-40, 5-40:5 or 5,10,20)");
  }
  if (out.empty()) throw ContractError("empty window set");
  return out;
}

std::vector<int> labels_from_segments(const std::vector<Segment>& segs, std::size_t frames, int fill) {
  std::vector<int> labels(frames, fill);
  for (const auto& s : segs) {
    if (s.end > frames) throw ContractError("segment ends after frame " + std::to_string(frames));
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(s.start), labels.begin() + static_cast<std::ptrdiff_t>(s.end),
              s.label);
  }
  return labels;
}

json f1_json(const F1Result& r) {
  return {{"precision", r.precision}, {"recall", r.recall},   {"f1", r.f1},
          {"matches", r.matches},     {"predictions", r.predictions}, {"truths", r.truths}};
}

json class_counts(const std::vector<Segment>& segs, std::size_t classes) {
  const auto& names = class_names();
  json j = json::object();
  for (std::size_t c = 0; c < classes; ++c) {
    const auto n = std::count_if(segs.begin(), segs.end(), [&](const Segment& s) { return s.label == static_cast<int>(c); });
    j[c < names.size() ? names[c] : std::to_string(c)] = n;
  }
  return j;
}

// ---- commands ----

struct GenData {
  std::uint64_t seed = 7;
  std::size_t train = 300, test = 60, videos = 10, segments = 6, min_duration = 15, max_duration = 35, heatmaps = 0;
  std::size_t height = 64, width = 64;
  std::string out;

  void run() const {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.height = height;
    cfg.width = width;
    cfg.validate();
    UntrimmedSetConfig set{videos, segments, min_duration, max_duration};
    gen_dataset(cfg, train, test, out, videos ? &set : nullptr);
    if (heatmaps) save_heatmap_set(fs::path(out) / "heatmaps", gen_heatmap_set(cfg, HeatmapNoise{}, heatmaps, kHeatmapSplit));
  }
};

struct TrainGan {
  std::uint64_t seed = 7;
  std::size_t samples = 20000, test_samples = 200, epochs = 200, n_critic = 5, batch = 16, pretrain_epochs = 200;
  double lambda_gp = 10, lr = 1e-4, pretrain_fraction = 0.005;
  std::size_t size = 64;
  std::string heatmaps, out;

  void run() const {
    SynthConfig sc;
    sc.seed = seed;
    sc.height = sc.width = size;
    const auto train = heatmaps.empty() ? gen_heatmap_set(sc, HeatmapNoise{}, samples, kHeatmapSplit)
                                        : load_heatmap_set(heatmaps);
    const auto test = gen_heatmap_set(sc, HeatmapNoise{}, test_samples, kTestSplit + 100);
    GanConfig cfg;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.n_critic = n_critic;
    cfg.batch = batch;
    cfg.lambda_gp = lambda_gp;
    cfg.lr = lr;
    cfg.pretrain_fraction = pretrain_fraction;
    cfg.pretrain_epochs = pretrain_epochs;
    Rng rng(seed);
    const std::size_t h = train.front().image.dim(1), w = train.front().image.dim(2);
    PoseGenerator<float> gen(h, w, rng);
    Critic<float> critic(cfg.critic_hidden, Activation::tanh, rng);
    json epochs_log = json::array();
    fit_pose_gan(gen, critic, train, cfg, [&](const GanEpochReport& r) {
      epochs_log.push_back({{"epoch", r.epoch},
                            {"critic_loss", r.critic_loss},
                            {"generator_loss", r.generator_loss},
                            {"labeled_error_px", r.labeled_error_px}});
      std::fprintf(stderr, "epoch %zu critic %.4f generator %.4f labeled %.3f px\n", r.epoch, r.critic_loss,
                   r.generator_loss, r.labeled_error_px);
    });
    save_generator(fs::path(out) / "generator", gen);
    write_json(fs::path(out) / "metrics.json", {{"train_samples", train.size()},
                                                {"test_samples", test.size()},
                                                {"argmax_error_px", argmax_error_px(test)},
                                                {"generator_error_px", generator_error_px(gen, test)},
                                                {"epochs", epochs_log}});
  }
};

struct Train {
  std::string data, variant = "bi_stream_att", generator, out;
  std::size_t epochs = 20, accumulation = 12, gamma_ramp = 10;
  double lr = 1e-3, crop_prob = 0.5;
  std::uint64_t seed = 7;

  void run() const {
    auto train = load_split(fs::path(data) / "train");
    std::vector<VideoSample> test;
    if (fs::exists(fs::path(data) / "test")) test = load_split(fs::path(data) / "test");
    if (!generator.empty()) {
      auto gen = load_generator(generator);
      const double radius = data_config(fs::path(data) / "train").joint_radius;
      std::uint64_t k = 0;
      for (auto* split : {&train, &test})
        for (auto& s : *split) s = refine_joint_maps(gen, s, HeatmapNoise{}, radius, derive_seed(seed, 9, k++));
    }
    NetConfig nc = NetConfig::for_variant(parse_variant(variant));
    Rng rng(seed);
    BiStreamNet<float> net(nc, rng);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.accumulation = accumulation;
    tc.gamma_ramp = gamma_ramp;
    tc.lr = lr;
    tc.seed = seed;
    tc.crop_prob = crop_prob;
    json log = json::array();
    train_recognizer(net, train, tc, [&](const EpochReport& r) {
      log.push_back({{"epoch", r.epoch}, {"loss", r.mean_loss}, {"gamma", r.gamma}, {"seconds", r.seconds}});
      std::fprintf(stderr, "epoch %zu loss %.4f gamma %.2f %.1fs\n", r.epoch, r.mean_loss, r.gamma, r.seconds);
    });
    save_model(fs::path(out) / "model", net);
    json m = {{"variant", variant}, {"train_samples", train.size()}, {"epochs", log}};
    if (!test.empty()) m["test_accuracy"] = recognition_accuracy(net, test);
    write_json(fs::path(out) / "metrics.json", m);
  }
};

struct Recognize {
  std::string model, data, out;

  void run() const {
    auto net = load_model(model);
    std::ostringstream csv;
    csv.precision(9);
    csv << "sample,label,predicted";
    for (std::size_t c = 0; c < net.config().classes; ++c) csv << ",p" << c;
    csv << '\n';
    std::size_t hit = 0, labeled = 0, n = 0;
    for (const auto& dir : sample_dirs(data)) {
      const auto s = load_sample(dir);
      const auto p = net.classify(s);
      const int pred = argmax(p);
      csv << dir.filename().string() << ',' << s.label << ',' << pred;
      for (double v : p) csv << ',' << v;
      csv << '\n';
      ++n;
      if (s.label >= 0) ++labeled, hit += pred == s.label;
    }
    fs::create_directories(out);
    write_file_atomic(fs::path(out) / "predictions.csv", csv.str());
    json m = {{"samples", n}};
    if (labeled) m["accuracy"] = static_cast<double>(hit) / static_cast<double>(labeled);
    write_json(fs::path(out) / "metrics.json", m);
  }
};

struct Detect {
  std::string model, video, out;
  std::size_t window = 11, stride = 3;
  int background = 0;
  double iou = 0.5;

  void run() const {
    const DetectorConfig cfg{window, stride};
    cfg.validate();
    auto net = load_model(model);
    const auto dirs = sample_dirs(video);
    const bool single = dirs.size() == 1 && dirs.front() == fs::path(video);
    json videos = json::array();
    std::vector<std::vector<Segment>> all_pred, all_truth;
    for (const auto& dir : dirs) {
      const auto s = load_sample(dir);
      // every segment is written, background included; scoring drops background
      const Detection d = detect(s.length(), cfg, net_classifier(net, s));
      const fs::path dest = single ? fs::path(out) : fs::path(out) / dir.filename();
      fs::create_directories(dest);
      write_file_atomic(dest / "segments.csv", segments_csv(d.segments));
      json v = {{"video", dir.filename().string()},
                {"frames", s.length()},
                {"segments", d.segments.size()},
                {"per_class", class_counts(d.segments, net.config().classes)}};
      if (fs::exists(dir / "segments.csv")) {
        const auto truth = load_segments(dir);
        v["f1"] = f1_json(f1_at_iou(d.segments, truth, iou, background));
        v["frame_accuracy"] = frame_accuracy(d.labels, labels_from_segments(truth, s.length(), background));
        all_pred.push_back(d.segments);
        all_truth.push_back(truth);
      }
      videos.push_back(v);
    }
    json summary = {{"window", window}, {"stride", stride}, {"iou", iou}, {"background", background}, {"videos", videos}};
    if (!all_truth.empty()) summary["pooled_f1"] = f1_json(f1_at_iou_pooled(all_pred, all_truth, iou, background));
    write_json(fs::path(out) / "detection.json", summary);
  }
};

struct GridSearch {
  std::string model, videos, windows = "5-40", out;
  double iou = 0.5;
  int background = 0;

  void run() const {
    auto net = load_model(model);
    const auto ws = parse_windows(windows);
    std::vector<VideoSample> samples;
    std::vector<std::vector<Segment>> truths;
    for (const auto& dir : sample_dirs(videos)) {
      samples.push_back(load_sample(dir));
      truths.push_back(load_segments(dir));
    }
    std::vector<WindowCache> caches;
    caches.reserve(samples.size());
    std::vector<GridVideo> grid;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      caches.emplace_back(net_classifier(net, samples[i]));
      grid.push_back({samples[i].length(), std::ref(caches[i]), truths[i]});
    }
    const GridResult r = grid_search(grid, ws, iou, background);
    fs::create_directories(out);
    write_file_atomic(fs::path(out) / "surface.csv", surface_csv(r.surface));
    write_json(fs::path(out) / "best.json",
               {{"window", r.best.window}, {"stride", r.best.stride}, {"f1", r.best_f1}, {"iou", iou}, {"videos", samples.size()}});
  }
};

struct Eval {
  std::string truth, pred, out;
  double iou = 0.5;
  int background = 0;

  void run() const {
    std::vector<std::vector<Segment>> p_all, t_all;
    std::vector<int> p_frames, t_frames;
    for (const auto& dir : sample_dirs(truth)) {
      const fs::path pdir = fs::exists(fs::path(pred) / "segments.csv") && sample_dirs(truth).size() == 1
                                ? fs::path(pred)
                                : fs::path(pred) / dir.filename();
      if (!fs::exists(pdir / "segments.csv")) throw IoError(pdir.string() + ": no segments.csv for " + dir.string());
      const auto t = load_segments(dir);
      const auto p = load_segments(pdir);
      std::size_t frames = 0;
      for (const auto& s : t) frames = std::max(frames, s.end);
      for (const auto& s : p) frames = std::max(frames, s.end);
      const auto tl = labels_from_segments(t, frames, background), pl = labels_from_segments(p, frames, background);
      t_frames.insert(t_frames.end(), tl.begin(), tl.end());
      p_frames.insert(p_frames.end(), pl.begin(), pl.end());
      t_all.push_back(t);
      p_all.push_back(p);
    }
    json sweep = json::array();
    for (int k = 1; k <= 9; ++k) {
      const double thr = k / 10.0;
      sweep.push_back({{"iou", thr}, {"f1", f1_at_iou_pooled(p_all, t_all, thr, background).f1}});
    }
    std::size_t classes = class_names().size();
    for (const auto* set : {&p_all, &t_all})
      for (const auto& v : *set)
        for (const auto& s : v) classes = std::max(classes, static_cast<std::size_t>(s.label) + 1);
    std::vector<std::string> names = class_names();
    while (names.size() < classes) names.push_back(std::to_string(names.size()));
    fs::create_directories(out);
    write_file_atomic(fs::path(out) / "transitions_truth.csv", transition_matrix_csv(transition_matrix(t_all, classes), names));
    write_file_atomic(fs::path(out) / "transitions_pred.csv", transition_matrix_csv(transition_matrix(p_all, classes), names));
    write_json(fs::path(out) / "metrics.json", {{"videos", t_all.size()},
                                                {"iou", iou},
                                                {"f1", f1_json(f1_at_iou_pooled(p_all, t_all, iou, background))},
                                                {"frame_accuracy", frame_accuracy(p_frames, t_frames)},
                                                {"f1_sweep", sweep}});
  }
};

struct VizAttention {
  std::string model, sample, out;
  std::size_t upscale = 4;

  void run() const {
    auto net = load_model(model);
    if (!net.config().pose) throw ContractError("viz-attention: model has no pose stream");
    const auto s = load_sample(sample);
    Tape<float> tape;
    const auto logits = net.logits(tape, s);
    const Tensor<float>& feats = net.last_pose_features();
    fs::create_directories(out);
    const std::size_t t = feats.dim(0), c = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
    for (std::size_t f = 0; f < t; ++f) {
      Tensor<float> frame({c, h, w});
      std::copy_n(feats.data().begin() + static_cast<std::ptrdiff_t>(f * c * h * w), c * h * w, frame.storage().begin());
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.pgm", f);
      write_pgm(fs::path(out) / name, attention_heatmap(frame), upscale);
    }
    std::ostringstream csv;
    csv << "frame,weight\n";
    const auto& tw = net.last_temporal_weights();
    for (std::size_t f = 0; f < tw.size(); ++f) csv << f << ',' << tw[f] << '\n';
    write_file_atomic(fs::path(out) / "temporal_weights.csv", csv.str());
    std::vector<double> p(logits.size());
    {
      double m = *std::max_element(logits.value().data().begin(), logits.value().data().end()), z = 0;
      for (std::size_t k = 0; k < p.size(); ++k) z += p[k] = std::exp(logits.value()[k] - m);
      for (auto& v : p) v /= z;
    }
    write_json(fs::path(out) / "prediction.json", {{"label", s.label}, {"predicted", argmax(p)}, {"probabilities", p}});
  }
};

struct Ablation {
  std::string data, variants = "raw_frame,pose_stream,object_map,bi_stream,bi_stream_att", out;
  std::size_t epochs = 20, accumulation = 12, gamma_ramp = 10;
  double lr = 1e-3, crop_prob = 0.5;
  std::uint64_t seed = 7;

  void run() const {
    const auto train = load_split(fs::path(data) / "train");
    const auto test = load_split(fs::path(data) / "test");
    const std::size_t classes = class_names().size();
    std::ostringstream csv;
    csv << "variant,overall";
    for (const auto& n : class_names()) csv << ',' << n;
    csv << '\n';
    json rows = json::array();
    std::stringstream ss(variants);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const StreamVariant v = parse_variant(name);
      Rng rng(seed);
      BiStreamNet<float> net(NetConfig::for_variant(v), rng);
      TrainConfig tc;
      tc.epochs = epochs;
      tc.accumulation = accumulation;
      tc.gamma_ramp = gamma_ramp;
      tc.lr = lr;
      tc.seed = seed;
      tc.crop_prob = crop_prob;
      train_recognizer(net, train, tc);
      std::vector<int> preds;
      const double overall = recognition_accuracy(net, test, &preds);
      std::vector<double> hit(classes, 0), total(classes, 0);
      for (std::size_t i = 0; i < test.size(); ++i) {
        total[static_cast<std::size_t>(test[i].label)] += 1;
        hit[static_cast<std::size_t>(test[i].label)] += preds[i] == test[i].label;
      }
      csv << name << ',' << overall;
      json per_class = json::object();
      for (std::size_t c = 0; c < classes; ++c) {
        const double acc = total[c] > 0 ? hit[c] / total[c] : 0.0;
        csv << ',' << acc;
        per_class[class_names()[c]] = acc;
      }
      csv << '\n';
      rows.push_back({{"variant", name}, {"overall", overall}, {"per_class", per_class}});
      std::fprintf(stderr, "%s overall %.3f\n", name.c_str(), overall);
    }
    fs::create_directories(out);
    write_file_atomic(fs::path(out) / "ablation.csv", csv.str());
    write_json(fs::path(out) / "ablation.json", rows);
  }
};

// Splits "--config <file>" (or --config=<file>) out of argv and turns its
// key=value lines into "--key value" placed right after the subcommand, so
// later command-line flags win.
std::vector<std::string> expand_config(int argc, char** argv, CLI::App& app) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  if (args.size() < 2) throw UsageError("--config needs a subcommand");
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    throw UsageError("unknown subcommand '" + args[1] + "'");
  }
  std::vector<std::string> injected;
  for (const auto& [k, v] : parse_key_values(read_file(path), path)) {
    if (k == "command") {
      if (v != sub->get_name()) throw UsageError(path + ": written for '" + v + "', not '" + sub->get_name() + "'");
      continue;
    }
    if (!sub->get_option_no_throw("--" + k) || k == "config" || k == "help") {
      throw UsageError(path + ": unknown key '" + k + "' for " + sub->get_name());
    }
    injected.push_back("--" + k);
    injected.push_back(v);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained shelf activity detection: synthetic data, recognizer, detector, pose GAN"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  auto with_config = [&](CLI::App* s) {
    s->add_option("--config", config_path, "key=value file; command-line flags override it");
  };

  GenData gd;
  auto* gen = app.add_subcommand("gen-data", "generate trimmed train/test clips and untrimmed videos");
  gen->add_option("--seed", gd.seed);
  gen->add_option("--train", gd.train, "trimmed training clips");
  gen->add_option("--test", gd.test, "trimmed test clips");
  gen->add_option("--videos", gd.videos, "untrimmed videos (0: none)");
  gen->add_option("--segments", gd.segments, "activities per untrimmed video");
  gen->add_option("--min-duration", gd.min_duration);
  gen->add_option("--max-duration", gd.max_duration);
  gen->add_option("--heatmaps", gd.heatmaps, "noisy heatmap samples for train-gan (0: none)");
  gen->add_option("--height", gd.height);
  gen->add_option("--width", gd.width);
  gen->add_option("--out", gd.out)->required();
  with_config(gen);

  TrainGan tg;
  auto* gan = app.add_subcommand("train-gan", "fit the pose generator (WGAN-GP with a supervised warm start)");
  gan->add_option("--seed", tg.seed);
  gan->add_option("--samples", tg.samples, "generated training samples (ignored with --heatmaps)");
  gan->add_option("--heatmaps", tg.heatmaps, "heatmap set written by gen-data");
  gan->add_option("--test-samples", tg.test_samples);
  gan->add_option("--size", tg.size, "frame size of generated samples");
  gan->add_option("--epochs", tg.epochs);
  gan->add_option("--n-critic", tg.n_critic);
  gan->add_option("--batch", tg.batch);
  gan->add_option("--lambda-gp", tg.lambda_gp);
  gan->add_option("--lr", tg.lr);
  gan->add_option("--pretrain-fraction", tg.pretrain_fraction);
  gan->add_option("--pretrain-epochs", tg.pretrain_epochs);
  gan->add_option("--out", tg.out)->required();
  with_config(gan);

  Train tr;
  auto* train = app.add_subcommand("train", "train a recognizer on <data>/train, score <data>/test");
  train->add_option("--data", tr.data)->required();
  train->add_option("--variant", tr.variant, "raw_frame, pose_stream, object_map, bi_stream, bi_stream_att");
  train->add_option("--generator", tr.generator, "pose generator whose joint maps replace the given ones");
  train->add_option("--epochs", tr.epochs);
  train->add_option("--accumulation", tr.accumulation);
  train->add_option("--gamma-ramp", tr.gamma_ramp);
  train->add_option("--lr", tr.lr);
  train->add_option("--crop-prob", tr.crop_prob);
  train->add_option("--seed", tr.seed);
  train->add_option("--out", tr.out)->required();
  with_config(train);

  Recognize rc;
  auto* rec = app.add_subcommand("recognize", "classify trimmed clips");
  rec->add_option("--model", rc.model)->required();
  rec->add_option("--data", rc.data, "a sample directory or a split root")->required();
  rec->add_option("--out", rc.out)->required();
  with_config(rec);

  Detect dt;
  auto* det = app.add_subcommand("detect", "sliding-window detection on untrimmed videos");
  det->add_option("--model", dt.model)->required();
  det->add_option("--video", dt.video, "a video directory or a root of video directories")->required();
  det->add_option("--window", dt.window);
  det->add_option("--stride", dt.stride);
  det->add_option("--background", dt.background, "class dropped when scoring");
  det->add_option("--iou", dt.iou);
  det->add_option("--out", dt.out)->required();
  with_config(det);

  GridSearch gs;
  auto* grid = app.add_subcommand("gridsearch", "window/stride search by pooled F1");
  grid->add_option("--model", gs.model)->required();
  grid->add_option("--videos", gs.videos)->required();
  grid->add_option("--windows", gs.windows, "5-40, 5-40:5 or 5,10,20");
  grid->add_option("--iou", gs.iou);
  grid->add_option("--background", gs.background);
  grid->add_option("--out", gs.out)->required();
  with_config(grid);

  Eval ev;
  auto* eval = app.add_subcommand("eval", "score predicted segments against ground truth");
  eval->add_option("--truth", ev.truth, "video directory or root with segments.csv files")->required();
  eval->add_option("--pred", ev.pred, "detect output")->required();
  eval->add_option("--iou", ev.iou);
  eval->add_option("--background", ev.background);
  eval->add_option("--out", ev.out)->required();
  with_config(eval);

  VizAttention va;
  auto* viz = app.add_subcommand("viz-attention", "export pose-stream attention maps as PGM");
  viz->add_option("--model", va.model)->required();
  viz->add_option("--sample", va.sample)->required();
  viz->add_option("--upscale", va.upscale);
  viz->add_option("--out", va.out)->required();
  with_config(viz);

  Ablation ab;
  auto* abl = app.add_subcommand("ablation", "train and score every stream variant on one split");
  abl->add_option("--data", ab.data)->required();
  abl->add_option("--variants", ab.variants);
  abl->add_option("--epochs", ab.epochs);
  abl->add_option("--accumulation", ab.accumulation);
  abl->add_option("--gamma-ramp", ab.gamma_ramp);
  abl->add_option("--lr", ab.lr);
  abl->add_option("--crop-prob", ab.crop_prob);
  abl->add_option("--seed", ab.seed);
  abl->add_option("--out", ab.out)->required();
  with_config(abl);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv, app);
  } catch (const UsageError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << failed->help();
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    struct Cmd {
      CLI::App* app;
      std::function<void()> run;
      std::string out;
    };
    const std::vector<Cmd> cmds{{gen, [&] { gd.run(); }, gd.out},       {gan, [&] { tg.run(); }, tg.out},
                                {train, [&] { tr.run(); }, tr.out},     {rec, [&] { rc.run(); }, rc.out},
                                {det, [&] { dt.run(); }, dt.out},       {grid, [&] { gs.run(); }, gs.out},
                                {eval, [&] { ev.run(); }, ev.out},      {viz, [&] { va.run(); }, va.out},
                                {abl, [&] { ab.run(); }, ab.out}};
    for (const auto& c : cmds) {
      if (c.app != sub) continue;
      c.run();
      write_effective_config(*sub, c.out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

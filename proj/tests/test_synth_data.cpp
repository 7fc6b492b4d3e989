#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <set>

#include "fgd/io.hpp"
#include "fgd/synth.hpp"

namespace fgd {
namespace {

namespace fs = std::filesystem;

std::size_t count_set(const Tensor<float>& t) {
  std::size_t n = 0;
  for (float v : t.data()) n += v == 1.0f;
  return n;
}

JointSet all_at(float x, float y) {
  JointSet q;
  for (std::size_t k = 0; k < 6; ++k) {
    q[2 * k] = x;
    q[2 * k + 1] = y;
  }
  return q;
}

TEST(JointMap, RadiusZeroMarksOnePixelPerDistinctJoint) {
  JointSet q{0.1f, 0.1f, 0.3f, 0.1f, 0.5f, 0.5f, 0.5f, 0.5f, 0.9f, 0.9f, 0.0f, 1.0f};
  EXPECT_EQ(count_set(build_joint_map(q, 64, 64, 0.0)), 5u);
}

TEST(JointMap, RadiusThreeLatticeCount) {
  std::size_t lattice = 0;
  for (int dx = -3; dx <= 3; ++dx)
    for (int dy = -3; dy <= 3; ++dy) lattice += dx * dx + dy * dy <= 9;
  ASSERT_EQ(lattice, 29u);
  const auto m = build_joint_map(all_at(0.5f, 0.5f), 64, 64, 3.0);
  EXPECT_EQ(count_set(m), 29u);
  EXPECT_EQ(m[32 * 64 + 32], 1.0f);
  EXPECT_EQ(m[32 * 64 + 35], 1.0f);
  EXPECT_EQ(m[32 * 64 + 36], 0.0f);
}

TEST(JointMap, BorderJointsClip) {
  const auto m = build_joint_map(all_at(0.0f, 0.0f), 64, 64, 3.0);
  std::size_t lattice = 0;
  for (int dx = 0; dx <= 3; ++dx)
    for (int dy = 0; dy <= 3; ++dy) lattice += dx * dx + dy * dy <= 9;
  EXPECT_EQ(count_set(m), lattice);
  EXPECT_THROW(build_joint_map(all_at(0.5f, 0.5f), 8, 8, -1.0), ContractError);
}

TEST(ObjectMap, BoxCounts) {
  EXPECT_EQ(count_set(build_object_map({}, 64, 64, 12)), 0u);
  const auto m = build_object_map({{0.5f, 0.5f}}, 64, 64, 12);
  EXPECT_EQ(count_set(m), 144u);
  EXPECT_EQ(m[26 * 64 + 26], 1.0f);
  EXPECT_EQ(m[37 * 64 + 37], 1.0f);
  EXPECT_EQ(m[38 * 64 + 37], 0.0f);
  EXPECT_EQ(count_set(build_object_map({{0.0f, 0.0f}}, 64, 64, 12)), 36u);
  EXPECT_THROW(build_object_map({}, 8, 8, 0), ContractError);
}

TEST(Subsample, HalvingRule) {
  EXPECT_EQ(subsample_indices(40).size(), 40u);
  const auto i41 = subsample_indices(41);
  ASSERT_EQ(i41.size(), 21u);
  EXPECT_EQ(i41.back(), 40u);
  EXPECT_EQ(subsample_indices(90).size(), 23u);
  EXPECT_THROW(subsample_indices(0), ContractError);
}

TEST(Subsample, IdempotentAtOrBelowLimit) {
  for (std::size_t t = 1; t <= 200; ++t) {
    const auto once = subsample_indices(t);
    EXPECT_LE(once.size(), 40u);
    EXPECT_EQ(subsample_indices(once.size()).size(), once.size());
  }
  SynthConfig cfg;
  cfg.min_length = cfg.max_length = 90;
  auto s = gen_sequence(kReach, cfg, 3);
  auto sub = subsample_sequence(s);
  EXPECT_EQ(sub.length(), 23u);
  EXPECT_EQ(subsample_sequence(sub).frames, sub.frames);
  EXPECT_EQ(sub.joints->dim(0), 23u);
  // frame 2 of the subsampled clip is frame 8 of the original
  for (std::size_t k = 0; k < 3 * 64 * 64; ++k) ASSERT_EQ(sub.frames[2 * 3 * 4096 + k], s.frames[8 * 3 * 4096 + k]);
}

TEST(Synth, DeterministicPerSeed) {
  SynthConfig cfg;
  const auto a = gen_sequence(kInspectProduct, cfg, 11), b = gen_sequence(kInspectProduct, cfg, 11);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.joint_map, b.joint_map);
  EXPECT_EQ(a.object_map, b.object_map);
  EXPECT_NE(gen_sequence(kInspectProduct, cfg, 12).frames.storage(), a.frames.storage());
}

TEST(Synth, InvariantsHoldForEveryClass) {
  SynthConfig cfg;
  for (int cls = 0; cls < 6; ++cls) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto s = gen_sequence(cls, cfg, seed);
      EXPECT_NO_THROW(validate(s, 6));
      EXPECT_GE(s.length(), cfg.min_length);
      EXPECT_LE(s.length(), cfg.max_length);
      EXPECT_EQ(s.label, cls);
      for (float v : s.joints->data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
      if (cls == kInspectShelf || cls == kBackground) {
        EXPECT_EQ(count_set(s.object_map), 0u);
      }
      if (cls == kInspectProduct) {
        EXPECT_EQ(count_set(s.object_map), s.length() * 144u);
      }
    }
  }
  EXPECT_THROW(gen_sequence(6, cfg, 0), ContractError);
}

TEST(Synth, ObjectPresenceIsOptionalForArmMotions) {
  SynthConfig cfg;
  for (int cls : {kReach, kRetract, kHandIn}) {
    int with = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) with += count_set(gen_sequence(cls, cfg, seed).object_map) > 0;
    EXPECT_GT(with, 70);
    EXPECT_LT(with, 130);
  }
}

// Nearest-centroid over hand-built motion features; a floor on how
// separable the classes are.
std::vector<double> centroid_features(const VideoSample& s) {
  const auto& j = *s.joints;
  const std::size_t t = s.length();
  double rel_x = 0, rel_y = 0;
  for (std::size_t f = 0; f < t; ++f) {
    const float* q = j.data().data() + f * 12;
    rel_x += std::abs(q[8] - q[0]) + std::abs(q[10] - q[2]);
    rel_y += (q[9] - q[1]) + (q[11] - q[3]);
  }
  const float* first = j.data().data();
  const float* last = first + (t - 1) * 12;
  const double net_y = (last[9] - first[9]) + (last[11] - first[11]);
  const double net_x = std::abs(last[8] - last[10]) - std::abs(first[8] - first[10]);
  double energy = 0, presence = 0;
  const std::size_t hw = s.height() * s.width();
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t k = 0; k < hw; ++k) {
      presence += s.object_map[f * hw + k];
      if (f > 0) energy += std::abs(s.object_map[f * hw + k] - s.object_map[(f - 1) * hw + k]);
    }
  }
  return {rel_x / static_cast<double>(t), rel_y / static_cast<double>(t), net_x, net_y,
          energy / static_cast<double>(t * 144), presence / static_cast<double>(t * 144)};
}

TEST(Synth, NearestCentroidSeparatesClasses) {
  SynthConfig cfg;
  cfg.seed = 7;
  const auto train = gen_split(cfg, 300, kTrainSplit);
  const auto test = gen_split(cfg, 300, kTestSplit);
  const std::size_t d = centroid_features(train[0]).size();
  std::vector<std::vector<double>> feats;
  for (const auto& s : train) feats.push_back(centroid_features(s));
  std::vector<double> mean(d, 0), sd(d, 0);
  for (const auto& f : feats)
    for (std::size_t k = 0; k < d; ++k) mean[k] += f[k] / static_cast<double>(feats.size());
  for (const auto& f : feats)
    for (std::size_t k = 0; k < d; ++k) sd[k] += (f[k] - mean[k]) * (f[k] - mean[k]) / static_cast<double>(feats.size());
  for (auto& v : sd) v = std::sqrt(v) + 1e-12;
  std::vector<std::vector<double>> centroid(6, std::vector<double>(d, 0));
  std::vector<int> count(6, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    ++count[static_cast<std::size_t>(train[i].label)];
    for (std::size_t k = 0; k < d; ++k) centroid[static_cast<std::size_t>(train[i].label)][k] += (feats[i][k] - mean[k]) / sd[k];
  }
  for (std::size_t c = 0; c < 6; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  int correct = 0;
  for (const auto& s : test) {
    const auto f = centroid_features(s);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 6; ++c) {
      double dist = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double z = (f[k] - mean[k]) / sd[k] - centroid[static_cast<std::size_t>(c)][k];
        dist += z * z;
      }
      if (dist < best_d) best_d = dist, best = c;
    }
    correct += best == s.label;
  }
  const double acc = correct / 300.0;
  std::printf("nearest-centroid accuracy: %.3f\n", acc);
  EXPECT_GE(acc, 0.80);
}

TEST(Synth, SplitsAreBalancedAndDisjoint) {
  SynthConfig cfg;
  cfg.max_length = 10;
  const auto train = gen_split(cfg, 300, kTrainSplit);
  std::vector<int> per(6, 0);
  for (const auto& s : train) ++per[static_cast<std::size_t>(s.label)];
  for (int n : per) EXPECT_EQ(n, 50);
  std::set<std::size_t> hashes;
  auto hash = [](const VideoSample& s) { return std::hash<std::string>{}(encode_fgt(s.frames)); };
  for (const auto& s : train) hashes.insert(hash(s));
  EXPECT_EQ(hashes.size(), 300u);
  for (const auto& s : gen_split(cfg, 60, kTestSplit)) EXPECT_EQ(hashes.count(hash(s)), 0u);
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

TEST(Synth, DatasetRegenerationIsByteIdentical) {
  SynthConfig cfg;
  cfg.max_length = 9;
  const fs::path base = fs::temp_directory_path() / "fgd_synth_regen";
  fs::remove_all(base);
  UntrimmedSetConfig vids{2, 3, 4, 6};
  gen_dataset(cfg, 12, 6, base / "a", &vids);
  gen_dataset(cfg, 12, 6, base / "b", &vids);
  const auto a = read_tree(base / "a"), b = read_tree(base / "b");
  EXPECT_EQ(a.size(), 12u * 5 + 6u * 5 + 2u * 6 + 3u);
  EXPECT_EQ(a, b);
  const auto s = load_sample(base / "a" / "train" / "00004");
  EXPECT_EQ(s.label, 4);
  EXPECT_EQ(s.frames, gen_sequence(4, cfg, derive_seed(cfg.seed, kTrainSplit, 4)).frames);
  EXPECT_EQ(SynthConfig::from_key_values(parse_key_values(read_file(base / "a" / "test" / "config.txt"), "cfg")).max_length, 9u);
  EXPECT_EQ(load_segments(base / "a" / "videos" / "00001").size(), 3u);
  fs::remove_all(base);
}

TEST(Synth, ConfigRejectsUnknownKeys) {
  EXPECT_THROW(SynthConfig::from_key_values({{"colour", "red"}}), ContractError);
  EXPECT_THROW(SynthConfig::from_key_values({{"height", "tall"}}), ContractError);
  EXPECT_THROW(SynthConfig::from_key_values({{"height", "8"}}), ContractError);
}

TEST(Untrimmed, SingleEntryAndConservation) {
  SynthConfig cfg;
  auto v = gen_untrimmed({{{kHandIn, 17}}}, cfg, 1);
  EXPECT_EQ(v.video.length(), 17u);
  EXPECT_EQ(v.segments, (std::vector<Segment>{{0, 17, kHandIn}}));
  ActivityScript script{{{kBackground, 5}, {kReach, 9}, {kHandIn, 4}, {kRetract, 11}}};
  v = gen_untrimmed(script, cfg, 2);
  EXPECT_EQ(v.video.length(), script.total_length());
  ASSERT_EQ(v.segments.size(), 4u);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(v.segments[i].start, pos);
    EXPECT_EQ(v.segments[i].length(), script.entries[i].second);
    EXPECT_EQ(v.segments[i].label, script.entries[i].first);
    pos = v.segments[i].end;
  }
  EXPECT_NO_THROW(validate(v.video, 6));
  EXPECT_THROW(gen_untrimmed({}, cfg, 0), ContractError);
}

TEST(Untrimmed, JointTrajectoriesAreContinuousAcrossBoundaries) {
  SynthConfig cfg;
  cfg.jitter_px = 0;
  ActivityScript script{{{kReach, 10}, {kHandIn, 10}, {kRetract, 10}, {kInspectShelf, 10}}};
  const auto v = gen_untrimmed(script, cfg, 5);
  const auto& j = *v.video.joints;
  for (const auto& s : v.segments) {
    if (s.start == 0) continue;
    for (std::size_t k = 8; k < 12; ++k) EXPECT_LT(std::abs(j[s.start * 12 + k] - j[(s.start - 1) * 12 + k]), 0.1f);
  }
}

TEST(Untrimmed, BiasedScriptsReproduceTransitionMatrix) {
  SynthConfig cfg;
  cfg.height = cfg.width = 16;
  std::vector<double> bias(36, 0.0);
  Rng pick(9);
  for (std::size_t a = 0; a < 6; ++a) {
    double row = 0;
    for (std::size_t b = 0; b < 6; ++b)
      if (a != b) row += bias[a * 6 + b] = 0.1 + std::uniform_real_distribution<double>(0, 1)(pick);
    for (std::size_t b = 0; b < 6; ++b) bias[a * 6 + b] /= row;
  }
  std::vector<std::vector<Segment>> segs;
  for (std::uint64_t i = 0; i < 50; ++i) {
    Rng rng(derive_seed(3, 9, i));
    segs.push_back(gen_untrimmed(sample_script(120, bias, 6, 1, 2, rng), cfg, i).segments);
  }
  const auto m = transition_matrix(segs, 6);
  for (std::size_t k = 0; k < 36; ++k) EXPECT_NEAR(m[k], 100.0 * bias[k], 5.0) << "entry " << k;
}

TEST(Untrimmed, NaturalTransitionsHaveZeroDiagonal) {
  const auto m = natural_transitions();
  for (std::size_t a = 0; a < 6; ++a) {
    double row = 0;
    for (std::size_t b = 0; b < 6; ++b) row += m[a * 6 + b];
    EXPECT_EQ(m[a * 6 + a], 0.0);
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace fgd

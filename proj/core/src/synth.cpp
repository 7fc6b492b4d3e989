#include "fgd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <optional>
#include <sstream>

#include "fgd/io.hpp"

namespace fgd {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"background", "reach", "retract", "hand_in", "inspect_product",
                                              "inspect_shelf"};
  return names;
}

void SynthConfig::validate() const {
  if (height < 16 || width < 16) throw ContractError("synth: frames must be at least 16x16");
  if (classes != 6) throw ContractError("synth: the generator renders exactly 6 activity classes");
  if (min_length < 1 || max_length > 200 || min_length > max_length) {
    throw ContractError("synth: clip length range must satisfy 1 <= min <= max <= 200");
  }
  if (joint_radius < 0 || object_box < 1) throw ContractError("synth: bad map geometry");
  if (object_prob < 0 || object_prob > 1) throw ContractError("synth: object_prob outside [0,1]");
  if (fps <= 0) throw ContractError("synth: fps must be positive");
}

KeyValues SynthConfig::to_key_values() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"height", std::to_string(height)},         {"width", std::to_string(width)},
          {"classes", std::to_string(classes)},       {"min_length", std::to_string(min_length)},
          {"max_length", std::to_string(max_length)}, {"joint_radius", num(joint_radius)},
          {"object_box", std::to_string(object_box)}, {"fps", num(fps)},
          {"seed", std::to_string(seed)},             {"jitter_px", num(jitter_px)},
          {"pixel_noise", num(pixel_noise)},          {"object_prob", num(object_prob)}};
}

SynthConfig SynthConfig::from_key_values(const KeyValues& kv) {
  SynthConfig c;
  for (const auto& [k, v] : kv) {
    try {
      if (k == "height") c.height = std::stoul(v);
      else if (k == "width") c.width = std::stoul(v);
      else if (k == "classes") c.classes = std::stoul(v);
      else if (k == "min_length") c.min_length = std::stoul(v);
      else if (k == "max_length") c.max_length = std::stoul(v);
      else if (k == "joint_radius") c.joint_radius = std::stod(v);
      else if (k == "object_box") c.object_box = std::stoul(v);
      else if (k == "fps") c.fps = std::stod(v);
      else if (k == "seed") c.seed = std::stoull(v);
      else if (k == "jitter_px") c.jitter_px = std::stod(v);
      else if (k == "pixel_noise") c.pixel_noise = std::stod(v);
      else if (k == "object_prob") c.object_prob = std::stod(v);
      else throw ContractError("synth config: unknown key '" + k + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ContractError*>(&e)) throw;
      throw ContractError("synth config: bad value for '" + k + "': '" + v + "'");
    }
  }
  c.validate();
  return c;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t split, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ split) ^ index);
}

std::size_t ActivityScript::total_length() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.second;
  return n;
}

namespace {

struct Pose {
  float lx, ly, rx, ry;  // wrists
};

Pose lerp(const Pose& a, const Pose& b, float u) {
  return {a.lx + (b.lx - a.lx) * u, a.ly + (b.ly - a.ly) * u, a.rx + (b.rx - a.rx) * u, a.ry + (b.ry - a.ry) * u};
}

constexpr Pose kRest{0.40f, 0.72f, 0.60f, 0.72f};
constexpr Pose kShelf{0.38f, 0.19f, 0.62f, 0.19f};
constexpr Pose kCenter{0.45f, 0.54f, 0.55f, 0.54f};
constexpr Pose kWide{0.22f, 0.60f, 0.78f, 0.60f};
constexpr float kShoulderY = 0.46f;
constexpr float kShelfLine = 0.26f;

Pose perturb(Pose p, Rng& rng, float amount) {
  std::uniform_real_distribution<float> d(-amount, amount);
  p.lx += d(rng);
  p.ly += d(rng);
  p.rx += d(rng);
  p.ry += d(rng);
  return p;
}

struct Rgb {
  float r, g, b;
};

struct Frame {
  JointSet joints;
  std::optional<std::pair<float, float>> object;
};

float clamp01(float v) { return std::clamp(v, 0.02f, 0.98f); }

JointSet joints_of(const Pose& p, float shoulder_dx) {
  const float slx = 0.5f - shoulder_dx, srx = 0.5f + shoulder_dx;
  JointSet q{};
  q[0] = slx;
  q[1] = kShoulderY;
  q[2] = srx;
  q[3] = kShoulderY;
  // elbows bend outward and a little down from the arm's midpoint
  q[4] = 0.5f * (slx + p.lx) - 0.07f;
  q[5] = 0.5f * (kShoulderY + p.ly) + 0.03f;
  q[6] = 0.5f * (srx + p.rx) + 0.07f;
  q[7] = 0.5f * (kShoulderY + p.ry) + 0.03f;
  q[8] = p.lx;
  q[9] = p.ly;
  q[10] = p.rx;
  q[11] = p.ry;
  for (auto& v : q) v = clamp01(v);
  return q;
}

Pose natural_start(int cls) {
  return (cls == kRetract || cls == kHandIn) ? kShelf : kRest;
}

// where a clip of class `cls` leaves the wrists
Pose resting_pose(int cls) {
  switch (cls) {
    case kReach:
    case kHandIn: return kShelf;
    case kInspectProduct: return kCenter;
    case kInspectShelf: return kWide;
    default: return kRest;
  }
}

// End pose of a predecessor drawn from the transition column of `cls`, so
// trimmed clips start the way they do inside untrimmed videos.
Pose sequence_start(int cls, Rng& rng) {
  const auto trans = natural_transitions();
  constexpr std::size_t k = 6;
  std::vector<double> col(k);
  for (std::size_t p = 0; p < k; ++p) col[p] = trans[p * k + static_cast<std::size_t>(cls)];
  std::discrete_distribution<int> prev(col.begin(), col.end());
  return perturb(resting_pose(prev(rng)), rng, 0.03f);
}

// Per-frame wrist poses and object centers of one clip.
struct Clip {
  std::vector<Pose> poses;
  std::vector<std::optional<std::pair<float, float>>> objects;
  Pose end;
};

Clip script_clip(int cls, const Pose& start, std::size_t length, double object_prob, Rng& rng) {
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  Clip c;
  const float two_pi = 2.0f * std::numbers::pi_v<float>;
  const float phase1 = two_pi * uni(rng), phase2 = two_pi * uni(rng);
  const float freq = 1.0f + uni(rng);
  const float period = 8.0f + 6.0f * uni(rng);
  const bool holds_object = (cls == kReach || cls == kRetract || cls == kHandIn) && uni(rng) < static_cast<float>(object_prob);
  Pose target;
  switch (cls) {
    case kReach:
    case kHandIn: target = perturb(kShelf, rng, 0.03f); break;
    case kRetract:
    case kBackground: target = perturb(kRest, rng, 0.03f); break;
    case kInspectProduct: target = perturb(kCenter, rng, 0.03f); break;
    case kInspectShelf: target = perturb(kWide, rng, 0.03f); break;
    default: throw ContractError("synth: class " + std::to_string(cls) + " outside [0,6)");
  }
  Pose drift{0, 0, 0, 0};
  for (std::size_t t = 0; t < length; ++t) {
    const float u = length > 1 ? static_cast<float>(t) / static_cast<float>(length - 1) : 1.0f;
    const float settle = std::min(1.0f, u / 0.25f);
    Pose p;
    std::optional<std::pair<float, float>> obj;
    switch (cls) {
      case kReach:
      case kRetract: p = lerp(start, target, u); break;
      case kHandIn: {
        p = lerp(start, target, settle);
        const float w = two_pi * freq * u;
        p.lx += 0.035f * std::sin(w + phase1) * settle;
        p.rx += 0.035f * std::sin(w + phase2) * settle;
        p.ly += 0.015f * std::cos(w + phase1) * settle;
        p.ry += 0.015f * std::cos(w + phase2) * settle;
        break;
      }
      case kInspectProduct: {
        p = lerp(start, target, settle);
        const float s = std::sin(two_pi * static_cast<float>(t) / period + phase1);
        p.ly += 0.01f * s;
        p.ry += 0.01f * s;
        obj = std::pair{0.5f * (p.lx + p.rx) + 0.07f * s, 0.5f * (p.ly + p.ry) - 0.03f};
        break;
      }
      case kInspectShelf: p = lerp(start, target, settle); break;
      default: {  // background: settle near rest, then wander
        p = lerp(start, target, settle);
        drift.lx = 0.85f * drift.lx + 0.012f * gauss(rng);
        drift.ly = 0.85f * drift.ly + 0.012f * gauss(rng);
        drift.rx = 0.85f * drift.rx + 0.012f * gauss(rng);
        drift.ry = 0.85f * drift.ry + 0.012f * gauss(rng);
        p.lx += drift.lx;
        p.ly += drift.ly;
        p.rx += drift.rx;
        p.ry += drift.ry;
        break;
      }
    }
    if (holds_object) obj = std::pair{p.rx + 0.02f, p.ry + 0.03f};
    c.poses.push_back(p);
    c.objects.push_back(obj);
  }
  c.end = c.poses.back();
  return c;
}

float seg_dist2(float px, float py, float ax, float ay, float bx, float by) {
  const float vx = bx - ax, vy = by - ay;
  const float len2 = vx * vx + vy * vy;
  float u = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0f;
  u = std::clamp(u, 0.0f, 1.0f);
  const float dx = px - (ax + u * vx), dy = py - (ay + u * vy);
  return dx * dx + dy * dy;
}

void render(const Frame& f, const SynthConfig& cfg, Rng& rng, float* out) {
  const std::size_t h = cfg.height, w = cfg.width, hw = h * w;
  const float fh = static_cast<float>(h), fw = static_cast<float>(w);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.pixel_noise));
  const JointSet& q = f.joints;
  // joint coordinates in pixel units
  float px[12];
  for (std::size_t k = 0; k < 6; ++k) {
    px[2 * k] = q[2 * k] * fw;
    px[2 * k + 1] = q[2 * k + 1] * fh;
  }
  const float scale = fw / 64.0f;
  const float upper_w = 1.8f * scale, fore_w = 1.4f * scale, hand_r = 2.4f * scale;
  const float torso_l = px[0], torso_r = px[2], torso_top = px[1];
  const float head_x = 0.5f * fw, head_y = torso_top - 0.12f * fh, head_r = 0.07f * fw;
  const float obj_half = 4.0f * scale;
  for (std::size_t i = 0; i < h; ++i) {
    const float y = static_cast<float>(i) + 0.5f, yn = y / fh;
    for (std::size_t j = 0; j < w; ++j) {
      const float x = static_cast<float>(j) + 0.5f, xn = x / fw;
      Rgb c;
      if (yn < kShelfLine) {
        const bool edge = yn > kShelfLine - 0.03f || std::fmod(yn, 0.12f) < 0.02f;
        c = edge ? Rgb{0.35f, 0.22f, 0.12f} : Rgb{0.60f, 0.45f, 0.25f};
      } else {
        c = {0.25f + 0.35f * yn, 0.30f + 0.25f * xn, 0.50f - 0.25f * yn};
      }
      if (x >= torso_l && x <= torso_r && y >= torso_top) c = {0.15f, 0.20f, 0.55f};
      if ((x - head_x) * (x - head_x) + (y - head_y) * (y - head_y) <= head_r * head_r) c = {0.85f, 0.70f, 0.60f};
      for (int side = 0; side < 2; ++side) {
        const float* s = px + 2 * side;
        const float* e = px + 4 + 2 * side;
        const float* wr = px + 8 + 2 * side;
        if (seg_dist2(x, y, s[0], s[1], e[0], e[1]) <= upper_w * upper_w) c = {0.20f, 0.25f, 0.65f};
        if (seg_dist2(x, y, e[0], e[1], wr[0], wr[1]) <= fore_w * fore_w) c = {0.90f, 0.72f, 0.58f};
        if ((x - wr[0]) * (x - wr[0]) + (y - wr[1]) * (y - wr[1]) <= hand_r * hand_r) c = {0.95f, 0.78f, 0.62f};
      }
      if (f.object) {
        const float ox = f.object->first * fw, oy = f.object->second * fh;
        if (std::abs(x - ox) <= obj_half && std::abs(y - oy) <= obj_half) c = {0.10f, 0.75f, 0.15f};
      }
      const std::size_t k = i * w + j;
      out[k] = std::clamp(c.r + noise(rng), 0.0f, 1.0f);
      out[hw + k] = std::clamp(c.g + noise(rng), 0.0f, 1.0f);
      out[2 * hw + k] = std::clamp(c.b + noise(rng), 0.0f, 1.0f);
    }
  }
}

VideoSample materialize(const std::vector<Frame>& frames, const SynthConfig& cfg, Rng& rng, int label) {
  const std::size_t t = frames.size(), h = cfg.height, w = cfg.width, hw = h * w;
  VideoSample s;
  s.label = label;
  s.fps = cfg.fps;
  s.frames = Tensor<float>({t, 3, h, w});
  s.joint_map = Tensor<float>({t, 1, h, w});
  s.object_map = Tensor<float>({t, 1, h, w});
  Tensor<float> joints({t, 12});
  for (std::size_t i = 0; i < t; ++i) {
    render(frames[i], cfg, rng, s.frames.storage().data() + i * 3 * hw);
    const auto jm = build_joint_map(frames[i].joints, h, w, cfg.joint_radius);
    std::copy(jm.data().begin(), jm.data().end(), s.joint_map.storage().begin() + static_cast<std::ptrdiff_t>(i * hw));
    std::vector<std::pair<float, float>> centers;
    if (frames[i].object) centers.push_back(*frames[i].object);
    const auto om = build_object_map(centers, h, w, cfg.object_box);
    std::copy(om.data().begin(), om.data().end(), s.object_map.storage().begin() + static_cast<std::ptrdiff_t>(i * hw));
    std::copy(frames[i].joints.begin(), frames[i].joints.end(), joints.storage().begin() + static_cast<std::ptrdiff_t>(i * 12));
  }
  s.joints = std::move(joints);
  return s;
}

void append_clip(const Clip& clip, float shoulder_dx, const SynthConfig& cfg, Rng& rng, std::vector<Frame>& out) {
  std::normal_distribution<float> jx(0.0f, static_cast<float>(cfg.jitter_px / static_cast<double>(cfg.width)));
  std::normal_distribution<float> jy(0.0f, static_cast<float>(cfg.jitter_px / static_cast<double>(cfg.height)));
  for (std::size_t t = 0; t < clip.poses.size(); ++t) {
    Frame f;
    f.joints = joints_of(clip.poses[t], shoulder_dx);
    for (std::size_t k = 0; k < 6; ++k) {
      f.joints[2 * k] = clamp01(f.joints[2 * k] + jx(rng));
      f.joints[2 * k + 1] = clamp01(f.joints[2 * k + 1] + jy(rng));
    }
    if (clip.objects[t]) f.object = std::pair{clamp01(clip.objects[t]->first), clamp01(clip.objects[t]->second)};
    out.push_back(f);
  }
}

}  // namespace

VideoSample gen_sequence(int cls, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cls < 0 || static_cast<std::size_t>(cls) >= cfg.classes) {
    throw ContractError("gen_sequence: class " + std::to_string(cls) + " outside [0," + std::to_string(cfg.classes) + ")");
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
  std::uniform_real_distribution<float> sh(0.10f, 0.13f);
  const std::size_t length = len(rng);
  const float shoulder_dx = sh(rng);
  const Pose start = sequence_start(cls, rng);
  const Clip clip = script_clip(cls, start, length, cfg.object_prob, rng);
  std::vector<Frame> frames;
  append_clip(clip, shoulder_dx, cfg, rng, frames);
  return materialize(frames, cfg, rng, cls);
}

SynthFrame gen_frame(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int cls = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, cfg.classes - 1)(rng));
  std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
  std::uniform_real_distribution<float> sh(0.10f, 0.13f);
  const std::size_t length = len(rng);
  const float shoulder_dx = sh(rng);
  const Pose start = perturb(natural_start(cls), rng, 0.03f);
  const Clip clip = script_clip(cls, start, length, cfg.object_prob, rng);
  std::vector<Frame> frames;
  append_clip(clip, shoulder_dx, cfg, rng, frames);
  const Frame& f = frames[std::uniform_int_distribution<std::size_t>(0, length - 1)(rng)];
  SynthFrame out{Tensor<float>({3, cfg.height, cfg.width}), f.joints, cls};
  render(f, cfg, rng, out.image.storage().data());
  return out;
}

std::vector<double> natural_transitions() {
  // rows: from background, reach, retract, hand_in, inspect_product, inspect_shelf
  return {
      0.00, 0.50, 0.00, 0.00, 0.25, 0.25,  //
      0.00, 0.00, 0.40, 0.60, 0.00, 0.00,  //
      0.40, 0.00, 0.00, 0.00, 0.40, 0.20,  //
      0.00, 0.00, 1.00, 0.00, 0.00, 0.00,  //
      0.40, 0.40, 0.00, 0.00, 0.00, 0.20,  //
      0.30, 0.70, 0.00, 0.00, 0.00, 0.00,  //
  };
}

ActivityScript sample_script(std::size_t entries, const std::vector<double>& transitions, std::size_t classes,
                             std::size_t min_dur, std::size_t max_dur, Rng& rng, int first) {
  if (entries == 0) throw ContractError("sample_script: need at least one entry");
  if (transitions.size() != classes * classes) throw ContractError("sample_script: transition matrix must be K x K");
  if (min_dur < 1 || min_dur > max_dur) throw ContractError("sample_script: durations must satisfy 1 <= min <= max");
  std::uniform_int_distribution<std::size_t> dur(min_dur, max_dur);
  ActivityScript s;
  int cls = first >= 0 ? first : static_cast<int>(std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng));
  for (std::size_t i = 0; i < entries; ++i) {
    s.entries.emplace_back(cls, dur(rng));
    const auto row = transitions.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(cls) * classes);
    std::discrete_distribution<int> next(row, row + static_cast<std::ptrdiff_t>(classes));
    cls = next(rng);
  }
  return s;
}

UntrimmedVideo gen_untrimmed(const ActivityScript& script, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (script.entries.empty()) throw ContractError("gen_untrimmed: empty script");
  Rng rng(seed);
  std::uniform_real_distribution<float> sh(0.10f, 0.13f);
  const float shoulder_dx = sh(rng);
  Pose pose = perturb(kRest, rng, 0.03f);
  std::vector<Frame> frames;
  UntrimmedVideo v;
  for (const auto& [cls, duration] : script.entries) {
    if (duration < 1) throw ContractError("gen_untrimmed: durations must be >= 1");
    if (cls < 0 || static_cast<std::size_t>(cls) >= cfg.classes) throw ContractError("gen_untrimmed: class out of range");
    const Clip clip = script_clip(cls, pose, duration, cfg.object_prob, rng);
    const std::size_t start = frames.size();
    append_clip(clip, shoulder_dx, cfg, rng, frames);
    v.segments.push_back({start, frames.size(), cls});
    pose = clip.end;
  }
  v.video = materialize(frames, cfg, rng, -1);
  return v;
}

std::vector<VideoSample> gen_split(const SynthConfig& cfg, std::size_t n, std::uint64_t split) {
  std::vector<VideoSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(gen_sequence(static_cast<int>(i % cfg.classes), cfg, derive_seed(cfg.seed, split, i)));
  return out;
}

std::vector<UntrimmedVideo> gen_untrimmed_set(const SynthConfig& cfg, const UntrimmedSetConfig& set,
                                              std::uint64_t split) {
  std::vector<UntrimmedVideo> out;
  const auto trans = natural_transitions();
  for (std::size_t i = 0; i < set.videos; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, split, i);
    Rng rng(seed ^ 0x5bd1e995ULL);
    const auto script = sample_script(set.segments, trans, cfg.classes, set.min_duration, set.max_duration, rng, kBackground);
    out.push_back(gen_untrimmed(script, cfg, seed));
  }
  return out;
}

namespace {

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

}  // namespace

void gen_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test, const std::filesystem::path& out,
                 const UntrimmedSetConfig* videos) {
  cfg.validate();
  if (n_train < 1 || n_test < 1) throw ContractError("gen_dataset: train and test sizes must be >= 1");
  const std::string config = format_key_values(cfg.to_key_values());
  auto write_split = [&](const char* name, std::size_t n, std::uint64_t split) {
    const auto root = out / name;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = gen_sequence(static_cast<int>(i % cfg.classes), cfg, derive_seed(cfg.seed, split, i));
      save_sample(root / sample_name(i), s);
    }
    write_file_atomic(root / "config.txt", config);
  };
  write_split("train", n_train, kTrainSplit);
  write_split("test", n_test, kTestSplit);
  if (videos && videos->videos > 0) {
    const auto root = out / "videos";
    const auto set = gen_untrimmed_set(cfg, *videos, kVideoSplit);
    for (std::size_t i = 0; i < set.size(); ++i) save_sample(root / sample_name(i), set[i].video, &set[i].segments);
    write_file_atomic(root / "config.txt", config);
  }
}

}  // namespace fgd

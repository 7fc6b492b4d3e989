#include "fgd/video.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fgd/io.hpp"

namespace fgd {

void validate(const JointSet& q) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(q[i] >= 0.0f && q[i] <= 1.0f)) {
      throw ContractError("joint coordinate " + std::to_string(i) + " = " + std::to_string(q[i]) + " outside [0,1]");
    }
  }
}

namespace {

void require_binary(const Tensor<float>& t, const char* what) {
  for (float v : t.data())
    if (v != 0.0f && v != 1.0f) throw ContractError(std::string(what) + " is not binary");
}

Tensor<float> take_frames(const Tensor<float>& t, const std::vector<std::size_t>& idx) {
  Shape s = t.shape();
  const std::size_t stride = t.size() / s[0];
  s[0] = idx.size();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride,
                out.storage().begin() + static_cast<std::ptrdiff_t>(i * stride));
  return out;
}

VideoSample take(const VideoSample& s, const std::vector<std::size_t>& idx) {
  VideoSample out;
  out.frames = take_frames(s.frames, idx);
  out.joint_map = take_frames(s.joint_map, idx);
  out.object_map = take_frames(s.object_map, idx);
  out.label = s.label;
  out.fps = s.fps;
  if (s.joints) out.joints = take_frames(*s.joints, idx);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

void validate(const VideoSample& s, std::size_t classes) {
  if (s.frames.rank() != 4 || s.frames.dim(1) != 3) {
    throw ContractError("video: frames must be [T,3,H,W], got " + to_string(s.frames.shape()));
  }
  const Shape map_shape{s.length(), 1, s.height(), s.width()};
  if (s.joint_map.shape() != map_shape) throw ContractError("video: joint map " + to_string(s.joint_map.shape()) + " does not match frames " + to_string(s.frames.shape()));
  if (s.object_map.shape() != map_shape) throw ContractError("video: object map " + to_string(s.object_map.shape()) + " does not match frames " + to_string(s.frames.shape()));
  if (s.label >= static_cast<int>(classes) || s.label < -1) {
    throw ContractError("video: label " + std::to_string(s.label) + " outside [0," + std::to_string(classes) + ")");
  }
  for (float v : s.frames.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("video: frame value outside [0,1]");
  require_binary(s.joint_map, "joint map");
  require_binary(s.object_map, "object map");
  if (s.joints && s.joints->shape() != Shape{s.length(), 12}) throw ContractError("video: joints must be [T,12]");
}

std::size_t to_pixel(float v, std::size_t n) {
  const double p = std::floor(static_cast<double>(v) * static_cast<double>(n));
  return static_cast<std::size_t>(std::clamp(p, 0.0, static_cast<double>(n - 1)));
}

Tensor<float> build_joint_map(const JointSet& joints, std::size_t h, std::size_t w, double radius_px) {
  if (radius_px < 0) throw ContractError("build_joint_map: negative radius");
  Tensor<float> map({1, h, w});
  const double r2 = radius_px * radius_px;
  const long reach = static_cast<long>(std::floor(radius_px));
  for (std::size_t j = 0; j < kJoints; ++j) {
    const long cx = static_cast<long>(to_pixel(joints[2 * j], w)), cy = static_cast<long>(to_pixel(joints[2 * j + 1], h));
    for (long dy = -reach; dy <= reach; ++dy)
      for (long dx = -reach; dx <= reach; ++dx) {
        const long y = cy + dy, x = cx + dx;
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
        if (static_cast<double>(dx * dx + dy * dy) <= r2) map[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 1.0f;
      }
  }
  return map;
}

Tensor<float> build_object_map(const std::vector<std::pair<float, float>>& centers, std::size_t h, std::size_t w,
                               std::size_t box_px) {
  if (box_px < 1) throw ContractError("build_object_map: box must be >= 1 pixel");
  Tensor<float> map({1, h, w});
  const long half = static_cast<long>(box_px / 2);
  for (const auto& [x, y] : centers) {
    const long y0 = static_cast<long>(to_pixel(y, h)) - half, x0 = static_cast<long>(to_pixel(x, w)) - half;
    for (long i = std::max(0L, y0); i < std::min<long>(static_cast<long>(h), y0 + static_cast<long>(box_px)); ++i)
      for (long j = std::max(0L, x0); j < std::min<long>(static_cast<long>(w), x0 + static_cast<long>(box_px)); ++j)
        map[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)] = 1.0f;
  }
  return map;
}

std::vector<std::size_t> subsample_indices(std::size_t length, std::size_t limit) {
  if (length == 0) throw ContractError("subsample_sequence: empty sequence");
  if (limit == 0) throw ContractError("subsample_sequence: limit must be >= 1");
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = i;
  while (idx.size() > limit) {
    std::vector<std::size_t> half;
    for (std::size_t i = 0; i < idx.size(); i += 2) half.push_back(idx[i]);
    idx = std::move(half);
  }
  return idx;
}

VideoSample subsample_sequence(const VideoSample& s, std::size_t limit) {
  if (s.length() <= limit) return s;
  return take(s, subsample_indices(s.length(), limit));
}

VideoSample slice_frames(const VideoSample& s, std::size_t begin, std::size_t end) {
  if (begin >= end || end > s.length()) {
    throw ContractError("slice_frames: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                        std::to_string(s.length()) + " frames");
  }
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return take(s, idx);
}

std::string segments_csv(const std::vector<Segment>& segs) {
  std::ostringstream os;
  for (const auto& s : segs) os << s.start << ',' << s.end << ',' << s.label << '\n';
  return os.str();
}

std::vector<Segment> parse_segments_csv(const std::string& text, const std::string& context) {
  std::vector<Segment> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Segment s;
    char c1 = 0, c2 = 0;
    long long a = -1, b = -1;
    std::istringstream ls(line);
    if (!(ls >> a >> c1 >> b >> c2 >> s.label) || c1 != ',' || c2 != ',' || a < 0 || b <= a) {
      throw IoError(context + ":" + std::to_string(lineno) + ": expected start,end,class with start < end");
    }
    s.start = static_cast<std::size_t>(a);
    s.end = static_cast<std::size_t>(b);
    out.push_back(s);
  }
  return out;
}

void save_sample(const std::filesystem::path& dir, const VideoSample& s, const std::vector<Segment>* segments) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  write_fgt(dir / "frames.fgt", s.frames);
  write_fgt(dir / "jointmap.fgt", s.joint_map);
  write_fgt(dir / "objmap.fgt", s.object_map);
  write_file_atomic(dir / "label.txt", std::to_string(s.label) + "\n");
  if (s.joints) {
    std::ostringstream os;
    os.precision(9);
    const auto& j = *s.joints;
    for (std::size_t t = 0; t < j.dim(0); ++t) {
      os << t;
      for (std::size_t k = 0; k < 12; ++k) os << ',' << j[t * 12 + k];
      os << '\n';
    }
    write_file_atomic(dir / "joints.csv", os.str());
  }
  if (segments) write_file_atomic(dir / "segments.csv", segments_csv(*segments));
}

VideoSample load_sample(const std::filesystem::path& dir) {
  VideoSample s;
  s.frames = read_fgt(dir / "frames.fgt");
  s.joint_map = read_fgt(dir / "jointmap.fgt");
  s.object_map = read_fgt(dir / "objmap.fgt");
  const std::string label = trim(read_file(dir / "label.txt"));
  try {
    std::size_t used = 0;
    s.label = std::stoi(label, &used);
    if (used != label.size()) throw std::invalid_argument("trailing text");
  } catch (const std::exception&) {
    throw IoError((dir / "label.txt").string() + ": not an integer label: '" + label + "'");
  }
  if (std::filesystem::exists(dir / "joints.csv")) {
    const std::string text = read_file(dir / "joints.csv");
    std::vector<float> vals;
    std::istringstream in(text);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');
      std::size_t n = 0;
      while (std::getline(ls, cell, ',')) {
        vals.push_back(std::stof(cell));
        ++n;
      }
      if (n != 12) throw IoError((dir / "joints.csv").string() + ": row " + std::to_string(rows) + " needs 12 coordinates");
      ++rows;
    }
    if (rows > 0) s.joints = Tensor<float>({rows, 12}, std::move(vals));
  }
  try {
    validate(s, 1u << 20);
  } catch (const ContractError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return s;
}

std::vector<Segment> load_segments(const std::filesystem::path& dir) {
  return parse_segments_csv(read_file(dir / "segments.csv"), (dir / "segments.csv").string());
}

std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError(root.string() + ": not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "label.txt")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

KeyValues parse_key_values(const std::string& text, const std::string& context) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw IoError(context + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

}  // namespace fgd

#include "rsfuse/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rsfuse/error.hpp"

namespace rsfuse {

namespace {

using nlohmann::json;

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw_validation("line " + std::to_string(line_no) + ": bad number '" + s +
                     "'");
  }
}

std::int64_t parse_int64(const std::string& s, int line_no) {
  std::int64_t v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw_validation("line " + std::to_string(line_no) + ": bad integer '" + s +
                     "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool is_comment_or_blank(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gyro log

GyroLog parse_gyro_log(const std::string& text) {
  const auto lines = split_lines(text);
  GyroLog log;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    const std::string& line = lines[i];
    if (is_comment_or_blank(line)) continue;
    if (!header_seen) {
      if (line != "gyro_v1,rad_s")
        throw_validation("line " + std::to_string(line_no) +
                         ": missing gyro_v1,rad_s header");
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 4)
      throw_validation("line " + std::to_string(line_no) +
                       ": expected timestamp_ns,wx,wy,wz");
    GyroSample s;
    s.timestamp_ns = parse_int64(fields[0], line_no);
    s.omega = Vec3(parse_double(fields[1], line_no),
                   parse_double(fields[2], line_no),
                   parse_double(fields[3], line_no));
    if (s.timestamp_ns < 0)
      throw_validation("line " + std::to_string(line_no) +
                       ": negative timestamp");
    if (!log.samples.empty() &&
        s.timestamp_ns <= log.samples.back().timestamp_ns)
      throw_validation("line " + std::to_string(line_no) +
                       ": timestamps not strictly increasing");
    log.samples.push_back(s);
  }
  if (!header_seen) throw_validation("gyro log: missing gyro_v1,rad_s header");
  return log;
}

std::string write_gyro_log(const GyroLog& log) {
  std::string out = "gyro_v1,rad_s\n";
  for (const auto& s : log.samples) {
    out += std::to_string(s.timestamp_ns);
    for (int i = 0; i < 3; ++i) out += "," + format_double(s.omega[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame index

FrameIndex parse_frame_index(const std::string& text) {
  const auto lines = split_lines(text);
  FrameIndex index;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    const std::string& line = lines[i];
    if (is_comment_or_blank(line)) continue;
    if (!header_seen) {
      if (line != "frames_v1")
        throw_validation("line " + std::to_string(line_no) +
                         ": missing frames_v1 header");
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 3)
      throw_validation("line " + std::to_string(line_no) +
                       ": expected id,timestamp_ns,path");
    FrameEntry e;
    e.id = static_cast<int>(parse_int64(fields[0], line_no));
    e.timestamp_ns = parse_int64(fields[1], line_no);
    e.path = fields[2];
    if (!index.frames.empty() &&
        e.timestamp_ns <= index.frames.back().timestamp_ns)
      throw_validation("line " + std::to_string(line_no) +
                       ": frame timestamps not strictly increasing");
    index.frames.push_back(e);
  }
  if (!header_seen) throw_validation("frame index: missing frames_v1 header");
  return index;
}

std::string write_frame_index(const FrameIndex& index) {
  std::string out = "frames_v1\n";
  for (const auto& e : index.frames)
    out += std::to_string(e.id) + "," + std::to_string(e.timestamp_ns) + "," +
           e.path + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Flow files

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr double kInvalidThreshold = 1e9;
constexpr float kInvalidSentinel = 1e10f;

template <typename T>
T read_le(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& bytes, T v) {
  const std::size_t off = bytes.size();
  bytes.resize(off + sizeof(T));
  std::memcpy(bytes.data() + off, &v, sizeof(T));
}

}  // namespace

FloData read_flo(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw_validation("flo: truncated header");
  const float magic = read_le<float>(bytes, 0);
  if (magic != kFloMagic) throw_validation("flo: bad magic");
  const std::int32_t w = read_le<std::int32_t>(bytes, 4);
  const std::int32_t h = read_le<std::int32_t>(bytes, 8);
  if (w <= 0 || h <= 0 || static_cast<std::int64_t>(w) * h > (1ll << 28))
    throw_validation("flo: implausible dimensions");
  const std::size_t expected =
      12 + static_cast<std::size_t>(w) * h * 2 * sizeof(float);
  if (bytes.size() != expected) throw_validation("flo: payload length mismatch");
  FloData out;
  out.flow = FlowField(w, h);
  out.valid = MaskGrid::Constant(h, w, true);
  std::size_t off = 12;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float u = read_le<float>(bytes, off);
      const float v = read_le<float>(bytes, off + 4);
      off += 8;
      if (std::abs(static_cast<double>(u)) > kInvalidThreshold ||
          std::abs(static_cast<double>(v)) > kInvalidThreshold ||
          !std::isfinite(u) || !std::isfinite(v)) {
        out.valid(y, x) = false;
        out.flow.u(y, x) = 0;
        out.flow.v(y, x) = 0;
      } else {
        out.flow.u(y, x) = u;
        out.flow.v(y, x) = v;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> write_flo(const FlowField& f, const MaskGrid* valid) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + static_cast<std::size_t>(f.width()) * f.height() * 8);
  append_le(bytes, kFloMagic);
  append_le(bytes, static_cast<std::int32_t>(f.width()));
  append_le(bytes, static_cast<std::int32_t>(f.height()));
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      if (valid && !(*valid)(y, x)) {
        append_le(bytes, kInvalidSentinel);
        append_le(bytes, kInvalidSentinel);
      } else {
        append_le(bytes, static_cast<float>(f.u(y, x)));
        append_le(bytes, static_cast<float>(f.v(y, x)));
      }
    }
  }
  return bytes;
}

// ---------------------------------------------------------------------------
// Correspondences

std::vector<Correspondence> read_correspondences(const std::string& text) {
  const auto lines = split_lines(text);
  std::vector<Correspondence> out;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    const std::string& line = lines[i];
    if (is_comment_or_blank(line)) continue;
    if (!header_seen) {
      if (line != "pts_v1")
        throw_validation("line " + std::to_string(line_no) +
                         ": missing pts_v1 header");
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 4)
      throw_validation("line " + std::to_string(line_no) +
                       ": expected xa,ya,xb,yb");
    Correspondence c;
    c.p = Vec2(parse_double(fields[0], line_no), parse_double(fields[1], line_no));
    c.q = Vec2(parse_double(fields[2], line_no), parse_double(fields[3], line_no));
    out.push_back(c);
  }
  if (!header_seen) throw_validation("correspondences: missing pts_v1 header");
  return out;
}

std::string write_correspondences(std::span<const Correspondence> pairs) {
  std::string out = "pts_v1\n";
  for (const auto& c : pairs)
    out += format_double(c.p.x()) + "," + format_double(c.p.y()) + "," +
           format_double(c.q.x()) + "," + format_double(c.q.y()) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Raster images

namespace {

struct PnmHeader {
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& bytes,
                           const char* magic) {
  if (bytes.size() < 2 || bytes[0] != static_cast<std::uint8_t>(magic[0]) ||
      bytes[1] != static_cast<std::uint8_t>(magic[1]))
    throw_validation(std::string("image: expected ") + magic + " magic");
  PnmHeader h;
  std::size_t pos = 2;
  int values[3];
  for (int i = 0; i < 3; ++i) {
    // skip whitespace and comments
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    int v = 0;
    bool any = false;
    while (pos < bytes.size() &&
           std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      if (v > 1000000) throw_validation("image: header value too large");
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw_validation("image: malformed header");
    values[i] = v;
  }
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw_validation("image: malformed header");
  ++pos;
  h.width = values[0];
  h.height = values[1];
  h.maxval = values[2];
  h.data_offset = pos;
  if (h.width <= 0 || h.height <= 0 || h.maxval != 255)
    throw_validation("image: unsupported dimensions or depth");
  if (static_cast<std::int64_t>(h.width) * h.height > (1ll << 28))
    throw_validation("image: implausible dimensions");
  return h;
}

std::uint8_t quantize(double v) {
  const double c = std::min(std::max(v, 0.0), 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Grid decode_pgm(const std::vector<std::uint8_t>& bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P5");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() != h.data_offset + n)
    throw_validation("image: payload length mismatch");
  Grid img(h.height, h.width);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      img(y, x) = bytes[h.data_offset + static_cast<std::size_t>(y) * h.width + x] / 255.0;
  return img;
}

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P6");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() != h.data_offset + n)
    throw_validation("image: payload length mismatch");
  RgbImage img{Grid(h.height, h.width), Grid(h.height, h.width),
               Grid(h.height, h.width)};
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const std::size_t off =
          h.data_offset + (static_cast<std::size_t>(y) * h.width + x) * 3;
      img.r(y, x) = bytes[off] / 255.0;
      img.g(y, x) = bytes[off + 1] / 255.0;
      img.b(y, x) = bytes[off + 2] / 255.0;
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const Grid& img) {
  const int w = static_cast<int>(img.cols()), h = static_cast<int>(img.rows());
  std::string header =
      "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) bytes.push_back(quantize(img(y, x)));
  return bytes;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const int w = img.width(), h = img.height();
  std::string header =
      "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bytes.push_back(quantize(img.r(y, x)));
      bytes.push_back(quantize(img.g(y, x)));
      bytes.push_back(quantize(img.b(y, x)));
    }
  }
  return bytes;
}

Grid luma(const RgbImage& img) {
  Grid out(img.r.rows(), img.r.cols());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int r = quantize(img.r(y, x)), g = quantize(img.g(y, x)),
                b = quantize(img.b(y, x));
      out(y, x) = std::lround(0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
    }
  }
  return out;
}

Grid load_image_gray(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    return decode_pgm(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6')
    return luma(decode_ppm(bytes));
  throw_validation("image '" + path + "': unsupported format (need P5/P6)");
}

void save_image_gray(const std::string& path, const Grid& img) {
  write_file_bytes(path, encode_pgm(img));
}

void save_image_rgb(const std::string& path, const RgbImage& img) {
  write_file_bytes(path, encode_ppm(img));
}

// ---------------------------------------------------------------------------
// Flow color wheel

namespace {

void hsv_to_rgb(double hue, double sat, double val, double& r, double& g,
                double& b) {
  const double h6 = hue * 6.0;
  const int i = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = val * (1 - sat);
  const double q = val * (1 - sat * f);
  const double t = val * (1 - sat * (1 - f));
  switch ((i + 6) % 6) {
    case 0: r = val; g = t; b = p; break;
    case 1: r = q; g = val; b = p; break;
    case 2: r = p; g = val; b = t; break;
    case 3: r = p; g = q; b = val; break;
    case 4: r = t; g = p; b = val; break;
    default: r = val; g = p; b = q; break;
  }
}

}  // namespace

RgbImage flow_to_color(const FlowField& f, std::optional<double> max_mag) {
  if (!f.u.allFinite() || !f.v.allFinite())
    throw_validation("flow_to_color: non-finite field");
  double mm = max_mag.value_or(0.0);
  if (!max_mag) {
    mm = std::sqrt((f.u.square() + f.v.square()).maxCoeff());
    if (mm <= 0) mm = 1.0;
  }
  if (!(mm > 0)) throw_validation("flow_to_color: max_mag must be positive");
  RgbImage img{Grid(f.height(), f.width()), Grid(f.height(), f.width()),
               Grid(f.height(), f.width())};
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const double u = f.u(y, x), v = f.v(y, x);
      const double mag = std::hypot(u, v);
      double hue = std::atan2(v, u) / (2.0 * M_PI);
      if (hue < 0) hue += 1.0;
      const double sat = std::min(mag / mm, 1.0);
      hsv_to_rgb(hue, sat, 1.0, img.r(y, x), img.g(y, x), img.b(y, x));
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Project configuration

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> keys,
                         const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* k : keys)
      if (key == k) known = true;
    if (!known)
      throw_validation("config: unknown key '" +
                       (path.empty() ? key : path + "." + key) + "'");
  }
}

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw_validation(std::string(what) + ": malformed JSON");
  return j;
}

double get_number(const json& obj, const char* key, const std::string& path) {
  if (!obj.at(key).is_number())
    throw_validation("config: field '" + path + "." + key + "' must be a number");
  return obj.at(key).get<double>();
}

}  // namespace

void ProjectConfig::validate() const {
  intrinsics.validate();
  rolling_shutter.validate();
  if (!is_signed_permutation(axis_remap))
    throw_validation("config: axis_remap is not a signed permutation");
  beta.validate();
  if (gamma_neg > gamma_pos || gamma_neg > 0 || gamma_pos < 0)
    throw_validation("config: gamma range must satisfy gamma- <= 0 <= gamma+");
  if (lambda < 0) throw_validation("config: lambda must be >= 0");
  if (pyramid_levels < 2) throw_validation("config: pyramid_levels must be >= 2");
  if (residual_flow.window < 3 || residual_flow.window % 2 == 0)
    throw_validation("config: residual_flow.window must be odd and >= 3");
  if (residual_flow.iterations < 1 || residual_flow.levels < 1)
    throw_validation("config: residual_flow iterations/levels must be >= 1");
  if (!(residual_flow.cond_cutoff > 1))
    throw_validation("config: residual_flow.cond_cutoff must be > 1");
}

ProjectConfig read_config(const std::string& text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw_validation("config: top level must be an object");
  reject_unknown_keys(j,
                      {"intrinsics", "rolling_shutter", "axis_remap",
                       "time_offset_ns", "beta", "gamma", "lambda",
                       "pyramid_levels", "residual_flow"},
                      "");
  ProjectConfig cfg;
  if (!j.contains("intrinsics"))
    throw_validation("config: missing required field 'intrinsics'");
  {
    const json& k = j.at("intrinsics");
    if (!k.is_object())
      throw_validation("config: field 'intrinsics' must be an object");
    reject_unknown_keys(k, {"fx", "fy", "cx", "cy", "width", "height"},
                        "intrinsics");
    for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"})
      if (!k.contains(key))
        throw_validation(std::string("config: missing field 'intrinsics.") +
                         key + "'");
    cfg.intrinsics.fx = get_number(k, "fx", "intrinsics");
    cfg.intrinsics.fy = get_number(k, "fy", "intrinsics");
    cfg.intrinsics.cx = get_number(k, "cx", "intrinsics");
    cfg.intrinsics.cy = get_number(k, "cy", "intrinsics");
    cfg.intrinsics.width = static_cast<int>(get_number(k, "width", "intrinsics"));
    cfg.intrinsics.height =
        static_cast<int>(get_number(k, "height", "intrinsics"));
  }
  if (j.contains("rolling_shutter")) {
    const json& r = j.at("rolling_shutter");
    if (!r.is_object())
      throw_validation("config: field 'rolling_shutter' must be an object");
    reject_unknown_keys(r, {"patch_count", "readout_fraction", "anchor"},
                        "rolling_shutter");
    if (r.contains("patch_count"))
      cfg.rolling_shutter.patch_count =
          static_cast<int>(get_number(r, "patch_count", "rolling_shutter"));
    if (r.contains("readout_fraction"))
      cfg.rolling_shutter.readout_fraction =
          get_number(r, "readout_fraction", "rolling_shutter");
    if (r.contains("anchor")) {
      const std::string a = r.at("anchor").is_string()
                                ? r.at("anchor").get<std::string>()
                                : "";
      if (a == "start_of_exposure")
        cfg.rolling_shutter.anchor = RollingShutterModel::Anchor::StartOfExposure;
      else if (a == "center")
        cfg.rolling_shutter.anchor = RollingShutterModel::Anchor::Center;
      else
        throw_validation(
            "config: rolling_shutter.anchor must be 'start_of_exposure' or "
            "'center'");
    }
  }
  if (j.contains("axis_remap")) {
    const json& a = j.at("axis_remap");
    if (!a.is_array() || a.size() != 3)
      throw_validation("config: axis_remap must be a 3x3 array");
    for (int i = 0; i < 3; ++i) {
      if (!a[i].is_array() || a[i].size() != 3)
        throw_validation("config: axis_remap must be a 3x3 array");
      for (int c = 0; c < 3; ++c) {
        if (!a[i][c].is_number())
          throw_validation("config: axis_remap entries must be numbers");
        cfg.axis_remap(i, c) = a[i][c].get<double>();
      }
    }
  }
  if (j.contains("time_offset_ns")) {
    if (!j.at("time_offset_ns").is_number_integer())
      throw_validation("config: time_offset_ns must be an integer");
    cfg.time_offset_ns = j.at("time_offset_ns").get<std::int64_t>();
  }
  if (j.contains("beta")) {
    const json& b = j.at("beta");
    if (!b.is_array() || b.size() != 5)
      throw_validation("config: beta must be an array of 5 numbers");
    for (int i = 0; i < 5; ++i) {
      if (!b[i].is_number())
        throw_validation("config: beta entries must be numbers");
      cfg.beta.beta[i] = b[i].get<double>();
    }
  }
  if (j.contains("gamma")) {
    const json& g = j.at("gamma");
    if (!g.is_array() || g.size() != 2 || !g[0].is_number() ||
        !g[1].is_number())
      throw_validation("config: gamma must be an array of 2 numbers");
    cfg.gamma_neg = g[0].get<double>();
    cfg.gamma_pos = g[1].get<double>();
  }
  if (j.contains("lambda")) cfg.lambda = get_number(j, "lambda", "");
  if (j.contains("pyramid_levels"))
    cfg.pyramid_levels = static_cast<int>(get_number(j, "pyramid_levels", ""));
  if (j.contains("residual_flow")) {
    const json& r = j.at("residual_flow");
    if (!r.is_object())
      throw_validation("config: field 'residual_flow' must be an object");
    reject_unknown_keys(r, {"window", "iterations", "levels", "cond_cutoff"},
                        "residual_flow");
    if (r.contains("window"))
      cfg.residual_flow.window =
          static_cast<int>(get_number(r, "window", "residual_flow"));
    if (r.contains("iterations"))
      cfg.residual_flow.iterations =
          static_cast<int>(get_number(r, "iterations", "residual_flow"));
    if (r.contains("levels"))
      cfg.residual_flow.levels =
          static_cast<int>(get_number(r, "levels", "residual_flow"));
    if (r.contains("cond_cutoff"))
      cfg.residual_flow.cond_cutoff = get_number(r, "cond_cutoff", "residual_flow");
  }
  cfg.validate();
  return cfg;
}

namespace {

json config_to_json(const ProjectConfig& cfg) {
  json j;
  j["intrinsics"] = {{"fx", cfg.intrinsics.fx},   {"fy", cfg.intrinsics.fy},
                     {"cx", cfg.intrinsics.cx},   {"cy", cfg.intrinsics.cy},
                     {"width", cfg.intrinsics.width},
                     {"height", cfg.intrinsics.height}};
  j["rolling_shutter"] = {
      {"patch_count", cfg.rolling_shutter.patch_count},
      {"readout_fraction", cfg.rolling_shutter.readout_fraction},
      {"anchor", cfg.rolling_shutter.anchor ==
                         RollingShutterModel::Anchor::StartOfExposure
                     ? "start_of_exposure"
                     : "center"}};
  json remap = json::array();
  for (int i = 0; i < 3; ++i) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(cfg.axis_remap(i, c));
    remap.push_back(row);
  }
  j["axis_remap"] = remap;
  j["time_offset_ns"] = cfg.time_offset_ns;
  j["beta"] = cfg.beta.beta;
  j["gamma"] = {cfg.gamma_neg, cfg.gamma_pos};
  j["lambda"] = cfg.lambda;
  j["pyramid_levels"] = cfg.pyramid_levels;
  j["residual_flow"] = {{"window", cfg.residual_flow.window},
                        {"iterations", cfg.residual_flow.iterations},
                        {"levels", cfg.residual_flow.levels},
                        {"cond_cutoff", cfg.residual_flow.cond_cutoff}};
  return j;
}

}  // namespace

std::string write_config(const ProjectConfig& cfg) {
  cfg.validate();
  return config_to_json(cfg).dump(2) + "\n";
}

std::string config_fingerprint(const ProjectConfig& cfg) {
  json j;
  j["beta"] = cfg.beta.beta;
  j["gamma"] = {cfg.gamma_neg, cfg.gamma_pos};
  j["lambda"] = cfg.lambda;
  j["patch_count"] = cfg.rolling_shutter.patch_count;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Homography array file

std::string write_homography_array(const HomographyArray& arr) {
  json j;
  j["format"] = "homography_array_v1";
  j["width"] = arr.width;
  j["height"] = arr.height;
  json patches = json::array();
  for (const auto& h : arr.h) {
    json m = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.push_back(h(r, c));
    patches.push_back(m);
  }
  j["patches"] = patches;
  return j.dump(2) + "\n";
}

HomographyArray read_homography_array(const std::string& text) {
  const json j = parse_json(text, "homography array");
  if (!j.is_object() || !j.contains("format") ||
      j.at("format") != "homography_array_v1")
    throw_validation("homography array: missing homography_array_v1 format tag");
  HomographyArray arr;
  if (!j.contains("width") || !j.contains("height") || !j.contains("patches") ||
      !j.at("width").is_number_integer() || !j.at("height").is_number_integer() ||
      !j.at("patches").is_array())
    throw_validation("homography array: malformed fields");
  arr.width = j.at("width").get<int>();
  arr.height = j.at("height").get<int>();
  if (arr.width <= 0 || arr.height <= 0 || j.at("patches").empty())
    throw_validation("homography array: invalid dimensions or empty patches");
  for (const auto& m : j.at("patches")) {
    if (!m.is_array() || m.size() != 9)
      throw_validation("homography array: each patch needs 9 entries");
    Homography h;
    for (int i = 0; i < 9; ++i) {
      if (!m[i].is_number())
        throw_validation("homography array: entries must be numbers");
      h(i / 3, i % 3) = m[i].get<double>();
    }
    arr.h.push_back(normalize_homography(h));
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Evaluation reports

std::string write_report_text(const EvalReport& report) {
  std::string out;
  out += "aepe=" + format_double(report.aepe) + "\n";
  for (const auto& [tau, pct] : report.pck)
    out += "pck_" + format_double(tau) + "=" + format_double(pct) + "\n";
  if (report.pme >= 0) out += "pme=" + format_double(report.pme) + "\n";
  out += "count=" + std::to_string(report.count) + "\n";
  if (report.pme_excluded > 0)
    out += "pme_excluded=" + std::to_string(report.pme_excluded) + "\n";
  out += "config=" + report.config_fingerprint + "\n";
  return out;
}

std::string write_report_json(const EvalReport& report) {
  json j;
  j["aepe"] = report.aepe;
  json pck = json::object();
  for (const auto& [tau, pct] : report.pck) pck[format_double(tau)] = pct;
  j["pck"] = pck;
  if (report.pme >= 0) j["pme"] = report.pme;
  j["count"] = report.count;
  j["pme_excluded"] = report.pme_excluded;
  j["config"] = report.config_fingerprint;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// File helpers

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_validation("cannot open file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::string read_file_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::string& path,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_validation("cannot write file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_validation("write failed for '" + path + "'");
}

void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Grid pad_to_multiple(const Grid& img, int multiple) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int ph = (h % multiple == 0) ? h : (h / multiple + 1) * multiple;
  const int pw = (w % multiple == 0) ? w : (w / multiple + 1) * multiple;
  if (ph == h && pw == w) return img;
  Grid out(ph, pw);
  for (int y = 0; y < ph; ++y) {
    const int sy = y < h ? y : 2 * h - 2 - y;  // symmetric reflection
    for (int x = 0; x < pw; ++x) {
      const int sx = x < w ? x : 2 * w - 2 - x;
      out(y, x) = img(std::max(sy, 0), std::max(sx, 0));
    }
  }
  return out;
}

FlowField crop_field(const FlowField& f, int width, int height) {
  if (width > f.width() || height > f.height())
    throw_validation("crop_field: crop larger than field");
  FlowField out(width, height);
  out.u = f.u.topLeftCorner(height, width);
  out.v = f.v.topLeftCorner(height, width);
  return out;
}

}  // namespace rsfuse

#pragma once

#include <png.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/param_store.hpp"

namespace vbfs {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, const char* what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw data_error(std::string(what) + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw data_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
inline void atomic_write(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw data_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp);
    throw data_error("cannot rename into " + p.string() + ": " + ec.message());
  }
}

/// Exclusive `.lock` file in an output directory, removed on destruction.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw data_error("output directory is locked by another writer: " + path_.string());
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

// ---- signal CSV -------------------------------------------------------------

inline constexpr const char* kSignalHeader = "t,x,y,z,u,v,w,theta,s,fx,fy,fz,tx,ty,tz";

inline std::string signals_to_csv(const std::vector<ToolSample>& tool, const std::vector<ForceVector>& force) {
  if (tool.size() != force.size()) throw data_error("signals_to_csv: tool/force length mismatch");
  std::string out = std::string(kSignalHeader) + "\n";
  for (std::size_t i = 0; i < tool.size(); ++i) {
    const auto& s = tool[i];
    out += std::to_string(s.t);
    for (double v : s.position) out += "," + fmt_double(v);
    for (double v : s.orientation_axis) out += "," + fmt_double(v);
    out += "," + fmt_double(s.orientation_angle) + "," + std::to_string(s.grasper);
    for (double v : force[i].components) out += "," + fmt_double(v);
    out += "\n";
  }
  return out;
}

inline void csv_to_signals(const std::string& text, std::vector<ToolSample>& tool, std::vector<ForceVector>& force) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error("signal CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSignalHeader) throw data_error("signal CSV has an unexpected header");
  tool.clear();
  force.clear();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 15) throw data_error("signal CSV line " + std::to_string(lineno) + ": expected 15 fields");
    ToolSample s;
    s.t = static_cast<std::int64_t>(parse_double(f[0], "t"));
    for (int k = 0; k < 3; ++k) s.position[k] = parse_double(f[1 + k], "position");
    for (int k = 0; k < 3; ++k) s.orientation_axis[k] = parse_double(f[4 + k], "orientation");
    s.orientation_angle = parse_double(f[7], "theta");
    s.grasper = static_cast<int>(parse_double(f[8], "s"));
    if (!is_valid_tool_sample(s)) throw data_error("signal CSV line " + std::to_string(lineno) + ": invalid tool sample");
    ForceVector fv;
    for (int k = 0; k < 6; ++k) fv.components[k] = parse_double(f[9 + k], "force");
    tool.push_back(s);
    force.push_back(fv);
  }
}

// ---- PNG ----------------------------------------------------------------------

inline std::vector<unsigned char> frame_to_bytes(const Frame& f) {
  std::vector<unsigned char> b(f.pixels.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    b[i] = static_cast<unsigned char>(std::lround(std::clamp(f.pixels[i], 0.0, 1.0) * 255.0));
  return b;
}

inline void write_png(const fs::path& p, const Frame& f) {
  if (f.channels != 3 && f.channels != 1) throw usage_error("write_png: need 1 or 3 channels");
  const auto bytes = frame_to_bytes(f);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(f.width);
  img.height = static_cast<png_uint_32>(f.height);
  img.format = f.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw data_error("png encode failed: " + std::string(img.message));
  std::string buf(size, '\0');
  if (!png_image_write_to_memory(&img, buf.data(), &size, 0, bytes.data(), 0, nullptr))
    throw data_error("png encode failed: " + std::string(img.message));
  buf.resize(size);
  atomic_write(p, buf);
}

inline Frame read_png(const fs::path& p) {
  const std::string data = read_text(p);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, data.data(), data.size()))
    throw data_error("cannot decode " + p.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr))
    throw data_error("cannot decode " + p.string() + ": " + img.message);
  Frame f;
  f.height = static_cast<int>(img.height);
  f.width = static_cast<int>(img.width);
  f.channels = 3;
  f.kind = FrameKind::raw_rgb;
  f.pixels.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) f.pixels[i] = bytes[i] / 255.0;
  return f;
}

// ---- sequence directories ---------------------------------------------------

inline std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", i);
  return buf;
}

struct SequenceMeta {
  std::string id;
  Task task = Task::pushing;
  double rate = 50.0;
  int width = 0;
  int height = 0;
  std::size_t length = 0;
};

inline void write_meta(const fs::path& dir, const SequenceMeta& m) {
  nlohmann::ordered_json j;
  j["id"] = m.id;
  j["task"] = task_name(m.task);
  j["rate"] = m.rate;
  j["width"] = m.width;
  j["height"] = m.height;
  j["length"] = m.length;
  atomic_write(dir / "meta.json", j.dump(2) + "\n");
}

inline SequenceMeta read_meta(const fs::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(dir / "meta.json"));
    SequenceMeta m;
    m.id = j.at("id").get<std::string>();
    m.task = parse_task(j.at("task").get<std::string>());
    m.rate = j.at("rate").get<double>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.length = j.value("length", std::size_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad meta.json in " + dir.string() + ": " + e.what());
  }
}

/// Frames as PNG files, signals.csv and meta.json under `dir`.
inline void write_sequence(const fs::path& dir, const SequenceRecord& rec) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < rec.frames.size(); ++i) write_png(dir / frame_name(i), rec.frames[i]);
  atomic_write(dir / "signals.csv", signals_to_csv(rec.tool, rec.force));
  SequenceMeta m{rec.id, rec.task, rec.rate, rec.frames.empty() ? 0 : rec.frames[0].width,
                 rec.frames.empty() ? 0 : rec.frames[0].height, rec.tool.size()};
  write_meta(dir, m);
}

inline SequenceRecord read_sequence(const fs::path& dir, bool with_frames = true) {
  const auto m = read_meta(dir);
  SequenceRecord rec;
  rec.id = m.id;
  rec.task = m.task;
  rec.rate = m.rate;
  csv_to_signals(read_text(dir / "signals.csv"), rec.tool, rec.force);
  if (with_frames) {
    for (std::size_t i = 0; i < rec.tool.size(); ++i) {
      const auto p = dir / frame_name(i);
      if (!fs::exists(p)) throw data_error("missing frame " + p.string());
      rec.frames.push_back(read_png(p));
      if (rec.frames.back().width != m.width || rec.frames.back().height != m.height)
        throw data_error("frame size disagrees with meta.json: " + p.string());
    }
  }
  return rec;
}

// ---- binary helpers ------------------------------------------------------------

template <class T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string what) : d_(data), what_(std::move(what)) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > d_.size()) throw data_error(what_ + ": truncated file");
    T v;
    std::memcpy(&v, d_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos_ + n > d_.size()) throw data_error(what_ + ": truncated file");
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  const std::string& d_;
  std::string what_;
  std::size_t pos_ = 0;
};

// ---- preprocessed tensors -------------------------------------------------------

// Header: "VBFS", version u16, H u16, W u16, C u16, count u32 (16 bytes),
// then count * H * W * C little-endian f32 values, frame-major, HWC within a frame.
struct TensorFile {
  int height = 0, width = 0, channels = 0;
  std::vector<std::vector<float>> frames;
  std::vector<std::int64_t> source_t;  // instant of each frame (index sidecar)
};

inline constexpr std::uint16_t kTensorVersion = 1;

inline void write_tensor(const fs::path& p, const TensorFile& tf) {
  const std::size_t per = static_cast<std::size_t>(tf.height) * tf.width * tf.channels;
  std::string out;
  out.reserve(16 + tf.frames.size() * per * 4);
  out.append("VBFS", 4);
  put<std::uint16_t>(out, kTensorVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(tf.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(tf.width));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(tf.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tf.frames.size()));
  for (const auto& f : tf.frames) {
    if (f.size() != per) throw data_error("write_tensor: frame size mismatch");
    out.append(reinterpret_cast<const char*>(f.data()), per * sizeof(float));
  }
  atomic_write(p, out);
  std::string idx = "frame_index,source_t\n";
  for (std::size_t i = 0; i < tf.source_t.size(); ++i) idx += std::to_string(i) + "," + std::to_string(tf.source_t[i]) + "\n";
  fs::path ip = p;
  ip.replace_extension(".index.csv");
  atomic_write(ip, idx);
}

inline TensorFile read_tensor(const fs::path& p) {
  const std::string data = read_text(p);
  Reader r(data, p.string());
  if (r.bytes(4) != "VBFS") throw data_error(p.string() + ": not a tensor file");
  if (r.get<std::uint16_t>() != kTensorVersion) throw data_error(p.string() + ": unsupported tensor version");
  TensorFile tf;
  tf.height = r.get<std::uint16_t>();
  tf.width = r.get<std::uint16_t>();
  tf.channels = r.get<std::uint16_t>();
  const std::uint32_t count = r.get<std::uint32_t>();
  const std::size_t per = static_cast<std::size_t>(tf.height) * tf.width * tf.channels;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string b = r.bytes(per * sizeof(float));
    std::vector<float> f(per);
    std::memcpy(f.data(), b.data(), b.size());
    tf.frames.push_back(std::move(f));
  }
  if (!r.done()) throw data_error(p.string() + ": trailing bytes");
  fs::path ip = p;
  ip.replace_extension(".index.csv");
  std::istringstream in(read_text(ip));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw data_error(ip.string() + ": bad index row");
    tf.source_t.push_back(static_cast<std::int64_t>(parse_double(f[1], "source_t")));
  }
  if (tf.source_t.size() != tf.frames.size()) throw data_error(ip.string() + ": index length mismatch");
  return tf;
}

// ---- parameter checkpoints ------------------------------------------------------

// "VBFP", version u16, record count u32, then per record: name length u16,
// name, rank u8, dims u32 each, f64 payload. Scalar metadata is stored as
// rank-0 records whose names start with "meta.".
inline constexpr std::uint16_t kCheckpointVersion = 1;

using CheckpointMeta = std::map<std::string, double>;

inline std::string checkpoint_bytes(const ParamStore& ps, const CheckpointMeta& meta) {
  std::string out("VBFP", 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size() + ps.count()));
  auto record = [&](const std::string& name, const std::vector<std::size_t>& shape, const double* v, std::size_t n) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(v), n * sizeof(double));
  };
  for (const auto& [k, v] : meta) record("meta." + k, {}, &v, 1);
  for (const auto& p : ps) record(p.name, p.shape, p.value.data(), p.size());
  return out;
}

inline void write_checkpoint(const fs::path& p, const ParamStore& ps, const CheckpointMeta& meta) {
  atomic_write(p, checkpoint_bytes(ps, meta));
}

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<Param> params;
};

inline Checkpoint read_checkpoint(const fs::path& p) {
  if (!fs::exists(p)) throw data_error("missing checkpoint " + p.string());
  const std::string data = read_text(p);
  Reader r(data, p.string());
  if (r.bytes(4) != "VBFP") throw data_error(p.string() + ": not a checkpoint");
  if (r.get<std::uint16_t>() != kCheckpointVersion) throw data_error(p.string() + ": unsupported checkpoint version");
  const std::uint32_t n = r.get<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < n; ++i) {
    Param prm;
    prm.name = r.bytes(r.get<std::uint16_t>());
    const int rank = r.get<std::uint8_t>();
    for (int k = 0; k < rank; ++k) prm.shape.push_back(r.get<std::uint32_t>());
    const std::size_t cnt = shape_size(prm.shape);
    const std::string b = r.bytes(cnt * sizeof(double));
    prm.value.resize(cnt);
    std::memcpy(prm.value.data(), b.data(), b.size());
    if (prm.name.rfind("meta.", 0) == 0 && rank == 0)
      ck.meta[prm.name.substr(5)] = prm.value[0];
    else
      ck.params.push_back(std::move(prm));
  }
  if (!r.done()) throw data_error(p.string() + ": trailing bytes");
  return ck;
}

/// Copies checkpoint values into a store built with the same architecture.
inline void load_params(ParamStore& ps, const Checkpoint& ck) {
  if (ck.params.size() != ps.count()) throw data_error("checkpoint does not match the model (parameter count)");
  for (const auto& src : ck.params) {
    auto& dst = ps.at(src.name);
    if (dst.shape != src.shape) throw data_error("checkpoint shape mismatch for " + src.name);
    dst.value = src.value;
  }
}

inline double meta_value(const CheckpointMeta& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw data_error("checkpoint lacks meta." + key);
  return it->second;
}

}  // namespace vbfs

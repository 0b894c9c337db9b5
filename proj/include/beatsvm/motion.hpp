#pragma once

// Block-matching motion estimation: frame sequence -> mean motion-speed trace.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/parallel.hpp"

namespace beatsvm {

struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> pixels;  // row-major

  Frame() = default;
  Frame(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}

  std::uint16_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::uint16_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
};

struct FrameSequence {
  std::vector<Frame> frames;
  double frame_rate_hz = 0.0;
  double pixel_size_um = 0.0;

  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }

  void validate() const {
    if (frames.empty()) throw Error(ErrorKind::empty, "frame sequence has no frames");
    if (!(frame_rate_hz > 0.0)) throw Error(ErrorKind::argument, "frame rate must be positive");
    if (!(pixel_size_um > 0.0)) throw Error(ErrorKind::argument, "pixel size must be positive");
    for (const auto& f : frames)
      if (f.width != width() || f.height != height())
        throw Error(ErrorKind::shape, "frames differ in size (" + std::to_string(f.width) + "x" +
                                          std::to_string(f.height) + " vs " + std::to_string(width()) + "x" +
                                          std::to_string(height()) + ")");
  }
};

enum class SearchMetric { sum_of_absolute_differences };

struct BlockMatchConfig {
  int block_width_px = 16;
  int frame_offset_frames = 1;
  int max_shift_px = 7;
  SearchMetric metric = SearchMetric::sum_of_absolute_differences;

  void validate_for(std::size_t width, std::size_t height) const {
    if (block_width_px < 2) throw Error(ErrorKind::configuration, "block width must be at least 2 px");
    if (max_shift_px < 1) throw Error(ErrorKind::configuration, "maximum shift must be at least 1 px");
    if (frame_offset_frames < 1) throw Error(ErrorKind::configuration, "frame offset must be at least 1 frame");
    if (static_cast<std::size_t>(block_width_px) > width || static_cast<std::size_t>(block_width_px) > height)
      throw Error(ErrorKind::configuration, "block of " + std::to_string(block_width_px) + " px exceeds the " +
                                                std::to_string(width) + "x" + std::to_string(height) + " frame");
  }
};

struct MotionTrace {
  std::vector<double> t;      // s
  std::vector<double> speed;  // um/s
  std::size_t n_blocks = 0;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
};

struct BlockVector {
  int x = 0;  // block origin in the reference frame
  int y = 0;
  int dx = 0;
  int dy = 0;
  std::uint64_t cost = 0;

  double magnitude() const { return std::sqrt(static_cast<double>(dx * dx + dy * dy)); }
};

// ---------------------------------------------------------------------------
// Frame I/O

namespace detail {

inline std::size_t pgm_skip_space(const std::string& d, std::size_t pos) {
  while (pos < d.size()) {
    if (d[pos] == '#') {
      while (pos < d.size() && d[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(d[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

inline std::size_t pgm_read_uint(const std::string& d, std::size_t& pos, const std::string& name) {
  pos = pgm_skip_space(d, pos);
  std::size_t v = 0;
  const std::size_t start = pos;
  while (pos < d.size() && std::isdigit(static_cast<unsigned char>(d[pos]))) v = v * 10 + (d[pos++] - '0');
  if (pos == start) throw Error(ErrorKind::input, "malformed PGM header in " + name);
  return v;
}

}  // namespace detail

inline Frame read_pgm(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  const std::string name = path.string();
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw Error(ErrorKind::input, name + " is not a P5 PGM");
  std::size_t pos = 2;
  const std::size_t w = detail::pgm_read_uint(data, pos, name);
  const std::size_t h = detail::pgm_read_uint(data, pos, name);
  const std::size_t maxval = detail::pgm_read_uint(data, pos, name);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw Error(ErrorKind::input, "bad PGM header in " + name);
  ++pos;  // single whitespace before the raster
  const std::size_t bytes_per_px = maxval < 256 ? 1 : 2;
  if (data.size() < pos + w * h * bytes_per_px) throw Error(ErrorKind::input, "truncated PGM raster in " + name);
  Frame f(w, h);
  const auto* raw = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (std::size_t i = 0; i < w * h; ++i) {
    f.pixels[i] = bytes_per_px == 1 ? raw[i] : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return f;
}

inline void write_pgm(const std::filesystem::path& path, const Frame& f, unsigned maxval = 255) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n" + std::to_string(maxval) + "\n";
  for (std::uint16_t px : f.pixels) {
    if (maxval < 256) {
      out.push_back(static_cast<char>(px & 0xff));
    } else {
      out.push_back(static_cast<char>(px >> 8));
      out.push_back(static_cast<char>(px & 0xff));
    }
  }
  io::write_file_atomic(path, out);
}

// Multi-frame raw container: 8-bit frames back to back, described by a JSON sidecar
// at "<path>.json" with keys width, height, frames (and optionally bit_depth = 8,
// byte_order = "little").
inline std::vector<Frame> read_raw_container(const std::filesystem::path& path) {
  auto sidecar_path = path;
  sidecar_path += ".json";
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(io::read_file(sidecar_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::input, "bad raw sidecar " + sidecar_path.string() + ": " + e.what());
  }
  const auto w = hdr.value("width", std::size_t{0});
  const auto h = hdr.value("height", std::size_t{0});
  const auto n = hdr.value("frames", std::size_t{0});
  if (hdr.value("bit_depth", 8) != 8) throw Error(ErrorKind::input, "raw container must be 8-bit");
  if (hdr.value("byte_order", std::string("little")) != "little")
    throw Error(ErrorKind::input, "raw container must be little-endian");
  if (w == 0 || h == 0) throw Error(ErrorKind::input, "raw sidecar lacks width/height");
  const std::string data = io::read_file(path);
  if (data.size() < w * h * n) throw Error(ErrorKind::input, "raw container shorter than its sidecar declares");
  std::vector<Frame> frames;
  frames.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Frame f(w, h);
    for (std::size_t i = 0; i < w * h; ++i) f.pixels[i] = static_cast<unsigned char>(data[k * w * h + i]);
    frames.push_back(std::move(f));
  }
  return frames;
}

inline FrameSequence load_frames(const std::filesystem::path& path, double frame_rate_hz, double pixel_size_um) {
  FrameSequence seq;
  seq.frame_rate_hz = frame_rate_hz;
  seq.pixel_size_um = pixel_size_um;
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) seq.frames.push_back(read_pgm(f));
  } else if (std::filesystem::is_regular_file(path, ec)) {
    if (path.extension() == ".pgm")
      seq.frames.push_back(read_pgm(path));
    else
      seq.frames = read_raw_container(path);
  } else {
    throw Error(ErrorKind::input, "no such file or directory: " + path.string());
  }
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------
// Configuration

inline BlockMatchConfig config_from_physical(double block_width_um, double frame_offset_ms, double max_shift_um,
                                             const FrameSequence& seq) {
  if (!(block_width_um > 0.0 && frame_offset_ms > 0.0 && max_shift_um > 0.0))
    throw Error(ErrorKind::argument, "physical block-matching parameters must be positive");
  if (!(seq.pixel_size_um > 0.0 && seq.frame_rate_hz > 0.0))
    throw Error(ErrorKind::argument, "sequence lacks frame rate or pixel size");
  BlockMatchConfig cfg;
  cfg.block_width_px = static_cast<int>(std::lround(block_width_um / seq.pixel_size_um));
  cfg.frame_offset_frames = std::max(1, static_cast<int>(std::lround(frame_offset_ms * seq.frame_rate_hz / 1000.0)));
  // Small epsilon so exact multiples (e.g. 4.55/0.65 = 7) are not lost to rounding.
  cfg.max_shift_px = std::max(1, static_cast<int>(std::floor(max_shift_um / seq.pixel_size_um + 1e-9)));
  cfg.validate_for(seq.width(), seq.height());
  return cfg;
}

// ---------------------------------------------------------------------------
// Matching

// Exhaustive SAD search for the block at (bx, by) of `ref` inside `target`. Candidates
// whose block leaves the frame are skipped. Ties: smaller |v|, then smaller dy, then dx.
inline BlockVector match_block(const Frame& ref, const Frame& target, int bx, int by, const BlockMatchConfig& cfg) {
  const int bw = cfg.block_width_px;
  const int w = static_cast<int>(ref.width);
  const int h = static_cast<int>(ref.height);
  BlockVector best{bx, by, 0, 0, std::numeric_limits<std::uint64_t>::max()};
  int best_mag2 = std::numeric_limits<int>::max();
  for (int dy = -cfg.max_shift_px; dy <= cfg.max_shift_px; ++dy) {
    const int ty = by + dy;
    if (ty < 0 || ty + bw > h) continue;
    for (int dx = -cfg.max_shift_px; dx <= cfg.max_shift_px; ++dx) {
      const int tx = bx + dx;
      if (tx < 0 || tx + bw > w) continue;
      std::uint64_t cost = 0;
      for (int y = 0; y < bw && cost <= best.cost; ++y) {
        const std::uint16_t* a = &ref.pixels[static_cast<std::size_t>(by + y) * ref.width + bx];
        const std::uint16_t* b = &target.pixels[static_cast<std::size_t>(ty + y) * target.width + tx];
        for (int x = 0; x < bw; ++x) cost += static_cast<std::uint64_t>(std::abs(int(a[x]) - int(b[x])));
      }
      const int mag2 = dx * dx + dy * dy;
      const bool better = cost < best.cost || (cost == best.cost && (mag2 < best_mag2 ||
                                                                     (mag2 == best_mag2 && (dy < best.dy ||
                                                                                            (dy == best.dy && dx < best.dx)))));
      if (better) {
        best.dx = dx;
        best.dy = dy;
        best.cost = cost;
        best_mag2 = mag2;
      }
    }
  }
  return best;
}

// All full blocks of `ref` matched against `target`; partial edge blocks are dropped.
inline std::vector<BlockVector> match_blocks(const Frame& ref, const Frame& target, const BlockMatchConfig& cfg,
                                             unsigned threads = 1) {
  const int bw = cfg.block_width_px;
  const int nx = static_cast<int>(ref.width) / bw;
  const int ny = static_cast<int>(ref.height) / bw;
  std::vector<BlockVector> out(static_cast<std::size_t>(nx * ny));
  parallel_for(out.size(), threads, [&](std::size_t k) {
    const int bx = static_cast<int>(k % nx) * bw;
    const int by = static_cast<int>(k / nx) * bw;
    out[k] = match_block(ref, target, bx, by, cfg);
  });
  return out;
}

inline MotionTrace estimate_motion(const FrameSequence& seq, const BlockMatchConfig& cfg, unsigned threads = 1) {
  seq.validate();
  cfg.validate_for(seq.width(), seq.height());
  const auto offset = static_cast<std::size_t>(cfg.frame_offset_frames);
  if (seq.frames.size() < offset + 1)
    throw Error(ErrorKind::insufficient_data, "need at least " + std::to_string(offset + 1) + " frames, have " +
                                                  std::to_string(seq.frames.size()));
  MotionTrace trace;
  const std::size_t pairs = seq.frames.size() - offset;
  trace.t.resize(pairs);
  trace.speed.resize(pairs);
  const double scale = seq.pixel_size_um * seq.frame_rate_hz / static_cast<double>(offset);
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto vectors = match_blocks(seq.frames[i], seq.frames[i + offset], cfg, threads);
    double sum = 0.0;
    for (const auto& v : vectors) sum += v.magnitude();
    trace.n_blocks = vectors.size();
    trace.t[i] = static_cast<double>(i) / seq.frame_rate_hz;
    trace.speed[i] = vectors.empty() ? 0.0 : sum / static_cast<double>(vectors.size()) * scale;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Trace CSV: time_s,speed_um_s

inline std::string trace_to_csv(const MotionTrace& trace) {
  std::string out = "time_s,speed_um_s\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out += io::format_double(trace.t[i], 12) + "," + io::format_double(trace.speed[i], 12) + "\n";
  return out;
}

inline MotionTrace trace_from_csv(const std::string& text) {
  const auto table = io::parse_csv(text);
  const auto ct = table.column("time_s");
  const auto cs = table.column("speed_um_s");
  MotionTrace trace;
  for (const auto& row : table.rows) {
    trace.t.push_back(io::parse_double(row[ct]));
    trace.speed.push_back(io::parse_double(row[cs]));
  }
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (!(trace.t[i] > trace.t[i - 1])) throw Error(ErrorKind::input, "trace timestamps must strictly increase");
  return trace;
}

}  // namespace beatsvm

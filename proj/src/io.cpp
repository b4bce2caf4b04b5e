#include "fresco/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <regex>

namespace fresco::io {

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& file) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok.push_back(static_cast<char>(buf[pos++]));
  if (tok.empty()) throw Error("malformed PPM header in " + file);
  return tok;
}

int header_int(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& file) {
  const std::string tok = header_token(buf, pos, file);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) || tok.size() > 9)
    throw Error("malformed PPM header in " + file + ": bad number '" + tok + "'");
  return std::stoi(tok);
}

// printf pattern with one %d / %0Nd conversion -> regex capturing the number.
std::regex pattern_regex(const std::string& pattern) {
  static const std::regex conv("%0?[0-9]*d");
  std::smatch m;
  if (!std::regex_search(pattern, m, conv)) throw Error("bad frame pattern '" + pattern + "'");
  auto escape = [](const std::string& s) {
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    return std::regex_replace(s, special, R"(\$&)");
  };
  return std::regex(escape(m.prefix().str()) + "([0-9]+)" + escape(m.suffix().str()));
}

}  // namespace

Grid read_ppm(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + file);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (header_token(buf, pos, file) != "P6") throw Error("malformed PPM header in " + file + ": expected P6");
  const int w = header_int(buf, pos, file);
  const int h = header_int(buf, pos, file);
  const int maxval = header_int(buf, pos, file);
  if (w < 1 || h < 1) throw Error("malformed PPM header in " + file + ": empty image");
  if (maxval != 255) throw Error("unsupported PPM maxval in " + file + " (only 255)");
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw Error("malformed PPM header in " + file);
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (buf.size() - pos < n) throw Error("truncated PPM payload in " + file);
  Grid g(h, w, 3);
  for (std::size_t i = 0; i < n; ++i) g.data[i] = buf[pos + i] / 255.0;
  return g;
}

void write_ppm(const std::filesystem::path& path, const Grid& frame) {
  if (frame.channels != 3) throw Error("write_ppm: expected 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  std::vector<unsigned char> bytes(frame.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(frame.data[i], 0.0, 1.0) * 255.0));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for " + path.string());
}

std::string frame_name(const std::string& pattern, int index) {
  char buf[256];
  const int n = std::snprintf(buf, sizeof(buf), pattern.c_str(), index);
  if (n < 0 || n >= static_cast<int>(sizeof(buf))) throw Error("bad frame pattern '" + pattern + "'");
  return buf;
}

std::vector<Grid> read_frames(const std::filesystem::path& dir, const std::string& pattern) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  // Highest index present decides how many frames are expected.
  const std::regex re = pattern_regex(pattern);
  int highest = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, re) || m[1].length() > 9) continue;
    const int idx = std::stoi(m[1].str());
    if (idx > 0 && frame_name(pattern, idx) == name) highest = std::max(highest, idx);
  }
  if (highest == 0) throw Error("no frames matching " + pattern + " in " + dir.string());
  std::vector<Grid> frames;
  for (int i = 1; i <= highest; ++i) {
    const fs::path p = dir / frame_name(pattern, i);
    if (!fs::exists(p)) throw Error("missing frame " + p.filename().string() + " in " + dir.string());
    frames.push_back(read_ppm(p));
    if (!frames.back().same_shape(frames.front()))
      throw Error("frame " + p.filename().string() + " differs in size from the first frame");
  }
  return frames;
}

std::vector<std::string> write_frames(const std::vector<Grid>& frames, const std::filesystem::path& dir,
                                      const std::string& pattern) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    names.push_back(frame_name(pattern, static_cast<int>(i) + 1));
    write_ppm(dir / names.back(), frames[i]);
  }
  return names;
}

}  // namespace fresco::io

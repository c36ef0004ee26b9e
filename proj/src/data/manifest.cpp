// SPDX-License-Identifier: Apache-2.0
#include "tsed/data/manifest.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tsed::data {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

double parse_time(const std::string& field, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw std::invalid_argument(std::string("cannot parse ") + what + " '" + field + "'");
  }
  return v;
}

const std::vector<std::string>& expected_header(ManifestKind kind) {
  static const std::vector<std::string> strong{"filename", "onset", "offset", "event_label"};
  static const std::vector<std::string> weak{"filename", "event_labels"};
  static const std::vector<std::string> unlabeled{"filename"};
  switch (kind) {
    case ManifestKind::Strong:
      return strong;
    case ManifestKind::Weak:
      return weak;
    default:
      return unlabeled;
  }
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  return os;
}

// Shortest text that parses back to the same double.
std::string format_time(double t) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), t);
  if (ec != std::errc{}) throw std::runtime_error("cannot format time value");
  return std::string(buf.data(), end);
}

}  // namespace

ManifestKind parse_manifest_kind(const std::string& name) {
  if (name == "strong") return ManifestKind::Strong;
  if (name == "weak") return ManifestKind::Weak;
  if (name == "unlabeled") return ManifestKind::Unlabeled;
  throw std::invalid_argument("unknown manifest kind '" + name + "' (expected strong, weak or unlabeled)");
}

const char* to_string(ManifestKind kind) {
  switch (kind) {
    case ManifestKind::Strong:
      return "strong";
    case ManifestKind::Weak:
      return "weak";
    default:
      return "unlabeled";
  }
}

std::size_t DatasetIndex::size() const {
  switch (kind) {
    case ManifestKind::Strong:
      return strong.size();
    case ManifestKind::Weak:
      return weak.size();
    default:
      return clips.size();
  }
}

std::vector<std::string> DatasetIndex::clip_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : strong) ids.push_back(e.clip_id);
  for (const auto& w : weak) ids.push_back(w.clip_id);
  for (const auto& c : clips) ids.push_back(c);
  return ids;
}

DatasetIndex parse_manifest(const std::filesystem::path& path, ManifestKind kind, const Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetIndex index;
  index.kind = kind;
  std::map<std::string, std::size_t> slot;
  const auto& header = expected_header(kind);
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    try {
      auto fields = split(line, '\t');
      for (auto& f : fields) f = trim(f);
      if (!seen_header) {
        if (fields != header) {
          throw std::invalid_argument("expected header '" + join(header, "\\t") + "', got '" + line + "'");
        }
        seen_header = true;
        continue;
      }
      if (fields.size() != header.size()) {
        throw std::invalid_argument("expected " + std::to_string(header.size()) + " tab-separated fields, got " +
                                    std::to_string(fields.size()));
      }
      const std::string& clip = fields[0];
      if (clip.empty()) throw std::invalid_argument("empty filename");
      auto [it, fresh] = slot.try_emplace(clip, index.size());
      switch (kind) {
        case ManifestKind::Strong: {
          if (fresh) index.strong.push_back({clip, {}});
          if (fields[1].empty() && fields[2].empty() && fields[3].empty()) break;
          Event e;
          e.onset = parse_time(fields[1], "onset");
          e.offset = parse_time(fields[2], "offset");
          e.cls = vocab.id(fields[3]);
          validate(e, vocab.size());
          index.strong[it->second].events.push_back(e);
          break;
        }
        case ManifestKind::Weak: {
          if (!fresh) throw std::invalid_argument("clip '" + clip + "' listed twice");
          WeakLabel w{clip, {}};
          if (!fields[1].empty()) {
            for (const auto& name : split(fields[1], ',')) w.classes.insert(vocab.id(trim(name)));
          }
          index.weak.push_back(std::move(w));
          break;
        }
        case ManifestKind::Unlabeled:
          if (!fresh) throw std::invalid_argument("clip '" + clip + "' listed twice");
          index.clips.push_back(clip);
          break;
      }
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!seen_header) throw std::runtime_error(path.string() + ": empty manifest (missing header)");
  return index;
}

void write_strong_manifest(const std::filesystem::path& path, const std::vector<EventList>& clips,
                           const Vocabulary& vocab) {
  auto os = open_out(path);
  os << join(expected_header(ManifestKind::Strong), "\t") << '\n';
  for (const auto& clip : clips) {
    if (clip.events.empty()) os << clip.clip_id << "\t\t\t\n";
    for (const auto& e : clip.events) {
      os << clip.clip_id << '\t' << format_time(e.onset) << '\t' << format_time(e.offset) << '\t' << vocab.name(e.cls)
         << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_weak_manifest(const std::filesystem::path& path, const std::vector<WeakLabel>& clips,
                         const Vocabulary& vocab) {
  auto os = open_out(path);
  os << join(expected_header(ManifestKind::Weak), "\t") << '\n';
  for (const auto& clip : clips) {
    std::vector<std::string> names;
    for (auto c : clip.classes) names.push_back(vocab.name(c));
    os << clip.clip_id << '\t' << join(names, ",") << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_unlabeled_manifest(const std::filesystem::path& path, const std::vector<std::string>& clips) {
  auto os = open_out(path);
  os << "filename\n";
  for (const auto& c : clips) os << c << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace tsed::data

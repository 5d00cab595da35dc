#include "motioncode/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "motioncode/errors.hpp"

namespace motioncode {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

const KeyValueFile::Entry* KeyValueFile::Section::find(std::string_view key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& source) {
  KeyValueFile file;
  file.source_ = source;
  file.sections_.push_back(Section{"", 0, {}});
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const auto hash = raw.find('#');
    std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header");
      std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) throw ParseError(source, line_no, "empty section name");
      if (file.find(name)) throw ParseError(source, line_no, "duplicate section [" + name + "]");
      file.sections_.push_back(Section{name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "missing key");
    auto& section = file.sections_.back();
    if (section.find(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    section.entries.push_back(Entry{key, trim(std::string_view(line).substr(eq + 1)), line_no});
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

const KeyValueFile::Section* KeyValueFile::find(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::vector<const KeyValueFile::Section*> KeyValueFile::with_prefix(std::string_view prefix) const {
  std::vector<const Section*> out;
  for (const auto& s : sections_) {
    if (s.name.size() > prefix.size() && s.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&s);
  }
  return out;
}

KeyValueFile::Section& KeyValueFile::add_section(std::string name) {
  if (sections_.empty()) sections_.push_back(Section{"", 0, {}});
  sections_.push_back(Section{std::move(name), 0, {}});
  return sections_.back();
}

std::string KeyValueFile::to_string() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& s : sections_) {
    if (s.name.empty() && s.entries.empty()) continue;
    if (!first) out << '\n';
    first = false;
    if (!s.name.empty()) out << '[' << s.name << "]\n";
    for (const auto& e : s.entries) out << e.key << " = " << e.value << '\n';
  }
  return out.str();
}

SectionReader::SectionReader(const KeyValueFile& file, const KeyValueFile::Section* section)
    : file_(&file), section_(section), used_(section ? section->entries.size() : 0, false) {}

bool SectionReader::has(std::string_view key) const { return section_ && section_->find(key) != nullptr; }

const KeyValueFile::Entry* SectionReader::take(std::string_view key) {
  if (!section_) return nullptr;
  for (std::size_t i = 0; i < section_->entries.size(); ++i) {
    if (section_->entries[i].key == key) {
      used_[i] = true;
      return &section_->entries[i];
    }
  }
  return nullptr;
}

void SectionReader::fail(const KeyValueFile::Entry& entry, const std::string& message) const {
  throw ParseError(file_->source(), entry.line, entry.key + ": " + message);
}

std::optional<std::string> SectionReader::string(std::string_view key) {
  const auto* e = take(key);
  if (!e) return std::nullopt;
  return e->value;
}

std::string SectionReader::string_or(std::string_view key, std::string fallback) {
  auto v = string(key);
  return v ? *v : std::move(fallback);
}

namespace {
bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}
}  // namespace

double SectionReader::number_or(std::string_view key, double fallback) {
  const auto* e = take(key);
  if (!e) return fallback;
  double v = 0;
  if (!parse_double(e->value, v)) fail(*e, "expected a number, got '" + e->value + "'");
  return v;
}

std::size_t SectionReader::count_or(std::string_view key, std::size_t fallback) {
  const auto* e = take(key);
  if (!e) return fallback;
  std::size_t v = 0;
  const char* begin = e->value.data();
  const char* end = begin + e->value.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) fail(*e, "expected a non-negative integer, got '" + e->value + "'");
  return v;
}

bool SectionReader::flag_or(std::string_view key, bool fallback) {
  const auto* e = take(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(*e, "expected true/false, got '" + e->value + "'");
}

std::optional<std::vector<std::string>> SectionReader::list(std::string_view key) {
  const auto* e = take(key);
  if (!e) return std::nullopt;
  return split_list(e->value);
}

std::optional<std::vector<double>> SectionReader::numbers(std::string_view key) {
  const auto* e = take(key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    double v = 0;
    if (!parse_double(item, v)) fail(*e, "expected a number list, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void SectionReader::finish() const {
  if (!section_) return;
  for (std::size_t i = 0; i < used_.size(); ++i) {
    if (!used_[i]) {
      const auto& e = section_->entries[i];
      throw ParseError(file_->source(), e.line,
                       "unknown key '" + e.key + "' in section [" + section_->name + "]");
    }
  }
}

}  // namespace motioncode

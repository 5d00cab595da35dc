#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace motioncode {

/// Line-oriented `key = value` text with `[section]` headers and `#`
/// comments. Arrays are comma-separated values.
class KeyValueFile {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  struct Section {
    std::string name;
    std::size_t line = 0;
    std::vector<Entry> entries;

    const Entry* find(std::string_view key) const;
  };

  static KeyValueFile parse(std::string_view text, const std::string& source = "<memory>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  const std::vector<Section>& sections() const { return sections_; }
  const Section* find(std::string_view name) const;
  /// Sections whose name starts with `prefix` (e.g. "sequence.").
  std::vector<const Section*> with_prefix(std::string_view prefix) const;

  Section& add_section(std::string name);
  std::string to_string() const;

 private:
  std::string source_;
  std::vector<Section> sections_;
};

/// Typed, consuming view over one section. `finish()` rejects keys that were
/// never read, so every configuration surface fails loudly on typos.
class SectionReader {
 public:
  SectionReader(const KeyValueFile& file, const KeyValueFile::Section* section);

  bool has(std::string_view key) const;
  std::optional<std::string> string(std::string_view key);
  std::string string_or(std::string_view key, std::string fallback);
  double number_or(std::string_view key, double fallback);
  std::size_t count_or(std::string_view key, std::size_t fallback);
  bool flag_or(std::string_view key, bool fallback);
  std::optional<std::vector<std::string>> list(std::string_view key);
  std::optional<std::vector<double>> numbers(std::string_view key);

  void finish() const;

 private:
  const KeyValueFile::Entry* take(std::string_view key);
  [[noreturn]] void fail(const KeyValueFile::Entry& entry, const std::string& message) const;

  const KeyValueFile* file_;
  const KeyValueFile::Section* section_;
  std::vector<bool> used_;
};

std::vector<std::string> split_list(std::string_view text);
std::string trim(std::string_view text);

}  // namespace motioncode

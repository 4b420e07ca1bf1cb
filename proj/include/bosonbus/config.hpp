#pragma once

#include <map>
#include <optional>
#include <string>

namespace bosonbus {

// Flat "key = value" configuration text; '#' starts a comment, blank lines
// are skipped, keys match the command-line flag names with underscores
// (omega_a0, lambda_a, t_max, ...). Duplicate keys and malformed lines are
// errors, reported with their line number.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

// One configuration knob resolved across the three layers. Values are
// applied lowest-precedence first: built-in default, then config file, then
// command-line flag.
class ConfigLayers {
 public:
  explicit ConfigLayers(std::map<std::string, std::string> file_values);

  // Marks a key as consumed and returns the file-layer value, if any.
  std::optional<std::string> file_value(const std::string& key);

  // Keys present in the file that no command consumed; catching typos early
  // beats silently ignoring them.
  std::string first_unused_key() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> used_;
};

double parse_double(const std::string& text, const std::string& what);
int parse_int(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

}  // namespace bosonbus

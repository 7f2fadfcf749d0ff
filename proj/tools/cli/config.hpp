#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace progeval::cli {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
  bool flag = false;  // boolean switch on the command line
};

/// Every recognised key, in help order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value run configuration. Command-line flags are applied after
/// the config file, so they win.
class RunConfig {
 public:
  RunConfig();

  /// Lines are `key = value`; blank lines and `#` comments are ignored.
  /// Throws Error(kConfigError) naming the offending key or line.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  std::filesystem::path dir() const;
  std::filesystem::path corpus_path() const;
  std::uint64_t seed() const { return get_u64("seed"); }

  /// Sorted key=value lines of everything that can change results
  /// (output location and thread count excluded).
  std::string canonical() const;
  /// 16 hex digits of a hash of canonical().
  std::string hash() const;
  /// Throws Error(kConfigError) on unparsable or unknown values.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace progeval::cli

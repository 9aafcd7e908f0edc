#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace cmnet {

// Flat key=value configuration. Precedence: built-in defaults < file <
// command-line overrides. Every run echoes the resolved table.
class Config {
 public:
  static Config defaults();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_kv(const std::string& key_eq_value);  // "key=value"

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;

  std::string echo() const;  // sorted "key=value" lines

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cmnet

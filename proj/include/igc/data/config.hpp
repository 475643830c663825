#pragma once

#include <array>
#include <set>
#include <type_traits>
#include <string>
#include <vector>

#include <json.hpp>

#include "igc/core/error.hpp"

namespace igc::config {

using nlohmann::json;

template <class T>
struct is_std_array : std::false_type {};
template <class T, std::size_t N>
struct is_std_array<std::array<T, N>> : std::true_type {};
template <class T>
struct is_std_vector : std::false_type {};
template <class T>
struct is_std_vector<std::vector<T>> : std::true_type {};

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Typed access to one JSON object. Every key must be consumed by a get/require/child call
/// before finish(); leftovers are reported as unknown keys with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (j_.contains(key)) out = convert<T>(j_.at(key), join(path_, key));
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(join(path_, key), "required field is missing");
    return convert<T>(j_.at(key), join(path_, key));
  }

  /// Raw value of `key` (marked as used); null when absent.
  const json& raw(const std::string& key) {
    used_.insert(key);
    static const json null_value;
    return j_.contains(key) ? j_.at(key) : null_value;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!used_.count(k)) throw ConfigError(join(path_, k), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    try {
      if constexpr (is_std_array<T>::value) {
        T out{};
        if (!v.is_array() || v.size() != out.size())
          throw ConfigError(path, "expected an array of " + std::to_string(out.size()) + " entries");
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]");
        return out;
      } else if constexpr (is_std_vector<T>::value) {
        if (!v.is_array()) throw ConfigError(path, "expected an array");
        T out;
        for (std::size_t i = 0; i < v.size(); ++i)
          out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
          throw ConfigError(path, "expected a non-negative integer");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path, "expected a string");
      }
      if constexpr (!is_std_array<T>::value && !is_std_vector<T>::value) return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path, std::string("wrong type (") + e.what() + ")");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace igc::config

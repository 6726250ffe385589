#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

#include <openssl/evp.h>
#include <sys/resource.h>

#include "mitoseg/binary_io.hpp"
#include "mitoseg/error.hpp"

namespace mitoseg {

inline constexpr std::string_view kManifestName = "manifest.txt";

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw InternalError("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Peak resident set size of this process in KiB, when the platform reports it.
inline std::optional<long> peak_rss_kb() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0 || usage.ru_maxrss <= 0) return std::nullopt;
  return usage.ru_maxrss;
}

/// Plain-text key=value manifest kept in dst; entries are sorted by key.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& dir) {
    Manifest m;
    const auto path = dir / kManifestName;
    if (!std::filesystem::exists(path)) return m;
    const auto bytes = read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      m.entries_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
  }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  std::optional<std::string> get(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? std::nullopt : std::optional(it->second);
  }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Replace all file entries with the current contents of `dir`.
  void hash_directory(const std::filesystem::path& dir) {
    std::erase_if(entries_, [](const auto& kv) { return kv.first.starts_with("file."); });
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (!e.is_regular_file() || e.path().filename() == kManifestName) continue;
      entries_["file." + e.path().filename().string() + ".sha256"] = sha256_hex(read_file(e.path()));
    }
  }

  void save(const std::filesystem::path& dir) const {
    std::string text;
    for (const auto& [k, v] : entries_) text += k + "=" + v + "\n";
    write_file(dir / kManifestName, text);
  }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace mitoseg

#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pnr/config.hpp"
#include "pnr/errors.hpp"
#include "pnr/version.hpp"

namespace pnr {

/// FNV-1a 64-bit digest; enough to tell whether input bytes changed.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for digesting");
  std::uint64_t hash = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
  }
  char text[32];
  std::snprintf(text, sizeof(text), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
  return text;
}

inline std::string current_utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Reproducibility record embedded in every report. Re-running a command
/// from its manifest (which carries the resolved config, seed and the
/// original timestamp) regenerates the outputs byte for byte.
struct RunManifest {
  std::string tool = kToolName;
  std::string version = kToolVersion;
  std::string command;        // simulate | analyze | sweep
  std::string timestamp_utc;  // creation time; replays copy it verbatim
  std::uint64_t master_seed = 0;
  ToolConfig config;
  std::map<std::string, std::string> args;           // extra command arguments
  std::map<std::string, std::string> input_digests;  // path -> digest of the bytes
};

}  // namespace pnr

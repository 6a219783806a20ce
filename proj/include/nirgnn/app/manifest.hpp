#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/error.hpp"

namespace nirgnn::app {

inline constexpr const char* artifact_version = "0.1.0";

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error(ErrorKind::config, "sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_string(const std::string& s) {
  Sha256 h;
  h.update(s.data(), s.size());
  return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::config, "cannot read " + path.string() + " for hashing");
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

/// Digests of a file, or of every regular file under a directory (sorted).
inline std::map<std::string, std::string> digest_inputs(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") {
        out[e.path().string()] = sha256_file(e.path());
      }
    }
  } else if (std::filesystem::exists(path)) {
    out[path.string()] = sha256_file(path);
  }
  return out;
}

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;

  void add_input(const std::filesystem::path& p) {
    for (auto& [k, v] : digest_inputs(p)) inputs[k] = v;
  }

  nlohmann::json to_json() const {
    return {{"command", command},   {"config_hash", config_hash}, {"seed", seed},
            {"inputs", inputs},     {"outputs", outputs},         {"version", artifact_version},
            {"wall_seconds", wall_seconds}};
  }

  void write(const std::filesystem::path& dir) const {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw Error(ErrorKind::config, "cannot write manifest under " + dir.string());
    os << to_json().dump(2) << '\n';
  }
};

}  // namespace nirgnn::app

#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace testutil {

/// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("hazekit_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("read_file: cannot open " + p.string());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Runs a shell command, captures stdout, returns the exit code.
inline int run_command(const std::string& cmd, std::string* out = nullptr) {
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("run_command: popen failed");
  char buf[4096];
  std::string collected;
  while (std::fgets(buf, sizeof(buf), pipe)) collected += buf;
  const int status = ::pclose(pipe);
  if (out) *out = collected;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

}  // namespace testutil

#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace aulid::test {

// Index file under the temp dir, removed on scope exit.
class TempFile {
 public:
  explicit TempFile(const std::string& tag) {
    static std::atomic<int> seq{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aulid-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(seq++) + ".idx");
    std::filesystem::remove(path_);
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace aulid::test

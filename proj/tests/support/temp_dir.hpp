// Scratch directories for tests that touch the filesystem.
#ifndef HISTREG_TESTS_TEMP_DIR_HPP
#define HISTREG_TESTS_TEMP_DIR_HPP

#include <unistd.h>

#include <filesystem>
#include <string>

namespace histreg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string& tag)
  {
    m_path = std::filesystem::temp_directory_path() / ("histreg_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(m_path);
    std::filesystem::create_directories(m_path);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(m_path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string path() const { return m_path.string(); }
  std::string file(const std::string& name) const { return (m_path / name).string(); }

private:
  std::filesystem::path m_path;
};

} // namespace histreg::testing

#endif // HISTREG_TESTS_TEMP_DIR_HPP

#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace mt6 {

std::string ReadFile(const std::string& path);
std::vector<std::string> ReadLines(const std::string& path);

// Writes to "<path>.tmp" and renames over path, so readers never observe a
// partially written file.
void WriteFileAtomic(const std::string& path, const std::string& contents);

// Streaming counterpart of WriteFileAtomic. Nothing appears at path until
// Commit(); an uncommitted writer removes its temporary file.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::string& path);
  ~AtomicWriter();
  AtomicWriter(const AtomicWriter&) = delete;
  AtomicWriter& operator=(const AtomicWriter&) = delete;

  std::ostream& stream() { return out_; }
  void Commit();

 private:
  std::string path_;
  std::string tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

void EnsureDirectory(const std::string& path);

bool FileExists(const std::string& path);

std::string JoinPath(const std::string& dir, const std::string& name);

}  // namespace mt6

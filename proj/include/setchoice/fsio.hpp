#pragma once

#include <string>

namespace setchoice {

// Throws DataError when the file cannot be read.
std::string read_file(const std::string& path);

// Writes to <path>.tmp then renames, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace setchoice

#include "setchoice/fsio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "setchoice/common.hpp"

namespace setchoice {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw DataError("read failed: " + path);
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
        if (ec) throw DataError("cannot create directory " + target.parent_path().string() +
                                ": " + ec.message());
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open file for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw DataError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("rename failed: " + tmp + " -> " + path);
}

} // namespace setchoice

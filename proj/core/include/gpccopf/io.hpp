#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gpccopf {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);
bool file_exists(const std::string& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t h);
std::string file_hash(const std::string& path);

}  // namespace gpccopf

#pragma once

#include <cstdint>
#include <string>

// CSV dialect used everywhere: semicolon separator, '.' decimal point, LF
// line endings, no trailing separator. Numbers are formatted with
// std::to_chars so the locale can never leak into output files.
namespace sonarzoo {

std::string format_fixed(double v, int decimals);
std::string format_int(std::int64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace sonarzoo

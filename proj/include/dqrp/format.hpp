#pragma once

#include <string>

namespace dqrp {

/// Shortest decimal that round-trips to the same double ("nan", "inf" for
/// non-finite values). Locale independent.
std::string format_double(double v);

/// Writes `text` to `path`, creating parent directories. Throws Error on failure.
void write_text_file(const std::string& path, const std::string& text);

/// Reads the whole file. Throws Error when unreadable.
std::string read_text_file(const std::string& path);

}  // namespace dqrp

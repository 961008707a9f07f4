#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ncdetect::csv {

using Row = std::vector<std::string>;

// Minimal RFC 4180 reader: quoted fields may hold commas, doubled quotes
// and newlines. CRLF line ends are accepted.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

// Quotes a field only when it needs it.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

// Column index in `header`, or -1.
int find_column(const Row& header, std::string_view name);

}  // namespace ncdetect::csv

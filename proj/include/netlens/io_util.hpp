#ifndef NETLENS_IO_UTIL_HPP
#define NETLENS_IO_UTIL_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace netlens {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Writes to a temp file in the destination directory, then renames, so no
// output file is ever observable in a partially written state.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

std::string format_double(double v);           // round-trip precision, %.17g
std::string csv_join(const std::vector<std::string>& fields);

// Minimal CSV splitter for the toolkit's own files: no quoting, ids and
// numbers only.
std::vector<std::string> csv_split(const std::string& line);

std::string read_text_file(const std::filesystem::path& path);

// Parallelism cap: NETLENS_THREADS if set, else hardware concurrency,
// clamped to [1, 64].
std::size_t max_threads();

// Runs fn(i) for i in [0, n). Each index writes only its own slot of any
// shared output, so results are identical for every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace netlens

#endif

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace reval {

// Shortest decimal that round-trips the exact double ("4.47", "0.1", "5").
// Used everywhere a score or ratio is written to a file, so serialization is
// canonical and byte-stable.
std::string format_double(double v);

double parse_double(std::string_view s, std::size_t line_for_error);
long long parse_int(std::string_view s, std::size_t line_for_error);

std::vector<std::string_view> split_view(std::string_view line, char delim);
std::string_view trim(std::string_view s);

// round-half-up, the documented rounding for per-user test counts
std::size_t round_half_up(double x);

// Worker count for within-stage parallelism; REVAL_WORKERS, default 1
// (reference mode). Nothing else is read from the environment.
std::size_t worker_count();

// Runs fn(i) for i in [0,n) on worker_count() threads (or the explicit
// override). Work is chunked deterministically; callers must write results
// into slot i only, so the outcome is identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t workers_override = 0);

} // namespace reval

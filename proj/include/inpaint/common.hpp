#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace inpaint {

// Shape of a dense tensor; features use NCHW order by convention.
using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension/shape contract violations inside the tensor engine.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed files, unreadable datasets, incompatible checkpoints.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite losses, failed gradient checks, exhausted retry budgets.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Bad CLI arguments or config files.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace detail {

inline void cat_into(std::ostringstream&) {}

template <typename A, typename... Rest>
void cat_into(std::ostringstream& os, A&& a, Rest&&... rest) {
    os << std::forward<A>(a);
    cat_into(os, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Parts>
std::string cat(Parts&&... parts) {
    std::ostringstream os;
    detail::cat_into(os, std::forward<Parts>(parts)...);
    return os.str();
}

template <typename Err = ShapeError, typename... Parts>
void require(bool cond, Parts&&... parts) {
    if (!cond) throw Err(cat(std::forward<Parts>(parts)...));
}

}  // namespace inpaint

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace kgp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    throw Error(cat(args...));
}

template <typename... Args>
void require(bool cond, const Args&... args) {
    if (!cond) fail(args...);
}

}  // namespace kgp

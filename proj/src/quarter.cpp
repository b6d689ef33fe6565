#include "stresscast/quarter.hpp"

#include <charconv>

#include "stresscast/errors.hpp"

namespace stresscast {

Quarter Quarter::from_index(int idx) {
    Quarter out;
    // Floor division so negative indexes stay well defined.
    int y = idx / 4;
    int r = idx % 4;
    if (r < 0) {
        y -= 1;
        r += 4;
    }
    out.year = y;
    out.q = r + 1;
    return out;
}

std::string Quarter::str() const {
    return std::to_string(year) + "Q" + std::to_string(q);
}

Quarter Quarter::parse(std::string_view text) {
    const auto pos = text.find_first_of("Qq");
    if (pos == std::string_view::npos || pos == 0 || pos + 1 >= text.size())
        throw DataError("bad quarter '" + std::string(text) + "' (expected YYYYQn)");
    Quarter out;
    const auto year_part = text.substr(0, pos);
    const auto q_part = text.substr(pos + 1);
    auto r1 = std::from_chars(year_part.data(), year_part.data() + year_part.size(), out.year);
    auto r2 = std::from_chars(q_part.data(), q_part.data() + q_part.size(), out.q);
    if (r1.ec != std::errc{} || r1.ptr != year_part.data() + year_part.size() ||
        r2.ec != std::errc{} || r2.ptr != q_part.data() + q_part.size() || out.q < 1 || out.q > 4)
        throw DataError("bad quarter '" + std::string(text) + "' (expected YYYYQn)");
    return out;
}

}  // namespace stresscast

#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace stresscast {

// Calendar quarter. Totally ordered; arithmetic is in whole quarters.
struct Quarter {
    int year = 0;
    int q = 1;  // 1..4

    int index() const { return year * 4 + (q - 1); }
    static Quarter from_index(int idx);

    auto operator<=>(const Quarter&) const = default;

    std::string str() const;                       // "2012Q3"
    static Quarter parse(std::string_view text);   // throws DataError
};

inline Quarter operator+(Quarter a, int n) { return Quarter::from_index(a.index() + n); }
inline Quarter operator-(Quarter a, int n) { return Quarter::from_index(a.index() - n); }
// Distance in quarters.
inline int operator-(Quarter a, Quarter b) { return a.index() - b.index(); }

// Inclusive [first, last] window.
struct QuarterRange {
    Quarter first;
    Quarter last;

    bool contains(Quarter v) const { return first <= v && v <= last; }
    int length() const { return last - first + 1; }
};

}  // namespace stresscast

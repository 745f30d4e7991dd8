#include "circlesnake/json_util.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace csnake {

namespace {

void dump(const Json& v, int decimals, std::string& out) {
    switch (v.type()) {
    case Json::value_t::object: {
        out += '{';
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (!first) {
                out += ',';
            }
            first = false;
            out += Json(it.key()).dump();
            out += ':';
            dump(it.value(), decimals, out);
        }
        out += '}';
        break;
    }
    case Json::value_t::array: {
        out += '[';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            dump(v[i], decimals, out);
        }
        out += ']';
        break;
    }
    case Json::value_t::number_float: {
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(Error::Kind::Export, "cannot serialize a non-finite number");
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", decimals, d);
        // Avoid "-0.000000" so that tiny negatives and zero serialize alike.
        std::string s(buf);
        if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) {
            s.erase(0, 1);
        }
        out += s;
        break;
    }
    default:
        out += v.dump();
        break;
    }
}

} // namespace

std::string canonical_dump(const Json& value, int decimals, bool final_newline) {
    std::string out;
    dump(value, decimals, out);
    if (final_newline) {
        out += '\n';
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace csnake

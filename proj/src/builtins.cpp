#include "mwalk/builtins.hpp"

#include <fstream>

#include <fmt/format.h>

namespace mw {

namespace {

struct Builtin {
    const char* name;
    const char* text;
};

const Builtin kBuiltins[] = {
    {"doublewell",
     "dim = 1\n"
     "domain = [-1.5, 1.5]\n"
     "F = (x1^2 - 1)^2\n"},
    {"tilted",
     "dim = 1\n"
     "domain = [-1.5, 1.5]\n"
     "F = (x1^2 - 1)^2 + 0.2 * x1\n"},
    {"fourwell",
     "dim = 2\n"
     "domain = [-1.5, 1.5] x [-1.5, 1.5]\n"
     "F = 0.2 * ((x1^2 - 1)^2 + (x2^2 - 1)^2)\n"},
    {"twosaddle",
     "dim = 1\n"
     "domain = [-3, 3]\n"
     "F = 0.14903081688193465 * exp(-2.160712584798747 * (x1 + 1)^2)"
     " + 0.15 * exp(-8 * (x1 - 1)^2) + 0.02 * x1^2\n"},
    {"singlewell",
     "dim = 1\n"
     "domain = [-1, 1]\n"
     "F = x1^2\n"},
};

}  // namespace

std::vector<std::string> builtin_potential_names() {
    std::vector<std::string> names;
    for (const auto& b : kBuiltins) names.emplace_back(b.name);
    return names;
}

bool is_builtin_potential(const std::string& name) {
    for (const auto& b : kBuiltins)
        if (name == b.name) return true;
    return false;
}

const char* builtin_potential_text(const std::string& name) {
    for (const auto& b : kBuiltins)
        if (name == b.name) return b.text;
    throw PotentialError(fmt::format("unknown builtin potential '{}'", name));
}

Potential builtin_potential(const std::string& name) {
    return Potential::parse(builtin_potential_text(name));
}

Potential load_potential(const std::string& name_or_path) {
    if (is_builtin_potential(name_or_path)) return builtin_potential(name_or_path);
    std::ifstream in(name_or_path);
    if (!in)
        throw PotentialError(fmt::format("cannot open potential file '{}'", name_or_path));
    return Potential::load_file(name_or_path);
}

}  // namespace mw

#pragma once

#include <string>
#include <vector>

#include "mwalk/potential.hpp"

namespace mw {

// Builtin potentials, embedded so the CLI and the acceptance suite run
// without external files. The same definitions ship in data/*.pot.
std::vector<std::string> builtin_potential_names();
bool is_builtin_potential(const std::string& name);
const char* builtin_potential_text(const std::string& name);
Potential builtin_potential(const std::string& name);

// Loads a builtin by name or parses a .pot file from disk.
Potential load_potential(const std::string& name_or_path);

}  // namespace mw

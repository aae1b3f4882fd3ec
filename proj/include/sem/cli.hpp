#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sem/model.hpp"

namespace sem {

// Graphviz text for a description. Edge labels carry estimates when given.
std::string emit_dot(const std::string& description, const std::vector<ParameterRow>* estimates = nullptr);

// Command-line entry point. args excludes the program name.
// Returns 0 on success, 1 on parse/fit errors, 2 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sem

#pragma once

#include "pmd/domain.hpp"

#include <string>
#include <string_view>

namespace pmd {

/// Builds a control problem from a JSON document. Only the problem keys are
/// read (grid, actions, model, lq, polynomial, sigma, g, discretization);
/// other top-level sections are left to the caller. Unknown keys inside the
/// problem sections are rejected. Errors are ConfigError with a JSON pointer
/// to the offending key and, when it can be located, its line in `text`.
ControlProblem parse_problem_config(std::string_view text);

/// 1-based line of the key addressed by a JSON pointer ("/grid/n_interior"),
/// found by scanning for each path component in turn; 0 when not found.
std::size_t locate_key_line(std::string_view text, std::string_view pointer);

} // namespace pmd

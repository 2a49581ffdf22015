#pragma once

namespace optima {

// Which objective the agent maximizes: running consumption, terminal
// wealth, or both.
enum class ProblemKind { consumption_only, terminal_only, both };

const char* to_string(ProblemKind kind);

}  // namespace optima

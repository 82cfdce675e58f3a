#pragma once

#include <cstddef>

namespace invercl {

// Worker-count cap for per-class buffer generation. Results are identical
// for any thread count: each class draws from its own seed sub-stream.
void set_num_threads(std::size_t n);
std::size_t num_threads();

}  // namespace invercl

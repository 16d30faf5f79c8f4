#pragma once

#include <string>

#include "kernel.hpp"

namespace femopt {

// Parses a kernel description. The canonical input form lists statements as a
// flat array with nesting levels; the serialized form produced by
// kernel_to_json uses an explicit nested body, which the parser also accepts.
Kernel kernel_from_json(const std::string& text);
Kernel kernel_from_file(const std::string& path);

std::string kernel_to_json(const Kernel& k);

}  // namespace femopt

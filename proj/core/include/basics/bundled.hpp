#pragma once

#include <string_view>

namespace basics::bundled {

/// Data files compiled into the library from core/data.
std::string_view libc_json();
std::string_view templates_json();
std::string_view properties();

}  // namespace basics::bundled

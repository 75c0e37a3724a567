#pragma once

#include <functional>
#include <string_view>

namespace gsdrag {

/// Library warnings go to stderr unless a handler is installed. Pass an empty
/// function to restore the default.
void set_warning_handler(std::function<void(std::string_view)> handler);
void warn(std::string_view message);

}  // namespace gsdrag

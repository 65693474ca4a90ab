#pragma once

#include <functional>
#include <string_view>

namespace bwn {

using WarningHandler = std::function<void(std::string_view)>;

/// Library warnings go to stderr unless a handler is installed. Returns the
/// previous handler; an empty handler restores the default.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

}  // namespace bwn

#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace slowman {

/// Receives non-fatal diagnostics (large epsilon, pure-Newton RPM, ...).
using WarningSink = std::function<void(std::string_view)>;

/// Replace the process-wide warning sink; returns the previous one.
/// The default sink writes "warning: <msg>" to stderr.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

}  // namespace slowman

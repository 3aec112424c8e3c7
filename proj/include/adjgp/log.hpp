#ifndef ADJGP_LOG_HPP_
#define ADJGP_LOG_HPP_

#include <functional>
#include <string>

namespace adjgp {

using WarningHandler = std::function<void(const std::string&)>;

// Installs the sink for non-fatal diagnostics and returns the previous one.
// The default handler prints "warning: <msg>" to stderr. Not thread-safe to
// swap while solvers run.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(const std::string& message);

}  // namespace adjgp

#endif  // ADJGP_LOG_HPP_

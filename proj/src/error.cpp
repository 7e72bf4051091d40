#include "laptool/error.hpp"

#include <iostream>
#include <utility>

namespace laptool {

namespace {

WarningHandler& handler_slot() {
    static WarningHandler handler;
    return handler;
}

}  // namespace

void warn(const std::string& message) {
    if (auto& handler = handler_slot()) {
        handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

WarningHandler set_warning_handler(WarningHandler handler) {
    return std::exchange(handler_slot(), std::move(handler));
}

}  // namespace laptool

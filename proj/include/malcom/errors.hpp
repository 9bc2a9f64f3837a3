#pragma once

#include <stdexcept>

namespace malcom {

// Error categories the command line front end maps to distinct exit codes.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;  // missing/unreadable inputs -> exit 2
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;  // malformed artifacts -> exit 3
};
struct NanError : std::runtime_error {
  using std::runtime_error::runtime_error;  // numerical divergence -> exit 4
};

}  // namespace malcom

#pragma once

#include <stdexcept>
#include <string>

namespace sonarzoo {

// Shape constraint violated; the message names the node and extents involved.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Graph structure problem: unknown node, duplicate name, bad reference.
class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File problem: unreadable input, bad magic, version mismatch, checksum failure.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (unknown key, out-of-range value).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training aborted (non-finite loss); message carries epoch and batch.
class TrainAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sonarzoo
